#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rsclust {

/// Exact counts for Bell/Stirling numbers. Overflow is detected and reported
/// as a resource-limit error rather than wrapping.
using BigCount = unsigned __int128;

std::string to_string(BigCount value);

inline constexpr int kDefaultEnumerationCap = 15;

class StateKey;

/// Set partition of N observations in canonical restricted-growth form:
/// labels are 1-based, labels[0] == 1 and each label is at most one more
/// than the running maximum. No cluster is empty.
class Allocation {
 public:
  Allocation() = default;

  /// Takes labels that are already canonical; throws invalid_input otherwise.
  static Allocation from_canonical(std::vector<int> labels);

  static Allocation singletons(int n);
  static Allocation one_cluster(int n);

  int size() const noexcept { return static_cast<int>(labels_.size()); }
  int num_clusters() const noexcept { return num_clusters_; }
  std::span<const int> labels() const noexcept { return labels_; }
  int operator[](int i) const { return labels_[static_cast<std::size_t>(i)]; }

  bool same_cluster(int i, int j) const {
    return labels_[static_cast<std::size_t>(i)] ==
           labels_[static_cast<std::size_t>(j)];
  }

  /// Block sizes N_1..N_C indexed by label - 1.
  std::vector<int> cluster_sizes() const;

  /// Members of each block, ordered by label then observation index.
  std::vector<std::vector<int>> clusters() const;

  StateKey key() const;

  friend bool operator==(const Allocation&, const Allocation&) = default;

 private:
  std::vector<int> labels_;
  int num_clusters_ = 0;
};

/// Relabels by order of first appearance. Labels must be positive.
Allocation canonicalize(std::span<const int> raw_labels);

/// Compact hashable encoding of a set partition: the restricted-growth
/// sequence written with one base-36 digit per observation ("11213").
/// Labels 10..35 map to 'a'..'z'.
class StateKey {
 public:
  StateKey() = default;
  explicit StateKey(std::string digits) : digits_(std::move(digits)) {}

  const std::string& str() const noexcept { return digits_; }
  bool empty() const noexcept { return digits_.empty(); }

  /// Parses the digit string back into an allocation. Throws invalid_input
  /// if the string is not a canonical restricted-growth sequence.
  Allocation allocation() const;

  friend auto operator<=>(const StateKey&, const StateKey&) = default;
  friend bool operator==(const StateKey&, const StateKey&) = default;

 private:
  std::string digits_;
};

/// Lexicographic enumeration of restricted-growth sequences of length n.
/// Each set partition of {1..n} is produced exactly once.
class PartitionStream {
 public:
  explicit PartitionStream(int n, int cap = kDefaultEnumerationCap);

  /// Stream restricted to sequences starting with `prefix` (canonical).
  /// Used to split enumeration work across workers.
  PartitionStream(int n, std::span<const int> prefix,
                  int cap = kDefaultEnumerationCap);

  bool done() const noexcept { return done_; }
  std::span<const int> labels() const noexcept { return labels_; }
  Allocation current() const;
  void advance();

 private:
  int n_;
  std::size_t fixed_;
  std::vector<int> labels_;
  std::vector<int> prefix_max_;  // prefix_max_[t] = max(labels_[0..t-1])
  bool done_ = false;
};

/// Calls fn(labels) for every partition of n items, lexicographic order.
void for_each_partition(int n,
                        const std::function<void(std::span<const int>)>& fn,
                        int cap = kDefaultEnumerationCap);

/// All partitions of n items as allocations. Intended for small n.
std::vector<Allocation> enumerate_partitions(int n,
                                             int cap = kDefaultEnumerationCap);

BigCount bell(int n);
BigCount stirling2(int n, int c);

}  // namespace rsclust

template <>
struct std::hash<rsclust::StateKey> {
  std::size_t operator()(const rsclust::StateKey& k) const noexcept {
    return std::hash<std::string>{}(k.str());
  }
};
