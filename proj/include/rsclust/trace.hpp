#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "rsclust/partition.hpp"

namespace rsclust {

/// Time-ordered sequence of visited states. Each distinct state is stored
/// once with its cached log unnormalized posterior; the path holds indices
/// into that table.
class Trace {
 public:
  using Meta = std::map<std::string, std::string>;

  std::size_t size() const noexcept { return path_.size(); }
  bool empty() const noexcept { return path_.empty(); }

  /// 0-based position t.
  const StateKey& state(std::size_t t) const { return keys_[path_[t]]; }
  double log_post(std::size_t t) const { return log_post_[path_[t]]; }
  std::uint32_t state_index(std::size_t t) const { return path_[t]; }

  std::span<const std::uint32_t> path() const noexcept { return path_; }
  const std::vector<StateKey>& distinct_states() const noexcept { return keys_; }
  const std::vector<double>& distinct_log_post() const noexcept { return log_post_; }
  std::size_t num_distinct() const noexcept { return keys_.size(); }

  /// Index in distinct_states(), or -1 if never visited.
  long find(const StateKey& key) const;

  /// Appends a visit. The log posterior is cached on first sight of a key;
  /// later visits must agree with the cached value.
  void push(const StateKey& key, double log_post);

  /// Appends a visit, calling `compute()` only for previously unseen keys.
  template <typename F>
  void push_lazy(const StateKey& key, F&& compute) {
    auto it = index_.find(key);
    if (it == index_.end()) {
      it = index_.emplace(key, static_cast<std::uint32_t>(keys_.size())).first;
      keys_.push_back(key);
      log_post_.push_back(compute());
    }
    path_.push_back(it->second);
  }

  /// First n recorded states with the same meta.
  Trace prefix(std::size_t n) const;

  Meta meta;

 private:
  std::vector<std::uint32_t> path_;
  std::vector<StateKey> keys_;
  std::vector<double> log_post_;
  std::unordered_map<StateKey, std::uint32_t> index_;
};

}  // namespace rsclust
