#include "rsclust/partition.hpp"

#include <algorithm>

#include "rsclust/errors.hpp"

namespace rsclust {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::invalid_input: return "invalid-input";
    case ErrorKind::invalid_hyperparameter: return "invalid-hyperparameter";
    case ErrorKind::resource_limit: return "resource-limit";
    case ErrorKind::optimization_failure: return "optimization-failure";
    case ErrorKind::insufficient_regeneration: return "insufficient-regeneration";
    case ErrorKind::insufficient_states: return "insufficient-states";
    case ErrorKind::io_error: return "io-error";
  }
  return "unknown";
}

std::string to_string(BigCount value) {
  if (value == 0) return "0";
  std::string out;
  while (value > 0) {
    out.push_back(static_cast<char>('0' + static_cast<int>(value % 10)));
    value /= 10;
  }
  std::reverse(out.begin(), out.end());
  return out;
}

namespace {

char label_digit(int label) {
  if (label < 1 || label > 35) {
    fail(ErrorKind::invalid_input,
         "cluster label " + std::to_string(label) + " has no key digit");
  }
  return label < 10 ? static_cast<char>('0' + label)
                    : static_cast<char>('a' + (label - 10));
}

int digit_label(char c) {
  if (c >= '1' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'z') return c - 'a' + 10;
  fail(ErrorKind::invalid_input,
       std::string("invalid state key digit '") + c + "'");
}

bool is_canonical(std::span<const int> labels) {
  int running_max = 0;
  for (int l : labels) {
    if (l < 1 || l > running_max + 1) return false;
    running_max = std::max(running_max, l);
  }
  return true;
}

}  // namespace

Allocation Allocation::from_canonical(std::vector<int> labels) {
  if (labels.empty()) fail(ErrorKind::invalid_input, "empty allocation");
  if (!is_canonical(labels)) {
    fail(ErrorKind::invalid_input, "labels are not in canonical order");
  }
  Allocation a;
  a.num_clusters_ = *std::max_element(labels.begin(), labels.end());
  a.labels_ = std::move(labels);
  return a;
}

Allocation Allocation::singletons(int n) {
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = i + 1;
  return from_canonical(std::move(labels));
}

Allocation Allocation::one_cluster(int n) {
  return from_canonical(std::vector<int>(static_cast<std::size_t>(n), 1));
}

std::vector<int> Allocation::cluster_sizes() const {
  std::vector<int> sizes(static_cast<std::size_t>(num_clusters_), 0);
  for (int l : labels_) ++sizes[static_cast<std::size_t>(l - 1)];
  return sizes;
}

std::vector<std::vector<int>> Allocation::clusters() const {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(num_clusters_));
  for (int i = 0; i < size(); ++i) {
    out[static_cast<std::size_t>(labels_[static_cast<std::size_t>(i)] - 1)]
        .push_back(i);
  }
  return out;
}

StateKey Allocation::key() const {
  std::string digits;
  digits.reserve(labels_.size());
  for (int l : labels_) digits.push_back(label_digit(l));
  return StateKey(std::move(digits));
}

Allocation StateKey::allocation() const {
  std::vector<int> labels;
  labels.reserve(digits_.size());
  for (char c : digits_) labels.push_back(digit_label(c));
  return Allocation::from_canonical(std::move(labels));
}

Allocation canonicalize(std::span<const int> raw_labels) {
  if (raw_labels.empty()) fail(ErrorKind::invalid_input, "empty label vector");
  std::vector<std::pair<int, int>> seen;  // raw label -> canonical label
  std::vector<int> labels;
  labels.reserve(raw_labels.size());
  for (int raw : raw_labels) {
    if (raw < 1) {
      fail(ErrorKind::invalid_input,
           "labels must be positive, got " + std::to_string(raw));
    }
    auto it = std::find_if(seen.begin(), seen.end(),
                           [raw](const auto& p) { return p.first == raw; });
    if (it == seen.end()) {
      seen.emplace_back(raw, static_cast<int>(seen.size()) + 1);
      labels.push_back(static_cast<int>(seen.size()));
    } else {
      labels.push_back(it->second);
    }
  }
  return Allocation::from_canonical(std::move(labels));
}

namespace {

void check_enumeration_size(int n, int cap) {
  if (n < 1) fail(ErrorKind::invalid_input, "enumeration needs n >= 1");
  if (n > cap) {
    fail(ErrorKind::resource_limit,
         "enumeration of n=" + std::to_string(n) + " exceeds cap " +
             std::to_string(cap) + " (" + to_string(bell(n)) + " partitions)");
  }
}

}  // namespace

PartitionStream::PartitionStream(int n, int cap)
    : PartitionStream(n, std::span<const int>{}, cap) {}

PartitionStream::PartitionStream(int n, std::span<const int> prefix, int cap)
    : n_(n), fixed_(prefix.size()) {
  check_enumeration_size(n, cap);
  if (prefix.size() > static_cast<std::size_t>(n) || !is_canonical(prefix)) {
    fail(ErrorKind::invalid_input, "enumeration prefix is not canonical");
  }
  labels_.assign(static_cast<std::size_t>(n), 1);
  std::copy(prefix.begin(), prefix.end(), labels_.begin());
  prefix_max_.assign(static_cast<std::size_t>(n), 0);
  int running = 0;
  for (std::size_t t = 0; t < labels_.size(); ++t) {
    prefix_max_[t] = running;
    running = std::max(running, labels_[t]);
  }
  // The first label is always 1; it never advances.
  if (fixed_ == 0) fixed_ = 1;
}

Allocation PartitionStream::current() const {
  return Allocation::from_canonical(labels_);
}

void PartitionStream::advance() {
  if (done_) return;
  std::size_t t = labels_.size();
  while (t > fixed_) {
    --t;
    if (labels_[t] <= prefix_max_[t]) {
      ++labels_[t];
      int running = std::max(prefix_max_[t], labels_[t]);
      for (std::size_t u = t + 1; u < labels_.size(); ++u) {
        labels_[u] = 1;
        prefix_max_[u] = running;
      }
      return;
    }
  }
  done_ = true;
}

void for_each_partition(int n,
                        const std::function<void(std::span<const int>)>& fn,
                        int cap) {
  for (PartitionStream s(n, cap); !s.done(); s.advance()) fn(s.labels());
}

std::vector<Allocation> enumerate_partitions(int n, int cap) {
  std::vector<Allocation> out;
  for (PartitionStream s(n, cap); !s.done(); s.advance()) {
    out.push_back(s.current());
  }
  return out;
}

namespace {

BigCount checked_add(BigCount a, BigCount b) {
  BigCount r;
  if (__builtin_add_overflow(a, b, &r)) {
    fail(ErrorKind::resource_limit, "partition count exceeds 128 bits");
  }
  return r;
}

BigCount checked_mul(BigCount a, BigCount b) {
  BigCount r;
  if (__builtin_mul_overflow(a, b, &r)) {
    fail(ErrorKind::resource_limit, "partition count exceeds 128 bits");
  }
  return r;
}

// Row n of the Stirling triangle, entries k = 0..n.
std::vector<BigCount> stirling_row(int n) {
  std::vector<BigCount> row{1};
  for (int m = 1; m <= n; ++m) {
    std::vector<BigCount> next(static_cast<std::size_t>(m) + 1, 0);
    for (int k = 1; k <= m; ++k) {
      BigCount stay = k < m ? checked_mul(static_cast<BigCount>(k),
                                          row[static_cast<std::size_t>(k)])
                            : 0;
      next[static_cast<std::size_t>(k)] =
          checked_add(stay, row[static_cast<std::size_t>(k - 1)]);
    }
    row = std::move(next);
  }
  return row;
}

}  // namespace

BigCount stirling2(int n, int c) {
  if (n < 1 || c < 1 || c > n) {
    fail(ErrorKind::invalid_input, "stirling2 requires 1 <= C <= N, got N=" +
                                       std::to_string(n) +
                                       " C=" + std::to_string(c));
  }
  return stirling_row(n)[static_cast<std::size_t>(c)];
}

BigCount bell(int n) {
  if (n < 1) fail(ErrorKind::invalid_input, "bell requires N >= 1");
  BigCount total = 0;
  for (BigCount s : stirling_row(n)) total = checked_add(total, s);
  return total;
}

}  // namespace rsclust
