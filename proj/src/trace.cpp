#include "rsclust/trace.hpp"

#include "rsclust/errors.hpp"

namespace rsclust {

long Trace::find(const StateKey& key) const {
  auto it = index_.find(key);
  return it == index_.end() ? -1L : static_cast<long>(it->second);
}

void Trace::push(const StateKey& key, double log_post) {
  auto it = index_.find(key);
  if (it != index_.end() && log_post_[it->second] != log_post) {
    fail(ErrorKind::invalid_input,
         "conflicting log posterior for state " + key.str());
  }
  push_lazy(key, [log_post] { return log_post; });
}

Trace Trace::prefix(std::size_t n) const {
  Trace out;
  out.meta = meta;
  const std::size_t m = std::min(n, path_.size());
  for (std::size_t t = 0; t < m; ++t) {
    out.push_lazy(state(t), [&] { return log_post(t); });
  }
  return out;
}

}  // namespace rsclust
