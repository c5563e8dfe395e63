#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ken/errors.hpp"
#include "ken/rng.hpp"
#include "ken/tensor.hpp"

namespace ken {

// Ordered registry of trainable tensors keyed by a dotted path such as
// "knowledge.fuse.head.w1". Registration order is the canonical iteration
// order everywhere (optimizer, checkpoints, gradient checks).
class ModelParams {
 public:
  Tensor& add(const std::string& path, Tensor t) {
    if (index_.count(path)) throw ConfigError("duplicate parameter path '" + path + "'");
    t.set_requires_grad(true);
    index_[path] = entries_.size();
    entries_.emplace_back(path, std::move(t));
    return entries_.back().second;
  }

  bool contains(const std::string& path) const { return index_.count(path) != 0; }

  Tensor& at(const std::string& path) {
    auto it = index_.find(path);
    if (it == index_.end()) throw ConfigError("unknown parameter path '" + path + "'");
    return entries_[it->second].second;
  }

  const Tensor& at(const std::string& path) const {
    auto it = index_.find(path);
    if (it == index_.end()) throw ConfigError("unknown parameter path '" + path + "'");
    return entries_[it->second].second;
  }

  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }

  std::size_t count() const { return entries_.size(); }

  std::int64_t scalar_count() const {
    std::int64_t n = 0;
    for (const auto& [path, t] : entries_) n += t.size();
    return n;
  }

  void zero_grad() {
    for (auto& [path, t] : entries_) t.zero_grad();
  }

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Glorot/Xavier uniform fill in +-sqrt(6 / (fan_in + fan_out)), drawn in
// row-major index order.
inline Tensor xavier_uniform(Shape shape, int fan_in, int fan_out, RngStream& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) {
    t.at(static_cast<int>(i)) = rng.uniform(-limit, limit);
  }
  return t;
}

// Standard fan convention for a [rows x cols] weight applied as x * W.
inline Tensor xavier_matrix(int rows, int cols, RngStream& rng) {
  return xavier_uniform({rows, cols}, rows, cols, rng);
}

}  // namespace ken
