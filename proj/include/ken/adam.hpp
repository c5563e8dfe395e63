#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "ken/errors.hpp"
#include "ken/params.hpp"

namespace ken {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. Moment buffers are keyed by parameter path and
// persist across steps; the step counter t starts at 1 on the first call.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  std::int64_t step_count() const { return t_; }

  void step(ModelParams& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& [path, tensor] : params.entries()) {
      Tensor t = tensor;
      if (!t.has_grad()) {
        throw Error("adam_step: missing gradient for parameter '" + path + "'");
      }
      Slot& slot = slots_[path];
      if (slot.m.size() != static_cast<std::size_t>(t.size())) {
        slot.m.assign(static_cast<std::size_t>(t.size()), 0.0);
        slot.v.assign(static_cast<std::size_t>(t.size()), 0.0);
      }
      auto g = t.grad();
      auto x = t.data();
      for (std::size_t i = 0; i < x.size(); ++i) {
        slot.m[i] = cfg_.beta1 * slot.m[i] + (1.0 - cfg_.beta1) * g[i];
        slot.v[i] = cfg_.beta2 * slot.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        const double mhat = slot.m[i] / bc1;
        const double vhat = slot.v[i] / bc2;
        x[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

  // Checkpoint access: flat moment buffers in parameter registration order.
  struct Slot {
    std::vector<double> m;
    std::vector<double> v;
  };

  const Slot* slot(const std::string& path) const {
    auto it = slots_.find(path);
    return it == slots_.end() ? nullptr : &it->second;
  }

  void restore_slot(const std::string& path, Slot s) { slots_[path] = std::move(s); }
  void set_step_count(std::int64_t t) { t_ = t; }

 private:
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::unordered_map<std::string, Slot> slots_;
};

}  // namespace ken
