#pragma once

// Balanced learning: the concatenated news representation fans out to a bank
// of processors, an emotion-guided gate mixes their outputs, and a linear
// head classifies. Total loss couples the detection and emotion objectives.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ken/nn.hpp"
#include "ken/ops.hpp"
#include "ken/params.hpp"
#include "ken/rng.hpp"
#include "ken/tape.hpp"
#include "ken/tensor.hpp"

namespace ken {

// Fixed segment order: text, image, emotion, fused.
inline Tensor concat_features(const Tensor& m_t, const Tensor& m_v, const Tensor& m_e,
                              const Tensor& m_f) {
  return concat_vec({m_t, m_v, m_e, m_f});
}

struct BalancedConfig {
  int d_m = 0;         // concatenated representation width
  int d_f = 16;        // processed feature width
  int d_e_out = 8;     // gate input width
  int processors = 5;  // bank size
  bool use_gate = true;
};

struct BalancedParams {
  BalancedConfig cfg;
  std::vector<FeedForward> processors;  // each d_m -> d_f
  Tensor gate_w, gate_b;                // d_e_out x bank, bank
  Tensor w_f, b_f;                      // d_f x 2, 2

  static BalancedParams create(ModelParams& params, const BalancedConfig& cfg,
                               std::uint64_t master_seed) {
    if (cfg.processors < 1) throw ConfigError("balance: processor count must be at least 1");
    if (cfg.d_m < 1) throw ConfigError("balance: input width must be at least 1");
    BalancedParams p;
    p.cfg = cfg;
    for (int i = 0; i < cfg.processors; ++i) {
      const std::string prefix = "balance.proc" + std::to_string(i);
      RngStream rng = named_stream(master_seed, "init." + prefix);
      p.processors.push_back(
          FeedForward::create(params, prefix, cfg.d_m, 2 * cfg.d_f, cfg.d_f, rng));
    }
    if (cfg.use_gate) {
      RngStream rng = named_stream(master_seed, "init.balance.gate");
      p.gate_w = xavier_matrix(cfg.d_e_out, cfg.processors, rng);
      p.gate_b = Tensor::zeros({cfg.processors});
      params.add("balance.gate.w", p.gate_w);
      params.add("balance.gate.b", p.gate_b);
    }
    {
      RngStream rng = named_stream(master_seed, "init.balance.classify");
      p.w_f = xavier_matrix(cfg.d_f, 2, rng);
      p.b_f = Tensor::zeros({2});
      params.add("balance.classify.w", p.w_f);
      params.add("balance.classify.b", p.b_f);
    }
    return p;
  }
};

inline std::vector<Tensor> run_processors(const Tensor& m, const BalancedParams& p) {
  std::vector<Tensor> outs;
  outs.reserve(p.processors.size());
  for (std::size_t i = 0; i < p.processors.size(); ++i) {
    TraceScope scope("proc" + std::to_string(i));
    outs.push_back(p.processors[i].apply(m));
  }
  return outs;
}

// Mixing weights from a single affine map over the emotion feature.
inline Tensor gate_weights(const Tensor& m_e, const Tensor& gate_w, const Tensor& gate_b) {
  return softmax_rows(add(matmul(m_e, gate_w), gate_b));
}

inline Tensor uniform_gate(int bank) {
  return Tensor::full({bank}, 1.0 / static_cast<double>(bank));
}

// F = sum_x a_x m_x, a convex combination of the processed features.
inline Tensor aggregate(const Tensor& a, const std::vector<Tensor>& processed) {
  return weighted_sum(a, processed);
}

inline Tensor classify_logits(const Tensor& f, const Tensor& w_f, const Tensor& b_f) {
  return add(matmul(f, w_f), b_f);
}

// Returns the probability pair (off-graph) and the scalar detection loss.
inline std::pair<Tensor, Tensor> classify(const Tensor& f, const Tensor& w_f, const Tensor& b_f,
                                          int y) {
  Tensor logits = classify_logits(f, w_f, b_f);
  return {softmax_raw(logits), cross_entropy(logits, {y})};
}

// L = L_fnd + lambda * L_emo. At lambda = 0 the emotion term contributes
// hard zeros, so L is bit-identical to L_fnd.
inline Tensor total_loss(const Tensor& l_fnd, const Tensor& l_emo, double lambda) {
  if (lambda < 0.0) throw ConfigError("total_loss: lambda must be nonnegative, got " +
                                      std::to_string(lambda));
  return add(l_fnd, scale(l_emo, lambda));
}

struct BalancedOutputs {
  Tensor a;                      // gate weights over the bank
  std::vector<Tensor> processed; // per-processor features
  Tensor f;                      // aggregated feature
  Tensor logits;                 // detection head logits
};

inline BalancedOutputs balanced_forward(const BalancedParams& p, const Tensor& m,
                                        const Tensor& m_e) {
  TraceScope module_scope("balance");
  BalancedOutputs out;
  out.processed = run_processors(m, p);
  {
    TraceScope scope("gate");
    out.a = p.cfg.use_gate ? gate_weights(m_e, p.gate_w, p.gate_b)
                           : uniform_gate(p.cfg.processors);
  }
  {
    TraceScope scope("aggregate");
    out.f = aggregate(out.a, out.processed);
  }
  {
    TraceScope scope("classify");
    out.logits = classify_logits(out.f, p.w_f, p.b_f);
  }
  return out;
}

}  // namespace ken
