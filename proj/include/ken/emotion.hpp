#pragma once

// Emotion analysis: per-modality banks of Bi-LSTM + self-attention experts,
// expert averaging, weighted fusion of text and image emotion features, and
// the auxiliary reasoning head.

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

// Combined gate weights, order [input, forget, cell, output] along columns.
struct LstmCellParams {
  int hidden = 0;
  Tensor wx;  // in x 4h
  Tensor wh;  // h x 4h
  Tensor b;   // 4h

  static LstmCellParams create(ModelParams& params, const std::string& prefix, int in, int hidden,
                               RngStream& rng) {
    LstmCellParams c;
    c.hidden = hidden;
    c.wx = xavier_matrix(in, 4 * hidden, rng);
    c.wh = xavier_matrix(hidden, 4 * hidden, rng);
    c.b = Tensor::zeros({4 * hidden});
    params.add(prefix + ".wx", c.wx);
    params.add(prefix + ".wh", c.wh);
    params.add(prefix + ".b", c.b);
    return c;
  }
};

// Runs the cell over the given step inputs from a zero initial state and
// returns the hidden state after each step.
inline std::vector<Tensor> lstm_states(const std::vector<Tensor>& xs, const LstmCellParams& cell) {
  const int h = cell.hidden;
  Tensor h_prev = Tensor::zeros({h});
  Tensor c_prev = Tensor::zeros({h});
  std::vector<Tensor> states;
  states.reserve(xs.size());
  for (const Tensor& x_t : xs) {
    Tensor z = add(add(matmul(x_t, cell.wx), matmul(h_prev, cell.wh)), cell.b);
    Tensor in_gate = sigmoid(slice_vec(z, 0, h));
    Tensor forget_gate = sigmoid(slice_vec(z, h, h));
    Tensor cell_cand = tanh_op(slice_vec(z, 2 * h, h));
    Tensor out_gate = sigmoid(slice_vec(z, 3 * h, h));
    Tensor c_t = add(mul(forget_gate, c_prev), mul(in_gate, cell_cand));
    Tensor h_t = mul(out_gate, tanh_op(c_t));
    states.push_back(h_t);
    h_prev = h_t;
    c_prev = c_t;
  }
  return states;
}

// Per position: forward state concatenated with the backward state of the
// reversed pass aligned back to input order. Output [len x 2h].
inline Tensor bilstm(const Tensor& seq, const LstmCellParams& fwd, const LstmCellParams& bwd) {
  const int len = seq.rows();
  std::vector<Tensor> xs;
  xs.reserve(static_cast<std::size_t>(len));
  for (int t = 0; t < len; ++t) xs.push_back(row(seq, t));
  std::vector<Tensor> fwd_states = lstm_states(xs, fwd);
  std::vector<Tensor> rev(xs.rbegin(), xs.rend());
  std::vector<Tensor> bwd_states = lstm_states(rev, bwd);
  std::vector<Tensor> rows;
  rows.reserve(static_cast<std::size_t>(len));
  for (int t = 0; t < len; ++t) {
    rows.push_back(concat_vec({fwd_states[static_cast<std::size_t>(t)],
                               bwd_states[static_cast<std::size_t>(len - 1 - t)]}));
  }
  return stack_rows(rows);
}

struct EmotionExpertParams {
  LstmCellParams fwd, bwd;  // independent weights
  int attn_heads = 1;
  Tensor wq, wk, wv, wo;  // 2h x 2h
  FeedForward sigma;      // 2h -> d_e_out

  static EmotionExpertParams create(ModelParams& params, const std::string& prefix, int d, int d_e,
                                    int d_e_out, int attn_heads, RngStream& rng) {
    EmotionExpertParams p;
    p.attn_heads = attn_heads;
    p.fwd = LstmCellParams::create(params, prefix + ".fwd", d, d_e, rng);
    p.bwd = LstmCellParams::create(params, prefix + ".bwd", d, d_e, rng);
    const int w = 2 * d_e;
    if (attn_heads < 1 || w % attn_heads != 0) {
      throw ConfigError("expert '" + prefix + "': " + std::to_string(attn_heads) +
                        " heads do not divide width " + std::to_string(w));
    }
    p.wq = xavier_matrix(w, w, rng);
    p.wk = xavier_matrix(w, w, rng);
    p.wv = xavier_matrix(w, w, rng);
    p.wo = xavier_matrix(w, w, rng);
    params.add(prefix + ".wq", p.wq);
    params.add(prefix + ".wk", p.wk);
    params.add(prefix + ".wv", p.wv);
    params.add(prefix + ".wo", p.wo);
    p.sigma = FeedForward::create(params, prefix + ".sigma", w, 2 * d_e_out, d_e_out, rng);
    return p;
  }
};

// Bi-LSTM over positions, self-attention over the state sequence, mean-pool,
// feed-forward. Dropout lands on the self-attention output.
inline Tensor emotion_expert(const Tensor& seq, const EmotionExpertParams& p,
                             const DropoutCtx& drop = {}, std::vector<Tensor>* attn_rows = nullptr) {
  Tensor states = bilstm(seq, p.fwd, p.bwd);
  Tensor att = multi_head_attention(states, states, p.wq, p.wk, p.wv, p.wo, p.attn_heads, attn_rows);
  att = drop.apply(att);
  return p.sigma.apply(mean_rows(att));
}

inline Tensor aggregate_experts(const std::vector<Tensor>& outputs) {
  if (outputs.empty()) throw ConfigError("aggregate_experts: empty expert output list");
  return average(outputs);
}

// M_e from gamma-weighted emotion features. gamma = 1 silences the image
// side bit-exactly (the slot becomes hard zeros), gamma = 0 the text side.
inline Tensor combine_emotions(const Tensor& e_t, const Tensor& e_v, double gamma,
                               const FeedForward& sigma_e) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw ConfigError("combine_emotions: gamma must lie in [0, 1], got " + std::to_string(gamma));
  }
  return sigma_e.apply(concat_vec({scale(e_t, gamma), scale(e_v, 1.0 - gamma)}));
}

// Reasoning head: the veracity label supervises the emotion feature.
// Returns the probability pair (off-graph) and the scalar loss.
inline std::pair<Tensor, Tensor> emotion_reasoning_loss(const Tensor& m_e, int y, const Tensor& w_e,
                                                        const Tensor& b_e) {
  Tensor logits = add(matmul(m_e, w_e), b_e);
  Tensor loss = cross_entropy(logits, {y});
  return {softmax_raw(logits), loss};
}

// ---------------------------------------------------------------------------

struct EmotionConfig {
  int d = 32;        // input sequence width
  int d_e = 8;       // LSTM hidden width per direction
  int d_e_out = 8;   // emotion feature width
  int experts = 3;   // per modality
  int attn_heads = 1;
  double gamma = 0.7;
};

struct EmotionParams {
  EmotionConfig cfg;
  std::vector<EmotionExpertParams> text_experts, image_experts;
  FeedForward sigma_e;   // 2*d_e_out -> d_e_out
  bool with_head = true;  // false removes the reasoning head (params and ops)
  Tensor w_e, b_e;       // d_e_out x 2, 2

  static EmotionParams create(ModelParams& params, const EmotionConfig& cfg,
                              std::uint64_t master_seed, bool with_head = true) {
    if (cfg.experts < 1) throw ConfigError("emotion: expert count must be at least 1");
    EmotionParams p;
    p.cfg = cfg;
    p.with_head = with_head;
    auto make_experts = [&](const std::string& side, std::vector<EmotionExpertParams>& out) {
      for (int k = 0; k < cfg.experts; ++k) {
        const std::string prefix = "emotion." + side + "_expert" + std::to_string(k);
        RngStream rng = named_stream(master_seed, "init." + prefix);
        out.push_back(EmotionExpertParams::create(params, prefix, cfg.d, cfg.d_e, cfg.d_e_out,
                                                  cfg.attn_heads, rng));
      }
    };
    make_experts("text", p.text_experts);
    make_experts("image", p.image_experts);
    {
      RngStream rng = named_stream(master_seed, "init.emotion.combine");
      p.sigma_e = FeedForward::create(params, "emotion.combine", 2 * cfg.d_e_out,
                                      2 * cfg.d_e_out, cfg.d_e_out, rng);
    }
    if (with_head) {
      RngStream rng = named_stream(master_seed, "init.emotion.head");
      p.w_e = xavier_matrix(cfg.d_e_out, 2, rng);
      p.b_e = Tensor::zeros({2});
      params.add("emotion.head.w", p.w_e);
      params.add("emotion.head.b", p.b_e);
    }
    return p;
  }
};

struct EmotionOutputs {
  Tensor e_t, e_v;  // averaged expert features per modality
  Tensor m_e;       // fused emotion feature
  Tensor logits;    // reasoning head logits (pre-softmax); undefined without the head
};

inline EmotionOutputs emotion_forward(const EmotionParams& p, const Tensor& T, const Tensor& V,
                                      const DropoutCtx& drop = {},
                                      std::vector<Tensor>* attn_rows = nullptr) {
  TraceScope module_scope("emotion");
  EmotionOutputs out;
  std::vector<Tensor> text_out, image_out;
  for (int k = 0; k < p.cfg.experts; ++k) {
    TraceScope scope("text_expert" + std::to_string(k));
    text_out.push_back(
        emotion_expert(T, p.text_experts[static_cast<std::size_t>(k)], drop, attn_rows));
  }
  for (int k = 0; k < p.cfg.experts; ++k) {
    TraceScope scope("image_expert" + std::to_string(k));
    image_out.push_back(
        emotion_expert(V, p.image_experts[static_cast<std::size_t>(k)], drop, attn_rows));
  }
  {
    TraceScope scope("combine");
    out.e_t = aggregate_experts(text_out);
    out.e_v = aggregate_experts(image_out);
    out.m_e = combine_emotions(out.e_t, out.e_v, p.cfg.gamma, p.sigma_e);
  }
  if (p.with_head) {
    TraceScope scope("head");
    out.logits = add(matmul(out.m_e, p.w_e), p.b_e);
  }
  return out;
}

}  // namespace ken
