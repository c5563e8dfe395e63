#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ken/ops.hpp"
#include "ken/params.hpp"
#include "ken/rng.hpp"
#include "ken/tensor.hpp"

namespace ken {

// One hidden layer with GELU, linear output. Applies row-wise to rank-2
// inputs and directly to rank-1 inputs.
struct FeedForward {
  Tensor w1, b1, w2, b2;

  static FeedForward create(ModelParams& params, const std::string& prefix, int in, int hidden,
                            int out, RngStream& rng) {
    FeedForward f;
    f.w1 = xavier_matrix(in, hidden, rng);
    f.b1 = Tensor::zeros({hidden});
    f.w2 = xavier_matrix(hidden, out, rng);
    f.b2 = Tensor::zeros({out});
    params.add(prefix + ".w1", f.w1);
    params.add(prefix + ".b1", f.b1);
    params.add(prefix + ".w2", f.w2);
    params.add(prefix + ".b2", f.b2);
    return f;
  }

  static FeedForward from_params(const ModelParams& params, const std::string& prefix) {
    FeedForward f;
    f.w1 = params.at(prefix + ".w1");
    f.b1 = params.at(prefix + ".b1");
    f.w2 = params.at(prefix + ".w2");
    f.b2 = params.at(prefix + ".b2");
    return f;
  }

  Tensor apply(const Tensor& x) const {
    Tensor h = gelu(add_bias(matmul(x, w1), b1));
    return add_bias(matmul(h, w2), b2);
  }

  int out_dim() const { return w2.cols(); }
};

// Carries the dropout configuration through forward passes. Inactive outside
// training, so inference paths never touch the stream.
struct DropoutCtx {
  double rate = 0.0;
  RngStream* rng = nullptr;
  bool training = false;

  Tensor apply(const Tensor& x) const {
    if (!training || rate == 0.0) return x;
    return dropout(x, rate, *rng, true);
  }
};

// softmax(Q_h K_h^T / sqrt(d_h)) V_h per head, heads concatenated and
// projected by wo. Head width divides the sequence width. When attn_rows is
// given, the per-head attention probability matrices are appended to it.
inline Tensor multi_head_attention(const Tensor& q_in, const Tensor& kv_in, const Tensor& wq,
                                   const Tensor& wk, const Tensor& wv, const Tensor& wo, int heads,
                                   std::vector<Tensor>* attn_rows = nullptr) {
  const int width = q_in.cols();
  if (heads < 1 || width % heads != 0) {
    throw ConfigError("multi_head_attention: " + std::to_string(heads) +
                      " heads do not divide width " + std::to_string(width));
  }
  const int dh = width / heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor q = matmul(q_in, wq);
  Tensor k = matmul(kv_in, wk);
  Tensor v = matmul(kv_in, wv);
  std::vector<Tensor> head_outs;
  head_outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Tensor qh = heads == 1 ? q : slice_cols(q, h * dh, dh);
    Tensor kh = heads == 1 ? k : slice_cols(k, h * dh, dh);
    Tensor vh = heads == 1 ? v : slice_cols(v, h * dh, dh);
    Tensor att = softmax_rows(scale(matmul(qh, transpose(kh)), inv_scale));
    if (attn_rows) attn_rows->push_back(att);
    head_outs.push_back(matmul(att, vh));
  }
  Tensor concat = heads == 1 ? head_outs[0] : concat_cols(head_outs);
  return matmul(concat, wo);
}

}  // namespace ken
