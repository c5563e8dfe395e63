#pragma once

// Straight-line reference implementations of the model equations, written
// directly from their algebraic forms over flat row-major double vectors.
// Independent of the tensor/graph engine by construction.

#include <cmath>
#include <cstddef>
#include <vector>

#include "oracles.hpp"

namespace oracle {

// x[in] * W[in x out] + b[out]
inline std::vector<double> affine(const std::vector<double>& x, const std::vector<double>& w,
                                  const std::vector<double>& b, int in, int out) {
  std::vector<double> y(static_cast<std::size_t>(out), 0.0);
  for (int j = 0; j < out; ++j) {
    double acc = 0.0;
    for (int i = 0; i < in; ++i) acc += x[static_cast<std::size_t>(i)] * w[static_cast<std::size_t>(i) * out + j];
    y[static_cast<std::size_t>(j)] = acc + (b.empty() ? 0.0 : b[static_cast<std::size_t>(j)]);
  }
  return y;
}

inline std::vector<double> concat(const std::vector<std::vector<double>>& parts) {
  std::vector<double> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

inline std::vector<double> mean_rows(const std::vector<double>& m, int rows, int cols) {
  std::vector<double> out(static_cast<std::size_t>(cols), 0.0);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) out[static_cast<std::size_t>(j)] += m[static_cast<std::size_t>(i) * cols + j];
  for (double& v : out) v /= rows;
  return out;
}

// One hidden layer, GELU, linear output.
struct Ffn {
  int in = 0, hidden = 0, out = 0;
  std::vector<double> w1, b1, w2, b2;
};

inline std::vector<double> ffn_apply(const Ffn& f, const std::vector<double>& x) {
  std::vector<double> h = affine(x, f.w1, f.b1, f.in, f.hidden);
  for (double& v : h) v = gelu(v);
  return affine(h, f.w2, f.b2, f.hidden, f.out);
}

// Applies the FFN to each row of a [rows x f.in] matrix.
inline std::vector<double> ffn_apply_rows(const Ffn& f, const std::vector<double>& m, int rows) {
  std::vector<double> out(static_cast<std::size_t>(rows) * f.out);
  for (int r = 0; r < rows; ++r) {
    std::vector<double> row(m.begin() + static_cast<std::ptrdiff_t>(r) * f.in,
                            m.begin() + static_cast<std::ptrdiff_t>(r + 1) * f.in);
    std::vector<double> y = ffn_apply(f, row);
    for (int j = 0; j < f.out; ++j) out[static_cast<std::size_t>(r) * f.out + j] = y[static_cast<std::size_t>(j)];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Multi-head attention building block shared by the co-attention encoder and
// the expert self-attention: softmax(Q_j K_j^T / sqrt(d_h)) V_j per head,
// heads concatenated and projected.
inline std::vector<double> multi_head_attention(const std::vector<double>& q_in, int a,
                                                const std::vector<double>& kv_in, int b, int width,
                                                int heads, const std::vector<double>& wq,
                                                const std::vector<double>& wk,
                                                const std::vector<double>& wv,
                                                const std::vector<double>& wo) {
  const int dh = width / heads;
  std::vector<double> q = matmul(q_in, wq, a, width, width);
  std::vector<double> k = matmul(kv_in, wk, b, width, width);
  std::vector<double> v = matmul(kv_in, wv, b, width, width);

  std::vector<double> heads_concat(static_cast<std::size_t>(a) * width, 0.0);
  for (int h = 0; h < heads; ++h) {
    const int off = h * dh;
    // scores[a x b]
    std::vector<double> scores(static_cast<std::size_t>(a) * b, 0.0);
    for (int i = 0; i < a; ++i) {
      for (int j = 0; j < b; ++j) {
        double acc = 0.0;
        for (int c = 0; c < dh; ++c) {
          acc += q[static_cast<std::size_t>(i) * width + off + c] *
                 k[static_cast<std::size_t>(j) * width + off + c];
        }
        scores[static_cast<std::size_t>(i) * b + j] = acc / std::sqrt(static_cast<double>(dh));
      }
    }
    std::vector<double> att = softmax_rows(scores, a, b);
    for (int i = 0; i < a; ++i) {
      for (int c = 0; c < dh; ++c) {
        double acc = 0.0;
        for (int j = 0; j < b; ++j) {
          acc += att[static_cast<std::size_t>(i) * b + j] *
                 v[static_cast<std::size_t>(j) * width + off + c];
        }
        heads_concat[static_cast<std::size_t>(i) * width + off + c] = acc;
      }
    }
  }
  return matmul(heads_concat, wo, a, width, width);
}

struct CoAttnEncoder {
  int d = 0, heads = 1, d_ff = 0;
  std::vector<double> wq, wk, wv, wi;              // d x d
  std::vector<double> ln1_gain, ln1_bias, ln2_gain, ln2_bias;  // d
  Ffn ffn;                                         // d -> d_ff -> d
};

// h' = Norm(q + MultiHead(q, kv, kv)); out = Norm(h' + FFN(h')).
inline std::vector<double> co_attention_encoder(const std::vector<double>& q_seq, int a,
                                                const std::vector<double>& kv_seq, int b,
                                                const CoAttnEncoder& p) {
  std::vector<double> mh =
      multi_head_attention(q_seq, a, kv_seq, b, p.d, p.heads, p.wq, p.wk, p.wv, p.wi);
  std::vector<double> res1(static_cast<std::size_t>(a) * p.d);
  for (std::size_t i = 0; i < res1.size(); ++i) res1[i] = q_seq[i] + mh[i];
  std::vector<double> hprime = layer_norm(res1, p.ln1_gain, p.ln1_bias, a, p.d);

  std::vector<double> ff = ffn_apply_rows(p.ffn, hprime, a);
  std::vector<double> res2(static_cast<std::size_t>(a) * p.d);
  for (std::size_t i = 0; i < res2.size(); ++i) res2[i] = hprime[i] + ff[i];
  return layer_norm(res2, p.ln2_gain, p.ln2_bias, a, p.d);
}

// S_j = ffn(concat(pool(enh_1), pool(enh_2)))
inline std::vector<double> perspective(const std::vector<double>& enh1, int a,
                                       const std::vector<double>& enh2, int b, int d,
                                       const Ffn& sigma) {
  return ffn_apply(sigma, concat({mean_rows(enh1, a, d), mean_rows(enh2, b, d)}));
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

// M_f = max(0, cos(t_c, v_c)) * ffn(concat(S1, S2, S3))
inline std::vector<double> fuse_perspectives(const std::vector<double>& s1,
                                             const std::vector<double>& s2,
                                             const std::vector<double>& s3,
                                             const std::vector<double>& t_c,
                                             const std::vector<double>& v_c, const Ffn& sigma_f) {
  const double theta = std::max(0.0, cosine(t_c, v_c));
  std::vector<double> fused = ffn_apply(sigma_f, concat({s1, s2, s3}));
  for (double& v : fused) v *= theta;
  return fused;
}

// M_t = ffn(concat(clip_vec, pool(seq)))
inline std::vector<double> enhance_unimodal(const std::vector<double>& seq, int len, int d,
                                            const std::vector<double>& clip_vec,
                                            const Ffn& sigma_m) {
  return ffn_apply(sigma_m, concat({clip_vec, mean_rows(seq, len, d)}));
}

// ---------------------------------------------------------------------------
// Emotion branch

struct LstmCell {
  int in = 0, hidden = 0;
  std::vector<double> wx;  // in x 4h, gate order [input, forget, cell, output]
  std::vector<double> wh;  // h x 4h
  std::vector<double> b;   // 4h
};

// Returns the hidden-state sequence [len x h], zero initial state.
inline std::vector<std::vector<double>> lstm_run(const LstmCell& cell,
                                                 const std::vector<std::vector<double>>& xs) {
  const int h = cell.hidden;
  std::vector<double> hs(static_cast<std::size_t>(h), 0.0), cs(static_cast<std::size_t>(h), 0.0);
  std::vector<std::vector<double>> out;
  for (const auto& x : xs) {
    std::vector<double> z = affine(x, cell.wx, cell.b, cell.in, 4 * h);
    std::vector<double> zh = affine(hs, cell.wh, {}, h, 4 * h);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += zh[i];
    std::vector<double> next_h(static_cast<std::size_t>(h)), next_c(static_cast<std::size_t>(h));
    for (int j = 0; j < h; ++j) {
      const double ig = sigmoid(z[static_cast<std::size_t>(j)]);
      const double fg = sigmoid(z[static_cast<std::size_t>(h + j)]);
      const double gg = std::tanh(z[static_cast<std::size_t>(2 * h + j)]);
      const double og = sigmoid(z[static_cast<std::size_t>(3 * h + j)]);
      next_c[static_cast<std::size_t>(j)] = fg * cs[static_cast<std::size_t>(j)] + ig * gg;
      next_h[static_cast<std::size_t>(j)] = og * std::tanh(next_c[static_cast<std::size_t>(j)]);
    }
    hs = next_h;
    cs = next_c;
    out.push_back(hs);
  }
  return out;
}

struct EmotionExpert {
  LstmCell fwd, bwd;  // independent weights
  int attn_heads = 1;
  std::vector<double> wq, wk, wv, wo;  // 2h x 2h
  Ffn sigma;                            // 2h -> d_e_out
};

// Bi-LSTM -> self-attention -> mean-pool -> FFN.
inline std::vector<double> emotion_expert(const EmotionExpert& p,
                                          const std::vector<std::vector<double>>& seq) {
  const int len = static_cast<int>(seq.size());
  const int h = p.fwd.hidden;
  auto fwd_states = lstm_run(p.fwd, seq);
  std::vector<std::vector<double>> rev(seq.rbegin(), seq.rend());
  auto bwd_states = lstm_run(p.bwd, rev);

  std::vector<double> H(static_cast<std::size_t>(len) * 2 * h);
  for (int t = 0; t < len; ++t) {
    for (int j = 0; j < h; ++j) {
      H[static_cast<std::size_t>(t) * 2 * h + j] = fwd_states[static_cast<std::size_t>(t)][static_cast<std::size_t>(j)];
      H[static_cast<std::size_t>(t) * 2 * h + h + j] =
          bwd_states[static_cast<std::size_t>(len - 1 - t)][static_cast<std::size_t>(j)];
    }
  }
  std::vector<double> att = multi_head_attention(H, len, H, len, 2 * h, p.attn_heads, p.wq, p.wk,
                                                 p.wv, p.wo);
  return ffn_apply(p.sigma, mean_rows(att, len, 2 * h));
}

inline std::vector<double> aggregate_mean(const std::vector<std::vector<double>>& outputs) {
  std::vector<double> out(outputs[0].size(), 0.0);
  for (const auto& o : outputs)
    for (std::size_t i = 0; i < o.size(); ++i) out[i] += o[i];
  for (double& v : out) v /= static_cast<double>(outputs.size());
  return out;
}

// M_e = sigma_e(concat(gamma * e_t, (1 - gamma) * e_v))
inline std::vector<double> combine_emotions(const std::vector<double>& e_t,
                                            const std::vector<double>& e_v, double gamma,
                                            const Ffn& sigma_e) {
  std::vector<double> left = e_t, right = e_v;
  for (double& v : left) v *= gamma;
  for (double& v : right) v *= (1.0 - gamma);
  return ffn_apply(sigma_e, concat({left, right}));
}

// ---------------------------------------------------------------------------
// Balanced learning

// a = softmax(M_e * theta_g + bias)
inline std::vector<double> gate(const std::vector<double>& m_e, const std::vector<double>& theta_g,
                                const std::vector<double>& bias, int d_in, int x) {
  return softmax_row_ld(affine(m_e, theta_g, bias, d_in, x));
}

// Two-layer processor: same convention as the sigma FFNs.
inline std::vector<double> processor(const Ffn& h_x, const std::vector<double>& m) {
  return ffn_apply(h_x, m);
}

// F = sum_x a_x m_x
inline std::vector<double> aggregate_weighted(const std::vector<double>& a,
                                              const std::vector<std::vector<double>>& m_list) {
  std::vector<double> f(m_list[0].size(), 0.0);
  for (std::size_t x = 0; x < m_list.size(); ++x)
    for (std::size_t j = 0; j < f.size(); ++j) f[j] += a[x] * m_list[x][j];
  return f;
}

}  // namespace oracle
