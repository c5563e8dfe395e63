#pragma once

// Knowledge augmentation: co-attention between the post and its external
// knowledge sequences (evidence for text, caption for image), three fusion
// perspectives, a similarity-gated fused feature, and clip-enhanced unimodal
// features.

#include <algorithm>
#include <cmath>
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

// One encoder layer: multi-head attention of the query sequence over the
// key/value sequence, residual + norm, feed-forward, residual + norm.
// Dropout lands on the layer output.
struct CoAttentionEncoderParams {
  int heads = 1;
  Tensor wq, wk, wv, wi;
  Tensor ln1_gain, ln1_bias, ln2_gain, ln2_bias;
  FeedForward ffn;

  static CoAttentionEncoderParams create(ModelParams& params, const std::string& prefix, int d,
                                         int d_ff, int heads, RngStream& rng) {
    if (heads < 1 || d % heads != 0) {
      throw ConfigError("encoder '" + prefix + "': " + std::to_string(heads) +
                        " heads do not divide width " + std::to_string(d));
    }
    CoAttentionEncoderParams p;
    p.heads = heads;
    p.wq = xavier_matrix(d, d, rng);
    p.wk = xavier_matrix(d, d, rng);
    p.wv = xavier_matrix(d, d, rng);
    p.wi = xavier_matrix(d, d, rng);
    p.ln1_gain = Tensor::ones({d});
    p.ln1_bias = Tensor::zeros({d});
    p.ln2_gain = Tensor::ones({d});
    p.ln2_bias = Tensor::zeros({d});
    params.add(prefix + ".wq", p.wq);
    params.add(prefix + ".wk", p.wk);
    params.add(prefix + ".wv", p.wv);
    params.add(prefix + ".wi", p.wi);
    params.add(prefix + ".ln1_gain", p.ln1_gain);
    params.add(prefix + ".ln1_bias", p.ln1_bias);
    params.add(prefix + ".ln2_gain", p.ln2_gain);
    params.add(prefix + ".ln2_bias", p.ln2_bias);
    p.ffn = FeedForward::create(params, prefix + ".ffn", d, d_ff, d, rng);
    return p;
  }
};

inline Tensor co_attention_encoder(const Tensor& query_seq, const Tensor& kv_seq,
                                   const CoAttentionEncoderParams& p, const DropoutCtx& drop = {},
                                   std::vector<Tensor>* attn_rows = nullptr) {
  if (query_seq.cols() != kv_seq.cols()) {
    throw ShapeError("co_attention_encoder: query " + shape_str(query_seq.shape()) + " and kv " +
                     shape_str(kv_seq.shape()) + " disagree on width");
  }
  Tensor mh = multi_head_attention(query_seq, kv_seq, p.wq, p.wk, p.wv, p.wi, p.heads, attn_rows);
  Tensor hprime = layer_norm(add(query_seq, mh), p.ln1_gain, p.ln1_bias);
  Tensor out = layer_norm(add(hprime, p.ffn.apply(hprime)), p.ln2_gain, p.ln2_bias);
  return drop.apply(out);
}

// A stack of encoder layers applied query-side; the kv sequence is the same
// for every layer. Depth 1 unless configured otherwise.
using CoAttentionStack = std::vector<CoAttentionEncoderParams>;

inline CoAttentionStack create_stack(ModelParams& params, const std::string& prefix, int d,
                                     int d_ff, int heads, int depth, std::uint64_t master_seed) {
  RngStream rng = named_stream(master_seed, "init." + prefix);
  CoAttentionStack stack;
  for (int l = 0; l < depth; ++l) {
    stack.push_back(CoAttentionEncoderParams::create(params, prefix + ".l" + std::to_string(l), d,
                                                     d_ff, heads, rng));
  }
  return stack;
}

inline Tensor apply_stack(const Tensor& query_seq, const Tensor& kv_seq,
                          const CoAttentionStack& stack, const DropoutCtx& drop = {},
                          std::vector<Tensor>* attn_rows = nullptr) {
  Tensor out = query_seq;
  for (const CoAttentionEncoderParams& layer : stack) {
    out = co_attention_encoder(out, kv_seq, layer, drop, attn_rows);
  }
  return out;
}

// Both directions of one co-attention block; the two encoders hold
// independent weights.
inline std::pair<Tensor, Tensor> co_attention_block(const Tensor& seq_a, const Tensor& seq_b,
                                                    const CoAttentionStack& enc_a,
                                                    const CoAttentionStack& enc_b,
                                                    const DropoutCtx& drop = {},
                                                    std::vector<Tensor>* attn_rows = nullptr) {
  Tensor enhanced_a, enhanced_b;
  {
    TraceScope scope("a");
    enhanced_a = apply_stack(seq_a, seq_b, enc_a, drop, attn_rows);
  }
  {
    TraceScope scope("b");
    enhanced_b = apply_stack(seq_b, seq_a, enc_b, drop, attn_rows);
  }
  return {enhanced_a, enhanced_b};
}

// Mean-pool each enhanced sequence, concatenate, project through the
// perspective head.
inline Tensor build_perspective(const Tensor& enh_1, const Tensor& enh_2, const FeedForward& sigma) {
  return sigma.apply(concat_vec({mean_rows(enh_1), mean_rows(enh_2)}));
}

inline Tensor clip_perspective(const Tensor& t_c, const Tensor& v_c, const FeedForward& sigma_3) {
  return sigma_3.apply(concat_vec({t_c, v_c}));
}

// Similarity gate: cosine clamped at zero so weakly aligned pairs attenuate
// the fused feature instead of flipping its sign.
inline double similarity_gate(const Tensor& t_c, const Tensor& v_c) {
  return std::max(0.0, cosine_raw(t_c, v_c));
}

inline Tensor fuse_perspectives(const Tensor& s_1, const Tensor& s_2, const Tensor& s_3,
                                const Tensor& t_c, const Tensor& v_c, const FeedForward& sigma_f) {
  const double theta = similarity_gate(t_c, v_c);
  return scale(sigma_f.apply(concat_vec({s_1, s_2, s_3})), theta);
}

// Clip vector first, then the pooled sequence.
inline Tensor enhance_unimodal(const Tensor& seq, const Tensor& clip_vec, const FeedForward& sigma_m) {
  return sigma_m.apply(concat_vec({clip_vec, mean_rows(seq)}));
}

// ---------------------------------------------------------------------------

struct KnowledgeConfig {
  int d = 32;        // sequence embedding width
  int d_c = 32;      // clip vector width
  int d_s = 32;      // perspective / fused feature width
  int d_ff = 64;     // encoder feed-forward hidden width
  int heads = 8;
  int depth = 1;     // encoder layers per direction
};

// Which parts of the module are active. Disabling the module as a whole
// leaves only the plain unimodal projections.
struct KnowledgeFlags {
  bool module_on = true;    // full knowledge augmentation present
  bool clip = true;         // clip perspective + similarity gate + clip slots
  bool evidence = true;     // text attends real evidence (else self-pair)
  bool caption = true;      // image attends real caption (else self-pair)
  bool coattention = true;  // attention vs plain pool-concat perspectives
};

struct KnowledgeParams {
  KnowledgeConfig cfg;
  KnowledgeFlags flags;
  CoAttentionStack text_enc, evidence_enc;  // text <-> evidence block
  CoAttentionStack image_enc, caption_enc;  // image <-> caption block
  FeedForward sigma_1, sigma_2, sigma_3, sigma_f, sigma_t, sigma_v;

  static KnowledgeParams create(ModelParams& params, const KnowledgeConfig& cfg,
                                const KnowledgeFlags& flags, std::uint64_t master_seed) {
    KnowledgeParams p;
    p.cfg = cfg;
    p.flags = flags;
    const int ds = cfg.d_s;
    auto make_sigma = [&](const std::string& prefix, int in, int out) {
      RngStream rng = named_stream(master_seed, "init." + prefix);
      return FeedForward::create(params, prefix, in, 2 * out, out, rng);
    };
    if (flags.module_on) {
      if (flags.coattention) {
        p.text_enc = create_stack(params, "knowledge.text_evidence.text", cfg.d, cfg.d_ff,
                                  cfg.heads, cfg.depth, master_seed);
        p.evidence_enc = create_stack(params, "knowledge.text_evidence.evidence", cfg.d, cfg.d_ff,
                                      cfg.heads, cfg.depth, master_seed);
        p.image_enc = create_stack(params, "knowledge.image_caption.image", cfg.d, cfg.d_ff,
                                   cfg.heads, cfg.depth, master_seed);
        p.caption_enc = create_stack(params, "knowledge.image_caption.caption", cfg.d, cfg.d_ff,
                                     cfg.heads, cfg.depth, master_seed);
      }
      p.sigma_1 = make_sigma("knowledge.text_evidence.head", 2 * cfg.d, ds);
      p.sigma_2 = make_sigma("knowledge.image_caption.head", 2 * cfg.d, ds);
      if (flags.clip) {
        p.sigma_3 = make_sigma("knowledge.clip_pair.head", 2 * cfg.d_c, ds);
        p.sigma_f = make_sigma("knowledge.fuse.head", 3 * ds, ds);
      } else {
        p.sigma_f = make_sigma("knowledge.fuse.head", 2 * ds, ds);
      }
    }
    const bool clip_slots = flags.module_on && flags.clip;
    const int uni_in = clip_slots ? cfg.d_c + cfg.d : cfg.d;
    p.sigma_t = make_sigma("knowledge.text_feat.head", uni_in, ds);
    p.sigma_v = make_sigma("knowledge.image_feat.head", uni_in, ds);
    return p;
  }
};

struct KnowledgeOutputs {
  Tensor m_t, m_v, m_f;  // unimodal text / image features and fused feature
  double theta = 1.0;    // similarity gate actually applied
};

// T: text sequence, V: image-region sequence, P: caption sequence,
// R: evidence sequence, t_c/v_c: clip vectors.
inline KnowledgeOutputs knowledge_forward(const KnowledgeParams& p, const Tensor& T,
                                          const Tensor& V, const Tensor& P, const Tensor& R,
                                          const Tensor& t_c, const Tensor& v_c,
                                          const DropoutCtx& drop = {},
                                          std::vector<Tensor>* attn_rows = nullptr) {
  TraceScope module_scope("knowledge");
  KnowledgeOutputs out;
  const KnowledgeFlags& f = p.flags;
  const bool clip_slots = f.module_on && f.clip;

  if (f.module_on) {
    const Tensor& text_partner = f.evidence ? R : T;
    const Tensor& image_partner = f.caption ? P : V;
    Tensor s1, s2;
    {
      TraceScope scope("text_evidence");
      if (f.coattention) {
        auto [enh_t, enh_r] =
            co_attention_block(T, text_partner, p.text_enc, p.evidence_enc, drop, attn_rows);
        s1 = build_perspective(enh_t, enh_r, p.sigma_1);
      } else {
        s1 = build_perspective(T, text_partner, p.sigma_1);
      }
    }
    {
      TraceScope scope("image_caption");
      if (f.coattention) {
        auto [enh_v, enh_p] =
            co_attention_block(V, image_partner, p.image_enc, p.caption_enc, drop, attn_rows);
        s2 = build_perspective(enh_v, enh_p, p.sigma_2);
      } else {
        s2 = build_perspective(V, image_partner, p.sigma_2);
      }
    }
    if (f.clip) {
      Tensor s3;
      {
        TraceScope scope("clip_pair");
        s3 = clip_perspective(t_c, v_c, p.sigma_3);
      }
      TraceScope scope("fuse");
      out.theta = similarity_gate(t_c, v_c);
      out.m_f = scale(p.sigma_f.apply(concat_vec({s1, s2, s3})), out.theta);
    } else {
      TraceScope scope("fuse");
      out.theta = 1.0;
      out.m_f = p.sigma_f.apply(concat_vec({s1, s2}));
    }
  } else {
    // Module disabled: the fused slot stays a zero vector of fixed width so
    // downstream shapes do not move.
    out.theta = 1.0;
    out.m_f = Tensor::zeros({p.cfg.d_s});
  }

  {
    TraceScope scope("text_feat");
    out.m_t = clip_slots ? enhance_unimodal(T, t_c, p.sigma_t) : p.sigma_t.apply(mean_rows(T));
  }
  {
    TraceScope scope("image_feat");
    out.m_v = clip_slots ? enhance_unimodal(V, v_c, p.sigma_v) : p.sigma_v.apply(mean_rows(V));
  }
  return out;
}

}  // namespace ken
