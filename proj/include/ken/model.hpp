#pragma once

#include <string>
#include <vector>

#include "ken/balanced.hpp"
#include "ken/config.hpp"
#include "ken/dataset.hpp"
#include "ken/emotion.hpp"
#include "ken/knowledge.hpp"

namespace ken {

// Everything the model computes for one sample. Graph tensors stay live so a
// caller can append a loss and backpropagate; probability vectors are plain
// values for reporting.
struct FeaturePack {
  Tensor m_t, m_v, m_e, m_f;  // perspective features, in concatenation order
  Tensor m;                   // concatenated representation fed to the bank
  Tensor a;                   // processor weights
  Tensor f;                   // fused detection feature
  Tensor fnd_logits;          // detection head (on graph)
  Tensor emo_logits;          // reasoning head (on graph); undefined when off
  Tensor p_fnd;               // detection probabilities (off graph)
  Tensor p_emo;               // reasoning probabilities (off graph); undefined when off
  double theta = 1.0;         // clip agreement used to scale m_f
};

struct BatchResult {
  std::vector<FeaturePack> packs;
  Tensor loss_fnd;
  Tensor loss_emo;  // undefined when the reasoning loss is off
  Tensor loss;      // the same node as loss_fnd when the reasoning loss is off
};

// The assembled detector. Construction registers every parameter under a
// stable dotted path (knowledge.*, emotion.*, balance.*); each component
// seeds its own init stream from the config seed, so two models that share a
// component and a seed start that component from identical values even when
// other components differ.
struct KenModel {
  TrainConfig cfg;
  ModelParams params;
  KnowledgeParams knowledge;
  EmotionParams emotion;  // untouched when emotion is disabled
  BalancedParams balance;

  bool use_emotion() const { return cfg.flags.emotion; }
  bool use_reasoning() const { return cfg.flags.emotion && cfg.flags.reasoning; }
  int bank_size() const { return balance.cfg.processors; }
  // Width of the concatenated representation: three perspective slots plus
  // the emotion slot. Constant across ablations; disabled components
  // contribute zero vectors rather than shrinking the layout.
  int feature_width() const { return 3 * cfg.d_s + cfg.d_e_out; }

  explicit KenModel(const TrainConfig& config) : cfg(config) {
    validate_config(cfg);

    KnowledgeConfig kc;
    kc.d = cfg.d;
    kc.d_c = cfg.d_c;
    kc.d_s = cfg.d_s;
    kc.d_ff = cfg.d_ff;
    kc.heads = cfg.heads;
    kc.depth = cfg.depth;
    KnowledgeFlags kf;
    kf.module_on = cfg.flags.knowledge;
    kf.clip = cfg.flags.clip;
    kf.evidence = cfg.flags.evidence;
    kf.caption = cfg.flags.caption;
    kf.coattention = cfg.flags.coattention;
    knowledge = KnowledgeParams::create(params, kc, kf, cfg.seed);

    if (use_emotion()) {
      EmotionConfig ec;
      ec.d = cfg.d;
      ec.d_e = cfg.d_e;
      ec.d_e_out = cfg.d_e_out;
      ec.experts = cfg.experts;
      ec.attn_heads = cfg.expert_heads;
      ec.gamma = cfg.gamma;
      emotion = EmotionParams::create(params, ec, cfg.seed, cfg.flags.reasoning);
    }

    BalancedConfig bc;
    bc.d_m = feature_width();
    bc.d_f = cfg.d_f;
    bc.d_e_out = cfg.d_e_out;
    // Disabling emotion also collapses the bank: the gate would have no
    // signal to route on. Disabling balance alone keeps the gate, which over
    // a single processor is exactly [1].
    bc.processors = (cfg.flags.emotion && cfg.flags.balance) ? cfg.processors : 1;
    bc.use_gate = cfg.flags.gate;
    balance = BalancedParams::create(params, bc, cfg.seed);
  }

  FeaturePack forward_sample(const EmbeddingBundle& s, const DropoutCtx& drop = {},
                             std::vector<Tensor>* attn_rows = nullptr) const {
    FeaturePack pk;
    KnowledgeOutputs ko =
        knowledge_forward(knowledge, s.T, s.V, s.P, s.R, s.t_c, s.v_c, drop, attn_rows);
    pk.m_t = ko.m_t;
    pk.m_v = ko.m_v;
    pk.m_f = ko.m_f;
    pk.theta = ko.theta;

    if (use_emotion()) {
      EmotionOutputs eo = emotion_forward(emotion, s.T, s.V, drop, attn_rows);
      pk.m_e = eo.m_e;
      if (use_reasoning()) {
        pk.emo_logits = eo.logits;
        pk.p_emo = softmax_raw(eo.logits);
      }
    } else {
      pk.m_e = Tensor::zeros({cfg.d_e_out});
    }

    {
      TraceScope scope("represent");
      pk.m = concat_features(pk.m_t, pk.m_v, pk.m_e, pk.m_f);
    }

    BalancedOutputs bo = balanced_forward(balance, pk.m, pk.m_e);
    pk.a = bo.a;
    pk.f = bo.f;
    pk.fnd_logits = bo.logits;
    pk.p_fnd = softmax_raw(bo.logits);
    return pk;
  }

  // Forward a batch and reduce both heads to scalar losses. Per-head logits
  // are stacked into one matrix so each loss is a single mean cross-entropy,
  // independent of how samples are grouped into rows.
  BatchResult batch_forward(const std::vector<const EmbeddingBundle*>& batch,
                            const DropoutCtx& drop = {},
                            std::vector<Tensor>* attn_rows = nullptr) const {
    if (batch.empty()) throw ConfigError("batch must contain at least one sample");
    BatchResult r;
    r.packs.reserve(batch.size());
    std::vector<Tensor> fnd_rows, emo_rows;
    std::vector<int> labels;
    for (const EmbeddingBundle* s : batch) {
      r.packs.push_back(forward_sample(*s, drop, attn_rows));
      fnd_rows.push_back(r.packs.back().fnd_logits);
      if (use_reasoning()) emo_rows.push_back(r.packs.back().emo_logits);
      labels.push_back(s->y);
    }
    {
      TraceScope scope("loss.fnd");
      r.loss_fnd = cross_entropy(stack_rows(fnd_rows), labels);
    }
    if (use_reasoning()) {
      {
        TraceScope scope("loss.emo");
        r.loss_emo = cross_entropy(stack_rows(emo_rows), labels);
      }
      TraceScope scope("loss.total");
      r.loss = total_loss(r.loss_fnd, r.loss_emo, cfg.lambda);
    } else {
      r.loss = r.loss_fnd;
    }
    return r;
  }
};

}  // namespace ken
