#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ken/dataset.hpp"
#include "ken/errors.hpp"

namespace ken {

// Architecture switches. Every component defaults to on; a run config lists
// the ones to turn off by name under "disable". Interactions are resolved by
// the model, not here:
//   - emotion off also forces a single processor and drops the reasoning loss,
//   - knowledge off makes clip/evidence/caption/coattention irrelevant.
struct AblationFlags {
  bool knowledge = true;    // knowledge augmentation module (off: fused slot is zero)
  bool clip = true;         // clip perspective, similarity gate, clip slots in the
                            // unimodal heads
  bool evidence = true;     // text attends over evidence (off: over itself)
  bool caption = true;      // image attends over caption (off: over itself)
  bool coattention = true;  // co-attention encoders (off: pooled concat only)
  bool emotion = true;      // emotion analysis and the processor bank together
  bool balance = true;      // processor bank (off: a single processor)
  bool gate = true;         // learned gate (off: uniform processor weights)
  bool reasoning = true;    // emotion reasoning head and its loss term
};

inline const std::vector<std::string>& ablation_flag_names() {
  static const std::vector<std::string> names = {
      "knowledge", "clip",    "evidence", "caption",   "coattention",
      "emotion",   "balance", "gate",     "reasoning",
  };
  return names;
}

inline bool* flag_slot(AblationFlags& f, const std::string& name) {
  if (name == "knowledge") return &f.knowledge;
  if (name == "clip") return &f.clip;
  if (name == "evidence") return &f.evidence;
  if (name == "caption") return &f.caption;
  if (name == "coattention") return &f.coattention;
  if (name == "emotion") return &f.emotion;
  if (name == "balance") return &f.balance;
  if (name == "gate") return &f.gate;
  if (name == "reasoning") return &f.reasoning;
  return nullptr;
}

inline void disable_flag(AblationFlags& f, const std::string& name) {
  bool* slot = flag_slot(f, name);
  if (slot == nullptr) {
    std::string valid;
    for (const auto& n : ablation_flag_names()) {
      if (!valid.empty()) valid += ", ";
      valid += n;
    }
    throw ConfigError("unknown ablation flag '" + name + "' (valid: " + valid + ")");
  }
  *slot = false;
}

// Names of the disabled components, in canonical declaration order.
inline std::vector<std::string> disabled_names(const AblationFlags& flags) {
  AblationFlags copy = flags;
  std::vector<std::string> out;
  for (const auto& name : ablation_flag_names()) {
    if (!*flag_slot(copy, name)) out.push_back(name);
  }
  return out;
}

// One run's full recipe: data source, model dimensions, optimizer settings,
// and component switches. Parsed from a JSON file; echoed verbatim into run
// manifests so a checkpoint records how it was produced.
struct TrainConfig {
  std::string run_name = "run";
  std::string out_dir;  // empty until parse; defaults to runs/<run_name>

  // Data: either a directory written by the data generator, or an inline
  // synthetic spec. Model dims d/d_c flow into the spec; the split applies
  // to synthetic data only (a loaded dataset carries its own split lists).
  std::string dataset_dir;
  SyntheticSpec synthetic;
  std::array<double, 3> split = {0.8, 0.1, 0.1};

  // Model shape.
  int d = 32;        // token/region embedding width
  int d_c = 32;      // clip embedding width
  int d_s = 32;      // perspective feature width
  int d_e = 8;       // lstm hidden width per direction
  int d_e_out = 8;   // emotion feature width
  int d_f = 16;      // fused detection feature width
  int d_ff = 0;      // encoder feed-forward hidden width; parse defaults to 2*d
  int heads = 8;     // co-attention heads
  int expert_heads = 1;
  int depth = 1;     // stacked co-attention layers per encoder
  int experts = 3;   // emotion experts per modality
  int processors = 5;
  double gamma = 0.7;  // text share in the combined emotion input

  // Optimization.
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int batch_size = 16;
  int epochs = 40;
  double dropout = 0.5;
  double lambda = 0.2;  // reasoning loss weight
  std::uint64_t seed = 0;

  AblationFlags flags;
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const char* section,
                                std::initializer_list<const char*> allowed) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* key : allowed) {
      if (item.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw ConfigError("unknown key '" + item.key() + "' in " + section);
    }
  }
}

template <typename T>
T json_get(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad value for '" + std::string(key) + "': " + e.what());
  }
}

}  // namespace detail

inline void validate_config(const TrainConfig& c) {
  auto need_min = [](int v, int lo, const char* name) {
    if (v < lo) {
      throw ConfigError(std::string(name) + " must be >= " + std::to_string(lo) + ", got " +
                        std::to_string(v));
    }
  };
  need_min(c.d, 1, "d");
  need_min(c.d_c, 1, "d_c");
  need_min(c.d_s, 1, "d_s");
  need_min(c.d_e, 1, "d_e");
  need_min(c.d_e_out, 1, "d_e_out");
  need_min(c.d_f, 1, "d_f");
  need_min(c.d_ff, 1, "d_ff");
  need_min(c.heads, 1, "heads");
  need_min(c.expert_heads, 1, "expert_heads");
  need_min(c.depth, 1, "depth");
  need_min(c.experts, 1, "experts");
  need_min(c.processors, 1, "processors");
  need_min(c.batch_size, 1, "batch_size");
  need_min(c.epochs, 0, "epochs");
  if (c.d % c.heads != 0) {
    throw ConfigError("heads (" + std::to_string(c.heads) + ") must divide d (" +
                      std::to_string(c.d) + ")");
  }
  if ((2 * c.d_e) % c.expert_heads != 0) {
    throw ConfigError("expert_heads (" + std::to_string(c.expert_heads) +
                      ") must divide 2*d_e (" + std::to_string(2 * c.d_e) + ")");
  }
  if (!(c.gamma >= 0.0 && c.gamma <= 1.0)) {
    throw ConfigError("gamma must lie in [0, 1], got " + std::to_string(c.gamma));
  }
  if (!(c.lambda >= 0.0)) {
    throw ConfigError("lambda must be >= 0, got " + std::to_string(c.lambda));
  }
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) {
    throw ConfigError("dropout must lie in [0, 1), got " + std::to_string(c.dropout));
  }
  if (!(c.lr > 0.0)) throw ConfigError("lr must be > 0");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0) || !(c.beta2 >= 0.0 && c.beta2 < 1.0)) {
    throw ConfigError("beta1 and beta2 must lie in [0, 1)");
  }
  if (!(c.eps > 0.0)) throw ConfigError("eps must be > 0");
  double split_sum = 0.0;
  for (double r : c.split) {
    if (!(r > 0.0)) throw ConfigError("split ratios must be positive");
    split_sum += r;
  }
  if (std::fabs(split_sum - 1.0) > 1e-9) {
    throw ConfigError("split ratios must sum to 1, got " + std::to_string(split_sum));
  }
  if (c.dataset_dir.empty()) validate_spec(c.synthetic);
}

inline TrainConfig parse_train_config(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  detail::reject_unknown_keys(j, "config",
                              {"run_name", "out_dir", "data", "model", "train", "disable"});
  TrainConfig c;
  c.run_name = detail::json_get<std::string>(j, "run_name", c.run_name);

  const nlohmann::json model = j.value("model", nlohmann::json::object());
  detail::reject_unknown_keys(model, "model",
                              {"d", "d_c", "d_s", "d_e", "d_e_out", "d_f", "d_ff", "heads",
                               "expert_heads", "depth", "experts", "processors", "gamma"});
  c.d = detail::json_get(model, "d", c.d);
  c.d_c = detail::json_get(model, "d_c", c.d_c);
  c.d_s = detail::json_get(model, "d_s", c.d_s);
  c.d_e = detail::json_get(model, "d_e", c.d_e);
  c.d_e_out = detail::json_get(model, "d_e_out", c.d_e_out);
  c.d_f = detail::json_get(model, "d_f", c.d_f);
  c.d_ff = detail::json_get(model, "d_ff", 2 * c.d);
  c.heads = detail::json_get(model, "heads", c.heads);
  c.expert_heads = detail::json_get(model, "expert_heads", c.expert_heads);
  c.depth = detail::json_get(model, "depth", c.depth);
  c.experts = detail::json_get(model, "experts", c.experts);
  c.processors = detail::json_get(model, "processors", c.processors);
  c.gamma = detail::json_get(model, "gamma", c.gamma);

  const nlohmann::json train = j.value("train", nlohmann::json::object());
  detail::reject_unknown_keys(train, "train",
                              {"lr", "beta1", "beta2", "eps", "batch_size", "epochs", "dropout",
                               "lambda", "seed"});
  c.lr = detail::json_get(train, "lr", c.lr);
  c.beta1 = detail::json_get(train, "beta1", c.beta1);
  c.beta2 = detail::json_get(train, "beta2", c.beta2);
  c.eps = detail::json_get(train, "eps", c.eps);
  c.batch_size = detail::json_get(train, "batch_size", c.batch_size);
  c.epochs = detail::json_get(train, "epochs", c.epochs);
  c.dropout = detail::json_get(train, "dropout", c.dropout);
  c.lambda = detail::json_get(train, "lambda", c.lambda);
  c.seed = detail::json_get(train, "seed", c.seed);

  const nlohmann::json data = j.value("data", nlohmann::json::object());
  detail::reject_unknown_keys(data, "data", {"dir", "synthetic", "split"});
  if (data.contains("dir") && data.contains("synthetic")) {
    throw ConfigError("data: give either 'dir' or 'synthetic', not both");
  }
  c.dataset_dir = detail::json_get<std::string>(data, "dir", "");
  const nlohmann::json syn = data.value("synthetic", nlohmann::json::object());
  detail::reject_unknown_keys(
      data.contains("synthetic") ? syn : nlohmann::json::object(), "data.synthetic",
      {"samples", "m", "n", "z", "u", "class_separation", "emotion_clusters", "seed"});
  c.synthetic.samples = detail::json_get(syn, "samples", c.synthetic.samples);
  c.synthetic.m = detail::json_get(syn, "m", c.synthetic.m);
  c.synthetic.n = detail::json_get(syn, "n", c.synthetic.n);
  c.synthetic.z = detail::json_get(syn, "z", c.synthetic.z);
  c.synthetic.u = detail::json_get(syn, "u", c.synthetic.u);
  c.synthetic.class_separation =
      detail::json_get(syn, "class_separation", c.synthetic.class_separation);
  c.synthetic.emotion_clusters =
      detail::json_get(syn, "emotion_clusters", c.synthetic.emotion_clusters);
  c.synthetic.seed = detail::json_get(syn, "seed", c.seed);
  c.synthetic.d = c.d;
  c.synthetic.d_c = c.d_c;
  if (data.contains("split")) {
    const auto v = detail::json_get<std::vector<double>>(data, "split", {});
    if (v.size() != 3) throw ConfigError("data.split must list exactly 3 ratios");
    for (std::size_t i = 0; i < 3; ++i) c.split[i] = v[i];
  }

  if (j.contains("disable")) {
    const auto names = detail::json_get<std::vector<std::string>>(j, "disable", {});
    for (const auto& name : names) disable_flag(c.flags, name);
  }

  c.out_dir = detail::json_get<std::string>(j, "out_dir", "runs/" + c.run_name);
  validate_config(c);
  return c;
}

inline TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_train_config(j);
}

// Full echo of a parsed config, with every default resolved. Feeding the
// result back through parse_train_config reproduces the same config.
inline nlohmann::json config_to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["run_name"] = c.run_name;
  j["out_dir"] = c.out_dir;
  if (!c.dataset_dir.empty()) {
    j["data"]["dir"] = c.dataset_dir;
  } else {
    j["data"]["synthetic"] = {
        {"samples", c.synthetic.samples},
        {"m", c.synthetic.m},
        {"n", c.synthetic.n},
        {"z", c.synthetic.z},
        {"u", c.synthetic.u},
        {"class_separation", c.synthetic.class_separation},
        {"emotion_clusters", c.synthetic.emotion_clusters},
        {"seed", c.synthetic.seed},
    };
  }
  j["data"]["split"] = c.split;
  j["model"] = {
      {"d", c.d},
      {"d_c", c.d_c},
      {"d_s", c.d_s},
      {"d_e", c.d_e},
      {"d_e_out", c.d_e_out},
      {"d_f", c.d_f},
      {"d_ff", c.d_ff},
      {"heads", c.heads},
      {"expert_heads", c.expert_heads},
      {"depth", c.depth},
      {"experts", c.experts},
      {"processors", c.processors},
      {"gamma", c.gamma},
  };
  j["train"] = {
      {"lr", c.lr},
      {"beta1", c.beta1},
      {"beta2", c.beta2},
      {"eps", c.eps},
      {"batch_size", c.batch_size},
      {"epochs", c.epochs},
      {"dropout", c.dropout},
      {"lambda", c.lambda},
      {"seed", c.seed},
  };
  j["disable"] = disabled_names(c.flags);
  return j;
}

}  // namespace ken
