#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ken/adam.hpp"
#include "ken/config.hpp"
#include "ken/dataset.hpp"
#include "ken/io.hpp"
#include "ken/metrics.hpp"
#include "ken/model.hpp"

namespace ken {

// Shortest text that reads back to the same double.
inline std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline Dataset resolve_dataset(const TrainConfig& cfg) {
  if (!cfg.dataset_dir.empty()) {
    Dataset ds = load_dataset(cfg.dataset_dir);
    if (ds.d != cfg.d || ds.d_c != cfg.d_c) {
      throw ConfigError("dataset dims (d=" + std::to_string(ds.d) + ", d_c=" +
                        std::to_string(ds.d_c) + ") do not match model dims (d=" +
                        std::to_string(cfg.d) + ", d_c=" + std::to_string(cfg.d_c) + ")");
    }
    return ds;
  }
  SyntheticSpec spec = cfg.synthetic;
  spec.d = cfg.d;
  spec.d_c = cfg.d_c;
  std::vector<EmbeddingBundle> bundles = generate_synthetic(spec);
  auto splits = stratified_split(bundles, cfg.split, spec.seed);
  return assemble_dataset("synthetic", spec.d, spec.d_c, spec.m, spec.n, spec.z, spec.u,
                          std::move(bundles), std::move(splits), spec.seed);
}

// Dropout stays off: no tape is active and the default DropoutCtx is inert.
inline EvalMetrics evaluate_split(const KenModel& model, const Dataset& ds,
                                  const std::string& split) {
  const auto& ids = ds.split_ids(split);
  if (ids.empty()) throw ConfigError("cannot evaluate empty split '" + split + "'");
  std::vector<int> y_true, y_pred;
  y_true.reserve(ids.size());
  y_pred.reserve(ids.size());
  for (const auto& id : ids) {
    const EmbeddingBundle& b = ds.bundle(id);
    FeaturePack pk = model.forward_sample(b);
    y_true.push_back(b.y);
    y_pred.push_back(argmax_class(pk.p_fnd));
  }
  return compute_metrics(y_true, y_pred);
}

// ---------------------------------------------------------------------------
// History

struct EpochRecord {
  int epoch = 0;  // 1-based
  double loss = 0.0;
  double loss_fnd = 0.0;
  double loss_emo = 0.0;  // 0 when the reasoning loss is off
  EvalMetrics val;
};

// The column set never changes across ablation variants; disabled terms
// report zero rather than dropping columns.
inline std::string history_header() {
  return "epoch,loss,loss_fnd,loss_emo,val_accuracy,"
         "val_precision_fake,val_recall_fake,val_f1_fake,"
         "val_precision_real,val_recall_real,val_f1_real";
}

inline std::string history_row(const EpochRecord& r) {
  std::string out = std::to_string(r.epoch);
  for (double v : {r.loss, r.loss_fnd, r.loss_emo, r.val.accuracy,
                   r.val.per_class[0].precision, r.val.per_class[0].recall,
                   r.val.per_class[0].f1, r.val.per_class[1].precision,
                   r.val.per_class[1].recall, r.val.per_class[1].f1}) {
    out += ',';
    out += fmt_g17(v);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

struct CheckpointMeta {
  std::string kind = "final";  // or "best"
  int epoch = 0;               // epochs completed when saved
  double val_accuracy = 0.0;
  std::map<std::string, std::string> rng_states;  // stream name -> state
};

// Layout: <dir>/manifest.json plus one f32 blob per parameter under
// <dir>/params/. The manifest echoes the full config, so a checkpoint alone
// reconstructs the model.
inline void save_checkpoint(const std::filesystem::path& dir, const KenModel& model,
                            const CheckpointMeta& meta) {
  std::filesystem::create_directories(dir / "params");
  nlohmann::json manifest;
  manifest["kind"] = meta.kind;
  manifest["epoch"] = meta.epoch;
  manifest["val_accuracy"] = meta.val_accuracy;
  manifest["config"] = config_to_json(model.cfg);
  manifest["rng"] = meta.rng_states;
  nlohmann::json plist = nlohmann::json::object();
  for (const auto& [path, t] : model.params.entries()) {
    const std::string file = "params/" + path + ".kent";
    plist[path] = {{"file", file}, {"shape", t.shape()}};
    write_blob(dir / file, t);
  }
  manifest["params"] = plist;
  std::ofstream os(dir / "manifest.json", std::ios::trunc);
  if (!os) throw IoError("cannot write " + (dir / "manifest.json").string());
  os << manifest.dump(2) << '\n';
}

struct LoadedCheckpoint {
  KenModel model;
  CheckpointMeta meta;
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw ConfigError("cannot open checkpoint manifest " + (dir / "manifest.json").string());
  nlohmann::json manifest;
  try {
    is >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("checkpoint manifest is not valid JSON: " + std::string(e.what()));
  }

  TrainConfig cfg = parse_train_config(manifest.at("config"));
  KenModel model(cfg);

  const nlohmann::json& plist = manifest.at("params");
  if (plist.size() != model.params.entries().size()) {
    throw ConfigError("checkpoint lists " + std::to_string(plist.size()) +
                      " parameters, the model has " +
                      std::to_string(model.params.entries().size()));
  }
  for (const auto& [path, t] : model.params.entries()) {
    if (!plist.contains(path)) {
      throw ConfigError("checkpoint is missing parameter '" + path + "'");
    }
    const std::string file = plist.at(path).at("file").get<std::string>();
    Tensor blob = read_blob(dir / file, "parameter " + path);
    if (blob.shape() != t.shape()) {
      throw ConfigError("checkpoint shape mismatch for '" + path + "': expected " +
                        shape_str(t.shape()) + ", found " + shape_str(blob.shape()));
    }
    Tensor dst = t;
    for (int i = 0; i < static_cast<int>(dst.size()); ++i) dst.at(i) = blob.at(i);
  }

  CheckpointMeta meta;
  meta.kind = manifest.value("kind", "final");
  meta.epoch = manifest.value("epoch", 0);
  meta.val_accuracy = manifest.value("val_accuracy", 0.0);
  if (manifest.contains("rng")) {
    for (const auto& item : manifest.at("rng").items()) {
      meta.rng_states[item.key()] = item.value().get<std::string>();
    }
  }
  return {std::move(model), std::move(meta)};
}

// ---------------------------------------------------------------------------
// Training loop

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;  // 0 when no epoch ran
  double best_val_accuracy = -1.0;
  std::filesystem::path final_dir, best_dir;
};

// Trains in place, writes history.csv plus checkpoint_best/ and
// checkpoint_final/ under out_dir. Fully deterministic for a fixed config:
// shuffling and dropout draw from named streams seeded by the config.
inline TrainResult train_model(KenModel& model, const Dataset& ds,
                               const std::filesystem::path& out_dir,
                               std::ostream* log = nullptr) {
  const TrainConfig& cfg = model.cfg;
  std::filesystem::create_directories(out_dir);
  std::ofstream hist(out_dir / "history.csv", std::ios::trunc);
  if (!hist) throw IoError("cannot write " + (out_dir / "history.csv").string());
  hist << history_header() << '\n';
  hist.flush();

  std::vector<std::string> train_ids = ds.split_ids("train");
  if (train_ids.empty()) throw ConfigError("split 'train' is empty");

  Adam opt({cfg.lr, cfg.beta1, cfg.beta2, cfg.eps});
  RngStream shuffle_rng = named_stream(cfg.seed, "shuffle");
  RngStream dropout_rng = named_stream(cfg.seed, "dropout");

  TrainResult result;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = train_ids.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(shuffle_rng.next_below(i));
      std::swap(train_ids[i - 1], train_ids[j]);
    }

    double sum_loss = 0.0, sum_fnd = 0.0, sum_emo = 0.0;
    std::size_t seen = 0;
    const std::size_t n = train_ids.size();
    const auto bs = static_cast<std::size_t>(cfg.batch_size);
    for (std::size_t start = 0, batch_idx = 0; start < n; start += bs, ++batch_idx) {
      std::vector<const EmbeddingBundle*> batch;
      for (std::size_t i = start; i < std::min(start + bs, n); ++i) {
        batch.push_back(&ds.bundle(train_ids[i]));
      }
      try {
        Tape tape;
        TapeGuard guard(tape);
        DropoutCtx drop{cfg.dropout, &dropout_rng, true};
        BatchResult r = model.batch_forward(batch, drop);
        if (!std::isfinite(r.loss.value())) {
          throw NumericError("loss is not finite");
        }
        model.params.zero_grad();
        tape.backward(r.loss);
        const auto w = static_cast<double>(batch.size());
        sum_loss += r.loss.value() * w;
        sum_fnd += r.loss_fnd.value() * w;
        if (r.loss_emo.defined()) sum_emo += r.loss_emo.value() * w;
        seen += batch.size();
      } catch (const NumericError& e) {
        throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_idx) + ": " + e.what());
      }
      opt.step(model.params);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = sum_loss / static_cast<double>(seen);
    rec.loss_fnd = sum_fnd / static_cast<double>(seen);
    rec.loss_emo = sum_emo / static_cast<double>(seen);
    rec.val = evaluate_split(model, ds, "val");
    hist << history_row(rec) << '\n';
    hist.flush();
    result.history.push_back(rec);
    if (log) {
      (*log) << "epoch " << epoch << " loss " << fmt_g17(rec.loss) << " val_acc "
             << fmt_g17(rec.val.accuracy) << '\n';
    }

    if (rec.val.accuracy > result.best_val_accuracy) {
      result.best_val_accuracy = rec.val.accuracy;
      result.best_epoch = epoch;
      CheckpointMeta meta;
      meta.kind = "best";
      meta.epoch = epoch;
      meta.val_accuracy = rec.val.accuracy;
      meta.rng_states["shuffle"] = shuffle_rng.save_state();
      meta.rng_states["dropout"] = dropout_rng.save_state();
      result.best_dir = out_dir / "checkpoint_best";
      save_checkpoint(result.best_dir, model, meta);
    }
  }

  CheckpointMeta meta;
  meta.kind = "final";
  meta.epoch = cfg.epochs;
  meta.val_accuracy =
      result.history.empty() ? 0.0 : result.history.back().val.accuracy;
  meta.rng_states["shuffle"] = shuffle_rng.save_state();
  meta.rng_states["dropout"] = dropout_rng.save_state();
  result.final_dir = out_dir / "checkpoint_final";
  save_checkpoint(result.final_dir, model, meta);
  if (result.best_dir.empty()) result.best_dir = result.final_dir;
  return result;
}

}  // namespace ken
