#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ken/config.hpp"
#include "ken/metrics.hpp"
#include "ken/model.hpp"
#include "ken/tape.hpp"
#include "ken/train.hpp"

namespace ken {

// Op-level trace of one training step (forward + losses) on the first train
// sample. Two variants with the same trace would be computing the same graph,
// so every ablation is expected to change it somewhere.
inline std::vector<TraceEntry> capture_trace(const KenModel& model, const Dataset& ds) {
  const auto& ids = ds.split_ids("train");
  if (ids.empty()) throw ConfigError("cannot trace an empty train split");
  std::vector<const EmbeddingBundle*> batch = {&ds.bundle(ids.front())};
  Tape tape;
  tape.record_all = true;
  std::vector<TraceEntry> out;
  {
    TapeGuard guard(tape);
    model.batch_forward(batch);
    out = tape.trace();
  }
  tape.clear();
  return out;
}

struct VariantResult {
  std::string name;  // "full" or the disabled flag
  EvalMetrics test;
  double final_loss = 0.0;  // last-epoch train loss; 0 with no epochs
  bool trace_differs_from_full = false;
};

inline std::string variant_csv_header() {
  return "variant,test_accuracy,test_precision_fake,test_recall_fake,test_f1_fake,"
         "test_precision_real,test_recall_real,test_f1_real,final_loss,trace_differs";
}

inline std::string variant_csv_row(const VariantResult& v) {
  std::string out = v.name;
  for (double x : {v.test.accuracy, v.test.per_class[0].precision, v.test.per_class[0].recall,
                   v.test.per_class[0].f1, v.test.per_class[1].precision,
                   v.test.per_class[1].recall, v.test.per_class[1].f1, v.final_loss}) {
    out += ',';
    out += fmt_g17(x);
  }
  out += ',';
  out += v.trace_differs_from_full ? '1' : '0';
  return out;
}

// Trains the full model plus one variant per listed flag, all against the
// same dataset and seed, and reports test metrics side by side. Writes
// ablation.csv plus per-variant run directories under out_dir.
inline std::vector<VariantResult> run_ablation(const TrainConfig& base,
                                               const std::vector<std::string>& flags,
                                               const std::filesystem::path& out_dir,
                                               std::ostream* log = nullptr) {
  for (const auto& f : flags) {
    AblationFlags probe = base.flags;
    disable_flag(probe, f);  // validates the name before any training
  }
  Dataset ds = resolve_dataset(base);

  std::vector<VariantResult> results;
  std::vector<TraceEntry> full_trace;
  auto run_one = [&](const std::string& name, const TrainConfig& cfg) {
    KenModel model(cfg);
    if (log) (*log) << "variant " << name << ": training\n";
    TrainResult tr = train_model(model, ds, out_dir / name, log);
    VariantResult v;
    v.name = name;
    v.test = evaluate_split(model, ds, "test");
    v.final_loss = tr.history.empty() ? 0.0 : tr.history.back().loss;
    std::vector<TraceEntry> trace = capture_trace(model, ds);
    if (name == "full") {
      full_trace = trace;
    } else {
      v.trace_differs_from_full = trace != full_trace;
    }
    results.push_back(v);
  };

  run_one("full", base);
  for (const auto& f : flags) {
    TrainConfig cfg = base;
    disable_flag(cfg.flags, f);
    run_one("no_" + f, cfg);
  }

  std::filesystem::create_directories(out_dir);
  std::ofstream csv(out_dir / "ablation.csv", std::ios::trunc);
  if (!csv) throw IoError("cannot write " + (out_dir / "ablation.csv").string());
  csv << variant_csv_header() << '\n';
  for (const auto& v : results) csv << variant_csv_row(v) << '\n';
  return results;
}

// ---------------------------------------------------------------------------
// Hyperparameter sweep

struct SweepPoint {
  std::string param;
  double value = 0.0;
  EvalMetrics test;
  double final_loss = 0.0;
};

inline void apply_sweep_value(TrainConfig& cfg, const std::string& param, double value) {
  auto as_count = [&](const char* name) {
    if (value < 1.0 || value != std::floor(value)) {
      throw ConfigError(std::string("sweep: ") + name + " needs a positive integer, got " +
                        fmt_g17(value));
    }
    return static_cast<int>(value);
  };
  if (param == "experts") {
    cfg.experts = as_count("experts");
  } else if (param == "processors") {
    cfg.processors = as_count("processors");
  } else if (param == "gamma") {
    cfg.gamma = value;
  } else if (param == "lambda") {
    cfg.lambda = value;
  } else {
    throw ConfigError("sweep: unknown parameter '" + param +
                      "' (valid: experts, processors, gamma, lambda)");
  }
  validate_config(cfg);
}

inline std::string sweep_csv_header() {
  return "param,value,test_accuracy,test_f1_fake,test_f1_real,final_loss";
}

inline std::string sweep_csv_row(const SweepPoint& p) {
  std::string out = p.param;
  for (double x : {p.value, p.test.accuracy, p.test.per_class[0].f1, p.test.per_class[1].f1,
                   p.final_loss}) {
    out += ',';
    out += fmt_g17(x);
  }
  return out;
}

// One full training run per value, sharing the dataset and the seed so the
// swept parameter is the only difference between points. Writes sweep.csv
// plus one run directory per value under out_dir.
inline std::vector<SweepPoint> run_sweep(const TrainConfig& base, const std::string& param,
                                         const std::vector<double>& values,
                                         const std::filesystem::path& out_dir,
                                         std::ostream* log = nullptr) {
  if (values.empty()) throw ConfigError("sweep: need at least one value");
  {
    TrainConfig probe = base;
    for (double v : values) apply_sweep_value(probe, param, v);
  }
  Dataset ds = resolve_dataset(base);

  std::vector<SweepPoint> points;
  for (std::size_t i = 0; i < values.size(); ++i) {
    TrainConfig cfg = base;
    apply_sweep_value(cfg, param, values[i]);
    KenModel model(cfg);
    if (log) (*log) << "sweep " << param << "=" << fmt_g17(values[i]) << ": training\n";
    TrainResult tr = train_model(model, ds, out_dir / (param + "_" + std::to_string(i)), log);
    SweepPoint p;
    p.param = param;
    p.value = values[i];
    p.test = evaluate_split(model, ds, "test");
    p.final_loss = tr.history.empty() ? 0.0 : tr.history.back().loss;
    points.push_back(p);
  }

  std::filesystem::create_directories(out_dir);
  std::ofstream csv(out_dir / "sweep.csv", std::ios::trunc);
  if (!csv) throw IoError("cannot write " + (out_dir / "sweep.csv").string());
  csv << sweep_csv_header() << '\n';
  for (const auto& p : points) csv << sweep_csv_row(p) << '\n';
  return points;
}

// ---------------------------------------------------------------------------
// Feature export

// One row per sample: id, label, then the fused detection feature.
inline void export_features(const KenModel& model, const Dataset& ds, const std::string& split,
                            const std::filesystem::path& csv_path) {
  const auto& ids = ds.split_ids(split);
  if (ids.empty()) throw ConfigError("cannot export empty split '" + split + "'");
  if (csv_path.has_parent_path()) std::filesystem::create_directories(csv_path.parent_path());
  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv) throw IoError("cannot write " + csv_path.string());
  csv << "id,label";
  for (int i = 0; i < model.cfg.d_f; ++i) csv << ",f" << i;
  csv << '\n';
  for (const auto& id : ids) {
    const EmbeddingBundle& b = ds.bundle(id);
    FeaturePack pk = model.forward_sample(b);
    csv << id << ',' << b.y;
    for (int i = 0; i < pk.f.dim(0); ++i) csv << ',' << fmt_g17(pk.f.at(i));
    csv << '\n';
  }
}

}  // namespace ken
