// Command-line front end: dataset generation/validation, training,
// evaluation, ablation and sweep studies, and feature export.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "ken/ken.hpp"

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(csv);
  while (std::getline(is, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> parse_values(const std::string& csv) {
  std::vector<double> out;
  for (const auto& item : split_list(csv)) {
    std::size_t used = 0;
    double v = std::stod(item, &used);
    if (used != item.size()) throw ken::ConfigError("bad numeric value '" + item + "'");
    out.push_back(v);
  }
  return out;
}

void print_metrics(const std::string& label, const ken::EvalMetrics& m) {
  std::cout << label << ": accuracy " << ken::fmt_g17(m.accuracy) << " (" << m.correct << "/"
            << m.samples << ")\n";
  const char* names[2] = {"fake", "real"};
  for (int c = 0; c < 2; ++c) {
    const auto& pc = m.per_class[static_cast<std::size_t>(c)];
    std::cout << "  " << names[c] << ": precision " << ken::fmt_g17(pc.precision) << " recall "
              << ken::fmt_g17(pc.recall) << " f1 " << ken::fmt_g17(pc.f1) << '\n';
  }
}

int cmd_data_gen(const std::string& spec_path, const std::string& out) {
  ken::TrainConfig cfg = ken::load_train_config(spec_path);
  if (!cfg.dataset_dir.empty()) {
    throw ken::ConfigError("data gen needs a synthetic spec, not a dataset dir");
  }
  ken::Dataset ds = ken::resolve_dataset(cfg);
  ken::write_dataset(out, ds);
  std::cout << "wrote " << ds.bundles.size() << " samples to " << out << " (d=" << ds.d
            << ", d_c=" << ds.d_c << ")\n";
  for (const char* split : {"train", "val", "test"}) {
    std::cout << "  " << split << ": " << ds.split_ids(split).size() << " samples\n";
  }
  return 0;
}

int cmd_data_validate(const std::string& dir) {
  ken::Dataset ds = ken::load_dataset(dir);
  std::cout << "dataset '" << ds.name << "' ok: " << ds.bundles.size() << " samples, d=" << ds.d
            << ", d_c=" << ds.d_c << ", m=" << ds.m << ", n=" << ds.n << ", z=" << ds.z
            << ", u=" << ds.u << '\n';
  for (const auto& [split, ids] : ds.splits) {
    std::cout << "  " << split << ": " << ids.size() << " samples\n";
  }
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_override) {
  ken::TrainConfig cfg = ken::load_train_config(config_path);
  const fs::path out = out_override.empty() ? fs::path(cfg.out_dir) : fs::path(out_override);
  ken::Dataset ds = ken::resolve_dataset(cfg);
  ken::KenModel model(cfg);
  std::cout << "training '" << cfg.run_name << "' (" << model.params.entries().size()
            << " tensors, " << model.params.scalar_count() << " scalars) for " << cfg.epochs
            << " epochs\n";
  ken::TrainResult result = ken::train_model(model, ds, out, &std::cout);
  std::cout << "history: " << (out / "history.csv").string() << '\n';
  std::cout << "checkpoints: " << result.final_dir.string() << ", best epoch "
            << result.best_epoch << " at " << result.best_dir.string() << '\n';
  print_metrics("test", ken::evaluate_split(model, ds, "test"));
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& split, const std::string& data_override) {
  ken::LoadedCheckpoint loaded = ken::load_checkpoint(ckpt);
  ken::TrainConfig cfg = loaded.model.cfg;
  if (!data_override.empty()) cfg.dataset_dir = data_override;
  ken::Dataset ds = ken::resolve_dataset(cfg);
  std::cout << "checkpoint '" << loaded.meta.kind << "' after epoch " << loaded.meta.epoch
            << '\n';
  print_metrics(split, ken::evaluate_split(loaded.model, ds, split));
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& flags_csv,
               const std::string& out_override) {
  ken::TrainConfig cfg = ken::load_train_config(config_path);
  const fs::path out =
      out_override.empty() ? fs::path(cfg.out_dir) / "ablation" : fs::path(out_override);
  std::vector<std::string> flags = split_list(flags_csv);
  if (flags.empty()) {
    for (const auto& name : ken::ablation_flag_names()) flags.push_back(name);
  }
  auto results = ken::run_ablation(cfg, flags, out, &std::cout);
  std::cout << ken::variant_csv_header() << '\n';
  for (const auto& v : results) std::cout << ken::variant_csv_row(v) << '\n';
  std::cout << "written to " << (out / "ablation.csv").string() << '\n';
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& param,
              const std::string& values_csv, const std::string& out_override) {
  ken::TrainConfig cfg = ken::load_train_config(config_path);
  const fs::path out =
      out_override.empty() ? fs::path(cfg.out_dir) / ("sweep_" + param) : fs::path(out_override);
  auto points = ken::run_sweep(cfg, param, parse_values(values_csv), out, &std::cout);
  std::cout << ken::sweep_csv_header() << '\n';
  for (const auto& p : points) std::cout << ken::sweep_csv_row(p) << '\n';
  std::cout << "written to " << (out / "sweep.csv").string() << '\n';
  return 0;
}

int cmd_export(const std::string& ckpt, const std::string& split, const std::string& out_csv) {
  ken::LoadedCheckpoint loaded = ken::load_checkpoint(ckpt);
  ken::Dataset ds = ken::resolve_dataset(loaded.model.cfg);
  ken::export_features(loaded.model, ds, split, out_csv);
  std::cout << "wrote " << ds.split_ids(split).size() << " rows to " << out_csv << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal fake-news detector: training and analysis"};
  app.require_subcommand(1);

  auto* data = app.add_subcommand("data", "Dataset utilities");
  data->require_subcommand(1);

  std::string gen_spec, gen_out;
  auto* data_gen = data->add_subcommand("gen", "Generate a synthetic embedding dataset");
  data_gen->add_option("--spec", gen_spec, "Config JSON with a data.synthetic block")->required();
  data_gen->add_option("--out", gen_out, "Output dataset directory")->required();

  std::string validate_dir;
  auto* data_validate = data->add_subcommand("validate", "Check a dataset directory");
  data_validate->add_option("dir", validate_dir, "Dataset directory")->required();

  std::string train_config, train_out;
  auto* train = app.add_subcommand("train", "Train a model from a config file");
  train->add_option("--config", train_config, "Config JSON")->required();
  train->add_option("--out", train_out, "Override the run output directory");

  std::string eval_ckpt, eval_split = "test", eval_data;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  eval->add_option("--ckpt", eval_ckpt, "Checkpoint directory")->required();
  eval->add_option("--split", eval_split, "Split name (default test)");
  eval->add_option("--data", eval_data, "Evaluate against this dataset dir instead");

  std::string ablate_config, ablate_flags, ablate_out;
  auto* ablate = app.add_subcommand("ablate", "Train the full model and ablated variants");
  ablate->add_option("--config", ablate_config, "Config JSON")->required();
  ablate->add_option("--flags", ablate_flags, "Comma list of components to ablate (default all)");
  ablate->add_option("--out", ablate_out, "Output directory");

  std::string sweep_config, sweep_param, sweep_values, sweep_out;
  auto* sweep = app.add_subcommand("sweep", "Train once per value of one hyperparameter");
  sweep->add_option("--config", sweep_config, "Config JSON")->required();
  sweep->add_option("--param", sweep_param, "experts, processors, gamma, or lambda")->required();
  sweep->add_option("--values", sweep_values, "Comma list of values")->required();
  sweep->add_option("--out", sweep_out, "Output directory");

  std::string export_ckpt, export_split = "test", export_out;
  auto* exp = app.add_subcommand("export", "Write fused detection features as CSV");
  exp->add_option("--ckpt", export_ckpt, "Checkpoint directory")->required();
  exp->add_option("--split", export_split, "Split name (default test)");
  exp->add_option("--out", export_out, "Output CSV path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (data_gen->parsed()) return cmd_data_gen(gen_spec, gen_out);
    if (data_validate->parsed()) return cmd_data_validate(validate_dir);
    if (train->parsed()) return cmd_train(train_config, train_out);
    if (eval->parsed()) return cmd_eval(eval_ckpt, eval_split, eval_data);
    if (ablate->parsed()) return cmd_ablate(ablate_config, ablate_flags, ablate_out);
    if (sweep->parsed()) return cmd_sweep(sweep_config, sweep_param, sweep_values, sweep_out);
    if (exp->parsed()) return cmd_export(export_ckpt, export_split, export_out);
  } catch (const ken::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
