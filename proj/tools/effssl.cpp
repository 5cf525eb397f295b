// Experiment runner: train / eval / report / presets.

#include <glob.h>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "effssl/exp/experiment.hpp"
#include "effssl/exp/report.hpp"
#include "effssl/trainer/trainer.hpp"

namespace fs = std::filesystem;

namespace {

std::vector<std::string> expand_glob(const std::string& pattern) {
  glob_t g{};
  std::vector<std::string> files;
  if (glob(pattern.c_str(), GLOB_TILDE, nullptr, &g) == 0) {
    for (size_t i = 0; i < g.gl_pathc; ++i) files.emplace_back(g.gl_pathv[i]);
  }
  globfree(&g);
  if (files.empty() && fs::exists(pattern)) files.push_back(pattern);
  return files;
}

effssl::exp::ExperimentConfig load_config(const std::string& path, const std::string& preset,
                                          std::vector<std::string> overrides, uint64_t* seed,
                                          std::string* out_dir, int* epochs) {
  if (seed) overrides.push_back("experiment.seed=" + std::to_string(*seed));
  if (out_dir && !out_dir->empty()) overrides.push_back("experiment.out_dir=" + *out_dir);
  if (epochs && *epochs > 0) overrides.push_back("experiment.epochs=" + std::to_string(*epochs));
  if (path.empty()) return effssl::exp::parse_config_text("", preset, overrides);
  return effssl::exp::parse_config(path, preset, overrides);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised training and evaluation workbench"};
  app.require_subcommand(1);

  std::string config_path, preset, out_dir, checkpoint_path, report_glob, report_spec_path;
  std::vector<std::string> overrides;
  uint64_t seed = 0;
  bool seed_set = false;
  int epochs = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--preset", preset, "Named preset to start from");
    cmd->add_option("--override", overrides, "key=value override (repeatable)");
    cmd->add_option("--seed", seed, "Random seed")->each([&](const std::string&) { seed_set = true; });
    cmd->add_option("--out-dir", out_dir, "Output directory for run artifacts");
    cmd->add_option("--epochs", epochs, "Override training epochs");
  };

  CLI::App* train_cmd = app.add_subcommand("train", "Train per a config file or preset");
  train_cmd->add_option("config", config_path, "Experiment config (INI)");
  add_common(train_cmd);

  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("checkpoint", checkpoint_path, "Checkpoint file")->required();
  eval_cmd->add_option("config", config_path, "Experiment config naming data and protocols");
  add_common(eval_cmd);

  CLI::App* report_cmd = app.add_subcommand("report", "Emit plot CSV from metrics files");
  report_cmd->add_option("glob", report_glob, "Glob of metrics/eval JSONL files")->required();
  report_cmd->add_option("spec", report_spec_path, "Report spec (INI)")->required();
  report_cmd->add_option("--out-dir", out_dir, "Write CSV here instead of stdout");

  CLI::App* presets_cmd = app.add_subcommand("presets", "List named experiment presets");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*presets_cmd) {
      for (const auto& name : effssl::exp::preset_names()) {
        std::cout << name << "\n";
        for (const auto& [k, v] : effssl::exp::preset_values(name))
          std::cout << "    " << k << " = " << v << "\n";
      }
      return 0;
    }

    if (*train_cmd) {
      const auto cfg = load_config(config_path, preset, overrides, seed_set ? &seed : nullptr,
                                   &out_dir, &epochs);
      for (const auto& w : cfg.warnings) std::cerr << "warning: " << w << "\n";
      const auto manifest = effssl::exp::run_experiment(cfg);
      std::cout << manifest.to_json() << "\n";
      return manifest.completed ? 0 : 1;
    }

    if (*eval_cmd) {
      const auto cfg = load_config(config_path, preset, overrides, seed_set ? &seed : nullptr,
                                   &out_dir, &epochs);
      effssl::train::TrainState state = effssl::train::load_checkpoint(checkpoint_path);
      const auto ds = effssl::exp::load_experiment_data(cfg);
      const auto records = effssl::exp::evaluate_bundle(*state.bundle, cfg, ds);
      if (!cfg.train.out_dir.empty()) {
        fs::create_directories(cfg.train.out_dir);
        std::ofstream out(fs::path(cfg.train.out_dir) / "eval.jsonl");
        for (const auto& r : records) out << r << "\n";
      }
      for (const auto& r : records) std::cout << r << "\n";
      return 0;
    }

    if (*report_cmd) {
      const auto files = expand_glob(report_glob);
      if (files.empty()) {
        std::cerr << "error: no files match " << report_glob << "\n";
        return 1;
      }
      const auto spec = effssl::exp::parse_report_spec(report_spec_path);
      const auto plot = effssl::exp::emit_plot_data(files, spec);
      if (plot.skipped_records > 0)
        std::cerr << "warning: skipped " << plot.skipped_records << " malformed records\n";
      if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        std::ofstream out(fs::path(out_dir) / "report.csv");
        out << plot.csv;
        std::cout << (fs::path(out_dir) / "report.csv").string() << "\n";
      } else {
        std::cout << plot.csv;
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
