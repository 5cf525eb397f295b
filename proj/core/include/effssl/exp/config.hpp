#pragma once

#include <map>
#include <string>
#include <vector>

#include "effssl/trainer/trainer.hpp"

namespace effssl::exp {

/// Fully resolved experiment description: training run plus dataset wiring,
/// evaluation protocols, and optional sweep fan-out. `resolved` holds every
/// effective key=value pair (defaults included), which makes serialization a
/// fixed point and the digest stable under key reordering.
struct ExperimentConfig {
  train::TrainConfig train;

  std::string data_source = "synthetic";  // cifar-binary | image-folder | synthetic
  std::string data_path;                  // empty = $EFFSSL_DATA_DIR
  std::string synthetic_spec = "seed=0,n=512,classes=10,size=32";
  std::string synthetic_test_spec = "seed=1,n=256,classes=10,size=32";
  int64_t train_limit = 0;  // 0 = all
  int64_t test_limit = 0;
  std::string saliency_dir;

  std::vector<std::string> eval_protocols;  // knn, linear, rotation-probe,
                                            // contrastive-acc, semi-supervised
  int knn_k = 200;
  double knn_temperature = 0.07;
  int probe_epochs = 100;
  int probe_batch = 512;
  double probe_lr = 1.0;
  double semi_fraction = 0.1;

  std::string sweep_key;
  std::vector<std::string> sweep_values;  // ';'-separated in files, ',' allowed
                                          // when no ';' present

  std::map<std::string, std::string> resolved;  // canonical key -> value
  std::vector<std::string> warnings;            // duplicate-key notes etc.

  std::string serialize() const;
  /// FNV-1a 64 over sorted key=value lines, hex. Stable under reordering.
  std::string digest() const;
};

/// Parse the documented INI format ([section] plus key = value lines,
/// '#'/';' comments). Preset defaults apply first (experiment.preset key or
/// the explicit argument), file keys override them, then `overrides`
/// ("section.key=value" strings) win. Unknown keys and type errors throw
/// std::invalid_argument; duplicate keys take the last value and record a
/// warning.
ExperimentConfig parse_config(const std::string& path, const std::string& preset = "",
                              const std::vector<std::string>& overrides = {});

/// Parse from in-memory text (same semantics).
ExperimentConfig parse_config_text(const std::string& text, const std::string& preset = "",
                                   const std::vector<std::string>& overrides = {});

std::vector<std::string> preset_names();
/// Key map of a named preset. Throws on unknown name.
std::map<std::string, std::string> preset_values(const std::string& name);

}  // namespace effssl::exp
