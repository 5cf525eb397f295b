#pragma once

#include <string>
#include <vector>

#include "effssl/exp/config.hpp"

namespace effssl::exp {

/// Provenance record written next to every run's artifacts.
struct RunManifest {
  std::string config_digest;
  std::string started_at;   // ISO-8601 UTC
  std::string finished_at;
  std::string metrics_path;
  std::string eval_path;
  std::vector<std::string> checkpoint_paths;
  std::vector<std::string> child_manifests;  // sweep fan-out
  std::string provenance;
  bool completed = false;

  std::string to_json() const;
};

/// Train then run the requested evaluation protocols; writes metrics JSONL,
/// eval JSONL, checkpoints, and manifest.json under train.out_dir. Sweep
/// configs fan out sequentially into numbered subdirectories, one manifest
/// each plus a parent manifest. On error the partial manifest is still
/// written (completed = false) before the exception propagates.
RunManifest run_experiment(const ExperimentConfig& config);

/// Dataset root fallback: $EFFSSL_DATA_DIR when config.data_path is empty.
std::string resolve_data_path(const ExperimentConfig& config);

/// Load the train/test splits named by the config.
struct LoadedData {
  data::Dataset train;
  data::Dataset test;
};
LoadedData load_experiment_data(const ExperimentConfig& config);

/// Run the config's evaluation protocols against an already-trained bundle;
/// returns the eval JSONL lines.
std::vector<std::string> evaluate_bundle(nets::NetworkBundle& bundle,
                                         const ExperimentConfig& config, const LoadedData& ds);

}  // namespace effssl::exp
