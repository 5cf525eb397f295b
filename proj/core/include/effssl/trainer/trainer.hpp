#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "effssl/datapipe/augment.hpp"
#include "effssl/datapipe/dataset.hpp"
#include "effssl/datapipe/jigsaw.hpp"
#include "effssl/datapipe/rotation.hpp"
#include "effssl/losses/losses.hpp"
#include "effssl/nets/bundle.hpp"
#include "effssl/trainer/sgd.hpp"
#include "effssl/trainer/snr.hpp"

namespace effssl::train {

enum class Method { SimClr, Byol, SimSiam, Swav, SupCon };

Method parse_method(const std::string& name);
std::string method_name(Method m);

/// Objective selection and its knobs.
struct LossConfig {
  Method method = Method::SimClr;
  double temperature = 0.2;
  double lambda = 0.0;             // auxiliary weight; 0 turns the aux term off
  std::vector<std::string> aux_tasks;  // subset of {"rotation","jigsaw"}
  double ema_tau = 0.99;           // BYOL target momentum
  double sinkhorn_eps = 0.03;
  int sinkhorn_iters = 3;
  loss::DenominatorMode denominator_mode = loss::DenominatorMode::PaperLiteral;
  bool use_negative_mask = false;  // false-negative elimination from labels
  double rotation_label_noise = 0.0;
  double class_label_noise = 0.0;      // applied once to the dataset
  double known_label_fraction = 1.0;   // partial labels for the mask

  bool aux_active() const { return lambda > 0.0 && !aux_tasks.empty(); }
  bool has_aux(const std::string& task) const;
};

struct TrainConfig {
  LossConfig loss;
  nets::BundleConfig bundle;
  data::AugConfig aug;
  std::vector<int> rotation_angles = {0, 90, 180, 270};
  int jigsaw_grid = 2;
  int jigsaw_table_size = 24;

  double lr = 0.5;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int warmup_epochs = 10;
  int epochs = 1;
  int batch_size = 128;
  uint64_t seed = 0;

  bool snr_enabled = true;
  double snr_beta = 0.99;
  double snr_eps = 1e-8;

  std::string out_dir;        // empty = no files written
  int checkpoint_every = 1;   // epochs
  int keep_checkpoints = 2;
  bool timing_in_metrics = false;  // measured wall time breaks bitwise logs

  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
};

struct MetricsRecord {
  int64_t step = 0;
  int64_t epoch = 0;
  double total_loss = 0.0;
  double base_loss = 0.0;
  double aux_loss = 0.0;
  double learning_rate = 0.0;
  double grad_snr = 0.0;
  double wall_seconds = 0.0;

  std::string to_jsonl() const;
};

struct TrainState {
  TrainConfig config;  // immutable after run start
  std::unique_ptr<nets::NetworkBundle> bundle;
  SgdOptimizer optimizer;
  GradStats grad_stats;
  data::RotationSet rotation_set;
  data::JigsawTable jigsaw_table;
  int64_t step = 0;
  int64_t epoch = 0;
  RngStream data_rng;
  RngStream aug_rng;
  RngStream rot_rng;

  explicit TrainState(const TrainConfig& cfg);
};

/// One optimization step on an augmented view pair. Computes the base loss,
/// adds lambda times the pretext losses on rotated/permuted views, performs
/// a single backward and SGD step, then the EMA update for BYOL. Throws
/// std::runtime_error on a non-finite loss.
MetricsRecord train_step(TrainState& state, const data::ViewPair& pair,
                         const LossConfig& loss_cfg, int64_t warmup_steps, int64_t total_steps);

struct RunResult {
  std::vector<MetricsRecord> metrics;
  std::string metrics_path;      // empty when out_dir unset
  std::vector<std::string> checkpoint_paths;
};

/// Epochs of seeded shuffled batches over the dataset (partial trailing
/// batches dropped). Writes one metrics JSONL line per step and periodic
/// checkpoints when config.out_dir is set. Resumes from state.epoch, so a
/// state loaded from a checkpoint continues the original schedule.
RunResult train_run(TrainState& state, const data::Dataset& dataset);

void save_checkpoint(const TrainState& state, const std::string& path);
TrainState load_checkpoint(const std::string& path);

}  // namespace effssl::train
