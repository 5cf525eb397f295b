#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "effssl/datapipe/augment.hpp"
#include "effssl/trainer/checkpoint.hpp"
#include "effssl/trainer/schedule.hpp"
#include "effssl/trainer/trainer.hpp"
#include "support/oracles.hpp"

using namespace effssl;
using namespace effssl::train;
namespace fs = std::filesystem;

namespace {

TrainConfig toy_train_config(Method method) {
  TrainConfig cfg;
  cfg.loss.method = method;
  cfg.loss.temperature = 0.2;
  cfg.loss.ema_tau = 0.9;
  cfg.bundle.backbone.widths = {4, 8};
  cfg.bundle.projector_hidden = 16;
  cfg.bundle.projector_out = 4;
  cfg.bundle.predictor_hidden = 16;
  cfg.bundle.prototype_count = 5;
  cfg.aug.enable_crop = true;
  cfg.aug.output_size = 8;
  cfg.aug.enable_flip = true;
  cfg.lr = 0.05;
  cfg.warmup_epochs = 0;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  cfg.seed = 3;
  cfg.snr_enabled = true;
  return cfg;
}

data::Dataset toy_dataset(int64_t n = 32) {
  return data::make_synthetic({.seed = 5, .count = n, .classes = 4, .size = 8});
}

data::ViewPair toy_pair(TrainState& state, const data::Dataset& ds) {
  std::vector<int64_t> idx;
  for (int64_t i = 0; i < state.config.batch_size; ++i) idx.push_back(i);
  const data::ImageBatch batch = ds.gather(idx);
  return data::make_view_pair(batch, state.config.aug, state.aug_rng);
}

std::vector<float> all_param_values(TrainState& state) {
  std::vector<nets::NamedParam> params;
  std::vector<nets::NamedBuffer> buffers;
  state.bundle->collect_trainable(params, buffers);
  std::vector<float> out;
  for (auto& p : params)
    for (int64_t i = 0; i < p.param->value.numel(); ++i) out.push_back(p.param->value[i]);
  for (auto& b : buffers)
    for (int64_t i = 0; i < b.tensor->numel(); ++i) out.push_back((*b.tensor)[i]);
  return out;
}

// Main-branch parameters only, keyed by name, for the reduction comparison
// (the multi-task state owns extra head parameters the base state lacks).
std::map<std::string, std::vector<float>> shared_param_values(TrainState& state) {
  std::vector<nets::NamedParam> params;
  std::vector<nets::NamedBuffer> buffers;
  state.bundle->collect_trainable(params, buffers);
  std::map<std::string, std::vector<float>> out;
  for (auto& p : params) {
    if (p.name.rfind("head.", 0) == 0 || p.name.rfind("aux.", 0) == 0) continue;
    std::vector<float> v(p.param->value.data(),
                         p.param->value.data() + p.param->value.numel());
    out[p.name] = std::move(v);
  }
  for (auto& b : buffers) {
    if (b.name.rfind("head.", 0) == 0 || b.name.rfind("aux.", 0) == 0) continue;
    std::vector<float> v(b.tensor->data(), b.tensor->data() + b.tensor->numel());
    out["buffer:" + b.name] = std::move(v);
  }
  return out;
}

}  // namespace

TEST_CASE("cosine schedule endpoints") {
  CHECK(cosine_schedule(100, 100, 1000, 0.5) == 0.5);
  CHECK(cosine_schedule(1000, 100, 1000, 0.5) == doctest::Approx(0.0).epsilon(1e-12));
  // Midpoint of the decay phase: cos(pi/2) = 0.
  CHECK(cosine_schedule(550, 100, 1000, 0.5) == doctest::Approx(0.25).epsilon(1e-9));
  CHECK(cosine_schedule(50, 100, 1000, 1.0) == doctest::Approx(0.5));
  CHECK_THROWS_AS(cosine_schedule(1001, 100, 1000, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(cosine_schedule(-1, 100, 1000, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(cosine_schedule(5, 1000, 1000, 0.5), std::invalid_argument);
}

TEST_CASE("lambda zero reduces the multi-task run to the base method bitwise") {
  for (Method method : {Method::Byol, Method::SimClr}) {
    TrainConfig base_cfg = toy_train_config(method);
    TrainConfig multi_cfg = base_cfg;
    multi_cfg.loss.aux_tasks = {"rotation"};
    multi_cfg.loss.lambda = 0.0;

    TrainState base_state(base_cfg);
    TrainState multi_state(multi_cfg);
    const data::Dataset ds = toy_dataset();

    for (int step = 0; step < 5; ++step) {
      // Identical seeds drive identical augmentation draws.
      const data::ViewPair pair_base = toy_pair(base_state, ds);
      const data::ViewPair pair_multi = toy_pair(multi_state, ds);
      REQUIRE(bitwise_equal(pair_base.view_a.pixels, pair_multi.view_a.pixels));
      train_step(base_state, pair_base, base_cfg.loss, 0, 100);
      train_step(multi_state, pair_multi, multi_cfg.loss, 0, 100);
    }
    const auto base_params = shared_param_values(base_state);
    const auto multi_params = shared_param_values(multi_state);
    REQUIRE(base_params.size() == multi_params.size());
    for (const auto& [name, values] : base_params) {
      REQUIRE(multi_params.count(name) == 1);
      const auto& other = multi_params.at(name);
      REQUIRE(values.size() == other.size());
      for (size_t i = 0; i < values.size(); ++i) CHECK(values[i] == other[i]);
    }
  }
}

TEST_CASE("train_step is deterministic for fixed seeds") {
  const TrainConfig cfg = toy_train_config(Method::SimSiam);
  const data::Dataset ds = toy_dataset();
  std::vector<MetricsRecord> first, second;
  for (int run = 0; run < 2; ++run) {
    TrainState state(cfg);
    auto& records = run == 0 ? first : second;
    for (int step = 0; step < 4; ++step) {
      const data::ViewPair pair = toy_pair(state, ds);
      records.push_back(train_step(state, pair, cfg.loss, 0, 100));
    }
  }
  for (size_t i = 0; i < first.size(); ++i) {
    CHECK(first[i].to_jsonl() == second[i].to_jsonl());
  }
}

TEST_CASE("one step applies exactly -lr times the gradient") {
  TrainConfig cfg = toy_train_config(Method::SimClr);
  cfg.weight_decay = 0.0;
  cfg.snr_enabled = false;
  TrainState state(cfg);
  const data::Dataset ds = toy_dataset();
  const data::ViewPair pair = toy_pair(state, ds);

  std::vector<nets::NamedParam> params;
  std::vector<nets::NamedBuffer> buffers;
  state.bundle->collect_trainable(params, buffers);
  std::vector<std::vector<float>> before;
  for (auto& p : params)
    before.emplace_back(p.param->value.data(),
                        p.param->value.data() + p.param->value.numel());

  const MetricsRecord rec = train_step(state, pair, cfg.loss, 0, 100);
  const float lr = static_cast<float>(rec.learning_rate);

  // First step with zero momentum buffers: theta' = theta - lr * grad, and
  // the gradient accumulators still hold that gradient afterwards.
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    for (int64_t i = 0; i < p.param->value.numel(); ++i) {
      const float expected = before[pi][static_cast<size_t>(i)] - lr * p.param->grad[i];
      CHECK(std::fabs(p.param->value[i] - expected) < 1e-10);
    }
  }
}

TEST_CASE("swav and supcon training steps run and stay finite") {
  for (Method method : {Method::Swav, Method::SupCon}) {
    const TrainConfig cfg = toy_train_config(method);
    TrainState state(cfg);
    const data::Dataset ds = toy_dataset();
    for (int step = 0; step < 3; ++step) {
      const data::ViewPair pair = toy_pair(state, ds);
      const MetricsRecord rec = train_step(state, pair, cfg.loss, 0, 100);
      CHECK(std::isfinite(rec.total_loss));
    }
    if (method == Method::Swav) {
      // Prototype rows stay unit-normalized after each step.
      Tensor& protos = state.bundle->prototypes().value;
      for (int64_t r = 0; r < protos.dim(0); ++r) {
        double s = 0.0;
        for (int64_t c = 0; c < protos.dim(1); ++c)
          s += static_cast<double>(protos.at(r, c)) * protos.at(r, c);
        CHECK(std::sqrt(s) == doctest::Approx(1.0).epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("byol target update uses post-step online weights") {
  TrainConfig cfg = toy_train_config(Method::Byol);
  cfg.loss.ema_tau = 0.5;
  TrainState state(cfg);
  const data::Dataset ds = toy_dataset();

  std::vector<nets::NamedParam> online, temp_buf;
  std::vector<nets::NamedBuffer> b1, b2;
  // Online encoder+projector in the same order the EMA pairing uses.
  state.bundle->collect_backbone(online, b1);
  // Snapshot theta_0 (target starts as an exact copy).
  std::vector<std::vector<float>> theta0;
  for (auto& p : online)
    theta0.emplace_back(p.param->value.data(),
                        p.param->value.data() + p.param->value.numel());

  const data::ViewPair pair = toy_pair(state, ds);
  train_step(state, pair, cfg.loss, 0, 100);

  std::vector<nets::NamedParam> ema_params;
  std::vector<nets::NamedBuffer> ema_buffers;
  state.bundle->collect_ema(ema_params, ema_buffers);
  // psi' = tau * theta0 + (1 - tau) * theta_after for the backbone params.
  for (size_t pi = 0; pi < online.size(); ++pi) {
    for (int64_t i = 0; i < online[pi].param->value.numel(); ++i) {
      const float expected = 0.5f * theta0[pi][static_cast<size_t>(i)] +
                             (1.0f - 0.5f) * online[pi].param->value[i];
      CHECK(ema_params[pi].param->value[i] == doctest::Approx(expected).epsilon(1e-6));
    }
  }
}

TEST_CASE("auxiliary task adds exactly two backbone passes per step") {
  TrainConfig base_cfg = toy_train_config(Method::Byol);
  TrainConfig rot_cfg = base_cfg;
  rot_cfg.loss.aux_tasks = {"rotation"};
  rot_cfg.loss.lambda = 0.5;

  TrainState base_state(base_cfg);
  TrainState rot_state(rot_cfg);
  const data::Dataset ds = toy_dataset();

  const data::ViewPair p1 = toy_pair(base_state, ds);
  const int64_t before_base = base_state.bundle->backbone_passes();
  train_step(base_state, p1, base_cfg.loss, 0, 100);
  const int64_t base_passes = base_state.bundle->backbone_passes() - before_base;

  const data::ViewPair p2 = toy_pair(rot_state, ds);
  const int64_t before_rot = rot_state.bundle->backbone_passes();
  train_step(rot_state, p2, rot_cfg.loss, 0, 100);
  const int64_t rot_passes = rot_state.bundle->backbone_passes() - before_rot;

  CHECK(base_passes == 4);  // two online views + two target views
  CHECK(rot_passes == base_passes + 2);
}

TEST_CASE("snr telemetry matches the scalar oracle and never alters training") {
  SUBCASE("vector update equals per-element scalar simulation") {
    GradStats stats;
    stats.beta = 0.9;
    stats.eps = 1e-8;
    oracle::ScalarSnr s1(0.9, 1e-8), s2(0.9, 1e-8);
    RngStream rng(8);
    for (int step = 0; step < 50; ++step) {
      const double g1 = rng.normal(1.0, 1.0);
      const double g2 = rng.normal(-0.5, 2.0);
      const double expected = 0.5 * (s1.update(g1) + s2.update(g2));
      const double got = grad_snr(stats, {g1, g2});
      CHECK(std::fabs(got - expected) < 1e-12);
    }
  }
  SUBCASE("constant gradients drive snr toward 1/eps") {
    GradStats stats;
    stats.beta = 0.9;
    stats.eps = 1e-4;
    double snr = 0.0;
    for (int step = 0; step < 2000; ++step) snr = grad_snr(stats, {1.0});
    CHECK(snr > 0.5 / stats.eps);
  }
  SUBCASE("zero gradients give zero snr") {
    GradStats stats;
    CHECK(grad_snr(stats, {0.0, 0.0, 0.0}) == 0.0);
  }
  SUBCASE("disabling telemetry leaves parameters bitwise identical") {
    TrainConfig on_cfg = toy_train_config(Method::SimClr);
    TrainConfig off_cfg = on_cfg;
    off_cfg.snr_enabled = false;
    TrainState on_state(on_cfg);
    TrainState off_state(off_cfg);
    const data::Dataset ds = toy_dataset();
    for (int step = 0; step < 3; ++step) {
      train_step(on_state, toy_pair(on_state, ds), on_cfg.loss, 0, 100);
      train_step(off_state, toy_pair(off_state, ds), off_cfg.loss, 0, 100);
    }
    CHECK(all_param_values(on_state) == all_param_values(off_state));
  }
}

TEST_CASE("checkpoint round trip restores the exact state") {
  const fs::path dir = fs::temp_directory_path() / "effssl_ckpt_test";
  fs::create_directories(dir);
  const std::string path = (dir / "state.efss").string();

  TrainConfig cfg = toy_train_config(Method::Byol);
  cfg.loss.aux_tasks = {"rotation"};
  cfg.loss.lambda = 0.3;
  TrainState state(cfg);
  const data::Dataset ds = toy_dataset();
  for (int step = 0; step < 3; ++step)
    train_step(state, toy_pair(state, ds), cfg.loss, 0, 100);

  save_checkpoint(state, path);
  TrainState restored = load_checkpoint(path);
  CHECK(restored.step == state.step);
  CHECK(restored.epoch == state.epoch);
  CHECK(restored.data_rng == state.data_rng);
  CHECK(restored.aug_rng == state.aug_rng);
  CHECK(restored.rot_rng == state.rot_rng);
  CHECK(all_param_values(restored) == all_param_values(state));
  CHECK(restored.grad_stats.mean_ema == state.grad_stats.mean_ema);

  // Continuing both states produces identical trajectories.
  const data::ViewPair pair1 = toy_pair(state, ds);
  const data::ViewPair pair2 = toy_pair(restored, ds);
  const MetricsRecord r1 = train_step(state, pair1, cfg.loss, 0, 100);
  const MetricsRecord r2 = train_step(restored, pair2, cfg.loss, 0, 100);
  CHECK(r1.to_jsonl() == r2.to_jsonl());

  SUBCASE("corrupted files are rejected") {
    std::ofstream bad(path, std::ios::binary | std::ios::trunc);
    bad.write("NOPE", 4);
    bad.close();
    CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);

    save_checkpoint(state, path);
    // Flip one payload byte: checksum must catch it.
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(100);
    char c;
    f.seekg(100);
    f.read(&c, 1);
    c = static_cast<char>(c ^ 0x5a);
    f.seekp(100);
    f.write(&c, 1);
    f.close();
    CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
  }
  fs::remove_all(dir);
}

TEST_CASE("train_run smoke: finite losses, monotone steps, reproducible logs") {
  const fs::path dir = fs::temp_directory_path() / "effssl_run_test";
  fs::remove_all(dir);

  TrainConfig cfg = toy_train_config(Method::SimClr);
  cfg.epochs = 2;
  cfg.batch_size = 16;
  cfg.out_dir = (dir / "run1").string();
  const data::Dataset ds = toy_dataset(64);

  TrainState s1(cfg);
  const RunResult r1 = train_run(s1, ds);
  CHECK(r1.metrics.size() == 8);  // 64/16 * 2
  int64_t prev = -1;
  for (const auto& m : r1.metrics) {
    CHECK(std::isfinite(m.total_loss));
    CHECK(m.step == prev + 1);
    prev = m.step;
  }

  cfg.out_dir = (dir / "run2").string();
  TrainState s2(cfg);
  const RunResult r2 = train_run(s2, ds);

  std::ifstream f1(r1.metrics_path), f2(r2.metrics_path);
  std::stringstream b1, b2;
  b1 << f1.rdbuf();
  b2 << f2.rdbuf();
  CHECK(b1.str() == b2.str());
  CHECK_FALSE(b1.str().empty());

  // Metrics JSONL carries exactly the record fields.
  std::string first_line = b1.str().substr(0, b1.str().find('\n'));
  for (const char* key : {"\"step\"", "\"epoch\"", "\"total_loss\"", "\"base_loss\"",
                          "\"aux_loss\"", "\"learning_rate\"", "\"grad_snr\"",
                          "\"wall_seconds\""})
    CHECK(first_line.find(key) != std::string::npos);

  fs::remove_all(dir);
}

TEST_CASE("checkpoint resume reproduces the uninterrupted run exactly") {
  const fs::path dir = fs::temp_directory_path() / "effssl_resume_test";
  fs::remove_all(dir);

  TrainConfig cfg = toy_train_config(Method::Byol);
  cfg.loss.aux_tasks = {"rotation"};
  cfg.loss.lambda = 0.2;
  cfg.epochs = 6;
  cfg.batch_size = 16;
  cfg.checkpoint_every = 1;
  cfg.keep_checkpoints = 10;
  cfg.out_dir = (dir / "full").string();
  const data::Dataset ds = toy_dataset(32);

  TrainState full(cfg);
  train_run(full, ds);

  // Restart from the epoch-3 checkpoint and finish the schedule.
  const std::string mid = (fs::path(cfg.out_dir) / "ckpt-epoch3.efss").string();
  REQUIRE(fs::exists(mid));
  TrainState resumed = load_checkpoint(mid);
  CHECK(resumed.epoch == 3);
  train_run(resumed, ds);

  CHECK(all_param_values(resumed) == all_param_values(full));
}

TEST_CASE("diverged training aborts with a diagnostic") {
  TrainConfig cfg = toy_train_config(Method::SimClr);
  cfg.lr = 1e12;  // guaranteed blow-up
  cfg.warmup_epochs = 0;
  TrainState state(cfg);
  const data::Dataset ds = toy_dataset();
  bool threw = false;
  try {
    for (int step = 0; step < 10; ++step)
      train_step(state, toy_pair(state, ds), cfg.loss, 0, 100);
  } catch (const std::exception& e) {
    threw = true;
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
  CHECK(threw);
}

TEST_CASE("train config json round trip") {
  TrainConfig cfg = toy_train_config(Method::Swav);
  cfg.loss.aux_tasks = {"rotation", "jigsaw"};
  cfg.loss.lambda = 0.25;
  cfg.rotation_angles = {0, 180};
  cfg.bundle.sharing_depth = 1;
  const TrainConfig back = TrainConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
  CHECK(back.loss.lambda == cfg.loss.lambda);
  CHECK(back.rotation_angles == cfg.rotation_angles);
}
