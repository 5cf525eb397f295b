#include "effssl/exp/experiment.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>

#include "effssl/datapipe/labels.hpp"
#include "effssl/eval/eval.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace effssl::exp {

namespace {

std::string iso_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto us = std::chrono::duration_cast<std::chrono::microseconds>(
                      now.time_since_epoch())
                      .count() %
                  1000000;
  char buf[32];
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%S", &tm_utc);
  char full[48];
  std::snprintf(full, sizeof(full), "%s.%06lldZ", buf, static_cast<long long>(us));
  return full;
}

data::Dataset limited(data::Dataset ds, int64_t limit) {
  if (limit <= 0 || limit >= ds.size()) return ds;
  ds.images.resize(static_cast<size_t>(limit));
  ds.labels.resize(static_cast<size_t>(limit));
  return ds;
}

void write_manifest(const std::string& dir, const RunManifest& m) {
  std::ofstream out(fs::path(dir) / "manifest.json");
  out << m.to_json() << "\n";
}

}  // namespace

LoadedData load_experiment_data(const ExperimentConfig& cfg) {
  LoadedData out;
  if (cfg.data_source == "synthetic") {
    out.train = data::load_dataset(cfg.synthetic_spec, "synthetic");
    out.test = data::load_dataset(cfg.synthetic_test_spec, "synthetic");
  } else if (cfg.data_source == "cifar-binary") {
    const std::string root = resolve_data_path(cfg);
    // Conventional CIFAR-10 binary layout: data_batch_*.bin + test_batch.bin.
    std::vector<std::string> train_files, test_files;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
      if (!e.is_regular_file() || e.path().extension() != ".bin") continue;
      const std::string name = e.path().filename().string();
      if (name.rfind("data_batch", 0) == 0 || name == "train.bin")
        train_files.push_back(e.path().string());
      else if (name.rfind("test", 0) == 0)
        test_files.push_back(e.path().string());
    }
    std::sort(train_files.begin(), train_files.end());
    std::sort(test_files.begin(), test_files.end());
    if (train_files.empty())
      throw std::runtime_error("no CIFAR train batches found under " + root);
    out.train.num_classes = 10;
    for (const auto& f : train_files) {
      data::Dataset part = data::load_cifar_binary(f);
      for (auto& img : part.images) out.train.images.push_back(std::move(img));
      out.train.labels.insert(out.train.labels.end(), part.labels.begin(), part.labels.end());
    }
    out.test.num_classes = 10;
    for (const auto& f : test_files) {
      data::Dataset part = data::load_cifar_binary(f);
      for (auto& img : part.images) out.test.images.push_back(std::move(img));
      out.test.labels.insert(out.test.labels.end(), part.labels.begin(), part.labels.end());
    }
  } else if (cfg.data_source == "image-folder") {
    const std::string root = resolve_data_path(cfg);
    out.train = data::load_image_folder((fs::path(root) / "train").string());
    const std::string test_dir = (fs::path(root) / "test").string();
    if (fs::is_directory(test_dir)) out.test = data::load_image_folder(test_dir);
  } else {
    throw std::invalid_argument("unknown data source: " + cfg.data_source);
  }
  out.train = limited(std::move(out.train), cfg.train_limit);
  out.test = limited(std::move(out.test), cfg.test_limit);
  return out;
}

std::vector<std::string> evaluate_bundle(nets::NetworkBundle& net, const ExperimentConfig& cfg,
                                         const LoadedData& ds) {
  if (!cfg.eval_protocols.empty() && ds.test.size() == 0)
    throw std::runtime_error("evaluation requested but no test split available");
  const std::string digest = cfg.digest();
  std::vector<std::string> records;

  for (const std::string& proto : cfg.eval_protocols) {
    if (proto == "knn") {
      const auto bank_train = eval::extract_features(net, ds.train, eval::ProbeLayer::Backbone);
      const auto bank_test = eval::extract_features(net, ds.test, eval::ProbeLayer::Backbone);
      const double acc = eval::knn_eval(bank_train, bank_test, cfg.knn_k, cfg.knn_temperature);
      records.push_back(eval::eval_record("knn", "f", "top1", acc, digest));
    } else if (proto == "linear") {
      const auto bank_train = eval::extract_features(net, ds.train, eval::ProbeLayer::Backbone);
      const auto bank_test = eval::extract_features(net, ds.test, eval::ProbeLayer::Backbone);
      eval::ProbeConfig pc;
      pc.epochs = cfg.probe_epochs;
      pc.batch_size = cfg.probe_batch;
      pc.lr = cfg.probe_lr;
      pc.seed = cfg.train.seed;
      const double acc = eval::linear_probe(bank_train, bank_test, pc);
      records.push_back(eval::eval_record("linear", "f", "top1", acc, digest));
    } else if (proto == "rotation-probe") {
      const data::RotationSet rotset(cfg.train.rotation_angles);
      for (auto layer : {eval::ProbeLayer::Backbone, eval::ProbeLayer::Projector}) {
        const double acc =
            eval::rotation_probe(net, ds.train, ds.test, layer, rotset, 20, 256, 0.1,
                                 cfg.train.seed);
        records.push_back(
            eval::eval_record("rotation-probe", eval::layer_name(layer), "top1", acc, digest));
      }
    } else if (proto == "contrastive-acc") {
      RngStream aug_rng = RngStream::child(cfg.train.seed, "contrastive-eval");
      std::vector<int64_t> idx(static_cast<size_t>(ds.test.size()));
      std::iota(idx.begin(), idx.end(), 0);
      const data::ImageBatch batch = ds.test.gather(idx);
      const data::ViewPair pair = data::make_view_pair(batch, cfg.train.aug, aug_rng);
      for (auto layer : {eval::ProbeLayer::Backbone, eval::ProbeLayer::Projector}) {
        Tensor ea = net.encode(pair.view_a.pixels, nullptr, nets::Mode::Eval);
        Tensor eb = net.encode(pair.view_b.pixels, nullptr, nets::Mode::Eval);
        if (layer == eval::ProbeLayer::Projector) {
          ea = net.project(ea, nullptr, nets::Mode::Eval);
          eb = net.project(eb, nullptr, nets::Mode::Eval);
        }
        const double acc = eval::contrastive_accuracy(ea, eb, 256);
        records.push_back(
            eval::eval_record("contrastive-acc", eval::layer_name(layer), "top1", acc, digest));
      }
    } else if (proto == "semi-supervised") {
      RngStream mask_rng = RngStream::child(cfg.train.seed, "semi-supervised-mask");
      const std::vector<int> partial =
          data::make_label_mask(ds.train.labels, cfg.semi_fraction, mask_rng);
      eval::FinetuneConfig fc;
      fc.seed = cfg.train.seed;
      if (cfg.semi_fraction > 0.05) {  // 10%-labels learning-rate group
        fc.backbone_lr = 0.01;
        fc.head_lr = 0.2;
      }
      const auto result = eval::semi_supervised_finetune(net, ds.train, partial, ds.test, fc);
      records.push_back(eval::eval_record("semi-supervised", "f", "top1", result.top1, digest));
      records.push_back(eval::eval_record("semi-supervised", "f", "top5", result.top5, digest));
    }
  }
  return records;
}

namespace {

RunManifest run_single(const ExperimentConfig& config) {
  RunManifest manifest;
  manifest.config_digest = config.digest();
  manifest.started_at = iso_now();
  manifest.provenance = "effssl/0.1.0";

  ExperimentConfig cfg = config;
  const std::string out_dir = cfg.train.out_dir;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream cfg_file(fs::path(out_dir) / "config.ini");
    cfg_file << cfg.serialize();
  }

  try {
    LoadedData ds = load_experiment_data(cfg);

    // Controlled label corruption for the noise and partial-label studies.
    // The evaluation protocols keep the clean labels.
    data::Dataset train_for_loss = ds.train;
    if (cfg.train.loss.class_label_noise > 0.0) {
      RngStream noise_rng = RngStream::child(cfg.train.seed, "class-label-noise");
      train_for_loss.labels = data::inject_label_noise(
          ds.train.labels, cfg.train.loss.class_label_noise, ds.train.num_classes, noise_rng);
    }
    if (cfg.train.loss.known_label_fraction < 1.0) {
      RngStream mask_rng = RngStream::child(cfg.train.seed, "label-mask");
      train_for_loss.labels = data::make_label_mask(
          train_for_loss.labels, cfg.train.loss.known_label_fraction, mask_rng);
    }

    train::TrainState state(cfg.train);
    const train::RunResult run = train::train_run(state, train_for_loss);
    manifest.metrics_path = run.metrics_path;
    manifest.checkpoint_paths = run.checkpoint_paths;

    const std::vector<std::string> records = evaluate_bundle(*state.bundle, cfg, ds);
    if (!out_dir.empty() && !records.empty()) {
      manifest.eval_path = (fs::path(out_dir) / "eval.jsonl").string();
      std::ofstream eval_file(manifest.eval_path);
      for (const auto& line : records) eval_file << line << "\n";
    }

    manifest.completed = true;
    manifest.finished_at = iso_now();
    if (!out_dir.empty()) write_manifest(out_dir, manifest);
    return manifest;
  } catch (...) {
    manifest.finished_at = iso_now();
    if (!out_dir.empty()) write_manifest(out_dir, manifest);
    throw;
  }
}

}  // namespace

std::string RunManifest::to_json() const {
  json j;
  j["config_digest"] = config_digest;
  j["started_at"] = started_at;
  j["finished_at"] = finished_at;
  j["completed"] = completed;
  j["provenance"] = provenance;
  j["artifacts"] = {{"metrics", metrics_path},
                    {"eval", eval_path},
                    {"checkpoints", checkpoint_paths}};
  j["children"] = child_manifests;
  return j.dump(2);
}

std::string resolve_data_path(const ExperimentConfig& config) {
  if (!config.data_path.empty()) return config.data_path;
  const char* env = std::getenv("EFFSSL_DATA_DIR");
  if (env != nullptr && *env != '\0') return env;
  throw std::runtime_error("no dataset path: set data.path or EFFSSL_DATA_DIR");
}

RunManifest run_experiment(const ExperimentConfig& config) {
  if (config.sweep_key.empty()) return run_single(config);

  RunManifest parent;
  parent.config_digest = config.digest();
  parent.started_at = iso_now();
  parent.provenance = "effssl/0.1.0";
  const std::string out_dir = config.train.out_dir;

  for (size_t i = 0; i < config.sweep_values.size(); ++i) {
    std::map<std::string, std::string> kv = config.resolved;
    kv[config.sweep_key] = config.sweep_values[i];
    kv["sweep.key"] = "";
    kv["sweep.values"] = "";
    std::ostringstream sub_dir;
    if (!out_dir.empty()) {
      sub_dir << out_dir << "/sweep-" << std::setw(2) << std::setfill('0') << i;
      kv["experiment.out_dir"] = sub_dir.str();
    }
    std::ostringstream text;
    for (const auto& [k, v] : kv) text << k << " = " << v << "\n";
    const ExperimentConfig sub = parse_config_text(text.str());
    run_experiment(sub);
    if (!out_dir.empty())
      parent.child_manifests.push_back((fs::path(sub_dir.str()) / "manifest.json").string());
  }
  parent.completed = true;
  parent.finished_at = iso_now();
  if (!out_dir.empty()) write_manifest(out_dir, parent);
  return parent;
}

}  // namespace effssl::exp
