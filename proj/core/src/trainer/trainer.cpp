#include "effssl/trainer/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "effssl/datapipe/labels.hpp"
#include "effssl/trainer/checkpoint.hpp"
#include "effssl/trainer/schedule.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace effssl::train {

Method parse_method(const std::string& name) {
  if (name == "simclr") return Method::SimClr;
  if (name == "byol") return Method::Byol;
  if (name == "simsiam") return Method::SimSiam;
  if (name == "swav") return Method::Swav;
  if (name == "supcon") return Method::SupCon;
  throw std::invalid_argument("unknown method: " + name);
}

std::string method_name(Method m) {
  switch (m) {
    case Method::SimClr: return "simclr";
    case Method::Byol: return "byol";
    case Method::SimSiam: return "simsiam";
    case Method::Swav: return "swav";
    case Method::SupCon: return "supcon";
  }
  throw std::logic_error("unreachable");
}

bool LossConfig::has_aux(const std::string& task) const {
  return std::find(aux_tasks.begin(), aux_tasks.end(), task) != aux_tasks.end();
}

// ---------------------------------------------------------------------------
// Config serialization

std::string TrainConfig::to_json() const {
  json j;
  j["method"] = method_name(loss.method);
  j["temperature"] = loss.temperature;
  j["lambda"] = loss.lambda;
  j["aux_tasks"] = loss.aux_tasks;
  j["ema_tau"] = loss.ema_tau;
  j["sinkhorn_eps"] = loss.sinkhorn_eps;
  j["sinkhorn_iters"] = loss.sinkhorn_iters;
  j["denominator_mode"] =
      loss.denominator_mode == loss::DenominatorMode::PaperLiteral ? "paper-literal" : "standard";
  j["use_negative_mask"] = loss.use_negative_mask;
  j["rotation_label_noise"] = loss.rotation_label_noise;
  j["class_label_noise"] = loss.class_label_noise;
  j["known_label_fraction"] = loss.known_label_fraction;

  j["backbone_widths"] = bundle.backbone.widths;
  j["backbone_blocks"] = bundle.backbone.blocks_per_stage;
  j["backbone_strides"] = bundle.backbone.strides;
  j["in_channels"] = bundle.backbone.in_channels;
  j["projector_hidden"] = bundle.projector_hidden;
  j["projector_out"] = bundle.projector_out;
  j["predictor_hidden"] = bundle.predictor_hidden;
  j["head_hidden"] = bundle.head_hidden;
  j["prototype_count"] = bundle.prototype_count;
  j["sharing_depth"] = bundle.sharing_depth;

  j["aug"] = {{"enable_crop", aug.enable_crop},
              {"crop_scale_min", aug.crop_scale_min},
              {"crop_scale_max", aug.crop_scale_max},
              {"output_size", aug.output_size},
              {"enable_flip", aug.enable_flip},
              {"flip_prob", aug.flip_prob},
              {"enable_jitter", aug.enable_jitter},
              {"jitter_prob", aug.jitter_prob},
              {"brightness", aug.brightness},
              {"contrast", aug.contrast},
              {"saturation", aug.saturation},
              {"hue", aug.hue},
              {"enable_grayscale", aug.enable_grayscale},
              {"grayscale_prob", aug.grayscale_prob},
              {"enable_blur", aug.enable_blur},
              {"blur_prob", aug.blur_prob},
              {"use_saliency", aug.use_saliency},
              {"saliency_max_tries", aug.saliency_max_tries},
              {"saliency_min_ratio", aug.saliency_min_ratio}};

  j["rotation_angles"] = rotation_angles;
  j["jigsaw_grid"] = jigsaw_grid;
  j["jigsaw_table_size"] = jigsaw_table_size;

  j["lr"] = lr;
  j["momentum"] = momentum;
  j["weight_decay"] = weight_decay;
  j["warmup_epochs"] = warmup_epochs;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["seed"] = seed;
  j["snr_enabled"] = snr_enabled;
  j["snr_beta"] = snr_beta;
  j["snr_eps"] = snr_eps;
  j["out_dir"] = out_dir;
  j["checkpoint_every"] = checkpoint_every;
  j["keep_checkpoints"] = keep_checkpoints;
  j["timing_in_metrics"] = timing_in_metrics;
  return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  const json j = json::parse(text);
  TrainConfig c;
  c.loss.method = parse_method(j.at("method").get<std::string>());
  c.loss.temperature = j.at("temperature").get<double>();
  c.loss.lambda = j.at("lambda").get<double>();
  c.loss.aux_tasks = j.at("aux_tasks").get<std::vector<std::string>>();
  c.loss.ema_tau = j.at("ema_tau").get<double>();
  c.loss.sinkhorn_eps = j.at("sinkhorn_eps").get<double>();
  c.loss.sinkhorn_iters = j.at("sinkhorn_iters").get<int>();
  c.loss.denominator_mode = j.at("denominator_mode").get<std::string>() == "standard"
                                ? loss::DenominatorMode::Standard
                                : loss::DenominatorMode::PaperLiteral;
  c.loss.use_negative_mask = j.at("use_negative_mask").get<bool>();
  c.loss.rotation_label_noise = j.at("rotation_label_noise").get<double>();
  c.loss.class_label_noise = j.at("class_label_noise").get<double>();
  c.loss.known_label_fraction = j.at("known_label_fraction").get<double>();

  c.bundle.backbone.widths = j.at("backbone_widths").get<std::vector<int>>();
  c.bundle.backbone.blocks_per_stage = j.at("backbone_blocks").get<int>();
  c.bundle.backbone.strides = j.at("backbone_strides").get<std::vector<int>>();
  c.bundle.backbone.in_channels = j.at("in_channels").get<int>();
  c.bundle.projector_hidden = j.at("projector_hidden").get<int>();
  c.bundle.projector_out = j.at("projector_out").get<int>();
  c.bundle.predictor_hidden = j.at("predictor_hidden").get<int>();
  c.bundle.head_hidden = j.at("head_hidden").get<int>();
  c.bundle.prototype_count = j.at("prototype_count").get<int>();
  c.bundle.sharing_depth = j.at("sharing_depth").get<int>();

  const json& a = j.at("aug");
  c.aug.enable_crop = a.at("enable_crop").get<bool>();
  c.aug.crop_scale_min = a.at("crop_scale_min").get<double>();
  c.aug.crop_scale_max = a.at("crop_scale_max").get<double>();
  c.aug.output_size = a.at("output_size").get<int>();
  c.aug.enable_flip = a.at("enable_flip").get<bool>();
  c.aug.flip_prob = a.at("flip_prob").get<double>();
  c.aug.enable_jitter = a.at("enable_jitter").get<bool>();
  c.aug.jitter_prob = a.at("jitter_prob").get<double>();
  c.aug.brightness = a.at("brightness").get<double>();
  c.aug.contrast = a.at("contrast").get<double>();
  c.aug.saturation = a.at("saturation").get<double>();
  c.aug.hue = a.at("hue").get<double>();
  c.aug.enable_grayscale = a.at("enable_grayscale").get<bool>();
  c.aug.grayscale_prob = a.at("grayscale_prob").get<double>();
  c.aug.enable_blur = a.at("enable_blur").get<bool>();
  c.aug.blur_prob = a.at("blur_prob").get<double>();
  c.aug.use_saliency = a.at("use_saliency").get<bool>();
  c.aug.saliency_max_tries = a.at("saliency_max_tries").get<int>();
  c.aug.saliency_min_ratio = a.at("saliency_min_ratio").get<double>();

  c.rotation_angles = j.at("rotation_angles").get<std::vector<int>>();
  c.jigsaw_grid = j.at("jigsaw_grid").get<int>();
  c.jigsaw_table_size = j.at("jigsaw_table_size").get<int>();

  c.lr = j.at("lr").get<double>();
  c.momentum = j.at("momentum").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.warmup_epochs = j.at("warmup_epochs").get<int>();
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.seed = j.at("seed").get<uint64_t>();
  c.snr_enabled = j.at("snr_enabled").get<bool>();
  c.snr_beta = j.at("snr_beta").get<double>();
  c.snr_eps = j.at("snr_eps").get<double>();
  c.out_dir = j.at("out_dir").get<std::string>();
  c.checkpoint_every = j.at("checkpoint_every").get<int>();
  c.keep_checkpoints = j.at("keep_checkpoints").get<int>();
  c.timing_in_metrics = j.at("timing_in_metrics").get<bool>();
  return c;
}

std::string MetricsRecord::to_jsonl() const {
  json j;
  j["step"] = step;
  j["epoch"] = epoch;
  j["total_loss"] = total_loss;
  j["base_loss"] = base_loss;
  j["aux_loss"] = aux_loss;
  j["learning_rate"] = learning_rate;
  j["grad_snr"] = grad_snr;
  j["wall_seconds"] = wall_seconds;
  return j.dump();
}

// ---------------------------------------------------------------------------
// TrainState

namespace {

nets::BundleConfig derive_bundle_config(const TrainConfig& cfg) {
  nets::BundleConfig b = cfg.bundle;
  b.init_seed = cfg.seed;
  b.use_predictor = cfg.loss.method == Method::Byol || cfg.loss.method == Method::SimSiam;
  b.use_ema = cfg.loss.method == Method::Byol;
  b.rotation_head = cfg.loss.has_aux("rotation");
  b.rotation_classes = static_cast<int>(cfg.rotation_angles.size());
  b.jigsaw_classes = cfg.loss.has_aux("jigsaw") ? cfg.jigsaw_table_size : 0;
  if (cfg.loss.method != Method::Swav) b.prototype_count = 0;
  else if (b.prototype_count <= 0) b.prototype_count = 100;
  return b;
}

}  // namespace

TrainState::TrainState(const TrainConfig& cfg)
    : config(cfg),
      bundle(std::make_unique<nets::NetworkBundle>(derive_bundle_config(cfg))),
      optimizer(cfg.momentum, cfg.weight_decay),
      rotation_set(cfg.rotation_angles),
      jigsaw_table(cfg.jigsaw_grid, cfg.jigsaw_table_size),
      data_rng(RngStream::child(cfg.seed, "data")),
      aug_rng(RngStream::child(cfg.seed, "aug")),
      rot_rng(RngStream::child(cfg.seed, "rotation")) {
  grad_stats.beta = cfg.snr_beta;
  grad_stats.eps = cfg.snr_eps;
}

// ---------------------------------------------------------------------------
// train_step

namespace {

using loss::Mat;

Mat<float> rows_slice(const Mat<float>& m, int first, int count) {
  Mat<float> out(count, m.cols);
  std::copy(m.v.begin() + static_cast<size_t>(first) * m.cols,
            m.v.begin() + static_cast<size_t>(first + count) * m.cols, out.v.begin());
  return out;
}

Tensor scaled_grad(const Mat<float>& g, double lambda) {
  Tensor t = loss::to_tensor(g);
  t.scale_(static_cast<float>(lambda));
  return t;
}

// Per-image jigsaw permutation (the batch op applies one permutation to all
// images; training wants an independent label per image).
data::ImageBatch jigsaw_per_image(const data::ImageBatch& batch, const std::vector<int>& indices,
                                  const data::JigsawTable& table) {
  data::ImageBatch out = batch;
  for (int64_t i = 0; i < batch.size(); ++i) {
    data::ImageBatch one;
    const int64_t c = batch.channels(), n = batch.height();
    one.pixels = Tensor({1, c, n, n});
    std::copy(batch.pixels.data() + i * c * n * n, batch.pixels.data() + (i + 1) * c * n * n,
              one.pixels.data());
    one.ids = {batch.ids[static_cast<size_t>(i)]};
    data::ImageBatch shuffled = data::jigsaw_shuffle(one, indices[static_cast<size_t>(i)], table);
    std::copy(shuffled.pixels.data(), shuffled.pixels.data() + c * n * n,
              out.pixels.data() + i * c * n * n);
  }
  return out;
}

struct BaseLossOutput {
  double value = 0.0;
};

// Forward + backward of the instance-similarity objective. Gradients land in
// the bundle's parameter accumulators.
BaseLossOutput base_loss_pass(TrainState& state, const data::ViewPair& pair,
                              const LossConfig& cfg) {
  nets::NetworkBundle& net = *state.bundle;
  const Tensor& va = pair.view_a.pixels;
  const Tensor& vb = pair.view_b.pixels;
  const int bsz = static_cast<int>(va.dim(0));
  const float temp = static_cast<float>(cfg.temperature);

  nets::Tape tape_a, tape_b;
  BaseLossOutput out;

  switch (cfg.method) {
    case Method::SimClr:
    case Method::SupCon: {
      Tensor za = net.project(net.encode(va, &tape_a, nets::Mode::Train), &tape_a,
                              nets::Mode::Train);
      Tensor zb = net.project(net.encode(vb, &tape_b, nets::Mode::Train), &tape_b,
                              nets::Mode::Train);
      loss::PairLossResult<float> res;
      if (cfg.method == Method::SimClr) {
        const loss::NegativeMask mask = cfg.use_negative_mask
                                            ? loss::build_negative_mask(pair.view_a.labels)
                                            : loss::NegativeMask(bsz);
        res = loss::ntxent<float>(loss::to_mat(za), loss::to_mat(zb), temp, mask,
                                  cfg.denominator_mode);
      } else {
        res = loss::supcon<float>(loss::to_mat(za), loss::to_mat(zb), pair.view_a.labels, temp);
      }
      out.value = res.value;
      net.encode_backward(net.project_backward(loss::to_tensor(res.grad_a), tape_a), tape_a);
      net.encode_backward(net.project_backward(loss::to_tensor(res.grad_b), tape_b), tape_b);
      break;
    }
    case Method::Byol: {
      Tensor pa = net.predict(
          net.project(net.encode(va, &tape_a, nets::Mode::Train), &tape_a, nets::Mode::Train),
          &tape_a, nets::Mode::Train);
      Tensor pb = net.predict(
          net.project(net.encode(vb, &tape_b, nets::Mode::Train), &tape_b, nets::Mode::Train),
          &tape_b, nets::Mode::Train);
      Tensor ta = net.target_embed(va);
      Tensor tb = net.target_embed(vb);
      auto res = loss::byol_loss<float>(loss::to_mat(pa), loss::to_mat(pb), loss::to_mat(ta),
                                        loss::to_mat(tb));
      out.value = res.value;
      net.encode_backward(
          net.project_backward(net.predict_backward(loss::to_tensor(res.grad_a), tape_a), tape_a),
          tape_a);
      net.encode_backward(
          net.project_backward(net.predict_backward(loss::to_tensor(res.grad_b), tape_b), tape_b),
          tape_b);
      break;
    }
    case Method::SimSiam: {
      Tensor za = net.project(net.encode(va, &tape_a, nets::Mode::Train), &tape_a,
                              nets::Mode::Train);
      Tensor pa = net.predict(za, &tape_a, nets::Mode::Train);
      Tensor zb = net.project(net.encode(vb, &tape_b, nets::Mode::Train), &tape_b,
                              nets::Mode::Train);
      Tensor pb = net.predict(zb, &tape_b, nets::Mode::Train);
      auto res = loss::simsiam_loss<float>(loss::to_mat(pa), loss::to_mat(pb), loss::to_mat(za),
                                           loss::to_mat(zb));
      out.value = res.value;
      // The stop-gradient side contributes nothing, so only the predictor
      // path is walked back.
      net.encode_backward(
          net.project_backward(net.predict_backward(loss::to_tensor(res.grad_p_a), tape_a),
                               tape_a),
          tape_a);
      net.encode_backward(
          net.project_backward(net.predict_backward(loss::to_tensor(res.grad_p_b), tape_b),
                               tape_b),
          tape_b);
      break;
    }
    case Method::Swav: {
      Tensor za = net.project(net.encode(va, &tape_a, nets::Mode::Train), &tape_a,
                              nets::Mode::Train);
      Tensor zb = net.project(net.encode(vb, &tape_b, nets::Mode::Train), &tape_b,
                              nets::Mode::Train);
      const Mat<float> za_m = loss::to_mat(za);
      const Mat<float> zb_m = loss::to_mat(zb);
      const Mat<float> ua = loss::normalize_rows(za_m);
      const Mat<float> ub = loss::normalize_rows(zb_m);
      const Mat<float> protos = loss::to_mat(net.prototypes().value);
      auto res = loss::swav_loss<float>(ua, ub, protos, temp,
                                        static_cast<float>(cfg.sinkhorn_eps), cfg.sinkhorn_iters);
      out.value = res.value;
      const Mat<float> gza = loss::normalize_rows_backward(za_m, res.grad_a);
      const Mat<float> gzb = loss::normalize_rows_backward(zb_m, res.grad_b);
      net.encode_backward(net.project_backward(loss::to_tensor(gza), tape_a), tape_a);
      net.encode_backward(net.project_backward(loss::to_tensor(gzb), tape_b), tape_b);
      net.prototypes().ensure_grad();
      net.prototypes().grad.add_(loss::to_tensor(res.grad_prototypes));
      break;
    }
  }
  return out;
}

// Pretext-task losses on transformed views; gradients scaled by lambda.
double aux_loss_pass(TrainState& state, const data::ViewPair& pair, const LossConfig& cfg) {
  nets::NetworkBundle& net = *state.bundle;
  const int bsz = static_cast<int>(pair.view_a.pixels.dim(0));
  double aux_total = 0.0;

  if (cfg.has_aux("rotation")) {
    std::vector<int> rot_a = data::sample_rotation(state.rot_rng, state.rotation_set, bsz);
    std::vector<int> rot_b = data::sample_rotation(state.rot_rng, state.rotation_set, bsz);

    std::vector<int> labels;
    labels.reserve(static_cast<size_t>(2 * bsz));
    labels.insert(labels.end(), rot_a.begin(), rot_a.end());
    labels.insert(labels.end(), rot_b.begin(), rot_b.end());
    if (cfg.rotation_label_noise > 0.0)
      labels = data::inject_label_noise(labels, cfg.rotation_label_noise,
                                        state.rotation_set.size(), state.rot_rng);

    const data::ImageBatch ra = data::rotate(pair.view_a, rot_a, state.rotation_set);
    const data::ImageBatch rb = data::rotate(pair.view_b, rot_b, state.rotation_set);

    nets::Tape tape_a, tape_b;
    Tensor la = net.head_logits(net.aux_embed(ra.pixels, &tape_a, nets::Mode::Train), "rotation",
                                &tape_a, nets::Mode::Train);
    Tensor lb = net.head_logits(net.aux_embed(rb.pixels, &tape_b, nets::Mode::Train), "rotation",
                                &tape_b, nets::Mode::Train);

    Mat<float> logits(2 * bsz, static_cast<int>(la.dim(1)));
    std::copy(la.data(), la.data() + la.numel(), logits.v.begin());
    std::copy(lb.data(), lb.data() + lb.numel(),
              logits.v.begin() + static_cast<size_t>(la.numel()));
    auto res = loss::rotation_loss<float>(logits, labels);
    aux_total += res.value;

    const Mat<float> ga = rows_slice(res.grad, 0, bsz);
    const Mat<float> gb = rows_slice(res.grad, bsz, bsz);
    net.aux_embed_backward(net.head_backward(scaled_grad(ga, cfg.lambda), "rotation", tape_a),
                           tape_a);
    net.aux_embed_backward(net.head_backward(scaled_grad(gb, cfg.lambda), "rotation", tape_b),
                           tape_b);
  }

  if (cfg.has_aux("jigsaw")) {
    std::vector<int> perm_a(static_cast<size_t>(bsz)), perm_b(static_cast<size_t>(bsz));
    for (auto& v : perm_a) v = static_cast<int>(state.rot_rng.uniform_int(state.jigsaw_table.size()));
    for (auto& v : perm_b) v = static_cast<int>(state.rot_rng.uniform_int(state.jigsaw_table.size()));

    std::vector<int> labels;
    labels.reserve(static_cast<size_t>(2 * bsz));
    labels.insert(labels.end(), perm_a.begin(), perm_a.end());
    labels.insert(labels.end(), perm_b.begin(), perm_b.end());

    const data::ImageBatch ja = jigsaw_per_image(pair.view_a, perm_a, state.jigsaw_table);
    const data::ImageBatch jb = jigsaw_per_image(pair.view_b, perm_b, state.jigsaw_table);

    nets::Tape tape_a, tape_b;
    Tensor la = net.head_logits(net.aux_embed(ja.pixels, &tape_a, nets::Mode::Train), "jigsaw",
                                &tape_a, nets::Mode::Train);
    Tensor lb = net.head_logits(net.aux_embed(jb.pixels, &tape_b, nets::Mode::Train), "jigsaw",
                                &tape_b, nets::Mode::Train);

    Mat<float> logits(2 * bsz, static_cast<int>(la.dim(1)));
    std::copy(la.data(), la.data() + la.numel(), logits.v.begin());
    std::copy(lb.data(), lb.data() + lb.numel(),
              logits.v.begin() + static_cast<size_t>(la.numel()));
    auto res = loss::cross_entropy<float>(logits, labels);
    aux_total += res.value;

    const Mat<float> ga = rows_slice(res.grad, 0, bsz);
    const Mat<float> gb = rows_slice(res.grad, bsz, bsz);
    net.aux_embed_backward(net.head_backward(scaled_grad(ga, cfg.lambda), "jigsaw", tape_a),
                           tape_a);
    net.aux_embed_backward(net.head_backward(scaled_grad(gb, cfg.lambda), "jigsaw", tape_b),
                           tape_b);
  }
  return aux_total;
}

}  // namespace

MetricsRecord train_step(TrainState& state, const data::ViewPair& pair, const LossConfig& loss_cfg,
                         int64_t warmup_steps, int64_t total_steps) {
  const auto t0 = std::chrono::steady_clock::now();
  nets::NetworkBundle& net = *state.bundle;

  std::vector<nets::NamedParam> params;
  std::vector<nets::NamedBuffer> buffers;
  net.collect_trainable(params, buffers);
  state.optimizer.zero_grad(params);

  const BaseLossOutput base = base_loss_pass(state, pair, loss_cfg);
  // lambda == 0 turns the auxiliary term off entirely: the objective reduces
  // exactly to the base loss, including normalization statistics.
  const double aux = loss_cfg.aux_active() ? aux_loss_pass(state, pair, loss_cfg) : 0.0;
  const double total = loss::combined_loss(base.value, aux, loss_cfg.lambda);

  if (!std::isfinite(total)) {
    throw std::runtime_error("train_step: non-finite loss at step " + std::to_string(state.step) +
                             " (base=" + std::to_string(base.value) +
                             ", aux=" + std::to_string(aux) + ")");
  }

  MetricsRecord rec;
  rec.step = state.step;
  rec.epoch = state.epoch;
  rec.base_loss = base.value;
  rec.aux_loss = aux;
  rec.total_loss = total;

  if (state.config.snr_enabled) rec.grad_snr = grad_snr(state.grad_stats, flatten_grads(params));

  const double lr = cosine_schedule(state.step, warmup_steps, total_steps, state.config.lr);
  rec.learning_rate = lr;
  state.optimizer.step(params, lr);
  if (loss_cfg.method == Method::Swav) net.normalize_prototypes();
  if (loss_cfg.method == Method::Byol) net.ema_update(loss_cfg.ema_tau);

  ++state.step;
  if (state.config.timing_in_metrics) {
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  return rec;
}

// ---------------------------------------------------------------------------
// train_run

RunResult train_run(TrainState& state, const data::Dataset& dataset) {
  const TrainConfig& cfg = state.config;
  const int64_t n = dataset.size();
  const int64_t bsz = cfg.batch_size;
  if (n < bsz) throw std::invalid_argument("train_run: dataset smaller than one batch");
  const int64_t steps_per_epoch = n / bsz;
  const int64_t total_steps = steps_per_epoch * cfg.epochs;
  int64_t warmup_steps = steps_per_epoch * cfg.warmup_epochs;
  if (warmup_steps >= total_steps) warmup_steps = std::max<int64_t>(total_steps - 1, 0);

  RunResult result;
  std::ofstream metrics_file;
  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    result.metrics_path = (fs::path(cfg.out_dir) / "metrics.jsonl").string();
    metrics_file.open(result.metrics_path, state.epoch > 0 ? std::ios::app : std::ios::trunc);
    if (!metrics_file) throw std::runtime_error("train_run: cannot write " + result.metrics_path);
  }

  auto save_epoch_checkpoint = [&](int64_t finished_epoch) {
    if (cfg.out_dir.empty()) return;
    const bool final_epoch = finished_epoch == cfg.epochs;
    if (!final_epoch && cfg.checkpoint_every > 0 && finished_epoch % cfg.checkpoint_every != 0)
      return;
    const std::string path =
        (fs::path(cfg.out_dir) / ("ckpt-epoch" + std::to_string(finished_epoch) + ".efss"))
            .string();
    save_checkpoint(state, path);
    result.checkpoint_paths.push_back(path);
    // Prune old checkpoints, never the most recent keep_checkpoints.
    while (cfg.keep_checkpoints > 0 &&
           static_cast<int>(result.checkpoint_paths.size()) > cfg.keep_checkpoints) {
      fs::remove(result.checkpoint_paths.front());
      result.checkpoint_paths.erase(result.checkpoint_paths.begin());
    }
  };

  std::vector<int64_t> order(static_cast<size_t>(n));
  try {
    for (int64_t epoch = state.epoch; epoch < cfg.epochs; ++epoch) {
      std::iota(order.begin(), order.end(), 0);
      state.data_rng.shuffle(order);
      for (int64_t b = 0; b < steps_per_epoch; ++b) {
        const std::vector<int64_t> idx(order.begin() + b * bsz, order.begin() + (b + 1) * bsz);
        const data::ImageBatch batch = dataset.gather(idx);
        const data::ViewPair pair = data::make_view_pair(batch, cfg.aug, state.aug_rng);
        MetricsRecord rec = train_step(state, pair, cfg.loss, warmup_steps, total_steps);
        if (metrics_file) metrics_file << rec.to_jsonl() << '\n' << std::flush;
        result.metrics.push_back(rec);
      }
      state.epoch = epoch + 1;
      save_epoch_checkpoint(state.epoch);
    }
  } catch (...) {
    if (metrics_file) metrics_file.flush();
    throw;  // partial metrics stay on disk
  }
  return result;
}

// ---------------------------------------------------------------------------
// Checkpointing

void save_checkpoint(const TrainState& state, const std::string& path) {
  BlobMap blobs;
  blobs["__config"] = blob_from_string(state.config.to_json());
  blobs["__step"] = blob_from_i64(state.step);
  blobs["__epoch"] = blob_from_i64(state.epoch);
  blobs["__rng.data"] = blob_from_string(state.data_rng.serialize());
  blobs["__rng.aug"] = blob_from_string(state.aug_rng.serialize());
  blobs["__rng.rot"] = blob_from_string(state.rot_rng.serialize());

  std::vector<nets::NamedParam> params;
  std::vector<nets::NamedBuffer> buffers;
  state.bundle->collect_trainable(params, buffers);
  for (const auto& p : params) blobs["param." + p.name] = blob_from_tensor(p.param->value);
  for (const auto& b : buffers) blobs["buffer." + b.name] = blob_from_tensor(*b.tensor);

  std::vector<nets::NamedParam> ema_params;
  std::vector<nets::NamedBuffer> ema_buffers;
  state.bundle->collect_ema(ema_params, ema_buffers);
  for (const auto& p : ema_params) blobs["param." + p.name] = blob_from_tensor(p.param->value);
  for (const auto& b : ema_buffers) blobs["buffer." + b.name] = blob_from_tensor(*b.tensor);

  for (const auto& [name, buf] : state.optimizer.buffers())
    blobs["opt." + name] = blob_from_tensor(buf);

  blobs["snr.mean"] = blob_from_doubles(state.grad_stats.mean_ema);
  blobs["snr.sq"] = blob_from_doubles(state.grad_stats.sq_ema);
  blobs["snr.steps"] = blob_from_i64(state.grad_stats.steps);

  write_blob_file(path, blobs);
}

TrainState load_checkpoint(const std::string& path) {
  const BlobMap blobs = read_blob_file(path);
  auto get = [&](const std::string& name) -> const Blob& {
    auto it = blobs.find(name);
    if (it == blobs.end()) throw std::runtime_error("checkpoint: missing entry " + name);
    return it->second;
  };

  TrainState state(TrainConfig::from_json(string_from_blob(get("__config"))));
  state.step = i64_from_blob(get("__step"));
  state.epoch = i64_from_blob(get("__epoch"));
  state.data_rng = RngStream::deserialize(string_from_blob(get("__rng.data")));
  state.aug_rng = RngStream::deserialize(string_from_blob(get("__rng.aug")));
  state.rot_rng = RngStream::deserialize(string_from_blob(get("__rng.rot")));

  std::vector<nets::NamedParam> params;
  std::vector<nets::NamedBuffer> buffers;
  state.bundle->collect_trainable(params, buffers);
  std::vector<nets::NamedParam> ema_params;
  std::vector<nets::NamedBuffer> ema_buffers;
  state.bundle->collect_ema(ema_params, ema_buffers);
  params.insert(params.end(), ema_params.begin(), ema_params.end());
  buffers.insert(buffers.end(), ema_buffers.begin(), ema_buffers.end());

  for (auto& p : params) {
    Tensor t = tensor_from_blob(get("param." + p.name));
    if (!t.same_shape(p.param->value))
      throw std::runtime_error("checkpoint: shape mismatch for " + p.name);
    p.param->value = std::move(t);
  }
  for (auto& b : buffers) {
    Tensor t = tensor_from_blob(get("buffer." + b.name));
    if (!t.same_shape(*b.tensor))
      throw std::runtime_error("checkpoint: shape mismatch for buffer " + b.name);
    *b.tensor = std::move(t);
  }

  for (const auto& [name, blob] : blobs) {
    if (name.rfind("opt.", 0) == 0)
      state.optimizer.buffers().emplace_back(name.substr(4), tensor_from_blob(blob));
  }

  state.grad_stats.mean_ema = doubles_from_blob(get("snr.mean"));
  state.grad_stats.sq_ema = doubles_from_blob(get("snr.sq"));
  state.grad_stats.steps = i64_from_blob(get("snr.steps"));
  return state;
}

}  // namespace effssl::train
