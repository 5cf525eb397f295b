#include "effssl/exp/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace effssl::exp {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss(s);
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// The documented key set. Parsing rejects anything else.
const std::map<std::string, std::string>& default_map() {
  static const std::map<std::string, std::string> defaults = {
      {"experiment.method", "simclr"},
      {"experiment.aux_tasks", "none"},
      {"experiment.lambda", "0"},
      {"experiment.epochs", "1"},
      {"experiment.batch_size", "128"},
      {"experiment.seed", "0"},
      {"experiment.out_dir", ""},
      {"experiment.eval_protocols", "none"},
      {"experiment.knn_k", "200"},
      {"experiment.knn_temperature", "0.07"},
      {"experiment.probe_epochs", "100"},
      {"experiment.probe_batch", "512"},
      {"experiment.probe_lr", "1.0"},
      {"experiment.semi_fraction", "0.1"},
      {"data.source", "synthetic"},
      {"data.path", ""},
      {"data.synthetic_spec", "seed=0,n=512,classes=10,size=32"},
      {"data.synthetic_test_spec", "seed=1,n=256,classes=10,size=32"},
      {"data.train_limit", "0"},
      {"data.test_limit", "0"},
      {"data.class_label_noise", "0"},
      {"data.known_label_fraction", "1"},
      {"data.saliency_dir", ""},
      {"augment.crop", "true"},
      {"augment.crop_scale_min", "0.2"},
      {"augment.crop_scale_max", "1.0"},
      {"augment.output_size", "0"},
      {"augment.flip", "true"},
      {"augment.flip_prob", "0.5"},
      {"augment.jitter", "true"},
      {"augment.jitter_prob", "0.8"},
      {"augment.brightness", "0.4"},
      {"augment.contrast", "0.4"},
      {"augment.saturation", "0.4"},
      {"augment.hue", "0.1"},
      {"augment.grayscale", "true"},
      {"augment.grayscale_prob", "0.2"},
      {"augment.blur", "false"},
      {"augment.blur_prob", "0.5"},
      {"augment.use_saliency", "false"},
      {"rotation.angles", "0,90,180,270"},
      {"rotation.label_noise", "0"},
      {"jigsaw.grid", "2"},
      {"jigsaw.table_size", "24"},
      {"network.widths", "12,24,48"},
      {"network.blocks_per_stage", "1"},
      {"network.projector_hidden", "512"},
      {"network.projector_out", "128"},
      {"network.predictor_hidden", "512"},
      {"network.prototypes", "100"},
      {"network.sharing_depth", "-1"},
      {"optim.lr", "0.5"},
      {"optim.momentum", "0.9"},
      {"optim.weight_decay", "1e-4"},
      {"optim.warmup_epochs", "10"},
      {"method.temperature", "0.2"},
      {"method.ema_tau", "0.95"},
      {"method.sinkhorn_epsilon", "0.03"},
      {"method.sinkhorn_iters", "3"},
      {"method.denominator_mode", "paper-literal"},
      {"method.use_negative_mask", "false"},
      {"telemetry.snr_enabled", "true"},
      {"telemetry.snr_beta", "0.99"},
      {"telemetry.checkpoint_every", "1"},
      {"telemetry.keep_checkpoints", "2"},
      {"telemetry.timing_in_metrics", "false"},
      {"sweep.key", ""},
      {"sweep.values", ""},
  };
  return defaults;
}

using KV = std::map<std::string, std::string>;

const std::map<std::string, KV>& preset_map() {
  // CIFAR-scale presets carry the published hyperparameters; desk-* presets
  // are the CPU-budget variants the acceptance suite runs.
  static const std::map<std::string, KV> presets = [] {
    std::map<std::string, KV> p;
    const KV cifar_net = {{"network.widths", "64,128,256,512"},
                          {"network.blocks_per_stage", "2"},
                          {"experiment.batch_size", "512"},
                          {"experiment.epochs", "200"},
                          {"experiment.eval_protocols", "knn,linear"},
                          {"data.source", "cifar-binary"}};

    KV simclr = cifar_net;
    simclr["experiment.method"] = "simclr";
    simclr["optim.lr"] = "0.5";
    simclr["optim.weight_decay"] = "1e-4";
    simclr["method.temperature"] = "0.2";
    p["simclr-cifar10"] = simclr;

    KV simclr_rot = simclr;
    simclr_rot["experiment.aux_tasks"] = "rotation";
    simclr_rot["experiment.lambda"] = "0.5";  // 2*lambda = 1
    p["simclr-plus-rotation-cifar10"] = simclr_rot;

    KV byol = cifar_net;
    byol["experiment.method"] = "byol";
    byol["optim.lr"] = "0.8";
    byol["optim.weight_decay"] = "1e-4";
    byol["method.ema_tau"] = "0.95";
    p["byol-cifar10"] = byol;

    KV byol_rot = byol;
    byol_rot["experiment.aux_tasks"] = "rotation";
    byol_rot["experiment.lambda"] = "0.1";  // 1/(2*lambda) = 5
    p["byol-plus-rotation-cifar10"] = byol_rot;

    KV simsiam = cifar_net;
    simsiam["experiment.method"] = "simsiam";
    simsiam["optim.lr"] = "0.07";
    simsiam["optim.weight_decay"] = "4e-4";
    simsiam["network.projector_hidden"] = "2048";
    simsiam["network.projector_out"] = "2048";
    simsiam["network.predictor_hidden"] = "512";
    p["simsiam-cifar10"] = simsiam;

    KV simsiam_rot = simsiam;
    simsiam_rot["experiment.aux_tasks"] = "rotation";
    simsiam_rot["experiment.lambda"] = "0.05";  // 2*lambda = 0.1
    p["simsiam-plus-rotation-cifar10"] = simsiam_rot;

    KV swav = cifar_net;
    swav["experiment.method"] = "swav";
    swav["optim.lr"] = "0.6";
    swav["method.temperature"] = "0.1";
    swav["network.prototypes"] = "100";
    swav["method.sinkhorn_epsilon"] = "0.03";
    p["swav-cifar10"] = swav;

    KV swav_rot = swav;
    swav_rot["experiment.aux_tasks"] = "rotation";
    swav_rot["experiment.lambda"] = "0.25";  // 2*lambda = 0.5
    p["swav-plus-rotation-cifar10"] = swav_rot;

    KV supcon = cifar_net;
    supcon["experiment.method"] = "supcon";
    supcon["method.temperature"] = "0.1";
    p["supcon-cifar10"] = supcon;

    KV table5 = byol;
    table5["sweep.key"] = "experiment.aux_tasks";
    table5["sweep.values"] = "none;rotation";
    table5["experiment.lambda"] = "0.1";
    p["table5-cifar"] = table5;

    KV noise = byol_rot;
    noise["sweep.key"] = "rotation.label_noise";
    noise["sweep.values"] = "0;0.1;0.2;0.3;0.4;0.5";
    p["noise-sweep"] = noise;

    KV supcon_noise = supcon;
    supcon_noise["sweep.key"] = "data.class_label_noise";
    supcon_noise["sweep.values"] = "0;0.2;0.4;0.6;0.8";
    p["supcon-noise-sweep"] = supcon_noise;

    KV fneg = simclr;
    fneg["method.use_negative_mask"] = "true";
    fneg["sweep.key"] = "data.known_label_fraction";
    fneg["sweep.values"] = "0;0.3;0.5;1.0";
    p["false-negative"] = fneg;

    KV salcrop = byol;
    salcrop["augment.use_saliency"] = "true";
    p["saliency-crop"] = salcrop;

    KV rotset = byol_rot;
    rotset["sweep.key"] = "rotation.angles";
    rotset["sweep.values"] =
        "0,180;90,270;0,90;0,270;0,90,180,270;45,135,225,315;"
        "0,45,90,135,180,225,270,315;0,30,60,90,120,150,180,210,240,270,300,330";
    p["rotation-set"] = rotset;

    KV sharing = byol_rot;
    sharing["sweep.key"] = "network.sharing_depth";
    sharing["sweep.values"] = "0;1;2;3;4;5";
    p["sharing-depth"] = sharing;

    KV snr = simsiam;
    snr["sweep.key"] = "experiment.aux_tasks";
    snr["sweep.values"] = "none;rotation";
    snr["experiment.lambda"] = "0.05";
    snr["telemetry.snr_enabled"] = "true";
    p["snr"] = snr;

    // Desk-scale: small encoder, 16-px crops, synthetic data unless a CIFAR
    // path is supplied.
    KV desk = {{"experiment.method", "byol"},
               {"experiment.epochs", "30"},
               {"experiment.batch_size", "128"},
               {"experiment.eval_protocols", "knn"},
               {"data.source", "synthetic"},
               {"data.synthetic_spec", "seed=0,n=5000,classes=10,size=32"},
               {"data.synthetic_test_spec", "seed=1,n=2000,classes=10,size=32"},
               {"augment.output_size", "16"},
               {"augment.crop_scale_min", "0.3"},
               // Mirroring aliases the orientation-coded classes of the
               // synthetic desk data.
               {"augment.flip", "false"},
               {"network.widths", "12,24,48"},
               {"optim.lr", "0.4"},
               {"optim.weight_decay", "1e-4"},
               {"optim.warmup_epochs", "2"},
               {"method.ema_tau", "0.99"},
               {"telemetry.checkpoint_every", "0"},
               {"telemetry.keep_checkpoints", "1"}};
    p["desk-byol"] = desk;

    KV desk_rot = desk;
    desk_rot["experiment.aux_tasks"] = "rotation";
    desk_rot["experiment.lambda"] = "1.0";
    p["desk-byol-rotation"] = desk_rot;

    KV desk_noise = desk_rot;
    desk_noise["sweep.key"] = "rotation.label_noise";
    desk_noise["sweep.values"] = "0;0.5;1.0";
    p["desk-noise"] = desk_noise;
    return p;
  }();
  return presets;
}

struct TypedReader {
  const KV& kv;
  const std::string& get(const std::string& key) const {
    auto it = kv.find(key);
    if (it == kv.end()) throw std::invalid_argument("missing config key: " + key);
    return it->second;
  }
  int geti(const std::string& key) const {
    try {
      return std::stoi(get(key));
    } catch (const std::exception&) {
      throw std::invalid_argument("config key " + key + ": expected integer, got '" + get(key) +
                                  "'");
    }
  }
  int64_t geti64(const std::string& key) const {
    try {
      return std::stoll(get(key));
    } catch (const std::exception&) {
      throw std::invalid_argument("config key " + key + ": expected integer, got '" + get(key) +
                                  "'");
    }
  }
  uint64_t getu64(const std::string& key) const {
    try {
      return std::stoull(get(key));
    } catch (const std::exception&) {
      throw std::invalid_argument("config key " + key + ": expected integer, got '" + get(key) +
                                  "'");
    }
  }
  double getd(const std::string& key) const {
    try {
      size_t pos = 0;
      double v = std::stod(get(key), &pos);
      if (pos != get(key).size()) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      throw std::invalid_argument("config key " + key + ": expected number, got '" + get(key) +
                                  "'");
    }
  }
  bool getb(const std::string& key) const {
    const std::string& v = get(key);
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    throw std::invalid_argument("config key " + key + ": expected boolean, got '" + v + "'");
  }
  std::vector<std::string> getlist(const std::string& key) const {
    const std::string& v = get(key);
    if (v.empty() || v == "none") return {};
    return split(v, ',');
  }
};

ExperimentConfig materialize(KV kv, std::vector<std::string> warnings) {
  for (const auto& [key, value] : kv) {
    (void)value;
    if (default_map().find(key) == default_map().end())
      throw std::invalid_argument("unknown config key: " + key);
  }

  ExperimentConfig cfg;
  TypedReader r{kv};

  cfg.train.loss.method = train::parse_method(r.get("experiment.method"));
  cfg.train.loss.aux_tasks = r.getlist("experiment.aux_tasks");
  for (const auto& t : cfg.train.loss.aux_tasks)
    if (t != "rotation" && t != "jigsaw")
      throw std::invalid_argument("unknown auxiliary task: " + t);
  cfg.train.loss.lambda = r.getd("experiment.lambda");
  if (cfg.train.loss.lambda < 0)
    throw std::invalid_argument("experiment.lambda must be non-negative");
  cfg.train.epochs = r.geti("experiment.epochs");
  if (cfg.train.epochs < 1) throw std::invalid_argument("experiment.epochs must be >= 1");
  cfg.train.batch_size = r.geti("experiment.batch_size");
  if (cfg.train.batch_size < 2) throw std::invalid_argument("experiment.batch_size must be >= 2");
  cfg.train.seed = r.getu64("experiment.seed");
  cfg.train.out_dir = r.get("experiment.out_dir");
  cfg.eval_protocols = r.getlist("experiment.eval_protocols");
  for (const auto& proto : cfg.eval_protocols) {
    static const std::set<std::string> known{"knn", "linear", "rotation-probe", "contrastive-acc",
                                             "semi-supervised"};
    if (!known.count(proto)) throw std::invalid_argument("unknown eval protocol: " + proto);
  }
  cfg.knn_k = r.geti("experiment.knn_k");
  cfg.knn_temperature = r.getd("experiment.knn_temperature");
  cfg.probe_epochs = r.geti("experiment.probe_epochs");
  cfg.probe_batch = r.geti("experiment.probe_batch");
  cfg.probe_lr = r.getd("experiment.probe_lr");
  cfg.semi_fraction = r.getd("experiment.semi_fraction");

  cfg.data_source = r.get("data.source");
  data::parse_source_format(cfg.data_source);  // validates the tag
  cfg.data_path = r.get("data.path");
  cfg.synthetic_spec = r.get("data.synthetic_spec");
  cfg.synthetic_test_spec = r.get("data.synthetic_test_spec");
  cfg.train_limit = r.geti64("data.train_limit");
  cfg.test_limit = r.geti64("data.test_limit");
  cfg.train.loss.class_label_noise = r.getd("data.class_label_noise");
  cfg.train.loss.known_label_fraction = r.getd("data.known_label_fraction");
  if (cfg.train.loss.known_label_fraction < 0 || cfg.train.loss.known_label_fraction > 1)
    throw std::invalid_argument("data.known_label_fraction must be in [0,1]");
  cfg.saliency_dir = r.get("data.saliency_dir");

  data::AugConfig& aug = cfg.train.aug;
  aug.enable_crop = r.getb("augment.crop");
  aug.crop_scale_min = r.getd("augment.crop_scale_min");
  aug.crop_scale_max = r.getd("augment.crop_scale_max");
  aug.output_size = r.geti("augment.output_size");
  aug.enable_flip = r.getb("augment.flip");
  aug.flip_prob = r.getd("augment.flip_prob");
  aug.enable_jitter = r.getb("augment.jitter");
  aug.jitter_prob = r.getd("augment.jitter_prob");
  aug.brightness = r.getd("augment.brightness");
  aug.contrast = r.getd("augment.contrast");
  aug.saturation = r.getd("augment.saturation");
  aug.hue = r.getd("augment.hue");
  aug.enable_grayscale = r.getb("augment.grayscale");
  aug.grayscale_prob = r.getd("augment.grayscale_prob");
  aug.enable_blur = r.getb("augment.blur");
  aug.blur_prob = r.getd("augment.blur_prob");
  aug.use_saliency = r.getb("augment.use_saliency");
  aug.validate();

  cfg.train.rotation_angles.clear();
  for (const auto& a : r.getlist("rotation.angles"))
    cfg.train.rotation_angles.push_back(std::stoi(a));
  (void)data::RotationSet(cfg.train.rotation_angles);  // throws on bad sets
  cfg.train.loss.rotation_label_noise = r.getd("rotation.label_noise");
  if (cfg.train.loss.rotation_label_noise < 0 || cfg.train.loss.rotation_label_noise > 1)
    throw std::invalid_argument("rotation.label_noise must be in [0,1]");
  cfg.train.jigsaw_grid = r.geti("jigsaw.grid");
  cfg.train.jigsaw_table_size = r.geti("jigsaw.table_size");

  cfg.train.bundle.backbone.widths.clear();
  for (const auto& w : r.getlist("network.widths"))
    cfg.train.bundle.backbone.widths.push_back(std::stoi(w));
  cfg.train.bundle.backbone.blocks_per_stage = r.geti("network.blocks_per_stage");
  cfg.train.bundle.projector_hidden = r.geti("network.projector_hidden");
  cfg.train.bundle.projector_out = r.geti("network.projector_out");
  cfg.train.bundle.predictor_hidden = r.geti("network.predictor_hidden");
  cfg.train.bundle.prototype_count = r.geti("network.prototypes");
  cfg.train.bundle.sharing_depth = r.geti("network.sharing_depth");
  const int max_depth = static_cast<int>(cfg.train.bundle.backbone.widths.size()) + 1;
  if (cfg.train.bundle.sharing_depth < -1 || cfg.train.bundle.sharing_depth > max_depth)
    throw std::invalid_argument("network.sharing_depth out of range");

  cfg.train.lr = r.getd("optim.lr");
  cfg.train.momentum = r.getd("optim.momentum");
  cfg.train.weight_decay = r.getd("optim.weight_decay");
  cfg.train.warmup_epochs = r.geti("optim.warmup_epochs");

  cfg.train.loss.temperature = r.getd("method.temperature");
  if (cfg.train.loss.temperature <= 0)
    throw std::invalid_argument("method.temperature must be positive");
  cfg.train.loss.ema_tau = r.getd("method.ema_tau");
  cfg.train.loss.sinkhorn_eps = r.getd("method.sinkhorn_epsilon");
  if (cfg.train.loss.sinkhorn_eps <= 0)
    throw std::invalid_argument("method.sinkhorn_epsilon must be positive");
  cfg.train.loss.sinkhorn_iters = r.geti("method.sinkhorn_iters");
  const std::string mode = r.get("method.denominator_mode");
  if (mode == "paper-literal")
    cfg.train.loss.denominator_mode = loss::DenominatorMode::PaperLiteral;
  else if (mode == "standard")
    cfg.train.loss.denominator_mode = loss::DenominatorMode::Standard;
  else
    throw std::invalid_argument("method.denominator_mode must be paper-literal or standard");
  cfg.train.loss.use_negative_mask = r.getb("method.use_negative_mask");

  cfg.train.snr_enabled = r.getb("telemetry.snr_enabled");
  cfg.train.snr_beta = r.getd("telemetry.snr_beta");
  cfg.train.checkpoint_every = r.geti("telemetry.checkpoint_every");
  cfg.train.keep_checkpoints = r.geti("telemetry.keep_checkpoints");
  cfg.train.timing_in_metrics = r.getb("telemetry.timing_in_metrics");

  cfg.sweep_key = r.get("sweep.key");
  if (!cfg.sweep_key.empty() && default_map().find(cfg.sweep_key) == default_map().end())
    throw std::invalid_argument("sweep.key names unknown config key: " + cfg.sweep_key);
  const std::string sv = r.get("sweep.values");
  if (!sv.empty())
    cfg.sweep_values = sv.find(';') != std::string::npos ? split(sv, ';') : split(sv, ',');
  if (!cfg.sweep_key.empty() && cfg.sweep_values.empty())
    throw std::invalid_argument("sweep.key set but sweep.values empty");

  cfg.resolved = std::move(kv);
  cfg.warnings = std::move(warnings);
  return cfg;
}

KV parse_ini(const std::string& text, std::vector<std::string>& warnings, std::string& preset_out) {
  KV kv;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::invalid_argument("config line " + std::to_string(lineno) +
                                    ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.find('.') == std::string::npos && !section.empty()) key = section + "." + key;
    if (key == "experiment.preset") {
      preset_out = value;
      continue;
    }
    if (kv.count(key))
      warnings.push_back("duplicate key " + key + " (line " + std::to_string(lineno) +
                         "), last value wins");
    kv[key] = value;
  }
  return kv;
}

}  // namespace

std::string ExperimentConfig::serialize() const {
  std::ostringstream os;
  std::string section;
  for (const auto& [key, value] : resolved) {  // std::map: sorted, stable
    const auto dot = key.find('.');
    const std::string sec = key.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) os << "\n";
      os << "[" << sec << "]\n";
      section = sec;
    }
    os << key.substr(dot + 1) << " = " << value << "\n";
  }
  return os.str();
}

std::string ExperimentConfig::digest() const {
  uint64_t h = 14695981039346656037ull;
  auto mix = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
  };
  for (const auto& [key, value] : resolved) {
    mix(key);
    mix("=");
    mix(value);
    mix("\n");
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

ExperimentConfig parse_config_text(const std::string& text, const std::string& preset,
                                   const std::vector<std::string>& overrides) {
  std::vector<std::string> warnings;
  std::string file_preset;
  const KV file_kv = parse_ini(text, warnings, file_preset);

  KV kv = default_map();
  const std::string preset_name = !preset.empty() ? preset : file_preset;
  if (!preset_name.empty()) {
    for (const auto& [k, v] : preset_values(preset_name)) kv[k] = v;
  }
  for (const auto& [k, v] : file_kv) kv[k] = v;
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("override must be key=value: " + ov);
    kv[trim(ov.substr(0, eq))] = trim(ov.substr(eq + 1));
  }
  return materialize(std::move(kv), std::move(warnings));
}

ExperimentConfig parse_config(const std::string& path, const std::string& preset,
                              const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), preset, overrides);
}

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& [name, kv] : preset_map()) names.push_back(name);
  return names;
}

std::map<std::string, std::string> preset_values(const std::string& name) {
  auto it = preset_map().find(name);
  if (it == preset_map().end()) throw std::invalid_argument("unknown preset: " + name);
  return it->second;
}

}  // namespace effssl::exp
