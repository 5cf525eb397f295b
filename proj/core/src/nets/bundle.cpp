#include "effssl/nets/bundle.hpp"

#include <cmath>
#include <stdexcept>

namespace effssl::nets {

void ema_blend(Tensor& target, const Tensor& online, double tau) {
  if (!target.same_shape(online)) throw std::invalid_argument("ema_blend: shape mismatch");
  for (int64_t i = 0; i < target.numel(); ++i)
    target[i] = static_cast<float>(tau * target[i] + (1.0 - tau) * online[i]);
}

namespace {

std::unique_ptr<Sequential> make_stage(const BackboneConfig& cfg, int stage_index,
                                       RngStream& rng) {
  const int out_w = cfg.widths[static_cast<size_t>(stage_index)];
  const int in_w = stage_index == 0 ? cfg.in_channels : cfg.widths[static_cast<size_t>(stage_index - 1)];
  const int stride = cfg.strides.empty()
                         ? (stage_index == 0 ? 1 : 2)
                         : cfg.strides[static_cast<size_t>(stage_index)];
  auto stage = std::make_unique<Sequential>();
  int block_in = in_w;
  if (stage_index == 0) {
    auto stem = std::make_unique<Conv2d>(cfg.in_channels, out_w, 3, stride, 1, false);
    stem->init(rng);
    stage->add("stem", std::move(stem));
    stage->add("stem_bn", std::make_unique<BatchNorm>(out_w));
    stage->add("stem_relu", std::make_unique<ReLU>());
    block_in = out_w;
    auto block = std::make_unique<ResidualBlock>(block_in, out_w, 1);
    block->init(rng);
    stage->add("block1", std::move(block));
    for (int b = 1; b < cfg.blocks_per_stage; ++b) {
      auto extra = std::make_unique<ResidualBlock>(out_w, out_w, 1);
      extra->init(rng);
      stage->add("block" + std::to_string(b + 1), std::move(extra));
    }
  } else {
    for (int b = 0; b < cfg.blocks_per_stage; ++b) {
      auto block = std::make_unique<ResidualBlock>(b == 0 ? block_in : out_w, out_w,
                                                   b == 0 ? stride : 1);
      block->init(rng);
      stage->add("block" + std::to_string(b + 1), std::move(block));
    }
  }
  return stage;
}

}  // namespace

NetworkBundle::NetworkBundle(const BundleConfig& cfg) : cfg_(cfg) {
  if (cfg_.backbone.widths.empty())
    throw std::invalid_argument("NetworkBundle: backbone needs at least one stage");
  if (!cfg_.backbone.strides.empty() &&
      cfg_.backbone.strides.size() != cfg_.backbone.widths.size())
    throw std::invalid_argument("NetworkBundle: strides must match stage count");

  // Every component draws from its own child stream, so enabling or
  // disabling one (a task head, prototypes) never shifts another's
  // initialization.
  for (size_t i = 0; i < cfg_.backbone.widths.size(); ++i) {
    RngStream rng = RngStream::child(cfg_.init_seed, "init.stage" + std::to_string(i));
    stages_.push_back(make_stage(cfg_.backbone, static_cast<int>(i), rng));
  }

  RngStream proj_rng = RngStream::child(cfg_.init_seed, "init.projector");
  projector_ = make_mlp(feature_dim(), cfg_.projector_hidden, cfg_.projector_out, true, proj_rng);
  if (cfg_.use_predictor) {
    RngStream rng = RngStream::child(cfg_.init_seed, "init.predictor");
    predictor_ = make_mlp(cfg_.projector_out, cfg_.predictor_hidden, cfg_.projector_out, true, rng);
  }
  if (cfg_.rotation_head) {
    RngStream rng = RngStream::child(cfg_.init_seed, "init.head.rotation");
    rot_head_ = make_mlp(cfg_.projector_out, cfg_.head_hidden, cfg_.rotation_classes, true, rng);
  }
  if (cfg_.jigsaw_classes > 0) {
    RngStream rng = RngStream::child(cfg_.init_seed, "init.head.jigsaw");
    jigsaw_head_ = make_mlp(cfg_.projector_out, cfg_.head_hidden, cfg_.jigsaw_classes, true, rng);
  }
  if (cfg_.prototype_count > 0) {
    RngStream rng = RngStream::child(cfg_.init_seed, "init.prototypes");
    prototypes_.value = Tensor({cfg_.prototype_count, cfg_.projector_out});
    for (int64_t i = 0; i < prototypes_.value.numel(); ++i)
      prototypes_.value[i] = static_cast<float>(rng.normal(0.0, 1.0));
    prototypes_.ensure_grad();
    normalize_prototypes();
  }

  if (cfg_.use_ema) {
    ema_ = std::make_unique<EMAState>();
    for (auto& s : stages_) ema_->stages.push_back(s->clone());
    ema_->projector = projector_->clone();
  }

  set_sharing_depth(cfg_.sharing_depth < 0 ? num_stages() + 1 : cfg_.sharing_depth);
}

Tensor NetworkBundle::encode_upto(const Tensor& images, int upto, Tape* tape, Mode mode) {
  Tensor h = images;
  for (int i = 0; i < upto; ++i) h = stages_[static_cast<size_t>(i)]->forward(h, tape, mode);
  return h;
}

Tensor NetworkBundle::encode(const Tensor& images, Tape* tape, Mode mode) {
  ++backbone_passes_;
  Tensor h = encode_upto(images, num_stages(), tape, mode);
  return pool_.forward(h, tape, mode);
}

Tensor NetworkBundle::project(const Tensor& features, Tape* tape, Mode mode) {
  return projector_->forward(features, tape, mode);
}

Tensor NetworkBundle::predict(const Tensor& embeddings, Tape* tape, Mode mode) {
  if (!predictor_) throw std::logic_error("NetworkBundle: no predictor configured");
  return predictor_->forward(embeddings, tape, mode);
}

Tensor NetworkBundle::encode_backward(const Tensor& grad_features, Tape& tape) {
  Tensor g = pool_.backward(grad_features, tape);
  for (int i = num_stages() - 1; i >= 0; --i) g = stages_[static_cast<size_t>(i)]->backward(g, tape);
  return g;
}

Tensor NetworkBundle::project_backward(const Tensor& grad_embeddings, Tape& tape) {
  return projector_->backward(grad_embeddings, tape);
}

Tensor NetworkBundle::predict_backward(const Tensor& grad_predictions, Tape& tape) {
  if (!predictor_) throw std::logic_error("NetworkBundle: no predictor configured");
  return predictor_->backward(grad_predictions, tape);
}

Tensor NetworkBundle::aux_embed(const Tensor& images, Tape* tape, Mode mode) {
  ++backbone_passes_;
  const int shared_stages = std::min(sharing_depth_, num_stages());
  Tensor h = encode_upto(images, shared_stages, tape, mode);
  for (auto& s : aux_stages_) h = s->forward(h, tape, mode);
  h = pool_.forward(h, tape, mode);
  if (sharing_depth_ == num_stages() + 1) return projector_->forward(h, tape, mode);
  return aux_projector_->forward(h, tape, mode);
}

void NetworkBundle::aux_embed_backward(const Tensor& grad_embeddings, Tape& tape) {
  Tensor g = (sharing_depth_ == num_stages() + 1) ? projector_->backward(grad_embeddings, tape)
                                                  : aux_projector_->backward(grad_embeddings, tape);
  g = pool_.backward(g, tape);
  for (auto it = aux_stages_.rbegin(); it != aux_stages_.rend(); ++it)
    g = (*it)->backward(g, tape);
  const int shared_stages = std::min(sharing_depth_, num_stages());
  for (int i = shared_stages - 1; i >= 0; --i)
    g = stages_[static_cast<size_t>(i)]->backward(g, tape);
}

Tensor NetworkBundle::head_logits(const Tensor& embedding, const std::string& task, Tape* tape,
                                  Mode mode) {
  if (task == "rotation") {
    if (!rot_head_) throw std::logic_error("NetworkBundle: no rotation head configured");
    return rot_head_->forward(embedding, tape, mode);
  }
  if (task == "jigsaw") {
    if (!jigsaw_head_) throw std::logic_error("NetworkBundle: no jigsaw head configured");
    return jigsaw_head_->forward(embedding, tape, mode);
  }
  throw std::invalid_argument("NetworkBundle: unknown task head " + task);
}

Tensor NetworkBundle::head_backward(const Tensor& grad_logits, const std::string& task,
                                    Tape& tape) {
  if (task == "rotation") return rot_head_->backward(grad_logits, tape);
  if (task == "jigsaw") return jigsaw_head_->backward(grad_logits, tape);
  throw std::invalid_argument("NetworkBundle: unknown task head " + task);
}

Tensor NetworkBundle::target_embed(const Tensor& images) {
  if (!ema_) throw std::logic_error("NetworkBundle: EMA target not configured");
  ++backbone_passes_;
  Tensor h = images;
  for (auto& s : ema_->stages) h = s->forward(h, nullptr, Mode::TrainFrozen);
  h = pool_.forward(h, nullptr, Mode::TrainFrozen);
  return ema_->projector->forward(h, nullptr, Mode::TrainFrozen);
}

void NetworkBundle::ema_update(double tau) {
  if (!ema_) throw std::logic_error("NetworkBundle: EMA target not configured");
  if (tau < 0.0 || tau > 1.0) throw std::invalid_argument("ema_update: tau must be in [0,1]");

  std::vector<NamedParam> online_p, target_p;
  std::vector<NamedBuffer> online_b, target_b;
  for (size_t i = 0; i < stages_.size(); ++i) {
    stages_[i]->collect("s", online_p, online_b);
    ema_->stages[i]->collect("s", target_p, target_b);
  }
  projector_->collect("p", online_p, online_b);
  ema_->projector->collect("p", target_p, target_b);

  for (size_t i = 0; i < online_p.size(); ++i)
    ema_blend(target_p[i].param->value, online_p[i].param->value, tau);
  for (size_t i = 0; i < online_b.size(); ++i)
    ema_blend(*target_b[i].tensor, *online_b[i].tensor, tau);
}

void NetworkBundle::set_sharing_depth(int depth) {
  if (depth < 0 || depth > num_stages() + 1)
    throw std::invalid_argument("set_sharing_depth: depth must be in [0, stages+1]");
  sharing_depth_ = depth;
  aux_stages_.clear();
  aux_projector_.reset();
  for (int i = depth; i < num_stages(); ++i)
    aux_stages_.push_back(stages_[static_cast<size_t>(i)]->clone());
  if (depth <= num_stages()) aux_projector_ = projector_->clone();
}

Param& NetworkBundle::prototypes() {
  if (cfg_.prototype_count <= 0) throw std::logic_error("NetworkBundle: no prototypes configured");
  return prototypes_;
}

void NetworkBundle::normalize_prototypes() {
  Tensor& c = prototypes_.value;
  const int64_t k = c.dim(0), d = c.dim(1);
  for (int64_t r = 0; r < k; ++r) {
    double s = 0.0;
    for (int64_t j = 0; j < d; ++j) s += static_cast<double>(c[r * d + j]) * c[r * d + j];
    const double n = std::sqrt(s);
    if (n == 0.0) continue;
    for (int64_t j = 0; j < d; ++j) c[r * d + j] = static_cast<float>(c[r * d + j] / n);
  }
}

void NetworkBundle::collect_trainable(std::vector<NamedParam>& params,
                                      std::vector<NamedBuffer>& buffers) {
  for (size_t i = 0; i < stages_.size(); ++i)
    stages_[i]->collect("backbone.stage" + std::to_string(i), params, buffers);
  projector_->collect("projector", params, buffers);
  if (predictor_) predictor_->collect("predictor", params, buffers);
  if (rot_head_) rot_head_->collect("head.rotation", params, buffers);
  if (jigsaw_head_) jigsaw_head_->collect("head.jigsaw", params, buffers);
  if (cfg_.prototype_count > 0) params.push_back({"prototypes", &prototypes_});
  const int first_aux = std::min(sharing_depth_, num_stages());
  for (size_t i = 0; i < aux_stages_.size(); ++i)
    aux_stages_[i]->collect("aux.stage" + std::to_string(first_aux + static_cast<int>(i)), params,
                            buffers);
  if (aux_projector_) aux_projector_->collect("aux.projector", params, buffers);
}

void NetworkBundle::collect_backbone(std::vector<NamedParam>& params,
                                     std::vector<NamedBuffer>& buffers) {
  for (size_t i = 0; i < stages_.size(); ++i)
    stages_[i]->collect("backbone.stage" + std::to_string(i), params, buffers);
}

void NetworkBundle::collect_ema(std::vector<NamedParam>& params,
                                std::vector<NamedBuffer>& buffers) {
  if (!ema_) return;
  for (size_t i = 0; i < ema_->stages.size(); ++i)
    ema_->stages[i]->collect("ema.stage" + std::to_string(i), params, buffers);
  ema_->projector->collect("ema.projector", params, buffers);
}

}  // namespace effssl::nets
