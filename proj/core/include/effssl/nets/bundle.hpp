#pragma once

#include <memory>
#include <string>
#include <vector>

#include "effssl/nets/modules.hpp"

namespace effssl::nets {

/// Small residual encoder: stage 1 is stem conv + block, later stages are
/// one or more residual blocks (stride 2 first block by default). Feature
/// dim = widths.back().
struct BackboneConfig {
  int in_channels = 3;
  std::vector<int> widths = {16, 32, 64};
  int blocks_per_stage = 1;
  std::vector<int> strides;  // per stage; empty = {1, 2, 2, ...}
};

struct BundleConfig {
  BackboneConfig backbone;
  int projector_hidden = 512;
  int projector_out = 128;
  bool use_predictor = false;   // BYOL / SimSiam
  int predictor_hidden = 512;
  bool use_ema = false;         // BYOL momentum target
  bool rotation_head = true;
  int rotation_classes = 4;
  int jigsaw_classes = 0;       // 0 = no jigsaw head
  int head_hidden = 512;        // task-head hidden width
  int prototype_count = 0;      // SwAV prototypes; 0 = none
  int sharing_depth = -1;       // -1 = stages + 1 (projector shared too)
  uint64_t init_seed = 1;
};

/// Momentum-target mirror of encoder and projector.
struct EMAState {
  std::vector<std::unique_ptr<Module>> stages;
  std::unique_ptr<Module> projector;
};

/// psi' = tau * psi + (1 - tau) * theta, element-wise.
void ema_blend(Tensor& target, const Tensor& online, double tau);

/// Online networks, task heads, optional momentum target, and the gradient
/// routing implied by the auxiliary-task sharing depth. Single writer; all
/// forward passes are deterministic given mode and parameters.
class NetworkBundle {
 public:
  explicit NetworkBundle(const BundleConfig& cfg);

  const BundleConfig& config() const { return cfg_; }
  int num_stages() const { return static_cast<int>(stages_.size()); }
  int feature_dim() const { return cfg_.backbone.widths.back(); }
  int embed_dim() const { return cfg_.projector_out; }
  int sharing_depth() const { return sharing_depth_; }

  // Main branch. encode -> B x D_f, project -> B x D_z.
  Tensor encode(const Tensor& images, Tape* tape, Mode mode);
  Tensor project(const Tensor& features, Tape* tape, Mode mode);
  Tensor predict(const Tensor& embeddings, Tape* tape, Mode mode);
  Tensor encode_backward(const Tensor& grad_features, Tape& tape);
  Tensor project_backward(const Tensor& grad_embeddings, Tape& tape);
  Tensor predict_backward(const Tensor& grad_predictions, Tape& tape);

  // Auxiliary branch: shared prefix, replicated suffix per sharing depth.
  Tensor aux_embed(const Tensor& images, Tape* tape, Mode mode);
  void aux_embed_backward(const Tensor& grad_embeddings, Tape& tape);

  // Task heads on top of (aux) embeddings. task: "rotation" | "jigsaw".
  Tensor head_logits(const Tensor& embedding, const std::string& task, Tape* tape, Mode mode);
  Tensor head_backward(const Tensor& grad_logits, const std::string& task, Tape& tape);

  // Momentum target (throws unless use_ema).
  Tensor target_embed(const Tensor& images);
  void ema_update(double tau);

  /// Replicates every stage >= depth (and the projector unless depth ==
  /// num_stages()+1) for the auxiliary branch. Replica weights start as
  /// copies of the current online weights.
  void set_sharing_depth(int depth);

  Param& prototypes();
  /// Row-normalize the prototype matrix (after each optimizer step).
  void normalize_prototypes();

  /// Optimizer-visible parameters: online nets, aux replicas, heads,
  /// prototypes. EMA mirrors excluded.
  void collect_trainable(std::vector<NamedParam>& params, std::vector<NamedBuffer>& buffers);
  /// Encoder stages only (finetuning parameter group).
  void collect_backbone(std::vector<NamedParam>& params, std::vector<NamedBuffer>& buffers);
  /// EMA mirror parameters and buffers (checkpointing).
  void collect_ema(std::vector<NamedParam>& params, std::vector<NamedBuffer>& buffers);

  int64_t backbone_passes() const { return backbone_passes_; }

 private:
  Tensor encode_upto(const Tensor& images, int upto, Tape* tape, Mode mode);

  BundleConfig cfg_;
  std::vector<std::unique_ptr<Module>> stages_;
  GlobalAvgPool pool_;
  std::unique_ptr<Sequential> projector_;
  std::unique_ptr<Sequential> predictor_;
  std::unique_ptr<Sequential> rot_head_;
  std::unique_ptr<Sequential> jigsaw_head_;
  Param prototypes_;

  int sharing_depth_ = -1;
  std::vector<std::unique_ptr<Module>> aux_stages_;
  std::unique_ptr<Module> aux_projector_;

  std::unique_ptr<EMAState> ema_;
  int64_t backbone_passes_ = 0;
};

}  // namespace effssl::nets
