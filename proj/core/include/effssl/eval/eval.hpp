#pragma once

#include <string>
#include <vector>

#include "effssl/datapipe/dataset.hpp"
#include "effssl/datapipe/rotation.hpp"
#include "effssl/nets/bundle.hpp"

namespace effssl::eval {

enum class ProbeLayer { Backbone, Projector };  // f(.) vs g(f(.))

ProbeLayer parse_layer(const std::string& name);
std::string layer_name(ProbeLayer layer);

/// Frozen features for a fixed dataset ordering.
struct FeatureBank {
  Tensor features;          // N x D
  std::vector<int> labels;  // N
  ProbeLayer layer = ProbeLayer::Backbone;

  int64_t size() const { return features.rank() == 2 ? features.dim(0) : 0; }
  int64_t dim() const { return features.dim(1); }
};

/// Inference-mode features of every dataset image; batch statistics frozen.
FeatureBank extract_features(nets::NetworkBundle& bundle, const data::Dataset& dataset,
                             ProbeLayer layer, int batch_size = 256);

struct ProbeConfig {
  int epochs = 100;
  int batch_size = 512;
  double lr = 1.0;
  double momentum = 0.9;
  uint64_t seed = 0;
};

/// Single linear layer trained with SGD momentum on frozen features; top-1
/// test accuracy in percent.
double linear_probe(const FeatureBank& bank_train, const FeatureBank& bank_test,
                    const ProbeConfig& cfg = {});

/// Cosine-similarity weighted K-nearest-neighbor vote (weights
/// exp(sim / temperature)); ties broken toward the smaller class index.
double knn_eval(const FeatureBank& bank_train, const FeatureBank& bank_test, int k = 200,
                double temperature = 0.07);

/// Freezes the bundle through `layer`, trains a 2-layer MLP to classify the
/// rotation applied to each input, and reports held-out rotation accuracy.
/// Every image contributes one example per angle in the set.
double rotation_probe(nets::NetworkBundle& bundle, const data::Dataset& train,
                      const data::Dataset& test, ProbeLayer layer,
                      const data::RotationSet& rotset = data::RotationSet(),
                      int epochs = 20, int batch_size = 256, double lr = 0.1,
                      uint64_t seed = 0);

/// Fraction (percent) of anchors whose positive similarity strictly exceeds
/// every in-batch negative similarity. Banks hold the two views' embeddings
/// row-aligned; comparisons run within consecutive batches.
double contrastive_accuracy(const Tensor& view_a, const Tensor& view_b, int batch_size);

struct FinetuneConfig {
  int epochs = 20;
  int batch_size = 256;
  double backbone_lr = 0.02;
  double head_lr = 5.0;
  double momentum = 0.9;
  std::vector<int> decay_epochs = {12, 16};
  double decay_factor = 0.2;
  uint64_t seed = 0;
};

struct FinetuneResult {
  double top1 = 0.0;
  double top5 = 0.0;
};

/// Unfreezes the backbone and trains it plus a fresh linear head with the
/// two-group learning rates and step decays; no weight decay. Labels with the
/// unlabeled sentinel are excluded from training.
FinetuneResult semi_supervised_finetune(nets::NetworkBundle& bundle, const data::Dataset& train,
                                        const std::vector<int>& train_labels,
                                        const data::Dataset& test, const FinetuneConfig& cfg = {});

/// One evaluation-result JSONL line: {protocol, layer, metric, value,
/// config_digest}.
std::string eval_record(const std::string& protocol, const std::string& layer,
                        const std::string& metric, double value,
                        const std::string& config_digest);

}  // namespace effssl::eval
