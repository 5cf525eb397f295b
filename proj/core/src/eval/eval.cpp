#include "effssl/eval/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "effssl/losses/losses.hpp"
#include "effssl/trainer/sgd.hpp"
#include "json.hpp"

namespace effssl::eval {

ProbeLayer parse_layer(const std::string& name) {
  if (name == "f" || name == "backbone") return ProbeLayer::Backbone;
  if (name == "gf" || name == "g(f)" || name == "projector") return ProbeLayer::Projector;
  throw std::invalid_argument("unknown probe layer: " + name);
}

std::string layer_name(ProbeLayer layer) {
  return layer == ProbeLayer::Backbone ? "f" : "gf";
}

FeatureBank extract_features(nets::NetworkBundle& bundle, const data::Dataset& dataset,
                             ProbeLayer layer, int batch_size) {
  if (dataset.size() == 0) throw std::invalid_argument("extract_features: empty dataset");
  const int64_t n = dataset.size();
  const int64_t dim = layer == ProbeLayer::Backbone ? bundle.feature_dim() : bundle.embed_dim();

  FeatureBank bank;
  bank.layer = layer;
  bank.features = Tensor({n, dim});
  bank.labels = dataset.labels;

  for (int64_t start = 0; start < n; start += batch_size) {
    const int64_t end = std::min<int64_t>(start + batch_size, n);
    std::vector<int64_t> idx(static_cast<size_t>(end - start));
    std::iota(idx.begin(), idx.end(), start);
    const data::ImageBatch batch = dataset.gather(idx);
    Tensor feats = bundle.encode(batch.pixels, nullptr, nets::Mode::Eval);
    if (layer == ProbeLayer::Projector) feats = bundle.project(feats, nullptr, nets::Mode::Eval);
    std::copy(feats.data(), feats.data() + feats.numel(), bank.features.data() + start * dim);
  }
  return bank;
}

namespace {

int count_classes(const std::vector<int>& labels) {
  int classes = 0;
  for (int l : labels) classes = std::max(classes, l + 1);
  return classes;
}

Tensor normalized_copy(const Tensor& m) {
  const int64_t n = m.dim(0), d = m.dim(1);
  Tensor out = m;
  for (int64_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (int64_t c = 0; c < d; ++c) s += static_cast<double>(m[r * d + c]) * m[r * d + c];
    const double norm = std::sqrt(s);
    if (norm == 0.0) continue;
    for (int64_t c = 0; c < d; ++c) out[r * d + c] = static_cast<float>(m[r * d + c] / norm);
  }
  return out;
}

// Shared linear-classifier trainer for the probe protocols.
double train_linear_and_score(const Tensor& x_train, const std::vector<int>& y_train,
                              const Tensor& x_test, const std::vector<int>& y_test, int epochs,
                              int batch_size, double lr, double momentum, uint64_t seed) {
  const int64_t n = x_train.dim(0);
  const int64_t d = x_train.dim(1);
  const int classes = count_classes(y_train);
  if (n == 0 || classes < 2) throw std::invalid_argument("linear probe: degenerate training bank");

  nets::Linear head(static_cast<int>(d), classes);
  RngStream init_rng = RngStream::child(seed, "probe-init");
  head.init(init_rng);

  std::vector<nets::NamedParam> params;
  std::vector<nets::NamedBuffer> buffers;
  head.collect("probe", params, buffers);
  train::SgdOptimizer opt(momentum, 0.0);

  RngStream order_rng = RngStream::child(seed, "probe-order");
  std::vector<int64_t> order(static_cast<size_t>(n));
  const int64_t bsz = std::min<int64_t>(batch_size, n);
  for (int e = 0; e < epochs; ++e) {
    std::iota(order.begin(), order.end(), 0);
    order_rng.shuffle(order);
    for (int64_t start = 0; start + bsz <= n; start += bsz) {
      Tensor xb({bsz, d});
      std::vector<int> yb(static_cast<size_t>(bsz));
      for (int64_t i = 0; i < bsz; ++i) {
        const int64_t src = order[static_cast<size_t>(start + i)];
        std::copy(x_train.data() + src * d, x_train.data() + (src + 1) * d, xb.data() + i * d);
        yb[static_cast<size_t>(i)] = y_train[static_cast<size_t>(src)];
      }
      nets::Tape tape;
      Tensor logits = head.forward(xb, &tape, nets::Mode::Train);
      auto res = loss::cross_entropy<float>(loss::to_mat(logits), yb);
      opt.zero_grad(params);
      head.backward(loss::to_tensor(res.grad), tape);
      opt.step(params, lr);
    }
  }

  const int64_t m = x_test.dim(0);
  int64_t correct = 0;
  nets::Linear& h = head;
  Tensor logits = h.forward(x_test, nullptr, nets::Mode::Eval);
  for (int64_t i = 0; i < m; ++i) {
    int best = 0;
    for (int c = 1; c < classes; ++c)
      if (logits[i * classes + c] > logits[i * classes + best]) best = c;
    if (best == y_test[static_cast<size_t>(i)]) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(m);
}

}  // namespace

double linear_probe(const FeatureBank& bank_train, const FeatureBank& bank_test,
                    const ProbeConfig& cfg) {
  if (bank_train.size() == 0 || bank_test.size() == 0)
    throw std::invalid_argument("linear_probe: empty bank");
  if (bank_train.dim() != bank_test.dim())
    throw std::invalid_argument("linear_probe: feature dim mismatch");
  return train_linear_and_score(bank_train.features, bank_train.labels, bank_test.features,
                                bank_test.labels, cfg.epochs, cfg.batch_size, cfg.lr, cfg.momentum,
                                cfg.seed);
}

double knn_eval(const FeatureBank& bank_train, const FeatureBank& bank_test, int k,
                double temperature) {
  const int64_t n = bank_train.size(), m = bank_test.size(), d = bank_train.dim();
  if (k < 1 || k > n) throw std::invalid_argument("knn_eval: K must be in [1, N_train]");
  if (bank_test.dim() != d) throw std::invalid_argument("knn_eval: feature dim mismatch");
  const int classes = count_classes(bank_train.labels);

  const Tensor train_n = normalized_copy(bank_train.features);
  const Tensor test_n = normalized_copy(bank_test.features);

  int64_t correct = 0;
  std::vector<float> sims(static_cast<size_t>(n));
  std::vector<int64_t> idx(static_cast<size_t>(n));
  std::vector<double> votes(static_cast<size_t>(classes));
  for (int64_t i = 0; i < m; ++i) {
    const float* q = test_n.data() + i * d;
    for (int64_t r = 0; r < n; ++r) {
      const float* t = train_n.data() + r * d;
      float s = 0.0f;
      for (int64_t c = 0; c < d; ++c) s += q[c] * t[c];
      sims[static_cast<size_t>(r)] = s;
    }
    std::iota(idx.begin(), idx.end(), 0);
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](int64_t a, int64_t b) {
      if (sims[static_cast<size_t>(a)] != sims[static_cast<size_t>(b)])
        return sims[static_cast<size_t>(a)] > sims[static_cast<size_t>(b)];
      return a < b;  // stable under similarity ties
    });
    std::fill(votes.begin(), votes.end(), 0.0);
    for (int r = 0; r < k; ++r) {
      const int64_t t = idx[static_cast<size_t>(r)];
      votes[static_cast<size_t>(bank_train.labels[static_cast<size_t>(t)])] +=
          std::exp(static_cast<double>(sims[static_cast<size_t>(t)]) / temperature);
    }
    int best = 0;
    for (int c = 1; c < classes; ++c)
      if (votes[static_cast<size_t>(c)] > votes[static_cast<size_t>(best)]) best = c;
    if (best == bank_test.labels[static_cast<size_t>(i)]) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(m);
}

namespace {

// Features of every image under every rotation in the set, labels = angle
// index. Bank ordering: image-major, angle-minor.
FeatureBank rotated_feature_bank(nets::NetworkBundle& bundle, const data::Dataset& dataset,
                                 ProbeLayer layer, const data::RotationSet& rotset,
                                 int batch_size) {
  data::Dataset rotated;
  rotated.num_classes = rotset.size();
  rotated.images.reserve(static_cast<size_t>(dataset.size()) * rotset.size());
  for (int64_t i = 0; i < dataset.size(); ++i) {
    data::ImageBatch one;
    const Tensor& img = dataset.images[static_cast<size_t>(i)];
    one.pixels = Tensor({1, img.dim(0), img.dim(1), img.dim(2)});
    std::copy(img.data(), img.data() + img.numel(), one.pixels.data());
    one.ids = {i};
    for (int a = 0; a < rotset.size(); ++a) {
      data::ImageBatch r = data::rotate(one, a, rotset);
      Tensor chw({img.dim(0), img.dim(1), img.dim(2)});
      std::copy(r.pixels.data(), r.pixels.data() + chw.numel(), chw.data());
      rotated.images.push_back(std::move(chw));
      rotated.labels.push_back(a);
    }
  }
  return extract_features(bundle, rotated, layer, batch_size);
}

}  // namespace

double rotation_probe(nets::NetworkBundle& bundle, const data::Dataset& train,
                      const data::Dataset& test, ProbeLayer layer,
                      const data::RotationSet& rotset, int epochs, int batch_size, double lr,
                      uint64_t seed) {
  const FeatureBank bank_train = rotated_feature_bank(bundle, train, layer, rotset, batch_size);
  const FeatureBank bank_test = rotated_feature_bank(bundle, test, layer, rotset, batch_size);

  // 2-layer MLP head mirroring the training-time rotation head.
  const int64_t d = bank_train.dim();
  const int64_t n = bank_train.size();
  RngStream rng = RngStream::child(seed, "rotation-probe");
  auto head = nets::make_mlp(static_cast<int>(d), 512, rotset.size(), true, rng);

  std::vector<nets::NamedParam> params;
  std::vector<nets::NamedBuffer> buffers;
  head->collect("rotprobe", params, buffers);
  train::SgdOptimizer opt(0.9, 0.0);

  RngStream order_rng = RngStream::child(seed, "rotation-probe-order");
  std::vector<int64_t> order(static_cast<size_t>(n));
  const int64_t bsz = std::min<int64_t>(batch_size, n);
  for (int e = 0; e < epochs; ++e) {
    std::iota(order.begin(), order.end(), 0);
    order_rng.shuffle(order);
    for (int64_t start = 0; start + bsz <= n; start += bsz) {
      Tensor xb({bsz, d});
      std::vector<int> yb(static_cast<size_t>(bsz));
      for (int64_t i = 0; i < bsz; ++i) {
        const int64_t src = order[static_cast<size_t>(start + i)];
        std::copy(bank_train.features.data() + src * d, bank_train.features.data() + (src + 1) * d,
                  xb.data() + i * d);
        yb[static_cast<size_t>(i)] = bank_train.labels[static_cast<size_t>(src)];
      }
      nets::Tape tape;
      Tensor logits = head->forward(xb, &tape, nets::Mode::Train);
      auto res = loss::cross_entropy<float>(loss::to_mat(logits), yb);
      opt.zero_grad(params);
      head->backward(loss::to_tensor(res.grad), tape);
      opt.step(params, lr);
    }
  }

  Tensor logits = head->forward(bank_test.features, nullptr, nets::Mode::Eval);
  const int classes = rotset.size();
  int64_t correct = 0;
  for (int64_t i = 0; i < bank_test.size(); ++i) {
    int best = 0;
    for (int c = 1; c < classes; ++c)
      if (logits[i * classes + c] > logits[i * classes + best]) best = c;
    if (best == bank_test.labels[static_cast<size_t>(i)]) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(bank_test.size());
}

double contrastive_accuracy(const Tensor& view_a, const Tensor& view_b, int batch_size) {
  if (view_a.rank() != 2 || !view_a.same_shape(view_b))
    throw std::invalid_argument("contrastive_accuracy: paired banks required");
  if (batch_size < 2) throw std::invalid_argument("contrastive_accuracy: batch must hold >= 2");
  const int64_t n = view_a.dim(0), d = view_a.dim(1);

  const Tensor a = normalized_copy(view_a);
  const Tensor b = normalized_copy(view_b);
  auto sim = [&](const Tensor& x, int64_t i, const Tensor& y, int64_t j) {
    const float* p = x.data() + i * d;
    const float* q = y.data() + j * d;
    float s = 0.0f;
    for (int64_t c = 0; c < d; ++c) s += p[c] * q[c];
    return s;
  };

  int64_t anchors = 0, hits = 0;
  for (int64_t start = 0; start < n; start += batch_size) {
    const int64_t end = std::min<int64_t>(start + batch_size, n);
    if (end - start < 2) break;
    for (int64_t i = start; i < end; ++i) {
      const float pos = sim(a, i, b, i);
      // Anchor in view a.
      float best_neg = -2.0f;
      for (int64_t j = start; j < end; ++j) {
        if (j == i) continue;
        best_neg = std::max(best_neg, sim(a, i, a, j));
        best_neg = std::max(best_neg, sim(a, i, b, j));
      }
      ++anchors;
      if (pos > best_neg) ++hits;
      // Anchor in view b.
      best_neg = -2.0f;
      for (int64_t j = start; j < end; ++j) {
        if (j == i) continue;
        best_neg = std::max(best_neg, sim(b, i, a, j));
        best_neg = std::max(best_neg, sim(b, i, b, j));
      }
      ++anchors;
      if (pos > best_neg) ++hits;
    }
  }
  if (anchors == 0) throw std::invalid_argument("contrastive_accuracy: no complete batch");
  return 100.0 * static_cast<double>(hits) / static_cast<double>(anchors);
}

FinetuneResult semi_supervised_finetune(nets::NetworkBundle& bundle, const data::Dataset& train,
                                        const std::vector<int>& train_labels,
                                        const data::Dataset& test, const FinetuneConfig& cfg) {
  if (static_cast<int64_t>(train_labels.size()) != train.size())
    throw std::invalid_argument("semi_supervised_finetune: label vector size mismatch");
  std::vector<int64_t> labeled;
  for (int64_t i = 0; i < train.size(); ++i)
    if (train_labels[static_cast<size_t>(i)] != data::kUnlabeled) labeled.push_back(i);
  if (labeled.empty()) throw std::invalid_argument("semi_supervised_finetune: no labeled images");

  int classes = 0;
  for (int64_t i : labeled) classes = std::max(classes, train_labels[static_cast<size_t>(i)] + 1);

  nets::Linear head(bundle.feature_dim(), classes);
  RngStream rng = RngStream::child(cfg.seed, "finetune-head");
  head.init(rng);

  std::vector<nets::NamedParam> backbone_params, head_params;
  std::vector<nets::NamedBuffer> buffers;
  bundle.collect_backbone(backbone_params, buffers);
  head.collect("finetune", head_params, buffers);
  train::SgdOptimizer opt_backbone(cfg.momentum, 0.0);
  train::SgdOptimizer opt_head(cfg.momentum, 0.0);

  RngStream order_rng = RngStream::child(cfg.seed, "finetune-order");
  const int64_t n = static_cast<int64_t>(labeled.size());
  const int64_t bsz = std::min<int64_t>(cfg.batch_size, n);
  const int64_t c = train.images[0].dim(0), hh = train.images[0].dim(1),
                ww = train.images[0].dim(2);

  for (int e = 0; e < cfg.epochs; ++e) {
    double factor = 1.0;
    for (int de : cfg.decay_epochs)
      if (e >= de) factor *= cfg.decay_factor;
    const double lr_b = cfg.backbone_lr * factor;
    const double lr_h = cfg.head_lr * factor;

    std::vector<int64_t> order = labeled;
    order_rng.shuffle(order);
    for (int64_t start = 0; start + bsz <= n; start += bsz) {
      Tensor xb({bsz, c, hh, ww});
      std::vector<int> yb(static_cast<size_t>(bsz));
      for (int64_t i = 0; i < bsz; ++i) {
        const int64_t src = order[static_cast<size_t>(start + i)];
        const Tensor& img = train.images[static_cast<size_t>(src)];
        std::copy(img.data(), img.data() + img.numel(), xb.data() + i * img.numel());
        yb[static_cast<size_t>(i)] = train_labels[static_cast<size_t>(src)];
      }
      nets::Tape tape;
      Tensor feats = bundle.encode(xb, &tape, nets::Mode::Train);
      Tensor logits = head.forward(feats, &tape, nets::Mode::Train);
      auto res = loss::cross_entropy<float>(loss::to_mat(logits), yb);
      opt_backbone.zero_grad(backbone_params);
      opt_head.zero_grad(head_params);
      Tensor gf = head.backward(loss::to_tensor(res.grad), tape);
      bundle.encode_backward(gf, tape);
      opt_backbone.step(backbone_params, lr_b);
      opt_head.step(head_params, lr_h);
    }
  }

  // Top-1 / top-5 on the test set.
  int64_t top1 = 0, top5 = 0;
  const int64_t m = test.size();
  const int64_t eval_bsz = 256;
  for (int64_t start = 0; start < m; start += eval_bsz) {
    const int64_t end = std::min<int64_t>(start + eval_bsz, m);
    std::vector<int64_t> idx(static_cast<size_t>(end - start));
    std::iota(idx.begin(), idx.end(), start);
    const data::ImageBatch batch = test.gather(idx);
    Tensor feats = bundle.encode(batch.pixels, nullptr, nets::Mode::Eval);
    Tensor logits = head.forward(feats, nullptr, nets::Mode::Eval);
    for (int64_t i = 0; i < end - start; ++i) {
      const int y = test.labels[static_cast<size_t>(start + i)];
      std::vector<int> rank(static_cast<size_t>(classes));
      std::iota(rank.begin(), rank.end(), 0);
      std::sort(rank.begin(), rank.end(), [&](int p, int q) {
        const float lp = logits[i * classes + p], lq = logits[i * classes + q];
        if (lp != lq) return lp > lq;
        return p < q;
      });
      if (rank[0] == y) ++top1;
      const int top_n = std::min(5, classes);
      for (int r = 0; r < top_n; ++r)
        if (rank[static_cast<size_t>(r)] == y) {
          ++top5;
          break;
        }
    }
  }
  FinetuneResult out;
  out.top1 = 100.0 * static_cast<double>(top1) / static_cast<double>(m);
  out.top5 = 100.0 * static_cast<double>(top5) / static_cast<double>(m);
  return out;
}

std::string eval_record(const std::string& protocol, const std::string& layer,
                        const std::string& metric, double value,
                        const std::string& config_digest) {
  nlohmann::json j;
  j["protocol"] = protocol;
  j["layer"] = layer;
  j["metric"] = metric;
  j["value"] = value;
  j["config_digest"] = config_digest;
  return j.dump();
}

}  // namespace effssl::eval
