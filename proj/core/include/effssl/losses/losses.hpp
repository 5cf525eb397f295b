#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "effssl/tensor.hpp"

namespace effssl::loss {

/// Row-major matrix of embeddings or logits, templated so every objective has
/// both a float32 and a float64 instantiation. Internal accumulation is
/// always double.
template <typename T>
struct Mat {
  int rows = 0, cols = 0;
  std::vector<T> v;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * static_cast<size_t>(c), T(0)) {}

  T& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
  T at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
  const T* row(int r) const { return v.data() + static_cast<size_t>(r) * cols; }
  T* row(int r) { return v.data() + static_cast<size_t>(r) * cols; }
};

Mat<float> to_mat(const Tensor& t);
Tensor to_tensor(const Mat<float>& m);

/// B x B negative-admissibility matrix: entry (i,j) true iff image j's views
/// may serve as negatives for anchors of image i. Diagonal always false.
struct NegativeMask {
  int b = 0;
  std::vector<uint8_t> allow;  // b*b

  NegativeMask() = default;
  explicit NegativeMask(int batch) : b(batch), allow(static_cast<size_t>(batch) * batch, 1) {
    for (int i = 0; i < batch; ++i) allow[static_cast<size_t>(i) * batch + i] = 0;
  }
  bool allowed(int i, int j) const { return allow[static_cast<size_t>(i) * b + j] != 0; }
};

/// Pairs whose labels are both known and equal are removed as negatives;
/// eliminated pairs are not promoted to positives. Sentinel -1 = unknown.
NegativeMask build_negative_mask(const std::vector<int>& labels);

enum class DenominatorMode {
  PaperLiteral,  // positive excluded from the denominator
  Standard,      // positive included (canonical NT-Xent)
};

template <typename T>
struct PairLossResult {
  T value = T(0);
  Mat<T> grad_a;
  Mat<T> grad_b;
};

template <typename T>
struct SwavResult {
  T value = T(0);
  Mat<T> grad_a;
  Mat<T> grad_b;
  Mat<T> grad_prototypes;
};

template <typename T>
struct ScalarLossResult {
  T value = T(0);
  Mat<T> grad;
};

/// Cosine similarity of two non-zero vectors.
template <typename T>
T cosine_sim(const std::vector<T>& a, const std::vector<T>& b);

/// Temperature-scaled contrastive loss over 2B anchors, symmetric in the two
/// views. See DenominatorMode for the two denominator conventions. Throws
/// std::domain_error when an anchor has no admissible negative left.
template <typename T>
PairLossResult<T> ntxent(const Mat<T>& z_a, const Mat<T>& z_b, T temperature,
                         const NegativeMask& mask,
                         DenominatorMode mode = DenominatorMode::PaperLiteral);
template <typename T>
PairLossResult<T> ntxent(const Mat<T>& z_a, const Mat<T>& z_b, T temperature,
                         DenominatorMode mode = DenominatorMode::PaperLiteral);

/// Multi-positive contrastive loss: all same-label views are positives,
/// log-probabilities averaged per anchor over its positive set. The sibling
/// view always counts as a positive, so singleton classes degrade to ntxent.
template <typename T>
PairLossResult<T> supcon(const Mat<T>& z_a, const Mat<T>& z_b, const std::vector<int>& labels,
                         T temperature);

/// Negative mean cosine between predictions and (gradient-free) targets,
/// symmetrized over the two views. Value in [-1, 1]; gradients flow to the
/// predictions only.
template <typename T>
PairLossResult<T> byol_loss(const Mat<T>& p_a, const Mat<T>& p_b, const Mat<T>& t_a,
                            const Mat<T>& t_b);

template <typename T>
struct SimsiamResult {
  T value = T(0);
  Mat<T> grad_p_a, grad_p_b;
  Mat<T> grad_z_a, grad_z_b;  // identically zero: stop-gradient contract
};

/// Same shape as byol_loss but the targets are the sibling projector outputs
/// under stop-gradient.
template <typename T>
SimsiamResult<T> simsiam_loss(const Mat<T>& p_a, const Mat<T>& p_b, const Mat<T>& z_a,
                              const Mat<T>& z_b);

/// Alternate row/column renormalization of exp(scores/eps). Returns the
/// K x B transport plan with row sums 1/K and column sums 1/B.
template <typename T>
Mat<T> sinkhorn(const Mat<T>& scores, T eps, int iters);

/// One direction of the swapped-prediction objective: assignments of
/// z_assign (via sinkhorn, gradient-detached) predicted from the prototype
/// scores of z_pred. grad_b in the result is the (zero) gradient of
/// z_assign. Inputs are expected row-normalized.
template <typename T>
SwavResult<T> swav_loss_one_sided(const Mat<T>& z_pred, const Mat<T>& z_assign,
                                  const Mat<T>& prototypes, T temperature, T eps, int iters);

/// Symmetrized swapped-prediction loss: mean of both one-sided terms.
template <typename T>
SwavResult<T> swav_loss(const Mat<T>& z_a, const Mat<T>& z_b, const Mat<T>& prototypes,
                        T temperature, T eps, int iters);

/// Cross entropy of z_pred's prototype softmax against fixed per-sample
/// assignment rows (each row of `qhat` sums to 1). Used for oracle and
/// finite-difference checks with frozen assignments.
template <typename T>
SwavResult<T> swav_loss_with_assignments(const Mat<T>& z_pred, const Mat<T>& prototypes,
                                         const Mat<T>& qhat, T temperature);

/// Mean softmax cross entropy for pretext-task logits.
template <typename T>
ScalarLossResult<T> cross_entropy(const Mat<T>& logits, const std::vector<int>& labels);

/// The auxiliary-task term of the combined objective: mean cross entropy over
/// both views' sampled rotations.
template <typename T>
ScalarLossResult<T> rotation_loss(const Mat<T>& logits, const std::vector<int>& labels) {
  return cross_entropy(logits, labels);
}

/// base + lambda * aux.
template <typename T>
T combined_loss(T base, T aux, T lambda) {
  return base + lambda * aux;
}

/// L2-normalize rows; `backward` maps an upstream gradient through the
/// normalization. Zero rows raise std::domain_error.
template <typename T>
Mat<T> normalize_rows(const Mat<T>& m);
template <typename T>
Mat<T> normalize_rows_backward(const Mat<T>& input, const Mat<T>& grad_normalized);

// Explicit instantiation declarations (definitions in losses_impl.hpp which
// this header includes below).

}  // namespace effssl::loss

#include "effssl/losses/losses_impl.hpp"
