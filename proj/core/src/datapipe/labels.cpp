#include "effssl/datapipe/labels.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "effssl/datapipe/image_batch.hpp"

namespace effssl::data {

namespace {
// First k entries of a seeded permutation of [0, n).
std::vector<int64_t> pick_subset(int64_t n, int64_t k, RngStream& rng) {
  std::vector<int64_t> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  rng.shuffle(idx);
  idx.resize(static_cast<size_t>(k));
  return idx;
}
}  // namespace

std::vector<int> inject_label_noise(const std::vector<int>& labels, double fraction,
                                    int num_classes, RngStream& rng) {
  if (fraction < 0.0 || fraction > 1.0)
    throw std::invalid_argument("inject_label_noise: fraction must be in [0,1]");
  if (fraction > 0.0 && num_classes < 2)
    throw std::invalid_argument("inject_label_noise: need at least 2 classes to corrupt");

  const int64_t n = static_cast<int64_t>(labels.size());
  const int64_t k = static_cast<int64_t>(std::llround(fraction * static_cast<double>(n)));
  std::vector<int> out = labels;
  if (k == 0) return out;

  for (int64_t i : pick_subset(n, k, rng)) {
    const int orig = labels[static_cast<size_t>(i)];
    // Uniform over the other num_classes-1 classes.
    int repl = static_cast<int>(rng.uniform_int(num_classes - 1));
    if (repl >= orig) ++repl;
    out[static_cast<size_t>(i)] = repl;
  }
  return out;
}

std::vector<int> make_label_mask(const std::vector<int>& labels, double known_fraction,
                                 RngStream& rng) {
  if (known_fraction < 0.0 || known_fraction > 1.0)
    throw std::invalid_argument("make_label_mask: fraction must be in [0,1]");
  const int64_t n = static_cast<int64_t>(labels.size());
  const int64_t k = static_cast<int64_t>(std::llround(known_fraction * static_cast<double>(n)));
  std::vector<int> out(labels.size(), kUnlabeled);
  for (int64_t i : pick_subset(n, k, rng)) out[static_cast<size_t>(i)] = labels[static_cast<size_t>(i)];
  return out;
}

}  // namespace effssl::data
