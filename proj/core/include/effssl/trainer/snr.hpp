#pragma once

#include <cstdint>
#include <vector>

#include "effssl/nets/modules.hpp"

namespace effssl::train {

/// Per-parameter exponential moving averages of the gradient and its second
/// moment. SNR per parameter is |mean| / (sqrt(max(sq - mean^2, 0)) + eps);
/// the reported value is the average over all parameters. Pure observer: it
/// only reads gradients.
struct GradStats {
  double beta = 0.99;
  double eps = 1e-8;
  std::vector<double> mean_ema;
  std::vector<double> sq_ema;
  int64_t steps = 0;

  bool initialized() const { return !mean_ema.empty(); }
};

/// Update the EMAs with one flat gradient sample and return the mean SNR.
double grad_snr(GradStats& stats, const std::vector<double>& grads);

/// Flatten current parameter gradients in collect order.
std::vector<double> flatten_grads(const std::vector<nets::NamedParam>& params);

}  // namespace effssl::train
