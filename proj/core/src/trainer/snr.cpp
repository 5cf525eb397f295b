#include "effssl/trainer/snr.hpp"

#include <cmath>
#include <stdexcept>

namespace effssl::train {

double grad_snr(GradStats& stats, const std::vector<double>& grads) {
  if (!stats.initialized()) {
    stats.mean_ema.assign(grads.size(), 0.0);
    stats.sq_ema.assign(grads.size(), 0.0);
  }
  if (stats.mean_ema.size() != grads.size())
    throw std::invalid_argument("grad_snr: gradient size changed between steps");

  double total = 0.0;
  const double b = stats.beta;
  for (size_t i = 0; i < grads.size(); ++i) {
    const double g = grads[i];
    if (!std::isfinite(g)) throw std::invalid_argument("grad_snr: non-finite gradient");
    stats.mean_ema[i] = b * stats.mean_ema[i] + (1.0 - b) * g;
    stats.sq_ema[i] = b * stats.sq_ema[i] + (1.0 - b) * g * g;
    const double var = std::max(stats.sq_ema[i] - stats.mean_ema[i] * stats.mean_ema[i], 0.0);
    total += std::fabs(stats.mean_ema[i]) / (std::sqrt(var) + stats.eps);
  }
  ++stats.steps;
  return grads.empty() ? 0.0 : total / static_cast<double>(grads.size());
}

std::vector<double> flatten_grads(const std::vector<nets::NamedParam>& params) {
  size_t total = 0;
  for (const auto& p : params) total += static_cast<size_t>(p.param->grad.numel());
  std::vector<double> flat;
  flat.reserve(total);
  for (const auto& p : params)
    for (int64_t i = 0; i < p.param->grad.numel(); ++i)
      flat.push_back(static_cast<double>(p.param->grad[i]));
  return flat;
}

}  // namespace effssl::train
