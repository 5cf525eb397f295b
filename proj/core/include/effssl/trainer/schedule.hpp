#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace effssl::train {

/// Linear warmup from 0 to base_lr over warmup_steps, then half-cosine decay
/// to 0 at total_steps.
inline double cosine_schedule(int64_t step, int64_t warmup_steps, int64_t total_steps,
                              double base_lr) {
  if (step < 0 || step > total_steps)
    throw std::invalid_argument("cosine_schedule: step out of range");
  if (warmup_steps >= total_steps)
    throw std::invalid_argument("cosine_schedule: warmup must end before total_steps");
  if (step < warmup_steps)
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  const double progress = static_cast<double>(step - warmup_steps) /
                          static_cast<double>(total_steps - warmup_steps);
  return base_lr * 0.5 * (1.0 + std::cos(M_PI * progress));
}

}  // namespace effssl::train
