#pragma once

#include <string>
#include <vector>

#include "effssl/nets/modules.hpp"

namespace effssl::train {

/// SGD with momentum and decoupled-by-flag weight decay (params marked
/// no_decay skip it). Momentum buffers are keyed by parameter name so
/// checkpoints can restore them exactly.
class SgdOptimizer {
 public:
  SgdOptimizer(double momentum = 0.9, double weight_decay = 0.0)
      : momentum_(momentum), weight_decay_(weight_decay) {}

  void zero_grad(std::vector<nets::NamedParam>& params);
  /// v = momentum*v + (g + wd*theta); theta -= lr*v.
  void step(std::vector<nets::NamedParam>& params, double lr);

  double momentum() const { return momentum_; }
  double weight_decay() const { return weight_decay_; }

  std::vector<std::pair<std::string, Tensor>>& buffers() { return buffers_; }
  const std::vector<std::pair<std::string, Tensor>>& buffers() const { return buffers_; }

 private:
  Tensor& buffer_for(const std::string& name, const Tensor& like);

  double momentum_;
  double weight_decay_;
  std::vector<std::pair<std::string, Tensor>> buffers_;
};

}  // namespace effssl::train
