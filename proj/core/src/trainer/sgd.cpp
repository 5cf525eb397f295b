#include "effssl/trainer/sgd.hpp"

#include <stdexcept>

namespace effssl::train {

void SgdOptimizer::zero_grad(std::vector<nets::NamedParam>& params) {
  for (auto& p : params) {
    p.param->ensure_grad();
    p.param->zero_grad();
  }
}

Tensor& SgdOptimizer::buffer_for(const std::string& name, const Tensor& like) {
  for (auto& [n, t] : buffers_)
    if (n == name) {
      if (!t.same_shape(like)) throw std::logic_error("SgdOptimizer: buffer shape changed");
      return t;
    }
  buffers_.emplace_back(name, Tensor(like.shape()));
  return buffers_.back().second;
}

void SgdOptimizer::step(std::vector<nets::NamedParam>& params, double lr) {
  for (auto& p : params) {
    p.param->ensure_grad();
    Tensor& v = buffer_for(p.name, p.param->value);
    Tensor& theta = p.param->value;
    const Tensor& g = p.param->grad;
    const float wd = p.param->no_decay ? 0.0f : static_cast<float>(weight_decay_);
    const float mu = static_cast<float>(momentum_);
    const float flr = static_cast<float>(lr);
    for (int64_t i = 0; i < theta.numel(); ++i) {
      const float grad = g[i] + wd * theta[i];
      v[i] = mu * v[i] + grad;
      theta[i] -= flr * v[i];
    }
  }
}

}  // namespace effssl::train
