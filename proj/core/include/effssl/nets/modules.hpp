#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "effssl/rng.hpp"
#include "effssl/tensor.hpp"

namespace effssl::nets {

/// Trainable tensor with its gradient accumulator.
struct Param {
  Tensor value;
  Tensor grad;
  bool no_decay = false;  // BN scales/shifts and biases skip weight decay

  void ensure_grad() {
    if (!grad.same_shape(value)) grad = Tensor(value.shape());
  }
  void zero_grad() { grad.fill(0.0f); }
};

struct NamedParam {
  std::string name;
  Param* param;
};
struct NamedBuffer {
  std::string name;
  Tensor* tensor;
};

/// Saved-activation stack for one forward pass. Layers push what their
/// backward needs; backward pops in exact reverse order. Multiple concurrent
/// forward passes through shared layers each own a tape.
class Tape {
 public:
  void push(Tensor t) { stack_.push_back(std::move(t)); }
  Tensor pop();
  bool empty() const { return stack_.empty(); }
  size_t size() const { return stack_.size(); }

 private:
  std::vector<Tensor> stack_;
};

enum class Mode {
  Train,        // batch statistics, running buffers updated
  Eval,         // running statistics, nothing updated
  TrainFrozen,  // batch statistics, buffers NOT updated (momentum target)
};

class Module {
 public:
  virtual ~Module() = default;
  /// tape == nullptr means inference only (no backward possible).
  virtual Tensor forward(const Tensor& x, Tape* tape, Mode mode) = 0;
  virtual Tensor backward(const Tensor& grad_out, Tape& tape) = 0;
  virtual void collect(const std::string& prefix, std::vector<NamedParam>& params,
                       std::vector<NamedBuffer>& buffers) = 0;
  virtual std::unique_ptr<Module> clone() const = 0;
};

class Linear : public Module {
 public:
  Linear(int in_features, int out_features, bool bias = true);

  Tensor forward(const Tensor& x, Tape* tape, Mode mode) override;
  Tensor backward(const Tensor& grad_out, Tape& tape) override;
  void collect(const std::string& prefix, std::vector<NamedParam>& params,
               std::vector<NamedBuffer>& buffers) override;
  std::unique_ptr<Module> clone() const override;

  void init(RngStream& rng);
  Param& weight() { return weight_; }
  Param& bias() { return bias_; }

 private:
  int in_, out_;
  bool has_bias_;
  Param weight_;  // out x in
  Param bias_;    // out
};

class ReLU : public Module {
 public:
  Tensor forward(const Tensor& x, Tape* tape, Mode mode) override;
  Tensor backward(const Tensor& grad_out, Tape& tape) override;
  void collect(const std::string&, std::vector<NamedParam>&, std::vector<NamedBuffer>&) override {}
  std::unique_ptr<Module> clone() const override { return std::make_unique<ReLU>(); }
};

/// Normalizes over every axis except channels; accepts B x C and
/// B x C x H x W inputs.
class BatchNorm : public Module {
 public:
  explicit BatchNorm(int channels, float eps = 1e-5f, float momentum = 0.1f);

  Tensor forward(const Tensor& x, Tape* tape, Mode mode) override;
  Tensor backward(const Tensor& grad_out, Tape& tape) override;
  void collect(const std::string& prefix, std::vector<NamedParam>& params,
               std::vector<NamedBuffer>& buffers) override;
  std::unique_ptr<Module> clone() const override;

  Param& gamma() { return gamma_; }
  Param& beta() { return beta_; }

 private:
  int channels_;
  float eps_, momentum_;
  Param gamma_, beta_;
  Tensor running_mean_, running_var_;
};

class Conv2d : public Module {
 public:
  Conv2d(int in_channels, int out_channels, int kernel = 3, int stride = 1, int pad = 1,
         bool bias = false);

  Tensor forward(const Tensor& x, Tape* tape, Mode mode) override;
  Tensor backward(const Tensor& grad_out, Tape& tape) override;
  void collect(const std::string& prefix, std::vector<NamedParam>& params,
               std::vector<NamedBuffer>& buffers) override;
  std::unique_ptr<Module> clone() const override;

  void init(RngStream& rng);
  Param& weight() { return weight_; }
  int out_spatial(int in_spatial) const { return (in_spatial + 2 * pad_ - kernel_) / stride_ + 1; }

 private:
  int in_ch_, out_ch_, kernel_, stride_, pad_;
  bool has_bias_;
  Param weight_;  // out_ch x (in_ch * k * k)
  Param bias_;
};

class GlobalAvgPool : public Module {
 public:
  Tensor forward(const Tensor& x, Tape* tape, Mode mode) override;
  Tensor backward(const Tensor& grad_out, Tape& tape) override;
  void collect(const std::string&, std::vector<NamedParam>&, std::vector<NamedBuffer>&) override {}
  std::unique_ptr<Module> clone() const override { return std::make_unique<GlobalAvgPool>(); }
};

/// Ordered container of named children.
class Sequential : public Module {
 public:
  Sequential() = default;
  Sequential& add(const std::string& name, std::unique_ptr<Module> m);

  Tensor forward(const Tensor& x, Tape* tape, Mode mode) override;
  Tensor backward(const Tensor& grad_out, Tape& tape) override;
  void collect(const std::string& prefix, std::vector<NamedParam>& params,
               std::vector<NamedBuffer>& buffers) override;
  std::unique_ptr<Module> clone() const override;

  size_t size() const { return children_.size(); }
  Module* child(size_t i) { return children_[i].second.get(); }

 private:
  std::vector<std::pair<std::string, std::unique_ptr<Module>>> children_;
};

/// conv-bn-relu-conv-bn + skip, final ReLU. The skip path is a 1x1
/// projection when shape changes, identity otherwise.
class ResidualBlock : public Module {
 public:
  ResidualBlock(int in_channels, int out_channels, int stride);

  Tensor forward(const Tensor& x, Tape* tape, Mode mode) override;
  Tensor backward(const Tensor& grad_out, Tape& tape) override;
  void collect(const std::string& prefix, std::vector<NamedParam>& params,
               std::vector<NamedBuffer>& buffers) override;
  std::unique_ptr<Module> clone() const override;

  void init(RngStream& rng);
  bool has_projection() const { return skip_conv_ != nullptr; }
  Conv2d* conv1() { return conv1_.get(); }
  Conv2d* conv2() { return conv2_.get(); }
  BatchNorm* bn2() { return bn2_.get(); }

 private:
  std::unique_ptr<Conv2d> conv1_, conv2_, skip_conv_;
  std::unique_ptr<BatchNorm> bn1_, bn2_, skip_bn_;
  ReLU relu_mid_, relu_out_;
};

/// Linear -> (BatchNorm) -> ReLU -> Linear, the projector/predictor/head
/// shape used throughout.
std::unique_ptr<Sequential> make_mlp(int in, int hidden, int out, bool bn_hidden, RngStream& rng);

void init_linear(Linear& layer, RngStream& rng);
void init_conv(Conv2d& layer, RngStream& rng);

}  // namespace effssl::nets
