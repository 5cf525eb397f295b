#include "effssl/nets/modules.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace effssl::nets {

Tensor Tape::pop() {
  if (stack_.empty()) throw std::logic_error("Tape: pop on empty tape");
  Tensor t = std::move(stack_.back());
  stack_.pop_back();
  return t;
}

// ---------------------------------------------------------------------------
// Linear

Linear::Linear(int in_features, int out_features, bool bias)
    : in_(in_features), out_(out_features), has_bias_(bias) {
  weight_.value = Tensor({out_, in_});
  weight_.ensure_grad();
  bias_.value = Tensor({out_});
  bias_.no_decay = true;
  bias_.ensure_grad();
}

void Linear::init(RngStream& rng) { init_linear(*this, rng); }

Tensor Linear::forward(const Tensor& x, Tape* tape, Mode) {
  if (x.rank() != 2 || x.dim(1) != in_)
    throw std::invalid_argument("Linear: expected input of width " + std::to_string(in_) +
                                ", got " + x.shape_str());
  const int b = static_cast<int>(x.dim(0));
  Tensor y({b, out_});
  matmul_a_bt(x.data(), weight_.value.data(), y.data(), b, in_, out_);
  if (has_bias_) {
    for (int i = 0; i < b; ++i)
      for (int o = 0; o < out_; ++o) y[static_cast<int64_t>(i) * out_ + o] += bias_.value[o];
  }
  if (tape) tape->push(x);
  return y;
}

Tensor Linear::backward(const Tensor& grad_out, Tape& tape) {
  Tensor x = tape.pop();
  const int b = static_cast<int>(x.dim(0));
  // dW += g^T x
  Tensor gw({out_, in_});
  matmul_at_b(grad_out.data(), x.data(), gw.data(), b, out_, in_);
  weight_.grad.add_(gw);
  if (has_bias_) {
    for (int i = 0; i < b; ++i)
      for (int o = 0; o < out_; ++o) bias_.grad[o] += grad_out[static_cast<int64_t>(i) * out_ + o];
  }
  Tensor gx({b, in_});
  matmul(grad_out.data(), weight_.value.data(), gx.data(), b, out_, in_);
  return gx;
}

void Linear::collect(const std::string& prefix, std::vector<NamedParam>& params,
                     std::vector<NamedBuffer>& buffers) {
  (void)buffers;
  params.push_back({prefix + ".weight", &weight_});
  if (has_bias_) params.push_back({prefix + ".bias", &bias_});
}

std::unique_ptr<Module> Linear::clone() const {
  auto copy = std::make_unique<Linear>(in_, out_, has_bias_);
  copy->weight_.value = weight_.value;
  copy->bias_.value = bias_.value;
  return copy;
}

// ---------------------------------------------------------------------------
// ReLU

Tensor ReLU::forward(const Tensor& x, Tape* tape, Mode) {
  Tensor y = x;
  for (int64_t i = 0; i < y.numel(); ++i)
    if (y[i] < 0.0f) y[i] = 0.0f;
  if (tape) tape->push(x);
  return y;
}

Tensor ReLU::backward(const Tensor& grad_out, Tape& tape) {
  Tensor x = tape.pop();
  Tensor gx = grad_out;
  for (int64_t i = 0; i < gx.numel(); ++i)
    if (x[i] <= 0.0f) gx[i] = 0.0f;
  return gx;
}

// ---------------------------------------------------------------------------
// BatchNorm

BatchNorm::BatchNorm(int channels, float eps, float momentum)
    : channels_(channels), eps_(eps), momentum_(momentum) {
  gamma_.value = Tensor::full({channels_}, 1.0f);
  gamma_.no_decay = true;
  gamma_.ensure_grad();
  beta_.value = Tensor({channels_});
  beta_.no_decay = true;
  beta_.ensure_grad();
  running_mean_ = Tensor({channels_});
  running_var_ = Tensor::full({channels_}, 1.0f);
}

Tensor BatchNorm::forward(const Tensor& x, Tape* tape, Mode mode) {
  const bool is_2d = x.rank() == 2;
  if (!is_2d && x.rank() != 4)
    throw std::invalid_argument("BatchNorm: rank-2 or rank-4 input required");
  const int64_t b = x.dim(0);
  const int64_t c = x.dim(1);
  if (c != channels_) throw std::invalid_argument("BatchNorm: channel mismatch");
  const int64_t hw = is_2d ? 1 : x.dim(2) * x.dim(3);
  const int64_t n = b * hw;

  Tensor mean({channels_}), var({channels_});
  if (mode == Mode::Eval) {
    mean = running_mean_;
    var = running_var_;
  } else {
    for (int64_t ch = 0; ch < c; ++ch) {
      double m = 0.0;
      for (int64_t i = 0; i < b; ++i) {
        const float* p = x.data() + (i * c + ch) * hw;
        for (int64_t j = 0; j < hw; ++j) m += p[j];
      }
      m /= static_cast<double>(n);
      double v = 0.0;
      for (int64_t i = 0; i < b; ++i) {
        const float* p = x.data() + (i * c + ch) * hw;
        for (int64_t j = 0; j < hw; ++j) {
          const double d = p[j] - m;
          v += d * d;
        }
      }
      v /= static_cast<double>(n);
      mean[ch] = static_cast<float>(m);
      var[ch] = static_cast<float>(v);
    }
    if (mode == Mode::Train) {
      for (int64_t ch = 0; ch < c; ++ch) {
        running_mean_[ch] = (1.0f - momentum_) * running_mean_[ch] + momentum_ * mean[ch];
        running_var_[ch] = (1.0f - momentum_) * running_var_[ch] + momentum_ * var[ch];
      }
    }
  }

  Tensor istd({channels_});
  for (int64_t ch = 0; ch < c; ++ch)
    istd[ch] = 1.0f / std::sqrt(var[ch] + eps_);

  Tensor xhat(x.shape());
  Tensor y(x.shape());
  for (int64_t i = 0; i < b; ++i)
    for (int64_t ch = 0; ch < c; ++ch) {
      const float* p = x.data() + (i * c + ch) * hw;
      float* ph = xhat.data() + (i * c + ch) * hw;
      float* py = y.data() + (i * c + ch) * hw;
      for (int64_t j = 0; j < hw; ++j) {
        ph[j] = (p[j] - mean[ch]) * istd[ch];
        py[j] = gamma_.value[ch] * ph[j] + beta_.value[ch];
      }
    }

  if (tape) {
    tape->push(std::move(xhat));
    tape->push(istd);
    Tensor flag({1});
    flag[0] = (mode == Mode::Eval) ? 1.0f : 0.0f;
    tape->push(std::move(flag));
  }
  return y;
}

Tensor BatchNorm::backward(const Tensor& grad_out, Tape& tape) {
  const Tensor flag = tape.pop();
  const Tensor istd = tape.pop();
  const Tensor xhat = tape.pop();
  const bool eval_mode = flag[0] != 0.0f;

  const bool is_2d = grad_out.rank() == 2;
  const int64_t b = grad_out.dim(0);
  const int64_t c = grad_out.dim(1);
  const int64_t hw = is_2d ? 1 : grad_out.dim(2) * grad_out.dim(3);
  const int64_t n = b * hw;

  Tensor gx(grad_out.shape());
  for (int64_t ch = 0; ch < c; ++ch) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (int64_t i = 0; i < b; ++i) {
      const float* g = grad_out.data() + (i * c + ch) * hw;
      const float* h = xhat.data() + (i * c + ch) * hw;
      for (int64_t j = 0; j < hw; ++j) {
        sum_g += g[j];
        sum_gx += static_cast<double>(g[j]) * h[j];
      }
    }
    gamma_.grad[ch] += static_cast<float>(sum_gx);
    beta_.grad[ch] += static_cast<float>(sum_g);

    const double gm = gamma_.value[ch];
    const double is = istd[ch];
    for (int64_t i = 0; i < b; ++i) {
      const float* g = grad_out.data() + (i * c + ch) * hw;
      const float* h = xhat.data() + (i * c + ch) * hw;
      float* o = gx.data() + (i * c + ch) * hw;
      for (int64_t j = 0; j < hw; ++j) {
        if (eval_mode) {
          o[j] = static_cast<float>(g[j] * gm * is);
        } else {
          o[j] = static_cast<float>(
              gm * is *
              (static_cast<double>(g[j]) - sum_g / static_cast<double>(n) -
               static_cast<double>(h[j]) * sum_gx / static_cast<double>(n)));
        }
      }
    }
  }
  return gx;
}

void BatchNorm::collect(const std::string& prefix, std::vector<NamedParam>& params,
                        std::vector<NamedBuffer>& buffers) {
  params.push_back({prefix + ".gamma", &gamma_});
  params.push_back({prefix + ".beta", &beta_});
  buffers.push_back({prefix + ".running_mean", &running_mean_});
  buffers.push_back({prefix + ".running_var", &running_var_});
}

std::unique_ptr<Module> BatchNorm::clone() const {
  auto copy = std::make_unique<BatchNorm>(channels_, eps_, momentum_);
  copy->gamma_.value = gamma_.value;
  copy->beta_.value = beta_.value;
  copy->running_mean_ = running_mean_;
  copy->running_var_ = running_var_;
  return copy;
}

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(int in_channels, int out_channels, int kernel, int stride, int pad, bool bias)
    : in_ch_(in_channels),
      out_ch_(out_channels),
      kernel_(kernel),
      stride_(stride),
      pad_(pad),
      has_bias_(bias) {
  weight_.value = Tensor({out_ch_, in_ch_ * kernel_ * kernel_});
  weight_.ensure_grad();
  bias_.value = Tensor({out_ch_});
  bias_.no_decay = true;
  bias_.ensure_grad();
}

void Conv2d::init(RngStream& rng) { init_conv(*this, rng); }

namespace {

// Reusable scratch for the column/output staging buffers. The trainer is
// single-writer; buffers are fully overwritten before use.
std::vector<float>& scratch(int slot, size_t size) {
  static thread_local std::vector<float> bufs[4];
  if (bufs[slot].size() < size) bufs[slot].resize(size);
  return bufs[slot];
}

// Column layout: row (c*k + ky)*k + kx, column (b*OH + oy)*OW + ox.
void im2col(const Tensor& x, int kernel, int stride, int pad, float* colp, int oh, int ow) {
  const int64_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t cols = b * oh * ow;
  for (int64_t ch = 0; ch < c; ++ch)
    for (int ky = 0; ky < kernel; ++ky)
      for (int kx = 0; kx < kernel; ++kx) {
        float* row = colp + ((ch * kernel + ky) * kernel + kx) * cols;
        for (int64_t img = 0; img < b; ++img) {
          const float* plane = x.data() + (img * c + ch) * h * w;
          for (int oy = 0; oy < oh; ++oy) {
            const int64_t iy = static_cast<int64_t>(oy) * stride - pad + ky;
            float* dst = row + (img * oh + oy) * ow;
            if (iy < 0 || iy >= h) {
              std::memset(dst, 0, sizeof(float) * static_cast<size_t>(ow));
              continue;
            }
            for (int ox = 0; ox < ow; ++ox) {
              const int64_t ix = static_cast<int64_t>(ox) * stride - pad + kx;
              dst[ox] = (ix < 0 || ix >= w) ? 0.0f : plane[iy * w + ix];
            }
          }
        }
      }
}

void col2im_acc(const float* colp, int kernel, int stride, int pad, Tensor& gx, int oh, int ow) {
  const int64_t b = gx.dim(0), c = gx.dim(1), h = gx.dim(2), w = gx.dim(3);
  const int64_t cols = b * oh * ow;
  for (int64_t ch = 0; ch < c; ++ch)
    for (int ky = 0; ky < kernel; ++ky)
      for (int kx = 0; kx < kernel; ++kx) {
        const float* row = colp + ((ch * kernel + ky) * kernel + kx) * cols;
        for (int64_t img = 0; img < b; ++img) {
          float* plane = gx.data() + (img * c + ch) * h * w;
          for (int oy = 0; oy < oh; ++oy) {
            const int64_t iy = static_cast<int64_t>(oy) * stride - pad + ky;
            if (iy < 0 || iy >= h) continue;
            const float* src = row + (img * oh + oy) * ow;
            for (int ox = 0; ox < ow; ++ox) {
              const int64_t ix = static_cast<int64_t>(ox) * stride - pad + kx;
              if (ix >= 0 && ix < w) plane[iy * w + ix] += src[ox];
            }
          }
        }
      }
}

}  // namespace

Tensor Conv2d::forward(const Tensor& x, Tape* tape, Mode) {
  if (x.rank() != 4 || x.dim(1) != in_ch_)
    throw std::invalid_argument("Conv2d: bad input shape " + x.shape_str());
  const int64_t b = x.dim(0), h = x.dim(2), w = x.dim(3);
  const int oh = out_spatial(static_cast<int>(h));
  const int ow = out_spatial(static_cast<int>(w));
  if (oh < 1 || ow < 1) throw std::invalid_argument("Conv2d: input too small");

  const int64_t ckk = static_cast<int64_t>(in_ch_) * kernel_ * kernel_;
  const int64_t cols = b * oh * ow;
  std::vector<float>& col = scratch(0, static_cast<size_t>(ckk * cols));
  im2col(x, kernel_, stride_, pad_, col.data(), oh, ow);

  std::vector<float>& out_mat = scratch(1, static_cast<size_t>(out_ch_) * cols);
  matmul(weight_.value.data(), col.data(), out_mat.data(), out_ch_, static_cast<int>(ckk),
         static_cast<int>(cols));

  Tensor y({b, out_ch_, oh, ow});
  for (int64_t img = 0; img < b; ++img)
    for (int o = 0; o < out_ch_; ++o) {
      const float* src = out_mat.data() + o * cols + img * oh * ow;
      float* dst = y.data() + (img * out_ch_ + o) * oh * ow;
      const float bv = has_bias_ ? bias_.value[o] : 0.0f;
      for (int64_t j = 0; j < static_cast<int64_t>(oh) * ow; ++j) dst[j] = src[j] + bv;
    }

  if (tape) tape->push(x);
  return y;
}

Tensor Conv2d::backward(const Tensor& grad_out, Tape& tape) {
  Tensor x = tape.pop();
  const int64_t b = x.dim(0), h = x.dim(2), w = x.dim(3);
  const int oh = static_cast<int>(grad_out.dim(2)), ow = static_cast<int>(grad_out.dim(3));
  const int64_t ckk = static_cast<int64_t>(in_ch_) * kernel_ * kernel_;
  const int64_t cols = b * oh * ow;

  // Rebuild the column matrix rather than saving it: the input is an order
  // of magnitude smaller.
  std::vector<float>& col = scratch(0, static_cast<size_t>(ckk * cols));
  im2col(x, kernel_, stride_, pad_, col.data(), oh, ow);

  std::vector<float>& gout_mat = scratch(1, static_cast<size_t>(out_ch_) * cols);
  for (int64_t img = 0; img < b; ++img)
    for (int o = 0; o < out_ch_; ++o) {
      const float* src = grad_out.data() + (img * out_ch_ + o) * oh * ow;
      float* dst = gout_mat.data() + o * cols + img * oh * ow;
      std::memcpy(dst, src, sizeof(float) * static_cast<size_t>(oh) * ow);
    }

  std::vector<float>& gw = scratch(2, static_cast<size_t>(out_ch_) * ckk);
  matmul_a_bt(gout_mat.data(), col.data(), gw.data(), out_ch_, static_cast<int>(cols),
              static_cast<int>(ckk));
  for (int64_t i = 0; i < weight_.grad.numel(); ++i) weight_.grad[i] += gw[static_cast<size_t>(i)];
  if (has_bias_) {
    for (int o = 0; o < out_ch_; ++o) {
      double s = 0.0;
      const float* src = gout_mat.data() + o * cols;
      for (int64_t j = 0; j < cols; ++j) s += src[j];
      bias_.grad[o] += static_cast<float>(s);
    }
  }

  std::vector<float>& gcol = scratch(3, static_cast<size_t>(ckk * cols));
  matmul_at_b(weight_.value.data(), gout_mat.data(), gcol.data(), out_ch_, static_cast<int>(ckk),
              static_cast<int>(cols));
  Tensor gx({b, in_ch_, h, w});
  col2im_acc(gcol.data(), kernel_, stride_, pad_, gx, oh, ow);
  return gx;
}

void Conv2d::collect(const std::string& prefix, std::vector<NamedParam>& params,
                     std::vector<NamedBuffer>& buffers) {
  (void)buffers;
  params.push_back({prefix + ".weight", &weight_});
  if (has_bias_) params.push_back({prefix + ".bias", &bias_});
}

std::unique_ptr<Module> Conv2d::clone() const {
  auto copy = std::make_unique<Conv2d>(in_ch_, out_ch_, kernel_, stride_, pad_, has_bias_);
  copy->weight_.value = weight_.value;
  copy->bias_.value = bias_.value;
  return copy;
}

// ---------------------------------------------------------------------------
// GlobalAvgPool

Tensor GlobalAvgPool::forward(const Tensor& x, Tape* tape, Mode) {
  if (x.rank() != 4) throw std::invalid_argument("GlobalAvgPool: rank-4 input required");
  const int64_t b = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor y({b, c});
  for (int64_t i = 0; i < b; ++i)
    for (int64_t ch = 0; ch < c; ++ch) {
      const float* p = x.data() + (i * c + ch) * hw;
      double s = 0.0;
      for (int64_t j = 0; j < hw; ++j) s += p[j];
      y[i * c + ch] = static_cast<float>(s / static_cast<double>(hw));
    }
  if (tape) {
    Tensor dims({2});
    dims[0] = static_cast<float>(x.dim(2));
    dims[1] = static_cast<float>(x.dim(3));
    tape->push(std::move(dims));
  }
  return y;
}

Tensor GlobalAvgPool::backward(const Tensor& grad_out, Tape& tape) {
  const Tensor dims = tape.pop();
  const int64_t h = static_cast<int64_t>(dims[0]), w = static_cast<int64_t>(dims[1]);
  const int64_t b = grad_out.dim(0), c = grad_out.dim(1);
  Tensor gx({b, c, h, w});
  const float inv = 1.0f / static_cast<float>(h * w);
  for (int64_t i = 0; i < b; ++i)
    for (int64_t ch = 0; ch < c; ++ch) {
      const float g = grad_out[i * c + ch] * inv;
      float* p = gx.data() + (i * c + ch) * h * w;
      for (int64_t j = 0; j < h * w; ++j) p[j] = g;
    }
  return gx;
}

// ---------------------------------------------------------------------------
// Sequential

Sequential& Sequential::add(const std::string& name, std::unique_ptr<Module> m) {
  children_.emplace_back(name, std::move(m));
  return *this;
}

Tensor Sequential::forward(const Tensor& x, Tape* tape, Mode mode) {
  Tensor h = x;
  for (auto& [name, child] : children_) h = child->forward(h, tape, mode);
  return h;
}

Tensor Sequential::backward(const Tensor& grad_out, Tape& tape) {
  Tensor g = grad_out;
  for (auto it = children_.rbegin(); it != children_.rend(); ++it) g = it->second->backward(g, tape);
  return g;
}

void Sequential::collect(const std::string& prefix, std::vector<NamedParam>& params,
                         std::vector<NamedBuffer>& buffers) {
  for (auto& [name, child] : children_)
    child->collect(prefix.empty() ? name : prefix + "." + name, params, buffers);
}

std::unique_ptr<Module> Sequential::clone() const {
  auto copy = std::make_unique<Sequential>();
  for (const auto& [name, child] : children_) copy->add(name, child->clone());
  return copy;
}

// ---------------------------------------------------------------------------
// ResidualBlock

ResidualBlock::ResidualBlock(int in_channels, int out_channels, int stride) {
  conv1_ = std::make_unique<Conv2d>(in_channels, out_channels, 3, stride, 1, false);
  bn1_ = std::make_unique<BatchNorm>(out_channels);
  conv2_ = std::make_unique<Conv2d>(out_channels, out_channels, 3, 1, 1, false);
  bn2_ = std::make_unique<BatchNorm>(out_channels);
  if (stride != 1 || in_channels != out_channels) {
    skip_conv_ = std::make_unique<Conv2d>(in_channels, out_channels, 1, stride, 0, false);
    skip_bn_ = std::make_unique<BatchNorm>(out_channels);
  }
}

void ResidualBlock::init(RngStream& rng) {
  conv1_->init(rng);
  conv2_->init(rng);
  if (skip_conv_) skip_conv_->init(rng);
}

Tensor ResidualBlock::forward(const Tensor& x, Tape* tape, Mode mode) {
  Tensor h = conv1_->forward(x, tape, mode);
  h = bn1_->forward(h, tape, mode);
  h = relu_mid_.forward(h, tape, mode);
  h = conv2_->forward(h, tape, mode);
  h = bn2_->forward(h, tape, mode);

  Tensor sk;
  if (skip_conv_) {
    sk = skip_conv_->forward(x, tape, mode);
    sk = skip_bn_->forward(sk, tape, mode);
  } else {
    sk = x;
  }
  h.add_(sk);
  return relu_out_.forward(h, tape, mode);
}

Tensor ResidualBlock::backward(const Tensor& grad_out, Tape& tape) {
  Tensor g = relu_out_.backward(grad_out, tape);

  Tensor g_skip;
  if (skip_conv_) {
    Tensor gs = skip_bn_->backward(g, tape);
    g_skip = skip_conv_->backward(gs, tape);
  } else {
    g_skip = g;
  }

  Tensor gm = bn2_->backward(g, tape);
  gm = conv2_->backward(gm, tape);
  gm = relu_mid_.backward(gm, tape);
  gm = bn1_->backward(gm, tape);
  gm = conv1_->backward(gm, tape);

  gm.add_(g_skip);
  return gm;
}

void ResidualBlock::collect(const std::string& prefix, std::vector<NamedParam>& params,
                            std::vector<NamedBuffer>& buffers) {
  conv1_->collect(prefix + ".conv1", params, buffers);
  bn1_->collect(prefix + ".bn1", params, buffers);
  conv2_->collect(prefix + ".conv2", params, buffers);
  bn2_->collect(prefix + ".bn2", params, buffers);
  if (skip_conv_) {
    skip_conv_->collect(prefix + ".skip_conv", params, buffers);
    skip_bn_->collect(prefix + ".skip_bn", params, buffers);
  }
}

std::unique_ptr<Module> ResidualBlock::clone() const {
  auto copy = std::make_unique<ResidualBlock>(1, 1, 1);
  copy->conv1_.reset(static_cast<Conv2d*>(conv1_->clone().release()));
  copy->bn1_.reset(static_cast<BatchNorm*>(bn1_->clone().release()));
  copy->conv2_.reset(static_cast<Conv2d*>(conv2_->clone().release()));
  copy->bn2_.reset(static_cast<BatchNorm*>(bn2_->clone().release()));
  if (skip_conv_) {
    copy->skip_conv_.reset(static_cast<Conv2d*>(skip_conv_->clone().release()));
    copy->skip_bn_.reset(static_cast<BatchNorm*>(skip_bn_->clone().release()));
  } else {
    copy->skip_conv_.reset();
    copy->skip_bn_.reset();
  }
  return copy;
}

// ---------------------------------------------------------------------------
// Builders

std::unique_ptr<Sequential> make_mlp(int in, int hidden, int out, bool bn_hidden, RngStream& rng) {
  auto mlp = std::make_unique<Sequential>();
  auto fc1 = std::make_unique<Linear>(in, hidden);
  fc1->init(rng);
  mlp->add("fc1", std::move(fc1));
  if (bn_hidden) mlp->add("bn", std::make_unique<BatchNorm>(hidden));
  mlp->add("relu", std::make_unique<ReLU>());
  auto fc2 = std::make_unique<Linear>(hidden, out);
  fc2->init(rng);
  mlp->add("fc2", std::move(fc2));
  return mlp;
}

void init_linear(Linear& layer, RngStream& rng) {
  const auto& shape = layer.weight().value.shape();
  const double limit = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
  Tensor& w = layer.weight().value;
  for (int64_t i = 0; i < w.numel(); ++i)
    w[i] = static_cast<float>(rng.uniform(-limit, limit));
  layer.bias().value.fill(0.0f);
}

void init_conv(Conv2d& layer, RngStream& rng) {
  Tensor& w = layer.weight().value;
  const double fan_in = static_cast<double>(w.shape()[1]);
  const double std = std::sqrt(2.0 / fan_in);
  for (int64_t i = 0; i < w.numel(); ++i)
    w[i] = static_cast<float>(rng.normal(0.0, std));
}

}  // namespace effssl::nets
