#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace effssl {

/// Dense row-major float32 tensor. All network state and image data live in
/// these; shape is dynamic, rank up to 4 in practice (B, C, H, W).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int64_t> shape);
  Tensor(std::initializer_list<int64_t> shape);

  static Tensor zeros(std::vector<int64_t> shape);
  static Tensor full(std::vector<int64_t> shape, float value);

  const std::vector<int64_t>& shape() const { return shape_; }
  int64_t dim(size_t i) const { return shape_[i]; }
  size_t rank() const { return shape_.size(); }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }

  float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // 4-D accessors for image/feature maps.
  float& at(int64_t b, int64_t c, int64_t h, int64_t w) {
    return data_[static_cast<size_t>(((b * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }
  float at(int64_t b, int64_t c, int64_t h, int64_t w) const {
    return data_[static_cast<size_t>(((b * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }
  // 2-D accessors for matrices.
  float& at(int64_t r, int64_t c) {
    return data_[static_cast<size_t>(r * shape_[1] + c)];
  }
  float at(int64_t r, int64_t c) const {
    return data_[static_cast<size_t>(r * shape_[1] + c)];
  }

  void fill(float value);
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

  /// Throws std::invalid_argument unless shapes match.
  void add_(const Tensor& other);
  void scale_(float s);

  std::string shape_str() const;

 private:
  std::vector<int64_t> shape_;
  std::vector<float> data_;
};

/// C = A(m×k) * B(k×n), row-major. Deterministic; parallelized over rows.
void matmul(const float* a, const float* b, float* c, int m, int k, int n);
/// C += A(m×k) * B(k×n).
void matmul_acc(const float* a, const float* b, float* c, int m, int k, int n);
/// C = A^T(k×m -> m×k view transposed) * B ... helpers for backward passes.
void matmul_at_b(const float* a, const float* b, float* c, int m, int k, int n);   // C(k×n) = A(m×k)^T * B(m×n)
void matmul_a_bt(const float* a, const float* b, float* c, int m, int k, int n);   // C(m×n) = A(m×k) * B(n×k)^T

float max_abs_diff(const Tensor& a, const Tensor& b);
bool bitwise_equal(const Tensor& a, const Tensor& b);

}  // namespace effssl
