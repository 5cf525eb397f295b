#include "effssl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace effssl {

namespace {
int64_t shape_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw std::invalid_argument("tensor dimension must be non-negative");
    n *= d;
  }
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
  data_.assign(static_cast<size_t>(shape_numel(shape_)), 0.0f);
}

Tensor::Tensor(std::initializer_list<int64_t> shape) : Tensor(std::vector<int64_t>(shape)) {}

Tensor Tensor::zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<int64_t> shape, float value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

void Tensor::fill(float value) {
  for (auto& x : data_) x = value;
}

bool Tensor::all_finite() const {
  for (float x : data_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void Tensor::add_(const Tensor& other) {
  if (!same_shape(other)) {
    throw std::invalid_argument("tensor add: shape mismatch " + shape_str() + " vs " +
                                other.shape_str());
  }
  const float* src = other.data();
  for (size_t i = 0; i < data_.size(); ++i) data_[i] += src[i];
}

void Tensor::scale_(float s) {
  for (auto& x : data_) x *= s;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
  os << "]";
  return os.str();
}

// Blocked GEMM. Rows of C are written by exactly one thread, so the result is
// independent of the thread count. Four-row register blocking keeps each B
// row in flight across four accumulation streams.
void matmul(const float* a, const float* b, float* c, int m, int k, int n) {
  std::memset(c, 0, sizeof(float) * static_cast<size_t>(m) * n);
  matmul_acc(a, b, c, m, k, n);
}

namespace {

void gemm_rows4(const float* a, const float* b, float* c, int i0, int i1, int k, int n) {
  int i = i0;
  for (; i + 4 <= i1; i += 4) {
    float* c0 = c + static_cast<size_t>(i) * n;
    float* c1 = c0 + n;
    float* c2 = c1 + n;
    float* c3 = c2 + n;
    const float* a0 = a + static_cast<size_t>(i) * k;
    const float* a1 = a0 + k;
    const float* a2 = a1 + k;
    const float* a3 = a2 + k;
    for (int p = 0; p < k; ++p) {
      const float v0 = a0[p], v1 = a1[p], v2 = a2[p], v3 = a3[p];
      const float* bp = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) {
        const float bj = bp[j];
        c0[j] += v0 * bj;
        c1[j] += v1 * bj;
        c2[j] += v2 * bj;
        c3[j] += v3 * bj;
      }
    }
  }
  for (; i < i1; ++i) {
    float* ci = c + static_cast<size_t>(i) * n;
    const float* ai = a + static_cast<size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const float av = ai[p];
      const float* bp = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

}  // namespace

void matmul_acc(const float* a, const float* b, float* c, int m, int k, int n) {
  if (static_cast<int64_t>(m) * k * n > 1 << 16) {
#pragma omp parallel
    {
#ifdef _OPENMP
      const int threads = omp_get_num_threads();
      const int tid = omp_get_thread_num();
#else
      const int threads = 1;
      const int tid = 0;
#endif
      // Split rows into 4-aligned spans so each thread owns whole blocks.
      const int blocks = (m + 3) / 4;
      const int per = (blocks + threads - 1) / threads;
      const int i0 = std::min(m, tid * per * 4);
      const int i1 = std::min(m, (tid + 1) * per * 4);
      if (i0 < i1) gemm_rows4(a, b, c, i0, i1, k, n);
    }
  } else {
    gemm_rows4(a, b, c, 0, m, k, n);
  }
}

// C(k x n) = A(m x k)^T * B(m x n). n is typically huge (batch x spatial), so
// work is chunked along n: within a chunk every B row and C row stays cached
// while the i loop streams over them. Threads own disjoint j ranges.
void matmul_at_b(const float* a, const float* b, float* c, int m, int k, int n) {
  std::memset(c, 0, sizeof(float) * static_cast<size_t>(k) * n);
  constexpr int kChunk = 8192;
#pragma omp parallel if (static_cast<int64_t>(m) * k * n > 1 << 18)
  {
#ifdef _OPENMP
    const int threads = omp_get_num_threads();
    const int tid = omp_get_thread_num();
#else
    const int threads = 1;
    const int tid = 0;
#endif
    const int per = (n + threads - 1) / threads;
    const int j0 = std::min(n, tid * per);
    const int j1 = std::min(n, j0 + per);
    for (int jc = j0; jc < j1; jc += kChunk) {
      const int je = std::min(j1, jc + kChunk);
      const int len = je - jc;
      int i = 0;
      for (; i + 4 <= m; i += 4) {
        const float* b0 = b + static_cast<size_t>(i) * n + jc;
        const float* b1 = b0 + n;
        const float* b2 = b1 + n;
        const float* b3 = b2 + n;
        const float* a0 = a + static_cast<size_t>(i) * k;
        const float* a1 = a0 + k;
        const float* a2 = a1 + k;
        const float* a3 = a2 + k;
        for (int p = 0; p < k; ++p) {
          const float v0 = a0[p], v1 = a1[p], v2 = a2[p], v3 = a3[p];
          float* cp = c + static_cast<size_t>(p) * n + jc;
          for (int j = 0; j < len; ++j)
            cp[j] += v0 * b0[j] + v1 * b1[j] + v2 * b2[j] + v3 * b3[j];
        }
      }
      for (; i < m; ++i) {
        const float* bi = b + static_cast<size_t>(i) * n + jc;
        const float* ai = a + static_cast<size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
          const float av = ai[p];
          if (av == 0.0f) continue;
          float* cp = c + static_cast<size_t>(p) * n + jc;
          for (int j = 0; j < len; ++j) cp[j] += av * bi[j];
        }
      }
    }
  }
}

// C(m x n) = A(m x k) * B(n x k)^T. k is the huge reduction axis. Written as
// outer-product accumulation over packed B columns: the inner loops are
// independent element updates, which vectorize without reassociating any
// float sum (the accumulation order per element is fixed).
void matmul_a_bt(const float* a, const float* b, float* c, int m, int k, int n) {
  std::memset(c, 0, sizeof(float) * static_cast<size_t>(m) * n);
  constexpr int kChunk = 2048;
  static thread_local std::vector<float> pack;
  const bool parallel = static_cast<int64_t>(m) * k * n > 1 << 18;

  for (int pc = 0; pc < k; pc += kChunk) {
    const int pe = std::min(k, pc + kChunk);
    const int plen = pe - pc;
    // Pack the chunk of B^T: pack[p - pc][j] = b[j][p].
    pack.resize(static_cast<size_t>(plen) * n);
    constexpr int kTile = 64;  // blocked transpose keeps both sides cached
    for (int jt = 0; jt < n; jt += kTile) {
      const int jm = std::min(n, jt + kTile);
      for (int pt = 0; pt < plen; pt += kTile) {
        const int pm = std::min(plen, pt + kTile);
        for (int j = jt; j < jm; ++j) {
          const float* bj = b + static_cast<size_t>(j) * k + pc;
          for (int p = pt; p < pm; ++p) pack[static_cast<size_t>(p) * n + j] = bj[p];
        }
      }
    }
    const float* packp = pack.data();  // workers must not touch the TLS vector
#pragma omp parallel for schedule(static) if (parallel)
    for (int i = 0; i < m; ++i) {
      float* ci = c + static_cast<size_t>(i) * n;
      const float* ai = a + static_cast<size_t>(i) * k + pc;
      int p = 0;
      for (; p + 4 <= plen; p += 4) {
        const float v0 = ai[p], v1 = ai[p + 1], v2 = ai[p + 2], v3 = ai[p + 3];
        const float* b0 = packp + static_cast<size_t>(p) * n;
        const float* b1 = b0 + n;
        const float* b2 = b1 + n;
        const float* b3 = b2 + n;
        for (int j = 0; j < n; ++j)
          ci[j] += v0 * b0[j] + v1 * b1[j] + v2 * b2[j] + v3 * b3[j];
      }
      for (; p < plen; ++p) {
        const float av = ai[p];
        const float* bp = packp + static_cast<size_t>(p) * n;
        for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
      }
    }
  }
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("max_abs_diff: shape mismatch");
  float m = 0.0f;
  for (int64_t i = 0; i < a.numel(); ++i) {
    float d = std::fabs(a[i] - b[i]);
    if (d > m) m = d;
  }
  return m;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return false;
  return std::memcmp(a.data(), b.data(), sizeof(float) * static_cast<size_t>(a.numel())) == 0;
}

}  // namespace effssl
