#include "effssl/datapipe/rotation.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

namespace effssl::data {

RotationSet::RotationSet(std::vector<int> angles) : angles_deg(std::move(angles)) {
  if (angles_deg.empty()) throw std::invalid_argument("RotationSet: empty set");
  std::set<int> seen;
  for (int a : angles_deg) {
    if (a % 30 != 0 && a % 45 != 0)
      throw std::invalid_argument("RotationSet: angles must be multiples of 30 or 45 degrees");
    if (!seen.insert(((a % 360) + 360) % 360).second)
      throw std::invalid_argument("RotationSet: duplicate angle");
  }
}

bool RotationSet::exact() const {
  for (int a : angles_deg)
    if (a % 90 != 0) return false;
  return true;
}

namespace {

// One exact 90-degree CCW step: y[i][j] = x[j][W-1-i].
void rotate90_ccw(const float* src, float* dst, int64_t c, int64_t n) {
  for (int64_t ch = 0; ch < c; ++ch) {
    const float* s = src + ch * n * n;
    float* d = dst + ch * n * n;
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < n; ++j) d[i * n + j] = s[j * n + (n - 1 - i)];
  }
}

float bilinear(const float* plane, int64_t n, double y, double x) {
  const int64_t x0 = static_cast<int64_t>(std::floor(x));
  const int64_t y0 = static_cast<int64_t>(std::floor(y));
  const double fx = x - x0, fy = y - y0;
  auto px = [&](int64_t yy, int64_t xx) -> double {
    if (yy < 0 || yy >= n || xx < 0 || xx >= n) return 0.0;
    return plane[yy * n + xx];
  };
  return static_cast<float>(px(y0, x0) * (1 - fx) * (1 - fy) + px(y0, x0 + 1) * fx * (1 - fy) +
                            px(y0 + 1, x0) * (1 - fx) * fy + px(y0 + 1, x0 + 1) * fx * fy);
}

// Rotate by an arbitrary angle, crop to the inscribed axis-aligned square and
// resize back to n x n. A stated approximation, only used for non-90 sets.
void rotate_interp(const float* src, float* dst, int64_t c, int64_t n, double deg) {
  const double rad = deg * M_PI / 180.0;
  const double ca = std::cos(rad), sa = std::sin(rad);
  const double ctr = (static_cast<double>(n) - 1.0) / 2.0;
  // Largest axis-aligned square fully inside the rotated frame.
  const double inscribed = static_cast<double>(n) / (std::fabs(ca) + std::fabs(sa));
  const double scale = inscribed / static_cast<double>(n);
  for (int64_t ch = 0; ch < c; ++ch) {
    const float* plane = src + ch * n * n;
    float* out = dst + ch * n * n;
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t j = 0; j < n; ++j) {
        // Output pixel -> cropped frame -> inverse rotation (CCW by deg means
        // sampling source at CW rotation).
        const double yc = (static_cast<double>(i) - ctr) * scale;
        const double xc = (static_cast<double>(j) - ctr) * scale;
        const double xs = xc * ca + yc * sa + ctr;
        const double ys = -xc * sa + yc * ca + ctr;
        out[i * n + j] = bilinear(plane, n, ys, xs);
      }
    }
  }
}

}  // namespace

ImageBatch rotate(const ImageBatch& batch, const std::vector<int>& angle_index,
                  const RotationSet& rotset) {
  if (batch.height() != batch.width())
    throw std::invalid_argument("rotate: images must be square");
  if (static_cast<int64_t>(angle_index.size()) != batch.size())
    throw std::invalid_argument("rotate: one angle index per image required");

  const int64_t b = batch.size(), c = batch.channels(), n = batch.height();
  ImageBatch out;
  out.pixels = Tensor({b, c, n, n});
  out.ids = batch.ids;
  out.labels = batch.labels;

  std::vector<float> tmp(static_cast<size_t>(c * n * n));
  for (int64_t img = 0; img < b; ++img) {
    const int idx = angle_index[static_cast<size_t>(img)];
    if (idx < 0 || idx >= rotset.size())
      throw std::invalid_argument("rotate: angle index out of range");
    const int deg = ((rotset.angles_deg[static_cast<size_t>(idx)] % 360) + 360) % 360;
    const float* src = batch.pixels.data() + img * c * n * n;
    float* dst = out.pixels.data() + img * c * n * n;
    if (deg % 90 == 0) {
      const int quarter = deg / 90;
      std::copy(src, src + c * n * n, dst);
      for (int q = 0; q < quarter; ++q) {
        std::copy(dst, dst + c * n * n, tmp.data());
        rotate90_ccw(tmp.data(), dst, c, n);
      }
    } else {
      rotate_interp(src, dst, c, n, static_cast<double>(deg));
    }
  }
  return out;
}

ImageBatch rotate(const ImageBatch& batch, int angle_index, const RotationSet& rotset) {
  return rotate(batch, std::vector<int>(static_cast<size_t>(batch.size()), angle_index), rotset);
}

std::vector<int> sample_rotation(RngStream& rng, const RotationSet& rotset, int64_t n) {
  if (rotset.size() == 0) throw std::invalid_argument("sample_rotation: empty rotation set");
  std::vector<int> out(static_cast<size_t>(n));
  for (auto& v : out) v = static_cast<int>(rng.uniform_int(rotset.size()));
  return out;
}

}  // namespace effssl::data
