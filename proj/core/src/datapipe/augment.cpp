#include "effssl/datapipe/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace effssl::data {

void AugConfig::validate() const {
  auto prob_ok = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob_ok(flip_prob) || !prob_ok(jitter_prob) || !prob_ok(grayscale_prob) ||
      !prob_ok(blur_prob))
    throw std::invalid_argument("AugConfig: probabilities must be in [0,1]");
  if (crop_scale_min <= 0.0 || crop_scale_max > 1.0 || crop_scale_min > crop_scale_max)
    throw std::invalid_argument("AugConfig: crop scale range must be within (0,1]");
  if (blur_sigma_min <= 0.0 || blur_sigma_max < blur_sigma_min)
    throw std::invalid_argument("AugConfig: bad blur sigma range");
}

Tensor resize_bilinear(const Tensor& chw, int64_t out_h, int64_t out_w) {
  const int64_t c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
  if (out_h == h && out_w == w) return chw;
  Tensor out({c, out_h, out_w});
  const double sy = static_cast<double>(h) / static_cast<double>(out_h);
  const double sx = static_cast<double>(w) / static_cast<double>(out_w);
  for (int64_t ch = 0; ch < c; ++ch) {
    const float* src = chw.data() + ch * h * w;
    float* dst = out.data() + ch * out_h * out_w;
    for (int64_t y = 0; y < out_h; ++y) {
      const double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
      const int64_t y0 = std::clamp<int64_t>(static_cast<int64_t>(std::floor(fy)), 0, h - 1);
      const int64_t y1 = std::min<int64_t>(y0 + 1, h - 1);
      const double wy = std::clamp(fy - static_cast<double>(y0), 0.0, 1.0);
      for (int64_t x = 0; x < out_w; ++x) {
        const double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
        const int64_t x0 = std::clamp<int64_t>(static_cast<int64_t>(std::floor(fx)), 0, w - 1);
        const int64_t x1 = std::min<int64_t>(x0 + 1, w - 1);
        const double wx = std::clamp(fx - static_cast<double>(x0), 0.0, 1.0);
        const double v = src[y0 * w + x0] * (1 - wx) * (1 - wy) + src[y0 * w + x1] * wx * (1 - wy) +
                         src[y1 * w + x0] * (1 - wx) * wy + src[y1 * w + x1] * wx * wy;
        dst[y * out_w + x] = static_cast<float>(v);
      }
    }
  }
  return out;
}

namespace {

Tensor crop_and_resize(const Tensor& chw, const CropRect& r, int64_t out) {
  const int64_t c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
  Tensor cropped({c, r.height, r.width});
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t y = 0; y < r.height; ++y)
      for (int64_t x = 0; x < r.width; ++x)
        cropped[(ch * r.height + y) * r.width + x] =
            chw[(ch * h + (r.top + y)) * w + (r.left + x)];
  return resize_bilinear(cropped, out, out);
}

CropRect sample_crop(int64_t h, int64_t w, const AugConfig& cfg, RngStream& rng) {
  // Area-scale / log-aspect sampling, clamped into bounds so one draw always
  // yields a valid rectangle.
  const double area = static_cast<double>(h * w);
  const double scale = rng.uniform(cfg.crop_scale_min, cfg.crop_scale_max);
  const double log_ratio = rng.uniform(std::log(3.0 / 4.0), std::log(4.0 / 3.0));
  const double aspect = std::exp(log_ratio);
  int64_t cw = std::clamp<int64_t>(
      static_cast<int64_t>(std::lround(std::sqrt(area * scale * aspect))), 1, w);
  int64_t chh = std::clamp<int64_t>(
      static_cast<int64_t>(std::lround(std::sqrt(area * scale / aspect))), 1, h);
  CropRect r;
  r.width = cw;
  r.height = chh;
  r.left = rng.uniform_int(w - cw + 1);
  r.top = rng.uniform_int(h - chh + 1);
  return r;
}

void rgb_to_hsv(float r, float g, float b, float& hh, float& ss, float& vv) {
  const float mx = std::max({r, g, b}), mn = std::min({r, g, b});
  vv = mx;
  const float d = mx - mn;
  ss = (mx <= 0.0f) ? 0.0f : d / mx;
  if (d <= 0.0f) {
    hh = 0.0f;
  } else if (mx == r) {
    hh = (g - b) / d / 6.0f;
  } else if (mx == g) {
    hh = (2.0f + (b - r) / d) / 6.0f;
  } else {
    hh = (4.0f + (r - g) / d) / 6.0f;
  }
  if (hh < 0.0f) hh += 1.0f;
}

void hsv_to_rgb(float hh, float ss, float vv, float& r, float& g, float& b) {
  const float h6 = hh * 6.0f;
  const int i = static_cast<int>(std::floor(h6)) % 6;
  const float f = h6 - std::floor(h6);
  const float p = vv * (1.0f - ss);
  const float q = vv * (1.0f - ss * f);
  const float t = vv * (1.0f - ss * (1.0f - f));
  switch (i) {
    case 0: r = vv; g = t; b = p; break;
    case 1: r = q; g = vv; b = p; break;
    case 2: r = p; g = vv; b = t; break;
    case 3: r = p; g = q; b = vv; break;
    case 4: r = t; g = p; b = vv; break;
    default: r = vv; g = p; b = q; break;
  }
}

void apply_jitter(float* img, int64_t c, int64_t n, const AugConfig& cfg, RngStream& rng) {
  const double bf = rng.uniform(std::max(0.0, 1.0 - cfg.brightness), 1.0 + cfg.brightness);
  const double cf = rng.uniform(std::max(0.0, 1.0 - cfg.contrast), 1.0 + cfg.contrast);
  const double sf = rng.uniform(std::max(0.0, 1.0 - cfg.saturation), 1.0 + cfg.saturation);
  const double hshift = rng.uniform(-cfg.hue, cfg.hue);

  const int64_t hw = n * n;
  // Brightness.
  for (int64_t i = 0; i < c * hw; ++i)
    img[i] = std::clamp(static_cast<float>(img[i] * bf), 0.0f, 1.0f);
  // Contrast around the mean gray level.
  double mean = 0.0;
  for (int64_t p = 0; p < hw; ++p) {
    double gray = 0.0;
    for (int64_t ch = 0; ch < c; ++ch) gray += img[ch * hw + p];
    mean += gray / static_cast<double>(c);
  }
  mean /= static_cast<double>(hw);
  for (int64_t i = 0; i < c * hw; ++i)
    img[i] = std::clamp(static_cast<float>(mean + cf * (img[i] - mean)), 0.0f, 1.0f);
  if (c != 3) return;
  // Saturation toward per-pixel luminance.
  for (int64_t p = 0; p < hw; ++p) {
    const float lum =
        0.299f * img[p] + 0.587f * img[hw + p] + 0.114f * img[2 * hw + p];
    for (int64_t ch = 0; ch < 3; ++ch)
      img[ch * hw + p] =
          std::clamp(static_cast<float>(lum + sf * (img[ch * hw + p] - lum)), 0.0f, 1.0f);
  }
  // Hue rotation in HSV.
  if (hshift != 0.0) {
    for (int64_t p = 0; p < hw; ++p) {
      float hh, ss, vv;
      rgb_to_hsv(img[p], img[hw + p], img[2 * hw + p], hh, ss, vv);
      hh = hh + static_cast<float>(hshift);
      hh -= std::floor(hh);
      hsv_to_rgb(hh, ss, vv, img[p], img[hw + p], img[2 * hw + p]);
    }
  }
}

void apply_grayscale(float* img, int64_t c, int64_t n) {
  if (c != 3) return;
  const int64_t hw = n * n;
  for (int64_t p = 0; p < hw; ++p) {
    const float lum = 0.299f * img[p] + 0.587f * img[hw + p] + 0.114f * img[2 * hw + p];
    img[p] = img[hw + p] = img[2 * hw + p] = lum;
  }
}

void apply_blur(float* img, int64_t c, int64_t n, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(2.0 * sigma)));
  std::vector<float> kernel(static_cast<size_t>(2 * radius + 1));
  double ksum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    kernel[static_cast<size_t>(i + radius)] = static_cast<float>(v);
    ksum += v;
  }
  for (auto& k : kernel) k = static_cast<float>(k / ksum);

  std::vector<float> tmp(static_cast<size_t>(n * n));
  auto clampi = [&](int64_t v) { return std::clamp<int64_t>(v, 0, n - 1); };
  for (int64_t ch = 0; ch < c; ++ch) {
    float* plane = img + ch * n * n;
    for (int64_t y = 0; y < n; ++y)
      for (int64_t x = 0; x < n; ++x) {
        float acc = 0.0f;
        for (int i = -radius; i <= radius; ++i)
          acc += kernel[static_cast<size_t>(i + radius)] * plane[y * n + clampi(x + i)];
        tmp[static_cast<size_t>(y * n + x)] = acc;
      }
    for (int64_t y = 0; y < n; ++y)
      for (int64_t x = 0; x < n; ++x) {
        float acc = 0.0f;
        for (int i = -radius; i <= radius; ++i)
          acc += kernel[static_cast<size_t>(i + radius)] * tmp[static_cast<size_t>(clampi(y + i) * n + x)];
        plane[y * n + x] = acc;
      }
  }
}

}  // namespace

ImageBatch augment_batch(const ImageBatch& batch, const AugConfig& cfg, RngStream& rng,
                         const std::vector<const SaliencyMap*>& maps) {
  cfg.validate();
  batch.validate();
  if (cfg.use_saliency && !maps.empty() &&
      static_cast<int64_t>(maps.size()) != batch.size())
    throw std::invalid_argument("augment_batch: need one saliency map per image");

  const int64_t b = batch.size(), c = batch.channels(), n = batch.height();
  const int64_t out_n = (cfg.enable_crop && cfg.output_size > 0) ? cfg.output_size : n;

  ImageBatch out;
  out.pixels = Tensor({b, c, out_n, out_n});
  out.ids = batch.ids;
  out.labels = batch.labels;

  for (int64_t i = 0; i < b; ++i) {
    Tensor img({c, n, n});
    std::copy(batch.pixels.data() + i * c * n * n, batch.pixels.data() + (i + 1) * c * n * n,
              img.data());

    if (cfg.enable_crop) {
      CropRect r;
      if (cfg.use_saliency && !maps.empty() && maps[static_cast<size_t>(i)] != nullptr) {
        r = saliency_crop(n, n, *maps[static_cast<size_t>(i)], rng, cfg.saliency_max_tries,
                          cfg.crop_scale_min, cfg.saliency_min_ratio)
                .rect;
      } else {
        r = sample_crop(n, n, cfg, rng);
      }
      img = crop_and_resize(img, r, out_n);
    }
    if (cfg.enable_flip && rng.uniform() < cfg.flip_prob) {
      for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t y = 0; y < out_n; ++y)
          for (int64_t x = 0; x < out_n / 2; ++x)
            std::swap(img[(ch * out_n + y) * out_n + x],
                      img[(ch * out_n + y) * out_n + (out_n - 1 - x)]);
    }
    if (cfg.enable_jitter && rng.uniform() < cfg.jitter_prob)
      apply_jitter(img.data(), c, out_n, cfg, rng);
    if (cfg.enable_grayscale && rng.uniform() < cfg.grayscale_prob)
      apply_grayscale(img.data(), c, out_n);
    if (cfg.enable_blur && rng.uniform() < cfg.blur_prob)
      apply_blur(img.data(), c, out_n, rng.uniform(cfg.blur_sigma_min, cfg.blur_sigma_max));

    std::copy(img.data(), img.data() + c * out_n * out_n,
              out.pixels.data() + i * c * out_n * out_n);
  }
  return out;
}

ViewPair make_view_pair(const ImageBatch& batch, const AugConfig& cfg, RngStream& rng,
                        const std::vector<const SaliencyMap*>& maps) {
  ViewPair pair;
  pair.view_a = augment_batch(batch, cfg, rng, maps);
  pair.view_b = augment_batch(batch, cfg, rng, maps);
  return pair;
}

}  // namespace effssl::data
