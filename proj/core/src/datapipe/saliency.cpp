#include "effssl/datapipe/saliency.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace effssl::data {

void SaliencyMap::validate() const {
  if (values.rank() != 2 || values.dim(0) < 1 || values.dim(1) < 1)
    throw std::invalid_argument("SaliencyMap: must be a non-empty H x W map");
  for (int64_t i = 0; i < values.numel(); ++i) {
    const float v = values[i];
    if (!(v >= 0.0f) || !(v <= 1.0f))
      throw std::invalid_argument("SaliencyMap: values must be finite in [0,1]");
  }
}

double mean_saliency(const SaliencyMap& map) {
  double sum = 0.0;
  for (int64_t i = 0; i < map.values.numel(); ++i) sum += map.values[i];
  return sum / static_cast<double>(map.values.numel());
}

double mean_saliency(const SaliencyMap& map, const CropRect& rect) {
  const int64_t h = map.height(), w = map.width();
  if (rect.left < 0 || rect.top < 0 || rect.width < 1 || rect.height < 1 ||
      rect.left + rect.width > w || rect.top + rect.height > h)
    throw std::invalid_argument("mean_saliency: crop outside image bounds");
  double sum = 0.0;
  for (int64_t y = rect.top; y < rect.top + rect.height; ++y)
    for (int64_t x = rect.left; x < rect.left + rect.width; ++x)
      sum += map.values[y * w + x];
  return sum / static_cast<double>(rect.width * rect.height);
}

SaliencyCropResult saliency_crop(int64_t image_h, int64_t image_w, const SaliencyMap& map,
                                 RngStream& rng, int max_tries, double scale_min,
                                 double min_ratio) {
  if (map.height() != image_h || map.width() != image_w)
    throw std::invalid_argument("saliency_crop: map/image dimension mismatch");

  const auto sample = [&](void) -> CropRect {
    CropRect r;
    const int64_t min_w = std::max<int64_t>(1, static_cast<int64_t>(scale_min * static_cast<double>(image_w)));
    const int64_t min_h = std::max<int64_t>(1, static_cast<int64_t>(scale_min * static_cast<double>(image_h)));
    r.width = min_w + rng.uniform_int(image_w - min_w + 1);
    r.height = min_h + rng.uniform_int(image_h - min_h + 1);
    r.left = rng.uniform_int(image_w - r.width + 1);
    r.top = rng.uniform_int(image_h - r.height + 1);
    return r;
  };

  const double full = mean_saliency(map);
  SaliencyCropResult result;
  for (int attempt = 1; attempt <= max_tries; ++attempt) {
    const CropRect r = sample();
    result.tries = attempt;
    if (mean_saliency(map, r) > min_ratio * full) {
      result.rect = r;
      result.accepted = true;
      return result;
    }
  }
  result.rect = sample();  // unconstrained fallback
  result.accepted = false;
  return result;
}

SaliencyMap load_salm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open saliency map " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "SALM", 4) != 0)
    throw std::runtime_error("bad SALM magic in " + path);
  unsigned char dims[8];
  in.read(reinterpret_cast<char*>(dims), 8);
  if (!in) throw std::runtime_error("truncated SALM header in " + path);
  const uint32_t w = static_cast<uint32_t>(dims[0] | (dims[1] << 8) | (dims[2] << 16) | (dims[3] << 24));
  const uint32_t h = static_cast<uint32_t>(dims[4] | (dims[5] << 8) | (dims[6] << 16) | (dims[7] << 24));
  if (w == 0 || h == 0) throw std::runtime_error("empty SALM map in " + path);
  SaliencyMap map;
  map.values = Tensor({static_cast<int64_t>(h), static_cast<int64_t>(w)});
  in.read(reinterpret_cast<char*>(map.values.data()),
          static_cast<std::streamsize>(sizeof(float) * h * w));
  if (!in) throw std::runtime_error("truncated SALM payload in " + path);
  map.validate();
  return map;
}

void save_salm(const std::string& path, const SaliencyMap& map) {
  map.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write saliency map " + path);
  out.write("SALM", 4);
  const uint32_t w = static_cast<uint32_t>(map.width());
  const uint32_t h = static_cast<uint32_t>(map.height());
  unsigned char dims[8] = {
      static_cast<unsigned char>(w & 0xff),         static_cast<unsigned char>((w >> 8) & 0xff),
      static_cast<unsigned char>((w >> 16) & 0xff), static_cast<unsigned char>((w >> 24) & 0xff),
      static_cast<unsigned char>(h & 0xff),         static_cast<unsigned char>((h >> 8) & 0xff),
      static_cast<unsigned char>((h >> 16) & 0xff), static_cast<unsigned char>((h >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(dims), 8);
  out.write(reinterpret_cast<const char*>(map.values.data()),
            static_cast<std::streamsize>(sizeof(float) * h * w));
  if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace effssl::data
