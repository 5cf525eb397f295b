#pragma once

#include <cstdint>
#include <string>

#include "effssl/rng.hpp"
#include "effssl/tensor.hpp"

namespace effssl::data {

/// Per-pixel importance scores in [0,1], same spatial size as the image it
/// annotates. Maps are external inputs read from the SALM file format.
struct SaliencyMap {
  Tensor values;  // H x W

  int64_t height() const { return values.dim(0); }
  int64_t width() const { return values.dim(1); }
  void validate() const;
};

/// Axis-aligned crop rectangle in pixel units.
struct CropRect {
  int64_t left = 0;
  int64_t top = 0;
  int64_t width = 1;
  int64_t height = 1;
};

struct SaliencyCropResult {
  CropRect rect;
  bool accepted = false;  // false = fell back to an unconstrained crop
  int tries = 0;
};

/// Mean saliency over the full map.
double mean_saliency(const SaliencyMap& map);
/// Mean saliency over a crop rectangle.
double mean_saliency(const SaliencyMap& map, const CropRect& rect);

/// Sample crops until the crop's mean saliency strictly exceeds the full
/// image's (scaled by min_ratio, default 1 = strict inequality), giving up
/// after max_tries and returning an unconstrained random crop. Width and
/// height are drawn uniformly from [scale_min * side, side], the top-left
/// corner uniformly from the remaining valid range.
SaliencyCropResult saliency_crop(int64_t image_h, int64_t image_w, const SaliencyMap& map,
                                 RngStream& rng, int max_tries = 10, double scale_min = 0.2,
                                 double min_ratio = 1.0);

/// SALM container: magic "SALM", u32le width, u32le height, then H*W float32
/// little-endian values row-major.
SaliencyMap load_salm(const std::string& path);
void save_salm(const std::string& path, const SaliencyMap& map);

}  // namespace effssl::data
