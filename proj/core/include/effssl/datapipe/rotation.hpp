#pragma once

#include <vector>

#include "effssl/datapipe/image_batch.hpp"
#include "effssl/rng.hpp"

namespace effssl::data {

/// The discrete transformation set used by the rotation task. Angles are in
/// degrees; the default set is {0, 90, 180, 270}, which rotates losslessly by
/// pixel remap. Other multiples of 45/30 degrees are allowed and go through
/// the interpolated rotate-crop-resize path.
struct RotationSet {
  std::vector<int> angles_deg;

  RotationSet() : angles_deg{0, 90, 180, 270} {}
  explicit RotationSet(std::vector<int> angles);

  int size() const { return static_cast<int>(angles_deg.size()); }
  bool exact() const;  // true iff every angle is a multiple of 90
};

/// Rotate each image by its angle index into `rotset`. 90-degree multiples
/// use the exact counter-clockwise index remap y[i][j] = x[j][W-1-i] (applied
/// k times); other angles rotate around the center with bilinear sampling,
/// center-crop to the largest inscribed axis-aligned square and resize back.
ImageBatch rotate(const ImageBatch& batch, const std::vector<int>& angle_index,
                  const RotationSet& rotset = RotationSet());

/// Convenience: one angle index for the whole batch.
ImageBatch rotate(const ImageBatch& batch, int angle_index,
                  const RotationSet& rotset = RotationSet());

/// n i.i.d. uniform draws over the rotation set.
std::vector<int> sample_rotation(RngStream& rng, const RotationSet& rotset, int64_t n);

}  // namespace effssl::data
