#pragma once

#include <cstdint>
#include <vector>

#include "effssl/tensor.hpp"

namespace effssl::data {

constexpr int kUnlabeled = -1;

/// A batch of square images in NCHW float32 layout plus per-image source ids
/// and optional class labels (kUnlabeled marks missing labels).
struct ImageBatch {
  Tensor pixels;                 // B x C x H x W
  std::vector<int64_t> ids;      // unique within the batch
  std::vector<int> labels;       // empty or size B

  int64_t size() const { return pixels.rank() == 4 ? pixels.dim(0) : 0; }
  int64_t channels() const { return pixels.dim(1); }
  int64_t height() const { return pixels.dim(2); }
  int64_t width() const { return pixels.dim(3); }

  /// Throws std::invalid_argument on violated invariants (empty batch,
  /// non-square images, duplicate ids, non-finite pixels).
  void validate() const;
};

/// Two augmented views of one source batch, aligned by position. Rotation
/// labels are filled in by the trainer when the auxiliary task is active.
struct ViewPair {
  ImageBatch view_a;
  ImageBatch view_b;
  std::vector<int> rot_labels_a;  // empty or size B, values in [0, |T|)
  std::vector<int> rot_labels_b;
};

}  // namespace effssl::data
