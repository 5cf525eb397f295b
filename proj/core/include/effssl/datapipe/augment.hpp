#pragma once

#include <vector>

#include "effssl/datapipe/image_batch.hpp"
#include "effssl/datapipe/saliency.hpp"
#include "effssl/rng.hpp"

namespace effssl::data {

/// Augmentation pipeline settings. With every enable flag false the pipeline
/// is the identity. Probabilities must lie in [0,1], crop scales in (0,1].
struct AugConfig {
  bool enable_crop = false;
  double crop_scale_min = 0.2;
  double crop_scale_max = 1.0;
  int output_size = 0;        // 0 = keep input size

  bool enable_flip = false;
  double flip_prob = 0.5;

  bool enable_jitter = false;
  double jitter_prob = 0.8;
  double brightness = 0.4;    // factor range [1-b, 1+b]
  double contrast = 0.4;
  double saturation = 0.4;
  double hue = 0.1;           // shift range [-h, h] in hue turns

  bool enable_grayscale = false;
  double grayscale_prob = 0.2;

  bool enable_blur = false;
  double blur_prob = 0.5;
  double blur_sigma_min = 0.1;
  double blur_sigma_max = 2.0;

  bool use_saliency = false;  // saliency-guided crop selection
  int saliency_max_tries = 10;
  double saliency_min_ratio = 1.0;

  void validate() const;
};

/// Augment one batch once (each image gets independent draws from `rng`).
/// `maps` may be empty or hold one saliency map per image when
/// cfg.use_saliency is set.
ImageBatch augment_batch(const ImageBatch& batch, const AugConfig& cfg, RngStream& rng,
                         const std::vector<const SaliencyMap*>& maps = {});

/// Two independently augmented views with identical id ordering. No rotation
/// is applied here; the trainer rotates views when the auxiliary task runs.
ViewPair make_view_pair(const ImageBatch& batch, const AugConfig& cfg, RngStream& rng,
                        const std::vector<const SaliencyMap*>& maps = {});

/// Bilinear resize of a C x H x W image to C x out x out.
Tensor resize_bilinear(const Tensor& chw, int64_t out_h, int64_t out_w);

}  // namespace effssl::data
