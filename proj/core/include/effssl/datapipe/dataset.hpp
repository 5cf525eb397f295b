#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "effssl/datapipe/image_batch.hpp"
#include "effssl/tensor.hpp"

namespace effssl::data {

/// Immutable labeled image collection. Images are stored individually so
/// batches can be assembled in any seeded order.
struct Dataset {
  std::vector<Tensor> images;   // each C x H x W, float32 in [0,1]
  std::vector<int> labels;
  int num_classes = 0;

  int64_t size() const { return static_cast<int64_t>(images.size()); }

  /// Assemble a batch from dataset indices; ids are the dataset indices.
  ImageBatch gather(const std::vector<int64_t>& indices) const;
};

enum class SourceFormat { CifarBinary, ImageFolder, Synthetic };

SourceFormat parse_source_format(const std::string& tag);

/// CIFAR binary: 3073-byte records, 1 label byte + 3072 pixel bytes
/// (R, G, B planes, row-major). `path` may be a single .bin file or a
/// directory, in which case every data_batch*.bin / train.bin / test.bin
/// style file found is concatenated in lexicographic order.
Dataset load_cifar_binary(const std::string& path);

/// One subdirectory per class (class index = lexicographic rank); PPM (P6),
/// PGM (P5) and uncompressed 24-bit BMP rasters. Non-square images are
/// center-cropped to square on ingest.
Dataset load_image_folder(const std::string& path);

struct SyntheticSpec {
  uint64_t seed = 0;
  int64_t count = 16;
  int classes = 2;
  int size = 8;        // H = W
  int channels = 3;
};

/// Seeded procedural dataset. Each class has an orientation-bearing texture
/// (class-specific grating angle), a class color and a class blob position,
/// with per-sample jitter, so both instance discrimination and rotation
/// prediction are learnable. Deterministic for a given spec.
Dataset make_synthetic(const SyntheticSpec& spec);

/// Dispatch on format tag. For Synthetic, `path` encodes the spec as
/// "seed=0,n=16,classes=2,size=8".
Dataset load_dataset(const std::string& path, const std::string& format_tag);

}  // namespace effssl::data
