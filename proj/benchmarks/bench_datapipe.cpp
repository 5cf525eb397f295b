#include <benchmark/benchmark.h>

#include "effssl/datapipe/augment.hpp"
#include "effssl/datapipe/dataset.hpp"
#include "effssl/datapipe/rotation.hpp"

using namespace effssl;

namespace {

void BM_make_view_pair(benchmark::State& state) {
  const data::Dataset ds =
      data::make_synthetic({.seed = 1, .count = state.range(0), .classes = 10, .size = 32});
  std::vector<int64_t> idx(static_cast<size_t>(state.range(0)));
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int64_t>(i);
  const data::ImageBatch batch = ds.gather(idx);
  data::AugConfig cfg;
  cfg.enable_crop = true;
  cfg.output_size = 16;
  cfg.enable_flip = true;
  cfg.enable_jitter = true;
  cfg.enable_grayscale = true;
  RngStream rng(0);
  for (auto _ : state) {
    auto pair = data::make_view_pair(batch, cfg, rng);
    benchmark::DoNotOptimize(pair.view_a.pixels.data());
  }
}
BENCHMARK(BM_make_view_pair)->Arg(32)->Arg(128);

void BM_rotate_batch(benchmark::State& state) {
  const data::Dataset ds =
      data::make_synthetic({.seed = 2, .count = state.range(0), .classes = 10, .size = 32});
  std::vector<int64_t> idx(static_cast<size_t>(state.range(0)));
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int64_t>(i);
  const data::ImageBatch batch = ds.gather(idx);
  RngStream rng(0);
  const data::RotationSet rotset;
  for (auto _ : state) {
    const auto angles = data::sample_rotation(rng, rotset, batch.size());
    auto rotated = data::rotate(batch, angles, rotset);
    benchmark::DoNotOptimize(rotated.pixels.data());
  }
}
BENCHMARK(BM_rotate_batch)->Arg(128);

}  // namespace
