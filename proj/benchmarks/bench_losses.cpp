#include <benchmark/benchmark.h>

#include "effssl/losses/losses.hpp"
#include "effssl/rng.hpp"

using namespace effssl;

namespace {

loss::Mat<float> random_mat(RngStream& rng, int rows, int cols) {
  loss::Mat<float> m(rows, cols);
  for (auto& v : m.v) v = static_cast<float>(rng.normal());
  return m;
}

void BM_ntxent(benchmark::State& state) {
  RngStream rng(1);
  const int b = static_cast<int>(state.range(0));
  const auto za = random_mat(rng, b, 128);
  const auto zb = random_mat(rng, b, 128);
  for (auto _ : state) {
    auto res = loss::ntxent<float>(za, zb, 0.2f);
    benchmark::DoNotOptimize(res.value);
  }
}
BENCHMARK(BM_ntxent)->Arg(64)->Arg(128)->Arg(256);

void BM_supcon(benchmark::State& state) {
  RngStream rng(2);
  const int b = static_cast<int>(state.range(0));
  const auto za = random_mat(rng, b, 128);
  const auto zb = random_mat(rng, b, 128);
  std::vector<int> labels(static_cast<size_t>(b));
  for (int i = 0; i < b; ++i) labels[static_cast<size_t>(i)] = i % 10;
  for (auto _ : state) {
    auto res = loss::supcon<float>(za, zb, labels, 0.1f);
    benchmark::DoNotOptimize(res.value);
  }
}
BENCHMARK(BM_supcon)->Arg(64)->Arg(128);

void BM_sinkhorn(benchmark::State& state) {
  RngStream rng(3);
  const auto scores = random_mat(rng, 100, static_cast<int>(state.range(0)));
  for (auto _ : state) {
    auto q = loss::sinkhorn<float>(scores, 0.03f, 3);
    benchmark::DoNotOptimize(q.v.data());
  }
}
BENCHMARK(BM_sinkhorn)->Arg(128)->Arg(512);

void BM_swav(benchmark::State& state) {
  RngStream rng(4);
  const int b = static_cast<int>(state.range(0));
  const auto za = loss::normalize_rows(random_mat(rng, b, 128));
  const auto zb = loss::normalize_rows(random_mat(rng, b, 128));
  const auto protos = loss::normalize_rows(random_mat(rng, 100, 128));
  for (auto _ : state) {
    auto res = loss::swav_loss<float>(za, zb, protos, 0.1f, 0.03f, 3);
    benchmark::DoNotOptimize(res.value);
  }
}
BENCHMARK(BM_swav)->Arg(64)->Arg(128);

}  // namespace
