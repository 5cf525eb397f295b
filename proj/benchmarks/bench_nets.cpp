#include <benchmark/benchmark.h>

#include "effssl/nets/bundle.hpp"
#include "effssl/rng.hpp"

using namespace effssl;

namespace {

nets::BundleConfig desk_config() {
  nets::BundleConfig cfg;
  cfg.backbone.widths = {16, 32, 64};
  cfg.projector_hidden = 512;
  cfg.projector_out = 128;
  return cfg;
}

Tensor random_batch(RngStream& rng, int64_t b, int64_t n) {
  Tensor t({b, 3, n, n});
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.uniform());
  return t;
}

void BM_encode_forward(benchmark::State& state) {
  nets::NetworkBundle net(desk_config());
  RngStream rng(1);
  const Tensor x = random_batch(rng, state.range(0), 16);
  for (auto _ : state) {
    Tensor f = net.encode(x, nullptr, nets::Mode::Eval);
    benchmark::DoNotOptimize(f.data());
  }
}
BENCHMARK(BM_encode_forward)->Arg(32)->Arg(128);

void BM_encode_train_backward(benchmark::State& state) {
  nets::NetworkBundle net(desk_config());
  RngStream rng(2);
  const Tensor x = random_batch(rng, state.range(0), 16);
  for (auto _ : state) {
    nets::Tape tape;
    Tensor f = net.encode(x, &tape, nets::Mode::Train);
    Tensor z = net.project(f, &tape, nets::Mode::Train);
    Tensor g(z.shape());
    g.fill(1e-3f);
    Tensor gf = net.project_backward(g, tape);
    Tensor gx = net.encode_backward(gf, tape);
    benchmark::DoNotOptimize(gx.data());
  }
}
BENCHMARK(BM_encode_train_backward)->Arg(32)->Arg(128);

}  // namespace
