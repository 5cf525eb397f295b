#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "effssl/datapipe/augment.hpp"
#include "effssl/datapipe/dataset.hpp"
#include "effssl/datapipe/jigsaw.hpp"
#include "effssl/datapipe/labels.hpp"
#include "effssl/datapipe/rotation.hpp"
#include "effssl/datapipe/saliency.hpp"

using namespace effssl;
using namespace effssl::data;
namespace fs = std::filesystem;

namespace {

ImageBatch single_image(std::vector<float> values, int64_t c, int64_t n) {
  ImageBatch b;
  b.pixels = Tensor({1, c, n, n});
  std::copy(values.begin(), values.end(), b.pixels.data());
  b.ids = {0};
  return b;
}

bool batch_equal(const ImageBatch& a, const ImageBatch& b) {
  return bitwise_equal(a.pixels, b.pixels);
}

}  // namespace

TEST_CASE("synthetic dataset is deterministic and shaped to spec") {
  const Dataset a = load_dataset("seed=0,n=16,classes=2,size=8", "synthetic");
  const Dataset b = load_dataset("seed=0,n=16,classes=2,size=8", "synthetic");
  REQUIRE(a.size() == 16);
  CHECK(a.num_classes == 2);
  CHECK(a.images[0].shape() == std::vector<int64_t>{3, 8, 8});
  for (int64_t i = 0; i < a.size(); ++i) {
    CHECK(bitwise_equal(a.images[static_cast<size_t>(i)], b.images[static_cast<size_t>(i)]));
    CHECK(a.labels[static_cast<size_t>(i)] == b.labels[static_cast<size_t>(i)]);
  }
  for (float v : std::vector<float>{a.images[0][0], a.images[5][10]}) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("cifar binary loader parses records and rejects truncation") {
  const fs::path dir = fs::temp_directory_path() / "effssl_cifar_test";
  fs::create_directories(dir);
  const fs::path file = dir / "toy.bin";
  {
    std::ofstream out(file, std::ios::binary);
    for (int rec = 0; rec < 2; ++rec) {
      unsigned char label = static_cast<unsigned char>(rec + 3);
      out.write(reinterpret_cast<char*>(&label), 1);
      for (int i = 0; i < 3072; ++i) {
        unsigned char px = static_cast<unsigned char>((i + rec) % 256);
        out.write(reinterpret_cast<char*>(&px), 1);
      }
    }
  }
  const Dataset ds = load_dataset(file.string(), "cifar-binary");
  REQUIRE(ds.size() == 2);
  CHECK(ds.labels[0] == 3);
  CHECK(ds.labels[1] == 4);
  CHECK(ds.images[0].shape() == std::vector<int64_t>{3, 32, 32});
  CHECK(ds.images[0][0] == doctest::Approx(0.0f));
  CHECK(ds.images[0][1] == doctest::Approx(1.0f / 255.0f));

  {
    std::ofstream out(file, std::ios::binary | std::ios::app);
    out.write("xx", 2);  // trailing partial record
  }
  CHECK_THROWS_AS(load_dataset(file.string(), "cifar-binary"), std::runtime_error);
  CHECK_THROWS_AS(load_dataset("/nonexistent/path.bin", "cifar-binary"), std::runtime_error);
  CHECK_THROWS_AS(load_dataset("x", "not-a-format"), std::invalid_argument);
  fs::remove_all(dir);
}

TEST_CASE("view pair with all transforms disabled is the identity") {
  const Dataset ds = make_synthetic({.seed = 1, .count = 4, .classes = 2, .size = 8});
  const ImageBatch batch = ds.gather({0, 1, 2, 3});
  AugConfig cfg;  // everything off
  RngStream rng(0);
  const ViewPair pair = make_view_pair(batch, cfg, rng);
  CHECK(batch_equal(pair.view_a, batch));
  CHECK(batch_equal(pair.view_b, batch));
  CHECK(pair.view_a.ids == batch.ids);
}

TEST_CASE("view pair is deterministic under a fixed seed") {
  const Dataset ds = make_synthetic({.seed = 2, .count = 6, .classes = 3, .size = 16});
  const ImageBatch batch = ds.gather({0, 1, 2, 3, 4, 5});
  AugConfig cfg;
  cfg.enable_crop = true;
  cfg.output_size = 8;
  cfg.enable_flip = true;
  cfg.enable_jitter = true;
  cfg.enable_grayscale = true;
  cfg.enable_blur = true;
  RngStream r1(9), r2(9);
  const ViewPair p1 = make_view_pair(batch, cfg, r1);
  const ViewPair p2 = make_view_pair(batch, cfg, r2);
  CHECK(batch_equal(p1.view_a, p2.view_a));
  CHECK(batch_equal(p1.view_b, p2.view_b));
  CHECK_FALSE(batch_equal(p1.view_a, p1.view_b));  // independent draws
}

TEST_CASE("flip probability one mirrors about the vertical axis") {
  const Dataset ds = make_synthetic({.seed = 3, .count = 2, .classes = 2, .size = 8});
  const ImageBatch batch = ds.gather({0, 1});
  AugConfig cfg;
  cfg.enable_flip = true;
  cfg.flip_prob = 1.0;
  RngStream rng(5);
  const ViewPair pair = make_view_pair(batch, cfg, rng);
  // Oracle: explicit index reversal.
  const int64_t c = batch.channels(), n = batch.height();
  for (int64_t img = 0; img < batch.size(); ++img)
    for (int64_t ch = 0; ch < c; ++ch)
      for (int64_t y = 0; y < n; ++y)
        for (int64_t x = 0; x < n; ++x)
          CHECK(pair.view_a.pixels.at(img, ch, y, x) ==
                batch.pixels.at(img, ch, y, n - 1 - x));
}

TEST_CASE("exact rotation identities") {
  const Dataset ds = make_synthetic({.seed = 4, .count = 3, .classes = 3, .size = 8});
  const ImageBatch batch = ds.gather({0, 1, 2});
  const RotationSet rotset;

  SUBCASE("index 0 is the identity") {
    CHECK(batch_equal(rotate(batch, 0, rotset), batch));
  }
  SUBCASE("rotations summing to 360 degrees compose to the identity") {
    ImageBatch r = rotate(batch, 1, rotset);   // 90
    r = rotate(r, 2, rotset);                  // +180
    r = rotate(r, 1, rotset);                  // +90
    CHECK(batch_equal(r, batch));
  }
  SUBCASE("rotation is a pixel-position bijection") {
    const ImageBatch r = rotate(batch, 1, rotset);
    double sum_in = 0, sum_out = 0;
    float min_in = 1e9f, min_out = 1e9f, max_in = -1e9f, max_out = -1e9f;
    for (int64_t i = 0; i < batch.pixels.numel(); ++i) {
      sum_in += batch.pixels[i];
      min_in = std::min(min_in, batch.pixels[i]);
      max_in = std::max(max_in, batch.pixels[i]);
      sum_out += r.pixels[i];
      min_out = std::min(min_out, r.pixels[i]);
      max_out = std::max(max_out, r.pixels[i]);
    }
    CHECK(sum_in == sum_out);
    CHECK(min_in == min_out);
    CHECK(max_in == max_out);
  }
}

TEST_CASE("90-degree CCW remap on a 2x2 image") {
  // [[a,b],[c,d]] -> [[b,d],[a,c]], i.e. y[i][j] = x[j][W-1-i].
  const ImageBatch batch = single_image({1.0f, 2.0f, 3.0f, 4.0f}, 1, 2);
  const ImageBatch r = rotate(batch, 1, RotationSet());
  CHECK(r.pixels[0] == 2.0f);
  CHECK(r.pixels[1] == 4.0f);
  CHECK(r.pixels[2] == 1.0f);
  CHECK(r.pixels[3] == 3.0f);
}

TEST_CASE("rotate error paths") {
  ImageBatch bad;
  bad.pixels = Tensor({1, 1, 2, 3});
  bad.ids = {0};
  CHECK_THROWS_AS(rotate(bad, 0, RotationSet()), std::invalid_argument);

  const ImageBatch ok = single_image({1, 2, 3, 4}, 1, 2);
  CHECK_THROWS_AS(rotate(ok, 4, RotationSet()), std::invalid_argument);
  CHECK_THROWS_AS(RotationSet({0, 0}), std::invalid_argument);
  CHECK_THROWS_AS(RotationSet({17}), std::invalid_argument);
  CHECK_THROWS_AS(RotationSet(std::vector<int>{}), std::invalid_argument);
}

TEST_CASE("interpolated rotation set is accepted and changes pixels") {
  const RotationSet rotset({45, 135, 225, 315});
  CHECK_FALSE(rotset.exact());
  const Dataset ds = make_synthetic({.seed = 8, .count = 1, .classes = 1, .size = 16});
  const ImageBatch batch = ds.gather({0});
  const ImageBatch r = rotate(batch, 0, rotset);
  CHECK(r.pixels.shape() == batch.pixels.shape());
  CHECK_FALSE(batch_equal(r, batch));
}

TEST_CASE("sample_rotation uniformity") {
  RngStream rng(0);
  SUBCASE("single-element set always yields zero") {
    const RotationSet one({0});
    for (int v : sample_rotation(rng, one, 100)) CHECK(v == 0);
  }
  SUBCASE("fixed seed reproduces the sequence") {
    RngStream r1(11), r2(11);
    CHECK(sample_rotation(r1, RotationSet(), 50) == sample_rotation(r2, RotationSet(), 50));
  }
  SUBCASE("10k draws: binomial bound and chi-square at 0.001") {
    const int n = 10000;
    const auto draws = sample_rotation(rng, RotationSet(), n);
    std::vector<int> counts(4, 0);
    for (int v : draws) counts[static_cast<size_t>(v)]++;
    const double expected = n / 4.0;
    const double sigma = std::sqrt(n * 0.25 * 0.75);
    double chi2 = 0.0;
    for (int c : counts) {
      CHECK(std::fabs(c - expected) <= 4.0 * sigma);
      chi2 += (c - expected) * (c - expected) / expected;
    }
    CHECK(chi2 < 16.266);  // chi-square df=3 critical value at 0.001
  }
}

TEST_CASE("jigsaw permutation table and shuffles") {
  const JigsawTable table(2, 24);
  CHECK(table.size() == 24);
  CHECK(table.perm(0) == std::vector<int>{0, 1, 2, 3});  // lexicographic first

  const Dataset ds = make_synthetic({.seed = 5, .count = 2, .classes = 2, .size = 4});
  const ImageBatch batch = ds.gather({0, 1});

  SUBCASE("identity permutation is a no-op") {
    CHECK(batch_equal(jigsaw_shuffle(batch, 0, table), batch));
  }
  SUBCASE("permutation then inverse restores the input bitwise") {
    for (int idx : {1, 5, 11, 23}) {
      const ImageBatch shuffled = jigsaw_shuffle(batch, idx, table);
      const ImageBatch back = jigsaw_shuffle(shuffled, table.inverse_index(idx), table);
      CHECK(batch_equal(back, batch));
    }
  }
  SUBCASE("swap-top-row permutation exchanges the two top tiles") {
    // perm {1,0,2,3}: output tile 0 <- input tile 1, output tile 1 <- input 0.
    int swap_idx = -1;
    for (int i = 0; i < table.size(); ++i)
      if (table.perm(i) == std::vector<int>{1, 0, 2, 3}) swap_idx = i;
    REQUIRE(swap_idx >= 0);
    const ImageBatch shuffled = jigsaw_shuffle(batch, swap_idx, table);
    const int64_t n = 4, t = 2;
    for (int64_t ch = 0; ch < batch.channels(); ++ch)
      for (int64_t y = 0; y < t; ++y)
        for (int64_t x = 0; x < t; ++x) {
          CHECK(shuffled.pixels.at(0, ch, y, x) == batch.pixels.at(0, ch, y, x + t));
          CHECK(shuffled.pixels.at(0, ch, y, x + t) == batch.pixels.at(0, ch, y, x));
          CHECK(shuffled.pixels.at(0, ch, y + t, x) == batch.pixels.at(0, ch, y + t, x));
        }
    (void)n;
  }
  SUBCASE("error paths") {
    const Dataset odd = make_synthetic({.seed = 6, .count = 1, .classes = 1, .size = 5});
    CHECK_THROWS_AS(jigsaw_shuffle(odd.gather({0}), 0, table), std::invalid_argument);
    CHECK_THROWS_AS(jigsaw_shuffle(batch, 24, table), std::invalid_argument);
    CHECK_THROWS_AS(JigsawTable(1, 4), std::invalid_argument);
  }
}

TEST_CASE("larger jigsaw grids sample a distinct seeded table") {
  const JigsawTable t1(3, 32), t2(3, 32);
  CHECK(t1.size() == 32);
  CHECK(t1.perm(0) == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8});
  std::set<std::vector<int>> seen;
  for (int i = 0; i < t1.size(); ++i) {
    CHECK(t1.perm(i) == t2.perm(i));  // fixed-seed determinism
    seen.insert(t1.perm(i));
  }
  CHECK(static_cast<int>(seen.size()) == 32);
}

TEST_CASE("saliency crop acceptance rule") {
  SUBCASE("uniform map never satisfies the strict inequality, falls back after 10 tries") {
    SaliencyMap map;
    map.values = Tensor::full({16, 16}, 0.5f);
    RngStream rng(1);
    const auto result = saliency_crop(16, 16, map, rng);
    CHECK_FALSE(result.accepted);
    CHECK(result.tries == 10);
  }
  SUBCASE("accepted crops strictly beat the full-image mean on recomputation") {
    SaliencyMap map;
    map.values = Tensor({16, 16});
    map.values[5 * 16 + 7] = 1.0f;  // all mass on one pixel
    const double full = mean_saliency(map);
    RngStream rng(2);
    int accepted = 0;
    for (int trial = 0; trial < 50; ++trial) {
      const auto result = saliency_crop(16, 16, map, rng);
      if (!result.accepted) continue;
      ++accepted;
      CHECK(mean_saliency(map, result.rect) > full);
      // The single salient pixel must lie inside the accepted crop.
      CHECK(result.rect.left <= 7);
      CHECK(result.rect.left + result.rect.width > 7);
      CHECK(result.rect.top <= 5);
      CHECK(result.rect.top + result.rect.height > 5);
    }
    CHECK(accepted > 0);
  }
  SUBCASE("the full-frame crop ties the full-image mean and is rejected") {
    SaliencyMap map;
    map.values = Tensor::full({8, 8}, 0.25f);
    const CropRect full_rect{0, 0, 8, 8};
    CHECK(mean_saliency(map, full_rect) == mean_saliency(map));
  }
  SUBCASE("dimension mismatch") {
    SaliencyMap map;
    map.values = Tensor::full({8, 8}, 0.1f);
    RngStream rng(3);
    CHECK_THROWS_AS(saliency_crop(16, 16, map, rng), std::invalid_argument);
  }
}

TEST_CASE("SALM file round trip and error paths") {
  const fs::path dir = fs::temp_directory_path() / "effssl_salm_test";
  fs::create_directories(dir);
  const std::string path = (dir / "map.salm").string();

  SaliencyMap map;
  map.values = Tensor({4, 6});
  for (int64_t i = 0; i < map.values.numel(); ++i)
    map.values[i] = static_cast<float>(i) / 23.0f;
  save_salm(path, map);
  const SaliencyMap loaded = load_salm(path);
  CHECK(loaded.height() == 4);
  CHECK(loaded.width() == 6);
  CHECK(bitwise_equal(loaded.values, map.values));

  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write("NOPE", 4);
  }
  CHECK_THROWS_AS(load_salm(path), std::runtime_error);
  fs::remove_all(dir);
}

TEST_CASE("label noise injection") {
  RngStream rng(0);
  const std::vector<int> labels = {0, 1, 2, 3, 4, 0, 1, 2, 3, 4};

  SUBCASE("zero fraction leaves labels untouched") {
    CHECK(inject_label_noise(labels, 0.0, 5, rng) == labels);
  }
  SUBCASE("full fraction flips every label to a different class") {
    const auto noisy = inject_label_noise(labels, 1.0, 5, rng);
    for (size_t i = 0; i < labels.size(); ++i) CHECK(noisy[i] != labels[i]);
  }
  SUBCASE("fraction 0.3 of 10 alters exactly 3 entries, none to itself") {
    const auto noisy = inject_label_noise(labels, 0.3, 5, rng);
    int changed = 0;
    for (size_t i = 0; i < labels.size(); ++i)
      if (noisy[i] != labels[i]) ++changed;
    CHECK(changed == 3);
    for (size_t i = 0; i < labels.size(); ++i) {
      CHECK(noisy[i] >= 0);
      CHECK(noisy[i] < 5);
    }
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(inject_label_noise(labels, 0.5, 1, rng), std::invalid_argument);
    CHECK_THROWS_AS(inject_label_noise(labels, 1.5, 5, rng), std::invalid_argument);
  }
}

TEST_CASE("partial label mask") {
  RngStream rng(7);
  std::vector<int> labels(100);
  for (size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 10);

  SUBCASE("fraction zero blanks everything") {
    for (int v : make_label_mask(labels, 0.0, rng)) CHECK(v == kUnlabeled);
  }
  SUBCASE("fraction one keeps everything") {
    CHECK(make_label_mask(labels, 1.0, rng) == labels);
  }
  SUBCASE("fraction 0.3 keeps exactly 30, reproducibly") {
    RngStream r1(3), r2(3);
    const auto m1 = make_label_mask(labels, 0.3, r1);
    const auto m2 = make_label_mask(labels, 0.3, r2);
    CHECK(m1 == m2);
    int kept = 0;
    for (size_t i = 0; i < m1.size(); ++i) {
      if (m1[i] != kUnlabeled) {
        ++kept;
        CHECK(m1[i] == labels[i]);
      }
    }
    CHECK(kept == 30);
  }
}

TEST_CASE("image batch invariant validation") {
  ImageBatch b;
  b.pixels = Tensor({2, 1, 4, 4});
  b.ids = {0, 0};  // duplicate
  CHECK_THROWS_AS(b.validate(), std::invalid_argument);
  b.ids = {0, 1};
  CHECK_NOTHROW(b.validate());
}
