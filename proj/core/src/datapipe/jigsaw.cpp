#include "effssl/datapipe/jigsaw.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <stdexcept>

#include "effssl/rng.hpp"

namespace effssl::data {

JigsawTable::JigsawTable(int grid, int table_size) : grid_(grid) {
  if (grid < 2) throw std::invalid_argument("JigsawTable: grid must be >= 2");
  if (table_size < 1) throw std::invalid_argument("JigsawTable: empty table");
  const int tiles = grid * grid;

  std::vector<int> ident(static_cast<size_t>(tiles));
  std::iota(ident.begin(), ident.end(), 0);

  if (tiles <= 4) {
    // Full group, lexicographic. 24 entries for the 2x2 grid.
    std::vector<int> p = ident;
    do {
      perms_.push_back(p);
    } while (std::next_permutation(p.begin(), p.end()));
    if (table_size < static_cast<int>(perms_.size()))
      perms_.resize(static_cast<size_t>(table_size));
  } else {
    // Seeded distinct sample, identity first so index 0 is always a no-op.
    perms_.push_back(ident);
    RngStream rng = RngStream::child(0x6a696773, "jigsaw-table");
    std::set<std::vector<int>> seen{ident};
    while (static_cast<int>(perms_.size()) < table_size) {
      std::vector<int> p = ident;
      rng.shuffle(p);
      if (seen.insert(p).second) perms_.push_back(p);
    }
  }
}

const std::vector<int>& JigsawTable::perm(int index) const {
  if (index < 0 || index >= size())
    throw std::invalid_argument("JigsawTable: permutation index out of range");
  return perms_[static_cast<size_t>(index)];
}

int JigsawTable::inverse_index(int index) const {
  const auto& p = perm(index);
  std::vector<int> inv(p.size());
  for (size_t i = 0; i < p.size(); ++i) inv[static_cast<size_t>(p[i])] = static_cast<int>(i);
  for (int j = 0; j < size(); ++j)
    if (perms_[static_cast<size_t>(j)] == inv) return j;
  throw std::logic_error("JigsawTable: inverse not present in table");
}

ImageBatch jigsaw_shuffle(const ImageBatch& batch, int perm_index, const JigsawTable& table) {
  const int g = table.grid();
  const int64_t n = batch.height();
  if (n % g != 0) throw std::invalid_argument("jigsaw_shuffle: image size not divisible by grid");
  const auto& p = table.perm(perm_index);

  const int64_t b = batch.size(), c = batch.channels(), t = n / g;
  ImageBatch out;
  out.pixels = Tensor({b, c, n, n});
  out.ids = batch.ids;
  out.labels = batch.labels;

  for (int64_t img = 0; img < b; ++img) {
    for (int64_t ch = 0; ch < c; ++ch) {
      const float* src = batch.pixels.data() + (img * c + ch) * n * n;
      float* dst = out.pixels.data() + (img * c + ch) * n * n;
      for (int tile = 0; tile < g * g; ++tile) {
        const int src_tile = p[static_cast<size_t>(tile)];
        const int64_t dy = (tile / g) * t, dx = (tile % g) * t;
        const int64_t sy = (src_tile / g) * t, sx = (src_tile % g) * t;
        for (int64_t y = 0; y < t; ++y)
          for (int64_t x = 0; x < t; ++x)
            dst[(dy + y) * n + (dx + x)] = src[(sy + y) * n + (sx + x)];
      }
    }
  }
  return out;
}

}  // namespace effssl::data
