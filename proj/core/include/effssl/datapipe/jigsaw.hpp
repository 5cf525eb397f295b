#pragma once

#include <vector>

#include "effssl/datapipe/image_batch.hpp"

namespace effssl::data {

/// Fixed permutation table for the jigsaw task. For a 2x2 grid the table is
/// the full group of 24 tile permutations in lexicographic order; larger
/// grids draw `table_size` distinct permutations from a fixed-seed stream.
class JigsawTable {
 public:
  explicit JigsawTable(int grid = 2, int table_size = 24);

  int grid() const { return grid_; }
  int size() const { return static_cast<int>(perms_.size()); }
  const std::vector<int>& perm(int index) const;
  /// Index of the permutation that undoes `index`, for round-trip checks.
  int inverse_index(int index) const;

 private:
  int grid_;
  std::vector<std::vector<int>> perms_;
};

/// Tile the image into grid x grid patches and permute them; output tile p
/// is input tile perm[p]. The permutation index doubles as the task label.
ImageBatch jigsaw_shuffle(const ImageBatch& batch, int perm_index, const JigsawTable& table);

}  // namespace effssl::data
