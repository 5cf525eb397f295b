#include "effssl/losses/losses.hpp"

namespace effssl::loss {

Mat<float> to_mat(const Tensor& t) {
  if (t.rank() != 2) throw std::invalid_argument("to_mat: rank-2 tensor required");
  Mat<float> m(static_cast<int>(t.dim(0)), static_cast<int>(t.dim(1)));
  std::copy(t.data(), t.data() + t.numel(), m.v.begin());
  return m;
}

Tensor to_tensor(const Mat<float>& m) {
  Tensor t({m.rows, m.cols});
  std::copy(m.v.begin(), m.v.end(), t.data());
  return t;
}

NegativeMask build_negative_mask(const std::vector<int>& labels) {
  const int b = static_cast<int>(labels.size());
  NegativeMask mask(b);
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < b; ++j)
      if (i != j && labels[static_cast<size_t>(i)] >= 0 &&
          labels[static_cast<size_t>(j)] >= 0 &&
          labels[static_cast<size_t>(i)] == labels[static_cast<size_t>(j)])
        mask.allow[static_cast<size_t>(i) * b + j] = 0;
  return mask;
}

}  // namespace effssl::loss
