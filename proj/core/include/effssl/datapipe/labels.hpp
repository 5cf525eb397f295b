#pragma once

#include <vector>

#include "effssl/rng.hpp"

namespace effssl::data {

/// Replace exactly round(p * N) uniformly chosen labels with a uniformly
/// chosen *different* class. Entries left alone are bitwise untouched.
std::vector<int> inject_label_noise(const std::vector<int>& labels, double fraction,
                                    int num_classes, RngStream& rng);

/// Keep the true label on a uniformly chosen round(known_fraction * N)
/// subset; everything else becomes the unlabeled sentinel (-1).
std::vector<int> make_label_mask(const std::vector<int>& labels, double known_fraction,
                                 RngStream& rng);

}  // namespace effssl::data
