#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace effssl {

/// Seeded random stream with fully pinned sampling algorithms. The standard
/// distributions are implementation-defined, so uniform/normal/integer draws
/// are derived from raw mt19937_64 output by hand; a given seed produces the
/// same sequence on every platform and the state round-trips through text.
class RngStream {
 public:
  RngStream() : RngStream(0) {}
  explicit RngStream(uint64_t seed) : engine_(seed) {}

  /// Independent child stream: hash-mixes the label into the seed.
  static RngStream child(uint64_t seed, const std::string& label);

  uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random mantissa bits.
  double uniform();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n). n must be > 0.
  int64_t uniform_int(int64_t n);
  /// Standard normal via Box-Muller (no cached spare, one draw per call).
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// In-place Fisher-Yates shuffle of [0, n) indices.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
      int64_t j = uniform_int(i + 1);
      std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(j)]);
    }
  }

  std::string serialize() const;
  static RngStream deserialize(const std::string& text);

  bool operator==(const RngStream& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace effssl
