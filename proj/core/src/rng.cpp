#include "effssl/rng.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace effssl {

namespace {
// FNV-1a, used to derive child-stream seeds from a label.
uint64_t fnv1a(uint64_t seed, const std::string& label) {
  uint64_t h = 14695981039346656037ull ^ seed;
  for (unsigned char ch : label) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}
}  // namespace

RngStream RngStream::child(uint64_t seed, const std::string& label) {
  return RngStream(fnv1a(seed, label));
}

double RngStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

int64_t RngStream::uniform_int(int64_t n) {
  if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
  const uint64_t un = static_cast<uint64_t>(n);
  // Rejection sampling to avoid modulo bias.
  const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
  uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return static_cast<int64_t>(x % un);
}

double RngStream::normal() {
  // Box-Muller; u1 shifted away from 0 so log() stays finite.
  double u1 = (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::string RngStream::serialize() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

RngStream RngStream::deserialize(const std::string& text) {
  RngStream s;
  std::istringstream is(text);
  is >> s.engine_;
  if (is.fail()) throw std::runtime_error("RngStream: malformed serialized state");
  return s;
}

}  // namespace effssl
