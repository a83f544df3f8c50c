#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace qgcn {

// FNV-1a, used to turn purpose tags into seed material and to fingerprint
// small files (e.g. dataset manifests).
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Seed fan-out: every random stream in a run is derived from one master seed
// and a purpose tag ("init", "sample", "dropout", "perturb", "split"), plus
// optional indices (layer, epoch, ...). Same master seed -> same streams.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag) {
  return mix64(master ^ fnv1a64(tag));
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                                 std::uint64_t index) {
  return mix64(derive_seed(master, tag) ^ mix64(index));
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                                 std::uint64_t index, std::uint64_t index2) {
  return mix64(derive_seed(master, tag, index) ^ mix64(index2 ^ 0x5851f42d4c957f2dull));
}

// mt19937_64 with hand-rolled draw helpers. The standard distributions are
// implementation-defined, so all draws go through these to keep byte-level
// reproducibility under our control.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // uniform in [0, 1), 53-bit resolution
  double next_double() { return double(engine_() >> 11) * 0x1.0p-53; }

  // uniform integer in [0, n), unbiased via rejection
  std::uint64_t next_below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  bool bernoulli(double p) { return next_double() < p; }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = std::size_t(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace qgcn
