#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace groupvae {

// Deterministic random stream built on mt19937_64. All derived quantities
// (uniforms, normals, integers) are computed with fixed algorithms so that a
// given seed produces the same sequence on every platform.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform in (0, 1), safe to pass through log().
  double uniform_open() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller with one cached value.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_open();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  // Uniform integer in [0, n), unbiased via rejection.
  int uniform_int(int n) {
    const std::uint64_t bound =
        std::uint64_t(-1) - (std::uint64_t(-1) % static_cast<std::uint64_t>(n));
    std::uint64_t v = engine_();
    while (v >= bound) v = engine_();
    return static_cast<int>(v % static_cast<std::uint64_t>(n));
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Named sub-stream purposes so that independent noise sources drawn from one
// master seed do not interact when unrelated config values change.
enum class Stream : std::uint64_t {
  kInit = 1,
  kPairSampling = 2,
  kReparamNoise = 3,
  kEval = 4,
  kClassifier = 5,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seed for sub-stream `purpose` at position `index` under `master`.
inline std::uint64_t derive_seed(std::uint64_t master, Stream purpose,
                                 std::uint64_t index = 0) {
  return splitmix64(splitmix64(master ^ (static_cast<std::uint64_t>(purpose)
                                         << 56)) ^
                    index);
}

}  // namespace groupvae
