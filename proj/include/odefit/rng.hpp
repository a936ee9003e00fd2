#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

// Deterministic random streams. Standard-library distributions are not
// bit-stable across implementations, so sampling is done here from raw
// mt19937_64 output: uniforms by mantissa extraction, Gaussians by
// Box-Muller, Laplace by inverse CDF. Streams for replicate m (and
// bootstrap draw b inside it) are derived by mixing the ids into the seed,
// which makes every replicate's stream independent of scheduling order.

namespace odefit::rng {

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::uint64_t derive(std::uint64_t seed,
                            std::initializer_list<std::uint64_t> ids) {
  std::uint64_t s = splitmix64(seed ^ 0xA0761D6478BD642Full);
  for (std::uint64_t id : ids) s = splitmix64(s ^ splitmix64(id + 1));
  return s;
}

class Stream {
 public:
  explicit Stream(std::uint64_t seed) : eng_(seed) {}
  Stream(std::uint64_t seed, std::initializer_list<std::uint64_t> ids)
      : eng_(derive(seed, ids)) {}

  // Uniform on the open interval (0,1); never returns an endpoint.
  double uniform() {
    return (static_cast<double>(eng_() >> 11) + 0.5) * 0x1p-53;
  }

  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double laplace(double scale) {
    double u = uniform() - 0.5;
    return -scale * (u < 0 ? -1.0 : 1.0) * std::log1p(-2.0 * std::fabs(u));
  }

  // Index in [0, n). Modulo bias is below 1e-9 for any n used here.
  std::uint64_t index(std::uint64_t n) { return eng_() % n; }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace odefit::rng
