#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace rsde::rng {

// Streams must be bit-reproducible across platforms and compilers, so all
// sampling (normals, exponentials, Poisson) is implemented here instead of
// delegating to <random>, whose distributions are implementation-defined.

inline std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// xoshiro256++ stream with cached Box-Muller pair.
class stream {
public:
  stream() : s_{1, 2, 3, 4} {}
  explicit stream(const std::array<std::uint64_t, 4>& s) : s_(s) {}

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform on the open interval (0,1); never returns 0 or 1.
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double exponential(double rate) { return -std::log(uniform()) / rate; }

  // Knuth's product method, split into chunks so the running product
  // stays representable for large means.
  std::uint64_t poisson(double mean) {
    std::uint64_t total = 0;
    while (mean > 50.0) {
      total += poisson_small(50.0);
      mean -= 50.0;
    }
    return total + poisson_small(mean);
  }

private:
  static std::uint64_t rotl(std::uint64_t v, int k) {
    return (v << k) | (v >> (64 - k));
  }

  std::uint64_t poisson_small(double mean) {
    const double limit = std::exp(-mean);
    std::uint64_t k = 0;
    double p = 1.0;
    do {
      ++k;
      p *= uniform();
    } while (p > limit);
    return k - 1;
  }

  std::array<std::uint64_t, 4> s_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Stream identity for reproducible experiments: a run seed plus a purpose id.
// Replicate r of a Monte Carlo loop uses make_stream(key.seed, key.id, r).
struct key {
  std::uint64_t seed = 1;
  std::uint64_t id = 0;
};

inline stream make_stream(std::uint64_t seed, std::uint64_t id, std::uint64_t replicate) {
  std::uint64_t x = seed;
  (void)splitmix64(x);
  x ^= 0xA0761D6478BD642FULL * (id + 1);
  (void)splitmix64(x);
  x ^= 0xE7037ED1A0B428DBULL * (replicate + 1);
  std::array<std::uint64_t, 4> state;
  for (auto& si : state) si = splitmix64(x);
  return stream(state);
}

inline stream make_stream(const key& k, std::uint64_t replicate) {
  return make_stream(k.seed, k.id, replicate);
}

}  // namespace rsde::rng
