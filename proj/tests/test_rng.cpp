#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>

#include "rsde/rng.hpp"

using rsde::rng::make_stream;

TEST_CASE("streams are reproducible and keyed") {
  auto a = make_stream(42, 7, 3);
  auto b = make_stream(42, 7, 3);
  for (int k = 0; k < 100; ++k) CHECK(a.next_u64() == b.next_u64());

  auto c = make_stream(42, 7, 4);
  auto d = make_stream(42, 8, 3);
  auto e = make_stream(43, 7, 3);
  int agree_c = 0, agree_d = 0, agree_e = 0;
  auto ref = make_stream(42, 7, 3);
  for (int k = 0; k < 64; ++k) {
    const std::uint64_t r = ref.next_u64();
    agree_c += (c.next_u64() == r);
    agree_d += (d.next_u64() == r);
    agree_e += (e.next_u64() == r);
  }
  CHECK(agree_c == 0);
  CHECK(agree_d == 0);
  CHECK(agree_e == 0);
}

TEST_CASE("uniform stays inside the open unit interval") {
  auto s = make_stream(1, 0, 0);
  const int n = 200000;
  double sum = 0.0;
  for (int k = 0; k < n; ++k) {
    const double u = s.uniform();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  // mean 1/2, sd of the mean 1/sqrt(12 n) ~= 6.5e-4
  CHECK(std::abs(sum / n - 0.5) < 4.0 / std::sqrt(12.0 * n));
}

TEST_CASE("normal moments") {
  auto s = make_stream(2, 0, 0);
  const int n = 200000;
  double sum = 0.0, sum2 = 0.0, sum4 = 0.0;
  for (int k = 0; k < n; ++k) {
    const double z = s.normal();
    sum += z;
    sum2 += z * z;
    sum4 += z * z * z * z;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  const double kurt = sum4 / n;
  CHECK(std::abs(mean) < 4.0 / std::sqrt(static_cast<double>(n)));
  CHECK(std::abs(var - 1.0) < 4.0 * std::sqrt(2.0 / n));
  // E Z^4 = 3, sd of the estimate sqrt(96/n)
  CHECK(std::abs(kurt - 3.0) < 4.0 * std::sqrt(96.0 / n));
}

TEST_CASE("exponential moments and tail") {
  auto s = make_stream(3, 0, 0);
  const int n = 200000;
  const double rate = 2.0;
  double sum = 0.0;
  int over_one = 0;
  for (int k = 0; k < n; ++k) {
    const double x = s.exponential(rate);
    REQUIRE(x > 0.0);
    sum += x;
    over_one += (x > 1.0);
  }
  CHECK(std::abs(sum / n - 0.5) < 4.0 * 0.5 / std::sqrt(static_cast<double>(n)));
  const double p = std::exp(-2.0);
  CHECK(std::abs(static_cast<double>(over_one) / n - p) <
        4.0 * std::sqrt(p * (1.0 - p) / n));
}

TEST_CASE("poisson mean and variance, including the chunked large-mean path") {
  auto s = make_stream(4, 0, 0);
  for (const double mean : {3.0, 120.0}) {
    const int n = 50000;
    double sum = 0.0, sum2 = 0.0;
    for (int k = 0; k < n; ++k) {
      const double x = static_cast<double>(s.poisson(mean));
      sum += x;
      sum2 += x * x;
    }
    const double m = sum / n;
    const double v = sum2 / n - m * m;
    CHECK(std::abs(m - mean) < 4.0 * std::sqrt(mean / n));
    // var of the sample variance of Poisson ~ (2 mean^2 + mean)/n
    CHECK(std::abs(v - mean) < 4.0 * std::sqrt((2.0 * mean * mean + mean) / n));
  }
}
