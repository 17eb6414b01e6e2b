#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "rsde/distance.hpp"
#include "rsde/error.hpp"
#include "rsde/rng.hpp"

using namespace rsde;
using distance::labeled_sample;
using distance::rho_profile;

TEST_CASE("rho combines the profile with the regime mismatch indicator") {
  auto id = rho_profile::identity();
  Eigen::VectorXd x(2), y(2);
  x << 1.0, 0.0;
  y << -2.0, 4.0;
  CHECK(distance::rho(id, x, 0, y, 0) == doctest::Approx(5.0));
  CHECK(distance::rho(id, x, 0, y, 1) == doctest::Approx(6.0));
  CHECK(distance::rho(id, x, 2, x, 2) == doctest::Approx(0.0));

  auto clip = rho_profile::clipped(1.0);
  CHECK(distance::rho(clip, x, 0, y, 0) == doctest::Approx(1.0));
  CHECK(distance::rho(clip, x, 1, y, 0) == doctest::Approx(2.0));

  Eigen::VectorXd z(3);
  z.setZero();
  CHECK_THROWS_WITH_AS(distance::rho(id, x, 0, z, 0), doctest::Contains("LengthMismatch"),
                       error);
}

TEST_CASE("profile validation accepts concave shapes and rejects the rest") {
  CHECK_NOTHROW(distance::validate_profile(rho_profile::identity()));
  CHECK_NOTHROW(distance::validate_profile(rho_profile::clipped(1.0)));
  CHECK_NOTHROW(distance::validate_profile(
      rho_profile::custom([](double u) { return 1.0 - 1.0 / (1.0 + u); }, 1.0)));

  CHECK_THROWS_WITH_AS(
      distance::validate_profile(rho_profile::custom([](double u) { return u * u; },
                                                     std::numeric_limits<double>::infinity())),
      doctest::Contains("InvalidProfile"), error);
  CHECK_THROWS_WITH_AS(
      distance::validate_profile(rho_profile::custom([](double u) { return -u; }, 0.0)),
      doctest::Contains("InvalidProfile"), error);
  CHECK_THROWS_WITH_AS(
      distance::validate_profile(rho_profile::custom([](double u) { return u + 0.3; }, 1.0)),
      doctest::Contains("InvalidProfile"), error);
  CHECK_THROWS_AS(rho_profile::clipped(0.0), error);
}

TEST_CASE("empirical W1 on hand samples") {
  CHECK(distance::empirical_w1_1d({0.0, 1.0}, {2.0, 3.0}) == doctest::Approx(2.0));
  CHECK(distance::empirical_w1_1d({3.0, 1.0, 2.0}, {1.0, 2.0, 3.0}) == doctest::Approx(0.0));
  CHECK_THROWS_WITH_AS(distance::empirical_w1_1d({1.0}, {1.0, 2.0}),
                       doctest::Contains("LengthMismatch"), error);
  CHECK_THROWS_WITH_AS(distance::empirical_w1_1d({}, {}), doctest::Contains("EmptySample"),
                       error);
}

TEST_CASE("empirical W1 shift identity and rearrangement bound") {
  auto rs = rng::make_stream(21, 0, 0);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 50 + static_cast<std::size_t>(rs.uniform() * 100);
    std::vector<double> a(n), b(n);
    for (std::size_t k = 0; k < n; ++k) {
      a[k] = rs.normal();
      b[k] = rs.normal() * 0.5 + 1.0;
    }
    const double shift = 2.0 + rs.uniform();
    std::vector<double> a_shifted(n);
    for (std::size_t k = 0; k < n; ++k) a_shifted[k] = a[k] + shift;
    CHECK(distance::empirical_w1_1d(a, a_shifted) == doctest::Approx(shift).epsilon(1e-12));

    // sorted matching never exceeds the paired mean absolute difference
    double paired = 0.0;
    for (std::size_t k = 0; k < n; ++k) paired += std::abs(a[k] - b[k]);
    paired /= static_cast<double>(n);
    CHECK(distance::empirical_w1_1d(a, b) <= paired + 1e-12);
  }
}

TEST_CASE("empirical W1 recovers the distance between separated normals") {
  auto rs = rng::make_stream(22, 0, 0);
  const std::size_t n = 4000;
  std::vector<double> a(n), b(n);
  for (std::size_t k = 0; k < n; ++k) {
    a[k] = rs.normal();
    b[k] = rs.normal() + 2.0;
  }
  CHECK(std::abs(distance::empirical_w1_1d(a, b) - 2.0) < 0.15);
}

TEST_CASE("empirical TV basics") {
  std::vector<labeled_sample> a, b;
  auto rs = rng::make_stream(23, 0, 0);
  for (int k = 0; k < 2000; ++k) {
    a.push_back({rs.normal(), k % 2});
  }
  auto zero = distance::empirical_tv(a, a);
  CHECK(zero.value == doctest::Approx(0.0));
  CHECK(zero.bins > 1);

  // disjoint regimes: total variation 1 regardless of positions
  for (int k = 0; k < 2000; ++k) b.push_back({a[k].x, 2});
  auto one = distance::empirical_tv(a, b);
  CHECK(one.value == doctest::Approx(1.0));

  CHECK_THROWS_WITH_AS(distance::empirical_tv({}, a), doctest::Contains("EmptySample"), error);
}

TEST_CASE("empirical TV separates distant laws and vanishes for equal laws") {
  auto rs = rng::make_stream(24, 0, 0);
  std::vector<labeled_sample> a, b, c;
  const int n = 20000;
  for (int k = 0; k < n; ++k) {
    a.push_back({rs.normal(), 0});
    b.push_back({rs.normal(), 0});
    c.push_back({rs.normal() + 8.0, 0});
  }
  auto same = distance::empirical_tv(a, b);
  CHECK(same.value < 0.08);
  CHECK(same.value < 6.0 * same.aggregate_stderr + 0.05);

  auto far = distance::empirical_tv(a, c);
  CHECK(far.value > 0.97);

  // symmetric by construction
  auto forward = distance::empirical_tv(a, c);
  auto backward = distance::empirical_tv(c, a);
  CHECK(forward.value == doctest::Approx(backward.value));
}

TEST_CASE("empirical TV honors a caller-set bin width") {
  std::vector<labeled_sample> a, b;
  auto rs = rng::make_stream(25, 0, 0);
  for (int k = 0; k < 1000; ++k) {
    a.push_back({rs.uniform(), 0});
    b.push_back({rs.uniform(), 0});
  }
  auto coarse = distance::empirical_tv(a, b, 10.0);
  CHECK(coarse.bins == 1);
  CHECK(coarse.value == doctest::Approx(0.0));
  auto fine = distance::empirical_tv(a, b, 0.05);
  CHECK(fine.bins >= 15);
}
