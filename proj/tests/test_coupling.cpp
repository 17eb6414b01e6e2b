#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "rsde/coupling.hpp"
#include "rsde/distance.hpp"
#include "rsde/error.hpp"
#include "rsde/rates.hpp"
#include "rsde/rng.hpp"
#include "rsde/sde.hpp"

using namespace rsde;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd symmetric_rates() {
  MatrixXd q(2, 2);
  q << -1.0, 1.0, 1.0, -1.0;
  return q;
}

VectorXd vec1(double v) {
  VectorXd x(1);
  x(0) = v;
  return x;
}

sde::rs_model ode_model() { return sde::models::power_drift(1.0, 2.0, 0.0, 0.0, symmetric_rates()); }

sde::rs_model noise_model() { return sde::models::power_drift(1.0, 2.0, 1.0, 1.0, symmetric_rates()); }

// b(x, i) = -x in both regimes, unit noise: the coupled gap decays like e^{-t}
// so full coupling is reachable within a moderate horizon.
sde::rs_model linear_model() {
  sde::rs_model m;
  m.name = "linear-contraction";
  m.dim = 1;
  m.noise_dim = 1;
  m.drift = [](const VectorXd& x, int, VectorXd& out) { out(0) = -x(0); };
  m.diffusion = [](const VectorXd&, int, MatrixXd& out) { out(0, 0) = 1.0; };
  m.switching = chain::validate_generator(symmetric_rates());
  return m;
}

chain::chain_path path_from(const sde::trajectory& tr) {
  chain::chain_path p;
  p.initial_state = tr.regime.front();
  p.horizon = tr.times.back();
  for (std::size_t k = 1; k < tr.times.size(); ++k) {
    if (tr.regime[k] != tr.regime[k - 1]) p.events.emplace_back(tr.times[k], tr.regime[k]);
  }
  return p;
}

double ks_statistic(std::vector<double> u, std::vector<double> v) {
  std::sort(u.begin(), u.end());
  std::sort(v.begin(), v.end());
  const double nu = static_cast<double>(u.size());
  const double nv = static_cast<double>(v.size());
  double d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < u.size() && j < v.size()) {
    if (u[i] <= v[j]) {
      ++i;
    } else {
      ++j;
    }
    d = std::max(d, std::abs(static_cast<double>(i) / nu - static_cast<double>(j) / nv));
  }
  return d;
}

}  // namespace

TEST_CASE("identical starts couple at time zero") {
  auto m = noise_model();
  auto rs = rng::make_stream(7, 0, 0);
  coupling::start a{vec1(1.0), 0};
  auto cpl = coupling::couple(m, a, a, 2.0, 0.05, rs);

  CHECK(cpl.tau_ij == 0.0);
  CHECK(cpl.tau_full == 0.0);
  REQUIRE(cpl.path_a.times.size() == cpl.path_b.times.size());
  for (std::size_t k = 0; k < cpl.path_a.times.size(); ++k) {
    CHECK(cpl.path_a.x[k](0) == cpl.path_b.x[k](0));
    CHECK(cpl.path_a.regime[k] == cpl.path_b.regime[k]);
  }
}

TEST_CASE("zero-noise coupling contracts monotonically and tracks the exact flow") {
  auto m = ode_model();
  auto rs = rng::make_stream(11, 0, 0);
  coupling::start a{vec1(1.0), 1};
  coupling::start b{vec1(-1.0), 1};
  // h = 1e-3 keeps automatic taming off, so the scheme is plain Euler.
  auto cpl = coupling::couple(m, a, b, 10.0, 1e-3, rs);

  CHECK(cpl.tau_ij == 0.0);
  CHECK(std::isinf(cpl.tau_full));  // the gap decays polynomially, never below 1e-9 here
  REQUIRE(cpl.path_a.times.size() == cpl.path_b.times.size());

  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < cpl.path_a.times.size(); ++k) {
    CHECK(cpl.path_a.regime[k] == cpl.path_b.regime[k]);
    const double d = std::abs(cpl.path_a.x[k](0) - cpl.path_b.x[k](0));
    CHECK(d <= prev + 1e-12);
    prev = d;
  }
  CHECK(prev > 1e-3);

  // Endpoints agree with the closed-form flow composed along the realized
  // switching path (identical for both copies since tau_ij = 0).
  auto path = path_from(cpl.path_a);
  const double exact_a = sde::exact_example_endpoint(path, 1.0, 10.0, 1.0, 2.0);
  const double exact_b = sde::exact_example_endpoint(path, -1.0, 10.0, 1.0, 2.0);
  CHECK(std::abs(cpl.path_a.x.back()(0) - exact_a) < 0.02);
  CHECK(std::abs(cpl.path_b.x.back()(0) - exact_b) < 0.02);
}

TEST_CASE("regimes agree from the chain coalescence time on") {
  auto m = noise_model();
  coupling::start a{vec1(1.0), 0};
  coupling::start b{vec1(-1.0), 1};
  int coalesced = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    auto rs = rng::make_stream(23, static_cast<std::uint64_t>(rep), 0);
    auto cpl = coupling::couple(m, a, b, 3.0, 0.05, rs);
    if (!std::isfinite(cpl.tau_ij)) continue;  // P(tau > 3) = e^{-6}, a handful of reps
    ++coalesced;
    bool seen = false;
    for (std::size_t k = 0; k < cpl.path_a.times.size(); ++k) {
      if (cpl.path_a.times[k] >= cpl.tau_ij - 1e-12) {
        seen = true;
        CHECK(cpl.path_a.regime[k] == cpl.path_b.regime[k]);
      }
    }
    CHECK(seen);
  }
  CHECK(coalesced >= 985);
}

TEST_CASE("strong contraction reaches full coupling and aliases the second path") {
  auto m = linear_model();
  auto rs = rng::make_stream(29, 0, 0);
  coupling::start a{vec1(1.0), 0};
  coupling::start b{vec1(-1.0), 1};
  // Shared unit noise cancels in the gap and -x contracts it like e^{-t};
  // 2 e^{-t} crosses merge_tol = 1e-9 near t = 21.4.
  auto cpl = coupling::couple(m, a, b, 25.0, 0.05, rs);

  REQUIRE(std::isfinite(cpl.tau_full));
  CHECK(cpl.tau_full >= cpl.tau_ij);
  CHECK(cpl.tau_full > 15.0);
  CHECK(cpl.tau_full < 25.0);

  bool merged = false;
  for (std::size_t k = 0; k < cpl.path_a.times.size(); ++k) {
    if (cpl.path_a.times[k] >= cpl.tau_full) {
      if (!merged) {
        // at the merge node the recorded gap is already below tolerance
        CHECK(std::abs(cpl.path_a.x[k](0) - cpl.path_b.x[k](0)) <= 1e-9);
        merged = true;
      }
      CHECK(cpl.path_a.x[k](0) == cpl.path_b.x[k](0));
      CHECK(cpl.path_a.regime[k] == cpl.path_b.regime[k]);
    }
  }
  CHECK(merged);
}

TEST_CASE("the second marginal keeps its law") {
  auto m = noise_model();
  const int n = 10000;
  std::vector<double> coupled, independent;
  coupled.reserve(n);
  independent.reserve(n);

  coupling::start a{vec1(1.0), 0};
  coupling::start b{vec1(-1.0), 1};
  const std::vector<double> stamp = {2.0};
  for (int rep = 0; rep < n; ++rep) {
    auto rs = rng::make_stream(31, static_cast<std::uint64_t>(rep), 0);
    coupling::couple_observed(m, a, b, 2.0, 0.05, rs, {}, stamp,
                              [&](std::size_t, const VectorXd&, int, const VectorXd& xb,
                                  int) { coupled.push_back(xb(0)); });
  }
  for (int rep = 0; rep < n; ++rep) {
    auto rs = rng::make_stream(77, static_cast<std::uint64_t>(rep), 0);
    sde::integrate_observed(m, vec1(-1.0), 1, 2.0, 0.05, rs, {}, stamp,
                            [&](std::size_t, const VectorXd& x, int) {
                              independent.push_back(x(0));
                            });
  }
  REQUIRE(coupled.size() == static_cast<std::size_t>(n));
  REQUIRE(independent.size() == static_cast<std::size_t>(n));

  // two-sample Kolmogorov-Smirnov at level 0.01:
  // c(0.01) sqrt(2/n) = 1.6276 sqrt(2/10^4) = 0.02302
  CHECK(ks_statistic(coupled, independent) < 0.02302);
}

TEST_CASE("post-coalescence gap contraction holds replicate-wise") {
  auto m = noise_model();
  auto f = distance::rho_profile::clipped(1.0);
  coupling::start a{vec1(1.0), 0};
  coupling::start b{vec1(-1.0), 1};

  for (int rep = 0; rep < 30; ++rep) {
    auto rs = rng::make_stream(41, static_cast<std::uint64_t>(rep), 0);
    auto cpl = coupling::couple(m, a, b, 5.0, 0.05, rs);
    REQUIRE(std::isfinite(cpl.tau_ij));

    double max_abs = 0.0;
    for (const auto& x : cpl.path_a.x) max_abs = std::max(max_abs, std::abs(x(0)));
    for (const auto& x : cpl.path_b.x) max_abs = std::max(max_abs, std::abs(x(0)));
    const double lip = 2.0 * max_abs;  // |d/dx sgn(x) x^2| = 2|x|

    for (std::size_t k = 0; k + 1 < cpl.path_a.times.size(); ++k) {
      if (cpl.path_a.times[k] < cpl.tau_ij - 1e-12) continue;
      const double d0 = std::abs(cpl.path_a.x[k](0) - cpl.path_b.x[k](0));
      const double d1 = std::abs(cpl.path_a.x[k + 1](0) - cpl.path_b.x[k + 1](0));
      const double dt = cpl.path_a.times[k + 1] - cpl.path_a.times[k];
      CHECK(f.f(d1) <= f.f(d0) + 2.0 * lip * dt + 1e-12);
    }
  }
}

TEST_CASE("decay curve dominates the sorted-sample distance") {
  auto m = noise_model();
  auto ident = distance::rho_profile::identity();
  coupling::start a{vec1(1.0), 0};
  coupling::start b{vec1(-1.0), 1};
  const std::vector<double> times = {0.5, 1.0, 2.0};
  const long n = 2000;
  const rng::key key{101, 5};

  auto curve = coupling::distance_decay_curve(m, a, b, ident, 1.0, times, n, 0.05, key);
  REQUIRE(curve.times == times);
  REQUIRE(curve.replicates == n);

  // Replay the identical replicate streams to recover the endpoint samples.
  std::vector<std::vector<double>> sa(times.size()), sb(times.size());
  std::vector<double> mean_rho(times.size(), 0.0);
  for (long rep = 0; rep < n; ++rep) {
    auto rs = rng::make_stream(key, static_cast<std::uint64_t>(rep));
    coupling::couple_observed(m, a, b, times.back(), 0.05, rs, {}, times,
                              [&](std::size_t si, const VectorXd& xa, int ia,
                                  const VectorXd& xb, int ib) {
                                sa[si].push_back(xa(0));
                                sb[si].push_back(xb(0));
                                mean_rho[si] += distance::rho(ident, xa, ia, xb, ib);
                              });
  }
  for (std::size_t s = 0; s < times.size(); ++s) {
    REQUIRE(sa[s].size() == static_cast<std::size_t>(n));
    CHECK(curve.estimate[s] == doctest::Approx(mean_rho[s] / static_cast<double>(n))
                                   .epsilon(1e-12));
    // coupled-pair average >= sorted-pairing distance (rearrangement)
    const double w1 = distance::empirical_w1_1d(sa[s], sb[s]);
    CHECK(curve.estimate[s] >= w1 - 1e-10);
    CHECK(curve.stderr_[s] > 0.0);
  }

  // Bounded profile: every evaluated rho is at most 1 + sup f.
  auto capped = distance::rho_profile::clipped(1.0);
  auto curve2 = coupling::distance_decay_curve(m, a, b, capped, 2.0, times, 200, 0.05, key);
  for (const double e : curve2.estimate) CHECK(e <= 2.0 + 1e-12);

  auto zero = coupling::distance_decay_curve(m, a, a, ident, 1.0, {0.5, 1.0}, 50, 0.05,
                                             rng::key{7, 9});
  for (const double e : zero.estimate) CHECK(e == 0.0);

  CHECK_THROWS_WITH_AS(
      coupling::distance_decay_curve(m, a, b, ident, 0.5, times, 10, 0.05, key),
      doctest::Contains("InvalidOption"), error);
  CHECK_THROWS_WITH_AS(coupling::distance_decay_curve(m, a, b, ident, 1.0, {}, 10, 0.05, key),
                       doctest::Contains("EmptySample"), error);
  CHECK_THROWS_WITH_AS(
      coupling::distance_decay_curve(m, a, b, ident, 1.0, {2.0, 1.0}, 10, 0.05, key),
      doctest::Contains("TimesNotIncreasing"), error);

  auto bad = noise_model();
  bad.diffusion_state_free = false;
  auto rs = rng::make_stream(1, 1, 0);
  CHECK_THROWS_WITH_AS(coupling::couple(bad, a, b, 1.0, 0.05, rs),
                       doctest::Contains("UnsupportedModel"), error);
}

TEST_CASE("flatness constants hit the closed forms") {
  auto m = noise_model();
  auto ident = distance::rho_profile::identity();
  auto psi2 = rates::rate_spec::power(2.0);
  auto pairs = coupling::probe_grid_1d(-5.0, 5.0, 41);
  REQUIRE(pairs.size() == 41u * 40u);

  // constant drift: numerator vanishes identically
  auto e0 = coupling::flatness_constant(m, ident, psi2, 0, pairs);
  CHECK(e0.gamma == 0.0);

  // (sgn x x^2 - sgn y y^2)(x - y) >= 2^{1-2} |x-y|^3, equality at y = -x
  auto e1 = coupling::flatness_constant(m, ident, psi2, 1, pairs);
  CHECK(e1.gamma == doctest::Approx(-0.5).epsilon(1e-6));
  CHECK(e1.gamma <= -0.5 + 1e-6);
  CHECK(e1.arg_x(0) == doctest::Approx(-e1.arg_y(0)).epsilon(1e-12));

  // linear drift with psi(u) = u: the ratio is -1 for every pair
  auto lm = linear_model();
  auto el = coupling::flatness_constant(lm, ident, rates::rate_spec::linear(1.0), 1, pairs);
  CHECK(el.gamma == doctest::Approx(-1.0).epsilon(1e-9));

  CHECK_THROWS_WITH_AS(
      coupling::flatness_constant(
          m, ident, psi2, 1,
          {std::make_pair<VectorXd, VectorXd>(vec1(1.0), vec1(1.0))}),
      doctest::Contains("DegenerateProbe"), error);
  CHECK_THROWS_WITH_AS(coupling::flatness_constant(m, ident, psi2, 1, {}),
                       doctest::Contains("EmptyProbeSet"), error);
  CHECK_THROWS_WITH_AS(coupling::flatness_constant(m, ident, psi2, 5, pairs),
                       doctest::Contains("InvalidRegime"), error);
}

TEST_CASE("certificate assembly aggregates regimes") {
  auto m = noise_model();
  auto ident = distance::rho_profile::identity();
  auto psi2 = rates::rate_spec::power(2.0);
  auto pairs = coupling::probe_grid_1d(-5.0, 5.0, 41);
  const VectorXd lambda = VectorXd::Constant(2, 0.5);

  auto cert = coupling::make_flatness_certificate(m, ident, "u", psi2, "u^2", lambda, pairs);
  CHECK(cert.gamma(0) == 0.0);
  CHECK(cert.gamma(1) == doctest::Approx(-0.5).epsilon(1e-6));
  CHECK(cert.mixture == doctest::Approx(-0.25).epsilon(1e-6));
  CHECK(cert.feasible);
  CHECK(std::isinf(cert.eta));
  CHECK(cert.delta == 0.0);
  CHECK(cert.f_tag == "u");
  CHECK(cert.psi_tag == "u^2");
  CHECK(cert.n_pairs == 41 * 40);
  REQUIRE(cert.witnesses.size() == 2);

  // expanding drift in regime 0 pushes Gamma_0 to +1 and the verdict to no
  auto expanding = linear_model();
  expanding.drift = [](const VectorXd& x, int i, VectorXd& out) {
    out(0) = i == 0 ? x(0) : -x(0);
  };
  auto bad = coupling::make_flatness_certificate(expanding, ident, "u",
                                                 rates::rate_spec::linear(1.0), "u", lambda,
                                                 pairs);
  CHECK(bad.gamma(0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK_FALSE(bad.feasible);

  CHECK_THROWS_WITH_AS(
      coupling::make_flatness_certificate(m, ident, "u", psi2, "u^2",
                                          VectorXd::Constant(3, 1.0 / 3.0), pairs),
      doctest::Contains("LengthMismatch"), error);
}

TEST_CASE("thresholded flatness restricts the probes and solves for delta") {
  auto m = noise_model();
  auto ident = distance::rho_profile::identity();
  auto psi2 = rates::rate_spec::power(2.0);
  auto pairs = coupling::probe_grid_1d(-5.0, 5.0, 41);

  // f(u) = u: f(1/t) <= eta iff t >= 1/eta
  auto t1 = coupling::flatness_constant_thresholded(m, ident, psi2, 1.0, 1, pairs);
  CHECK(t1.delta == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(t1.gamma <= -0.5 + 1e-6);
  CHECK(t1.above_threshold_ok);

  auto t2 = coupling::flatness_constant_thresholded(m, ident, psi2, 0.5, 1, pairs);
  CHECK(t2.delta == doctest::Approx(2.0).epsilon(1e-9));
  // the pair (0.25, -0.25) sits exactly on the threshold and attains -1/2
  CHECK(t2.gamma == doctest::Approx(-0.5).epsilon(1e-6));

  auto capped = distance::rho_profile::clipped(1.0);
  auto t3 = coupling::flatness_constant_thresholded(m, capped, psi2, 1.0, 1, pairs);
  CHECK(t3.delta == 0.0);  // sup f = 1 <= eta, every t qualifies
  auto t4 = coupling::flatness_constant_thresholded(m, capped, psi2, 0.5, 1, pairs);
  CHECK(t4.delta == doctest::Approx(2.0).epsilon(1e-9));

  CHECK_THROWS_WITH_AS(coupling::flatness_constant_thresholded(m, ident, psi2, 0.0, 1, pairs),
                       doctest::Contains("ThresholdTooSmall"), error);

  const VectorXd lambda = VectorXd::Constant(2, 0.5);
  auto cert = coupling::make_flatness_certificate(m, ident, "u", psi2, "u^2", lambda, pairs,
                                                  0.5);
  CHECK(cert.eta == 0.5);
  CHECK(cert.delta == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(cert.feasible);
  CHECK(cert.gamma(1) == doctest::Approx(-0.5).epsilon(1e-6));
}
