#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "rsde/chain.hpp"
#include "rsde/error.hpp"
#include "rsde/rng.hpp"

using namespace rsde;

namespace {

chain::generator_matrix symmetric_two_state() {
  Eigen::MatrixXd q(2, 2);
  q << -1.0, 1.0, 1.0, -1.0;
  return chain::validate_generator(q);
}

chain::generator_matrix asymmetric_two_state() {
  Eigen::MatrixXd q(2, 2);
  q << -2.0, 2.0, 1.0, -1.0;
  return chain::validate_generator(q);
}

chain::generator_matrix random_generator(int n, rng::stream& rs) {
  Eigen::MatrixXd q(n, n);
  for (int i = 0; i < n; ++i) {
    double row = 0.0;
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      q(i, j) = 0.1 + 2.0 * rs.uniform();
      row += q(i, j);
    }
    q(i, i) = -row;
  }
  return chain::validate_generator(q);
}

}  // namespace

TEST_CASE("validate_generator rejects malformed input") {
  CHECK_THROWS_WITH_AS(chain::validate_generator(Eigen::MatrixXd()),
                       doctest::Contains("EmptyMatrix"), error);

  Eigen::MatrixXd neg(2, 2);
  neg << -1.0, 1.0, -0.5, 0.5;
  CHECK_THROWS_WITH_AS(chain::validate_generator(neg),
                       doctest::Contains("NegativeOffDiagonal"), error);

  Eigen::MatrixXd bad_rows(2, 2);
  bad_rows << -1.0, 1.5, 1.0, -1.0;
  CHECK_THROWS_WITH_AS(chain::validate_generator(bad_rows),
                       doctest::Contains("RowSumNonzero"), error);

  Eigen::MatrixXd rect(2, 3);
  rect.setZero();
  CHECK_THROWS_AS(chain::validate_generator(rect), error);
}

TEST_CASE("validate_generator repairs the diagonal and flags irreducibility") {
  Eigen::MatrixXd q(2, 2);
  q << -1.0 + 3e-13, 1.0, 1.0, -1.0 - 3e-13;
  auto g = chain::validate_generator(q);
  CHECK(g.q.row(0).sum() == 0.0);
  CHECK(g.q.row(1).sum() == 0.0);
  CHECK(g.irreducible);

  Eigen::MatrixXd block(3, 3);
  block.setZero();
  block(0, 1) = 1.0;
  block(0, 0) = -1.0;
  block(1, 0) = 2.0;
  block(1, 1) = -2.0;
  auto h = chain::validate_generator(block);  // state 2 absorbing and unreachable
  CHECK_FALSE(h.irreducible);

  CHECK(chain::validate_generator(Eigen::MatrixXd::Zero(1, 1)).irreducible);
}

TEST_CASE("invariant distribution matches hand solutions") {
  auto g = symmetric_two_state();
  const Eigen::VectorXd lambda = chain::invariant_distribution(g);
  CHECK(std::abs(lambda(0) - 0.5) < 1e-14);
  CHECK(std::abs(lambda(1) - 0.5) < 1e-14);

  // lambda Q = 0 for q01=2, q10=1: -2 l0 + l1 = 0, so lambda = (1/3, 2/3)
  auto g2 = asymmetric_two_state();
  const Eigen::VectorXd mu = chain::invariant_distribution(g2);
  CHECK(mu(0) == doctest::Approx(1.0 / 3.0).epsilon(1e-13));
  CHECK(mu(1) == doctest::Approx(2.0 / 3.0).epsilon(1e-13));

  Eigen::MatrixXd block = Eigen::MatrixXd::Zero(2, 2);
  auto gb = chain::validate_generator(block);
  CHECK_THROWS_WITH_AS(chain::invariant_distribution(gb),
                       doctest::Contains("ReducibleChain"), error);
}

TEST_CASE("invariant distribution on random chains satisfies stationarity") {
  auto rs = rng::make_stream(11, 0, 0);
  for (int rep = 0; rep < 25; ++rep) {
    auto g = random_generator(2 + rep % 5, rs);
    const Eigen::VectorXd lambda = chain::invariant_distribution(g);
    CHECK((g.q.transpose() * lambda).lpNorm<Eigen::Infinity>() <= 1e-12);
    CHECK(std::abs(lambda.sum() - 1.0) <= 1e-12);
    CHECK(lambda.minCoeff() > 0.0);
  }
}

TEST_CASE("transition matrix matches closed forms") {
  auto g = symmetric_two_state();
  // eigenvalues 0 and -2: P(t) = 1/2 [[1+e^{-2t}, 1-e^{-2t}], [1-e^{-2t}, 1+e^{-2t}]]
  const Eigen::MatrixXd p = chain::transition_matrix(g, 1.0);
  const double e2 = std::exp(-2.0);
  CHECK(p(0, 0) == doctest::Approx((1.0 + e2) / 2.0).epsilon(1e-12));
  CHECK(p(0, 1) == doctest::Approx((1.0 - e2) / 2.0).epsilon(1e-12));
  CHECK(p(1, 0) == doctest::Approx((1.0 - e2) / 2.0).epsilon(1e-12));

  // q01=2, q10=1: spectral gap 3, P(1) = Pi + e^{-3}(I - Pi), Pi rows (1/3, 2/3)
  auto g2 = asymmetric_two_state();
  const Eigen::MatrixXd p2 = chain::transition_matrix(g2, 1.0);
  const double e3 = std::exp(-3.0);
  CHECK(p2(0, 0) == doctest::Approx((1.0 + 2.0 * e3) / 3.0).epsilon(1e-12));
  CHECK(p2(0, 1) == doctest::Approx((2.0 - 2.0 * e3) / 3.0).epsilon(1e-12));
  CHECK(p2(1, 0) == doctest::Approx((1.0 - e3) / 3.0).epsilon(1e-12));
  CHECK(p2(1, 1) == doctest::Approx((2.0 + e3) / 3.0).epsilon(1e-12));

  CHECK(chain::transition_matrix(g, 0.0).isApprox(Eigen::MatrixXd::Identity(2, 2)));
  CHECK_THROWS_WITH_AS(chain::transition_matrix(g, -0.5),
                       doctest::Contains("NegativeTime"), error);
}

TEST_CASE("transition matrix semigroup property on random chains") {
  auto rs = rng::make_stream(12, 0, 0);
  for (int rep = 0; rep < 20; ++rep) {
    auto g = random_generator(2 + rep % 4, rs);
    const Eigen::MatrixXd ps = chain::transition_matrix(g, 0.3);
    const Eigen::MatrixXd pt = chain::transition_matrix(g, 1.7);
    const Eigen::MatrixXd pst = chain::transition_matrix(g, 2.0);
    CHECK((ps * pt - pst).cwiseAbs().maxCoeff() <= 1e-10);
    for (int i = 0; i < g.n(); ++i) {
      CHECK(std::abs(pst.row(i).sum() - 1.0) <= 1e-10);
    }
    CHECK(pst.minCoeff() >= 0.0);
  }
}

TEST_CASE("transition matrix survives stiff rates via squaring") {
  Eigen::MatrixXd q(2, 2);
  q << -400.0, 400.0, 400.0, -400.0;
  auto g = chain::validate_generator(q);
  const Eigen::MatrixXd p = chain::transition_matrix(g, 2.0);
  CHECK(p(0, 0) == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(p(1, 0) == doctest::Approx(0.5).epsilon(1e-10));
}

TEST_CASE("coupling constants frozen for the two worked chains") {
  // zeta = min entry of P(1); for the symmetric chain (1-e^{-2})/2
  auto c = chain::compute_coupling_constants(symmetric_two_state());
  CHECK(c.zeta == doctest::Approx((1.0 - std::exp(-2.0)) / 2.0).epsilon(1e-12));
  CHECK(c.vartheta == doctest::Approx(-std::log((1.0 + std::exp(-2.0)) / 2.0)).epsilon(1e-12));

  // q01=2, q10=1: min entry is P(1)_{10} = (1 - e^{-3})/3
  auto c2 = chain::compute_coupling_constants(asymmetric_two_state());
  CHECK(c2.zeta == doctest::Approx((1.0 - std::exp(-3.0)) / 3.0).epsilon(1e-12));

  auto g1 = chain::validate_generator(Eigen::MatrixXd::Zero(1, 1));
  CHECK_THROWS_WITH_AS(chain::compute_coupling_constants(g1),
                       doctest::Contains("DegenerateChain"), error);
}

TEST_CASE("exact simulation has the right occupation and jump statistics") {
  auto g = symmetric_two_state();
  auto rs = rng::make_stream(13, 0, 0);
  const double horizon = 2000.0;
  auto path = chain::simulate_chain(g, 0, horizon, rs);

  double in_zero = 0.0;
  double prev = 0.0;
  int state = path.initial_state;
  for (const auto& [t, s] : path.events) {
    if (state == 0) in_zero += t - prev;
    prev = t;
    state = s;
  }
  if (state == 0) in_zero += horizon - prev;
  CHECK(std::abs(in_zero / horizon - 0.5) < 0.05);
  // jump count is a renewal count with Exp(1) holds: mean ~ horizon
  CHECK(std::abs(static_cast<double>(path.jump_count()) - horizon) < 5.0 * std::sqrt(horizon));

  auto none = chain::simulate_chain(chain::validate_generator(Eigen::MatrixXd::Zero(2, 2)),
                                    1, 10.0, rs);
  CHECK(none.jump_count() == 0);
  CHECK(none.state_at(5.0) == 1);
}

TEST_CASE("state_at is right-continuous") {
  chain::chain_path p;
  p.initial_state = 0;
  p.horizon = 10.0;
  p.events = {{1.0, 1}, {2.5, 0}};
  CHECK(p.state_at(0.0) == 0);
  CHECK(p.state_at(0.999) == 0);
  CHECK(p.state_at(1.0) == 1);
  CHECK(p.state_at(2.4999) == 1);
  CHECK(p.state_at(2.5) == 0);
  CHECK(p.state_at(10.0) == 0);
}

TEST_CASE("thinned simulation matches the exact marginal law") {
  auto g = symmetric_two_state();
  chain::state_dependent_generator sg;
  sg.at = [&g](const Eigen::VectorXd&) { return g; };
  sg.rate_bound = 3.0;
  auto feed = [](double) { return Eigen::VectorXd::Zero(1); };

  const int n = 20000;
  int at_zero = 0;
  for (int r = 0; r < n; ++r) {
    auto rs = rng::make_stream(14, 0, static_cast<std::uint64_t>(r));
    auto path = chain::simulate_chain(sg, 0, 1.0, feed, rs);
    at_zero += (path.state_at(1.0) == 0);
  }
  const double p00 = chain::transition_matrix(g, 1.0)(0, 0);
  const double se = std::sqrt(p00 * (1.0 - p00) / n);
  CHECK(std::abs(static_cast<double>(at_zero) / n - p00) < 4.0 * se);
}

TEST_CASE("thinned simulation rejects an understated rate bound") {
  auto g = asymmetric_two_state();  // exit rate 2 in state 0
  chain::state_dependent_generator sg;
  sg.at = [&g](const Eigen::VectorXd&) { return g; };
  sg.rate_bound = 1.5;
  auto feed = [](double) { return Eigen::VectorXd::Zero(1); };
  auto rs = rng::make_stream(15, 0, 0);
  CHECK_THROWS_WITH_AS(chain::simulate_chain(sg, 0, 50.0, feed, rs),
                       doctest::Contains("RateBoundViolated"), error);
}

TEST_CASE("coupling time law for the symmetric chain") {
  // Both copies jump at rate 1 and any jump coalesces two distinct states,
  // so tau ~ Exp(2): mean 1/2, P(tau > 1) = e^{-2}.
  auto g = symmetric_two_state();
  const int n = 20000;
  double sum = 0.0;
  int over_one = 0;
  for (int r = 0; r < n; ++r) {
    auto rs = rng::make_stream(16, 0, static_cast<std::uint64_t>(r));
    auto s = chain::sample_coupling_time(g, 0, 1, rs);
    REQUIRE(s.tau > 0.0);
    CHECK(s.first.state_at(s.tau) == s.second.state_at(s.tau));
    sum += s.tau;
    over_one += (s.tau > 1.0);
  }
  CHECK(std::abs(sum / n - 0.5) < 4.0 * 0.5 / std::sqrt(static_cast<double>(n)));
  const double p = std::exp(-2.0);
  CHECK(std::abs(static_cast<double>(over_one) / n - p) < 4.0 * std::sqrt(p * (1 - p) / n));

  auto rs = rng::make_stream(16, 1, 0);
  auto trivial = chain::sample_coupling_time(g, 1, 1, rs);
  CHECK(trivial.tau == 0.0);
}

TEST_CASE("coupling tail is dominated by the geometric-trial bound") {
  // P(tau > t) <= (1 - zeta)^{floor(t)}
  auto rs0 = rng::make_stream(17, 0, 0);
  for (int m = 0; m < 3; ++m) {
    auto g = random_generator(3, rs0);
    const auto cc = chain::compute_coupling_constants(g);
    const int n = 5000;
    std::vector<double> taus(n);
    for (int r = 0; r < n; ++r) {
      auto rs = rng::make_stream(17, 1 + m, static_cast<std::uint64_t>(r));
      taus[r] = chain::sample_coupling_time(g, 0, 2, rs).tau;
    }
    for (const double t : {1.0, 2.0, 3.0}) {
      double tail = 0.0;
      for (const double tau : taus) tail += (tau > t);
      tail /= n;
      const double bound = std::exp(-cc.vartheta * std::floor(t));
      const double se = std::sqrt(std::max(bound * (1 - bound), 1e-6) / n);
      CHECK(tail <= bound + 4.0 * se);
    }
  }
}

TEST_CASE("coupling time respects the cap") {
  auto g = symmetric_two_state();
  auto rs = rng::make_stream(18, 0, 0);
  CHECK_THROWS_WITH_AS(chain::sample_coupling_time(g, 0, 1, rs, 1e-9),
                       doctest::Contains("CouplingTimeout"), error);
}

TEST_CASE("merged chains agree after coalescence and differ before") {
  auto g = asymmetric_two_state();
  for (int r = 0; r < 200; ++r) {
    auto rs = rng::make_stream(19, 0, static_cast<std::uint64_t>(r));
    auto m = chain::simulate_merged_chains(g, 0, 1, 5.0, rs);
    if (!std::isfinite(m.tau)) continue;
    for (double t = 0.0; t <= 5.0; t += 0.05) {
      if (t < m.tau) {
        CHECK(m.first.state_at(t) != m.second.state_at(t));
      } else {
        CHECK(m.first.state_at(t) == m.second.state_at(t));
      }
    }
  }
}
