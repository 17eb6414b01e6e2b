#include "rsde/chain.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace rsde::chain {

namespace {

// Iterative strongly-connected-components check on the digraph {q_ij > 0}.
bool strongly_connected(const Eigen::MatrixXd& q) {
  const int n = static_cast<int>(q.rows());
  if (n <= 1) return true;

  auto reaches_all = [&](bool transpose) {
    std::vector<char> seen(n, 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    int count = 1;
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      for (int v = 0; v < n; ++v) {
        if (v == u || seen[v]) continue;
        const double w = transpose ? q(v, u) : q(u, v);
        if (w > 0.0) {
          seen[v] = 1;
          ++count;
          stack.push_back(v);
        }
      }
    }
    return count == n;
  };

  return reaches_all(false) && reaches_all(true);
}

// Transition matrix of the uniformized skeleton, e^{tQ} with rate*t <= cap.
Eigen::MatrixXd uniformized_expm(const Eigen::MatrixXd& q, double rate, double t) {
  const int n = static_cast<int>(q.rows());
  const Eigen::MatrixXd p = Eigen::MatrixXd::Identity(n, n) + q / rate;
  const double mu = rate * t;

  Eigen::MatrixXd term = Eigen::MatrixXd::Identity(n, n);
  double weight = std::exp(-mu);
  Eigen::MatrixXd sum = weight * term;
  double tail = 1.0 - weight;
  int k = 0;
  while (tail > 1e-12 && k < 100000) {
    ++k;
    term = term * p;
    weight *= mu / k;
    sum += weight * term;
    tail -= weight;
  }
  return sum;
}

}  // namespace

int chain_path::state_at(double t) const {
  int s = initial_state;
  for (const auto& [time, state] : events) {
    if (time > t) break;
    s = state;
  }
  return s;
}

generator_matrix validate_generator(const Eigen::MatrixXd& raw) {
  if (raw.rows() == 0 || raw.cols() == 0) fail("EmptyMatrix", "generator has no entries");
  if (raw.rows() != raw.cols()) fail("NotSquare", "generator must be square");
  const int n = static_cast<int>(raw.rows());

  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i != j && raw(i, j) < 0.0) {
        fail("NegativeOffDiagonal", "q(" + std::to_string(i) + "," + std::to_string(j) +
                                        ") = " + std::to_string(raw(i, j)));
      }
    }
    const double row_sum = raw.row(i).sum();
    if (std::abs(row_sum) > 1e-12) {
      fail("RowSumNonzero", "row " + std::to_string(i) + " sums to " + std::to_string(row_sum));
    }
  }

  generator_matrix g;
  g.q = raw;
  for (int i = 0; i < n; ++i) {
    g.q(i, i) = 0.0;
    g.q(i, i) = -g.q.row(i).sum();
  }
  g.irreducible = strongly_connected(g.q);
  return g;
}

Eigen::VectorXd invariant_distribution(const generator_matrix& g) {
  if (!g.irreducible) fail("ReducibleChain", "invariant distribution needs an irreducible chain");
  const int n = g.n();
  if (n == 1) return Eigen::VectorXd::Ones(1);

  Eigen::MatrixXd a = g.q.transpose();
  a.row(n - 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  rhs(n - 1) = 1.0;

  Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
  Eigen::VectorXd lambda = lu.solve(rhs);
  lambda += lu.solve(rhs - a * lambda);

  const double residual = (g.q.transpose() * lambda).lpNorm<Eigen::Infinity>();
  if (residual > 1e-12) fail("IllConditioned", "stationarity residual " + std::to_string(residual));
  for (int i = 0; i < n; ++i) {
    if (lambda(i) <= 0.0) fail("IllConditioned", "nonpositive stationary weight");
  }
  return lambda;
}

Eigen::MatrixXd transition_matrix(const generator_matrix& g, double t) {
  if (t < 0.0) fail("NegativeTime", "transition matrix needs t >= 0");
  const int n = g.n();
  if (t == 0.0) return Eigen::MatrixXd::Identity(n, n);

  const double rate = std::max(1e-300, -g.q.diagonal().minCoeff());
  if (rate <= 1e-300) return Eigen::MatrixXd::Identity(n, n);

  // Halve t until the Poisson mean is moderate, then square back up.
  int halvings = 0;
  double tt = t;
  while (rate * tt > 500.0) {
    tt *= 0.5;
    ++halvings;
  }
  Eigen::MatrixXd p = uniformized_expm(g.q, rate, tt);
  for (int k = 0; k < halvings; ++k) p = p * p;

  p = p.cwiseMax(0.0).cwiseMin(1.0);
  for (int i = 0; i < n; ++i) {
    if (std::abs(p.row(i).sum() - 1.0) > 1e-10) {
      fail("IllConditioned", "transition matrix row does not sum to 1");
    }
  }
  return p;
}

coupling_constants compute_coupling_constants(const generator_matrix& g) {
  if (g.n() < 2) fail("DegenerateChain", "coupling constants need at least two states");
  if (!g.irreducible) fail("ReducibleChain", "coupling constants need an irreducible chain");
  const double zeta = transition_matrix(g, 1.0).minCoeff();
  if (zeta <= 0.0) fail("ReducibleChain", "time-1 transition matrix has a zero entry");
  coupling_constants c;
  c.zeta = zeta;
  c.vartheta = -std::log1p(-zeta);
  return c;
}

chain_path simulate_chain(const generator_matrix& g, int initial_state, double horizon,
                          rng::stream& rs) {
  const int n = g.n();
  if (initial_state < 0 || initial_state >= n) fail("InvalidRegime", "initial state out of range");
  if (horizon < 0.0) fail("NegativeTime", "horizon must be nonnegative");

  chain_path path;
  path.initial_state = initial_state;
  path.horizon = horizon;

  double t = 0.0;
  int state = initial_state;
  while (true) {
    const double exit = -g.q(state, state);
    if (exit <= 0.0) break;
    t += rs.exponential(exit);
    if (t > horizon) break;
    double u = rs.uniform() * exit;
    int next = state;
    for (int j = 0; j < n; ++j) {
      if (j == state) continue;
      u -= g.q(state, j);
      if (u <= 0.0) {
        next = j;
        break;
      }
    }
    path.events.emplace_back(t, next);
    state = next;
  }
  return path;
}

chain_path simulate_chain(const state_dependent_generator& g, int initial_state,
                          double horizon,
                          const std::function<Eigen::VectorXd(double)>& position_at,
                          rng::stream& rs) {
  if (g.rate_bound <= 0.0) fail("RateBoundViolated", "thinning majorant must be positive");
  if (horizon < 0.0) fail("NegativeTime", "horizon must be nonnegative");

  chain_path path;
  path.initial_state = initial_state;
  path.horizon = horizon;

  double t = 0.0;
  int state = initial_state;
  while (true) {
    t += rs.exponential(g.rate_bound);
    if (t > horizon) break;
    const generator_matrix local = g.at(position_at(t));
    const int n = local.n();
    if (state < 0 || state >= n) fail("InvalidRegime", "state out of range for local generator");
    const double exit = -local.q(state, state);
    if (exit > g.rate_bound * (1.0 + 1e-12)) {
      fail("RateBoundViolated", "local exit rate " + std::to_string(exit) +
                                    " exceeds bound " + std::to_string(g.rate_bound));
    }
    double u = rs.uniform() * g.rate_bound;
    int next = state;
    for (int j = 0; j < n; ++j) {
      if (j == state) continue;
      u -= local.q(state, j);
      if (u <= 0.0) {
        next = j;
        break;
      }
    }
    if (next != state) {
      path.events.emplace_back(t, next);
      state = next;
    }
  }
  return path;
}

namespace {

// Lazy two-chain walk: events of two independent copies in time order until
// they coalesce or the horizon is reached. Draw order is fixed: the copy
// whose event fires draws its jump target, then its next holding time.
struct two_chain_walk {
  chain_path a;
  chain_path b;
  double tau = std::numeric_limits<double>::infinity();
};

two_chain_walk walk_until_met(const generator_matrix& g, int i, int j, double horizon,
                              rng::stream& rs) {
  const int n = g.n();
  two_chain_walk w;
  w.a.initial_state = i;
  w.b.initial_state = j;
  w.a.horizon = horizon;
  w.b.horizon = horizon;
  if (i == j) {
    w.tau = 0.0;
    return w;
  }

  auto holding = [&](int state) {
    const double exit = -g.q(state, state);
    return exit > 0.0 ? rs.exponential(exit) : std::numeric_limits<double>::infinity();
  };
  auto jump_target = [&](int state) {
    const double exit = -g.q(state, state);
    double u = rs.uniform() * exit;
    for (int k = 0; k < n; ++k) {
      if (k == state) continue;
      u -= g.q(state, k);
      if (u <= 0.0) return k;
    }
    return state;
  };

  int sa = i;
  int sb = j;
  double ta = holding(sa);
  double tb = holding(sb);
  while (true) {
    const double next = std::min(ta, tb);
    if (next > horizon) break;
    if (ta <= tb) {
      sa = jump_target(sa);
      w.a.events.emplace_back(ta, sa);
      if (sa == sb) {
        w.tau = ta;
        break;
      }
      ta += holding(sa);
    } else {
      sb = jump_target(sb);
      w.b.events.emplace_back(tb, sb);
      if (sb == sa) {
        w.tau = tb;
        break;
      }
      tb += holding(sb);
    }
  }
  return w;
}

}  // namespace

coupling_sample sample_coupling_time(const generator_matrix& g, int i, int j,
                                     rng::stream& rs, double time_cap) {
  if (!g.irreducible) fail("ReducibleChain", "coupling time needs an irreducible chain");
  if (i < 0 || i >= g.n() || j < 0 || j >= g.n()) fail("InvalidRegime", "state out of range");

  two_chain_walk w = walk_until_met(g, i, j, time_cap, rs);
  if (!std::isfinite(w.tau)) {
    fail("CouplingTimeout", "no coalescence by time " + std::to_string(time_cap));
  }

  coupling_sample s;
  s.tau = w.tau;
  s.first = std::move(w.a);
  s.second = std::move(w.b);
  s.first.horizon = w.tau;
  s.second.horizon = w.tau;
  return s;
}

merged_chains simulate_merged_chains(const generator_matrix& g, int i, int j,
                                     double horizon, rng::stream& rs) {
  if (i < 0 || i >= g.n() || j < 0 || j >= g.n()) fail("InvalidRegime", "state out of range");
  if (horizon < 0.0) fail("NegativeTime", "horizon must be nonnegative");

  two_chain_walk w = walk_until_met(g, i, j, horizon, rs);

  merged_chains m;
  m.tau = w.tau;
  m.first = std::move(w.a);
  m.second = std::move(w.b);

  if (std::isfinite(w.tau)) {
    // Continue the first copy alone, then alias the second to it.
    int state = m.first.events.empty() ? m.first.initial_state : m.first.events.back().second;
    double t = w.tau;
    while (true) {
      const double exit = -g.q(state, state);
      if (exit <= 0.0) break;
      t += rs.exponential(exit);
      if (t > horizon) break;
      double u = rs.uniform() * exit;
      int next = state;
      for (int k = 0; k < g.n(); ++k) {
        if (k == state) continue;
        u -= g.q(state, k);
        if (u <= 0.0) {
          next = k;
          break;
        }
      }
      m.first.events.emplace_back(t, next);
      state = next;
    }
    for (const auto& ev : m.first.events) {
      if (ev.first > w.tau) m.second.events.push_back(ev);
    }
  }
  return m;
}

}  // namespace rsde::chain
