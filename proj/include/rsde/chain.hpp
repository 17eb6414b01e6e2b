#pragma once

#include <Eigen/Dense>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "rsde/error.hpp"
#include "rsde/rng.hpp"

namespace rsde::chain {

// Conservative generator matrix: nonnegative off-diagonal entries, zero row
// sums. The diagonal is recomputed from the off-diagonal part on validation
// so downstream solvers see exact zero row sums.
struct generator_matrix {
  Eigen::MatrixXd q;
  bool irreducible = false;

  int n() const { return static_cast<int>(q.rows()); }
};

// State-dependent switching intensities q_ij(x) with a global bound on the
// exit rates, used as the thinning majorant.
struct state_dependent_generator {
  std::function<generator_matrix(const Eigen::VectorXd&)> at;
  double rate_bound = 0.0;
};

// Piecewise-constant path: right-continuous, events hold (time, new state)
// with strictly increasing times in (0, horizon].
struct chain_path {
  int initial_state = 0;
  double horizon = 0.0;
  std::vector<std::pair<double, int>> events;

  int state_at(double t) const;
  std::size_t jump_count() const { return events.size(); }
};

struct coupling_constants {
  double zeta = 0.0;      // min entry of the time-1 transition matrix
  double vartheta = 0.0;  // -log(1 - zeta)
};

// Two independent copies of the chain started from i and j, with the second
// aliased to the first from their coalescence time tau on. tau is +inf when
// the copies never meet within the horizon.
struct merged_chains {
  chain_path first;
  chain_path second;
  double tau = std::numeric_limits<double>::infinity();
};

struct coupling_sample {
  double tau = 0.0;
  chain_path first;
  chain_path second;
};

generator_matrix validate_generator(const Eigen::MatrixXd& raw);

// Stationary law of an irreducible chain, solved from lambda^T Q = 0 with the
// last balance equation replaced by normalization; residual checked at 1e-12.
Eigen::VectorXd invariant_distribution(const generator_matrix& g);

// e^{tQ} via uniformization (Poisson-weighted powers of I + Q/rate), with
// recursive halving-and-squaring for large rate*t. Rows sum to 1 within 1e-10.
Eigen::MatrixXd transition_matrix(const generator_matrix& g, double t);

coupling_constants compute_coupling_constants(const generator_matrix& g);

// Exact event-by-event simulation over [0, horizon].
chain_path simulate_chain(const generator_matrix& g, int initial_state, double horizon,
                          rng::stream& rs);

// Thinning against the rate bound; position_at feeds the x-dependence.
chain_path simulate_chain(const state_dependent_generator& g, int initial_state,
                          double horizon,
                          const std::function<Eigen::VectorXd(double)>& position_at,
                          rng::stream& rs);

// Runs two independent copies until they first occupy the same state (checked
// at jump times), then aliases the second to the first. Throws CouplingTimeout
// if coalescence has not happened by time_cap.
coupling_sample sample_coupling_time(const generator_matrix& g, int i, int j,
                                     rng::stream& rs, double time_cap = 1e6);

// Same walk truncated at a fixed horizon; no timeout, tau may be +inf.
merged_chains simulate_merged_chains(const generator_matrix& g, int i, int j,
                                     double horizon, rng::stream& rs);

}  // namespace rsde::chain
