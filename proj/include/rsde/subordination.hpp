#pragma once

#include <Eigen/Dense>
#include <functional>
#include <utility>
#include <vector>

#include "rsde/error.hpp"
#include "rsde/rng.hpp"
#include "rsde/sde.hpp"

namespace rsde::subordination {

// Increasing Levy time change. Three kinds: the one-sided stable subordinator
// (index alpha), compound Poisson jumps plus drift, and pure drift. jump_atoms
// holds (size, weight) with weights summing to one.
struct subordinator_spec {
  enum class kind_t { stable, cpp, drift_only };

  kind_t kind = kind_t::stable;
  double alpha = 0.5;
  double beta = 0.0;  // drift
  double rate = 0.0;  // cpp jump intensity
  std::vector<std::pair<double, double>> jump_atoms;

  static subordinator_spec stable_spec(double alpha, double beta = 0.0);
  static subordinator_spec drift_spec(double beta);
  static subordinator_spec cpp_spec(double beta, double rate,
                                    std::vector<std::pair<double, double>> atoms);
};

// Laplace exponent phi(u) = beta u + integral (1 - e^{-u y}) nu(dy); closed
// form per kind (stable: beta u + u^alpha).
double bernstein_phi(const subordinator_spec& spec, double u);

// One marginal draw S(t). The stable kind samples S(1) by the one-sided
// Chambers-Mallows-Stuck transform and scales by t^{1/alpha}.
double sample_subordinator(const subordinator_spec& spec, double t, rng::stream& rs);

struct rate_curve {
  std::vector<double> times;
  std::vector<double> value;
  std::vector<double> stderr_;
  long replicates = 0;
};

// Monte Carlo curve of E[r(S(t))]. For the stable kind each replicate draws
// one S(1) and rides self-similarity across the whole grid, so power-law r
// gives an exactly power-law curve. Batch means feed a stability check that
// throws MomentBlowup when one batch dominates (the empirical signature of
// E[r(S(t))] = infinity, e.g. r(t) = t^a with a >= alpha).
rate_curve subordinate_rate(const std::function<double(double)>& r,
                            const subordinator_spec& spec, const std::vector<double>& times,
                            long replicates, const rng::key& key, int batches = 20);

// One subordinator path observed at sample_times and pushed through a stored
// trajectory: X(S(t_k)) by linear interpolation, exact regime lookup. Throws
// HorizonExceeded when the time change runs past the trajectory; the caller
// resamples or extends.
struct time_changed_path {
  std::vector<double> times;
  std::vector<double> s;
  std::vector<Eigen::VectorXd> x;
  std::vector<int> regime;
};
time_changed_path subordinate_path(const sde::trajectory& traj, const subordinator_spec& spec,
                                   const std::vector<double>& sample_times, rng::stream& rs);

}  // namespace rsde::subordination
