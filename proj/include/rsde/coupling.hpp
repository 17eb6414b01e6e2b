#pragma once

#include <Eigen/Dense>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "rsde/distance.hpp"
#include "rsde/error.hpp"
#include "rsde/rates.hpp"
#include "rsde/rng.hpp"
#include "rsde/sde.hpp"

namespace rsde::coupling {

struct start {
  Eigen::VectorXd x;
  int regime = 0;
};

struct couple_options {
  // An exact grid hit of X = Y has probability zero, so full coupling is
  // declared at the first node past the chain coalescence where the states
  // agree within merge_tol; the second path is aliased to the first from
  // that node on.
  double merge_tol = 1e-9;
  sde::integrate_options integ;
};

// Synchronous coupling of two copies of the model: the switching chains run
// independently until they coalesce at tau_ij and are merged afterwards, and
// both diffusions consume the identical Brownian increment sequence.
struct coupled_trajectory {
  sde::trajectory path_a;
  sde::trajectory path_b;
  double tau_ij = std::numeric_limits<double>::infinity();
  double tau_full = std::numeric_limits<double>::infinity();
};

// Requires regime-only sigma and a constant generator; the construction has
// no meaning for state-fed switching or state-dependent noise.
coupled_trajectory couple(const sde::rs_model& m, const start& a, const start& b, double T,
                          double h, rng::stream& rs, const couple_options& opt = {});

// Memory-light form for Monte Carlo loops: nothing is recorded, observe runs
// once per sample time with (index into sample_times, x_a, i_a, x_b, i_b).
using couple_observer = std::function<void(std::size_t, const Eigen::VectorXd&, int,
                                           const Eigen::VectorXd&, int)>;
void couple_observed(const sde::rs_model& m, const start& a, const start& b, double T,
                     double h, rng::stream& rs, const couple_options& opt,
                     const std::vector<double>& sample_times, const couple_observer& observe);

struct decay_curve {
  std::vector<double> times;
  std::vector<double> estimate;
  std::vector<double> stderr_;
  long replicates = 0;
};

// Monte Carlo curve of (E[rho^p])^{1/p} along the coupling, rho the product
// semimetric built from f. This estimates the coupling upper bound on the
// corresponding Wasserstein distance, not the distance itself; stderr_ is a
// delta-method bar for the outer power.
decay_curve distance_decay_curve(const sde::rs_model& m, const start& a, const start& b,
                                 const distance::rho_profile& f, double p,
                                 const std::vector<double>& times, long replicates, double h,
                                 const rng::key& key, const couple_options& opt = {});

// Deterministic 1d probe set: all ordered pairs of distinct points on the
// uniform n-point grid over [lo, hi].
std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> probe_grid_1d(double lo, double hi,
                                                                       int n);

// Worst probed value of f'(|x-y|) <x-y, b(x,i)-b(y,i)> / (|x-y| psi(f(|x-y|)))
// for one regime, with the witnessing pair. f' is the right difference
// quotient, the conservative subgradient choice for concave f.
struct flatness_estimate {
  double gamma = 0.0;
  Eigen::VectorXd arg_x;
  Eigen::VectorXd arg_y;
};
flatness_estimate flatness_constant(
    const sde::rs_model& m, const distance::rho_profile& f, const rates::rate_spec& psi,
    int regime, const std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& probe_pairs);

// Thresholded variant for unbounded f: the ratio is maximized over pairs with
// f(|x-y|) <= eta only; pairs above the threshold must have a nonpositive
// numerator (above_threshold_ok). delta = inf{t >= 0 : f(1/t) <= eta}.
struct thresholded_flatness {
  double gamma = 0.0;
  double eta = 0.0;
  double delta = 0.0;
  bool above_threshold_ok = true;
  Eigen::VectorXd arg_x;
  Eigen::VectorXd arg_y;
};
thresholded_flatness flatness_constant_thresholded(
    const sde::rs_model& m, const distance::rho_profile& f, const rates::rate_spec& psi,
    double eta, int regime,
    const std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& probe_pairs);

// Per-regime constants assembled into one report. feasible means every
// Gamma_i <= 0, the invariant mixture sum_i Gamma_i lambda_i < 0, and (for
// finite eta) all above-threshold probes passed. The probe grid is part of
// the evidence so the numbers can be re-audited.
struct flatness_certificate {
  Eigen::VectorXd gamma;
  double mixture = 0.0;
  bool feasible = false;
  double eta = std::numeric_limits<double>::infinity();
  double delta = 0.0;
  std::string f_tag;
  std::string psi_tag;
  long n_pairs = 0;
  std::vector<flatness_estimate> witnesses;  // one per regime
};
flatness_certificate make_flatness_certificate(
    const sde::rs_model& m, const distance::rho_profile& f, std::string f_tag,
    const rates::rate_spec& psi, std::string psi_tag, const Eigen::VectorXd& lambda,
    const std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& probe_pairs,
    double eta = std::numeric_limits<double>::infinity());

}  // namespace rsde::coupling
