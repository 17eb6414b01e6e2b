#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "rsde/chain.hpp"
#include "rsde/error.hpp"
#include "rsde/rng.hpp"

namespace rsde::sde {

// Coefficients write into preallocated buffers so the stepping loop does not
// allocate: drift(x, i, out_b) with out_b of size dim, diffusion(x, i,
// out_sigma) with out_sigma of size dim x noise_dim.
using drift_fn = std::function<void(const Eigen::VectorXd&, int, Eigen::VectorXd&)>;
using diffusion_fn = std::function<void(const Eigen::VectorXd&, int, Eigen::MatrixXd&)>;

struct rs_model {
  std::string name;
  int dim = 1;
  int noise_dim = 1;
  drift_fn drift;
  diffusion_fn diffusion;
  std::variant<chain::generator_matrix, chain::state_dependent_generator> switching;
  bool diffusion_state_free = true;  // sigma depends on the regime only
  bool switching_state_free = true;  // generator constant in x
  bool zero_noise = false;           // sigma identically zero

  int num_regimes() const;
  const chain::generator_matrix& constant_switching() const;
};

// Discretized path on the integration grid. The grid includes every switch
// time, so the regime column is exact for the simulated chain.
struct trajectory {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> x;
  std::vector<int> regime;

  double horizon() const { return times.empty() ? 0.0 : times.back(); }
  Eigen::VectorXd x_at(double t) const;  // linear interpolation
  int regime_at(double t) const;         // right-continuous
};

struct integrate_options {
  enum class taming_mode { automatic, on, off };
  // automatic tames the drift increment (b dt -> b dt / (1 + dt |b|))
  // whenever h > 1e-3.
  taming_mode taming = taming_mode::automatic;
  std::vector<double> forced_times;  // merged into the grid
};

// Euler-Maruyama with chain-first simulation: the switching path is drawn
// over [0, T], its jump times are inserted into the uniform grid, and each
// substep uses the regime in force at its left endpoint.
trajectory integrate(const rs_model& m, const Eigen::VectorXd& x0, int i0, double T,
                     double h, rng::stream& rs, const integrate_options& opt = {});

// Same stepping along an externally supplied switching path.
trajectory integrate_given_path(const rs_model& m, const Eigen::VectorXd& x0,
                                const chain::chain_path& path, double T, double h,
                                rng::stream& rs, const integrate_options& opt = {});

// Memory-light form for Monte Carlo loops: nothing is recorded, observe is
// called once per requested sample time (index into sample_times).
void integrate_observed(const rs_model& m, const Eigen::VectorXd& x0, int i0, double T,
                        double h, rng::stream& rs, const integrate_options& opt,
                        const std::vector<double>& sample_times,
                        const std::function<void(std::size_t, const Eigen::VectorXd&, int)>& observe);

// Closed-form flow of the piecewise power-drift family with sigma = 0:
// regime 0 translates at speed b, regime 1 follows dx = -sgn(x)|x|^q dt.
double exact_example_solution(double x, int regime, double t, double b, double q);

// The same flow composed along a switching path up to time T.
double exact_example_endpoint(const chain::chain_path& path, double x0, double T, double b,
                              double q);

// Smallest K with 2<x, b(x,i)> + tr(sigma sigma^T)(x,i) <= K (1 + |x|^2) over
// the probe set, and whether it clears the switching threshold vartheta.
struct growth_report {
  double K_hat = 0.0;
  Eigen::VectorXd argmax_x;
  int argmax_regime = 0;
  double vartheta = std::numeric_limits<double>::quiet_NaN();
  bool below_vartheta = false;
};
growth_report linear_growth_constant(const rs_model& m, const std::vector<double>& radii,
                                     const std::vector<Eigen::VectorXd>& directions);

// Monte Carlo second-moment curve with the exponential comparison bound
// (1 + |x0|^2) e^{K_hat t} attached for display.
struct moment_curve {
  std::vector<double> times;
  std::vector<double> mean_sq;
  std::vector<double> stderr_mean_sq;
  std::vector<double> bound;
  long replicates = 0;
  double K_hat = 0.0;
};
moment_curve second_moment_curve(const rs_model& m, const Eigen::VectorXd& x0, int i0,
                                 const std::vector<double>& times, long replicates,
                                 double h, const rng::key& key, double K_hat);

namespace models {

// 1d family behind the worked examples: regime 0 drifts at constant speed b,
// regime 1 pulls toward the origin at rate |x|^exponent, regime-wise constant
// volatilities. Covers the zero-noise case (sigma0 = sigma1 = 0).
rs_model power_drift(double b, double exponent, double sigma0, double sigma1,
                     const Eigen::MatrixXd& rates);

// Planar model with a degenerate regime: regime 1 contracts (b = -x) with
// noise supported exactly on the open unit-scaled ball (vanishing outside),
// regime 0 rotates with unit noise everywhere.
rs_model planar_degenerate(double ball_radius, const Eigen::MatrixXd& rates);

}  // namespace models

}  // namespace rsde::sde
