#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "rsde/error.hpp"

namespace rsde::rates {

// Scalar rate function on (0, infinity), either a closed-form family (power
// u^e, linear kappa*u) or a caller-supplied callable. Closed-form shapes get
// exact primitives and inverses; custom shapes fall back to adaptive
// quadrature and bracketed bisection.
struct rate_spec {
  enum class shape { power, linear, custom };

  shape s = shape::power;
  double exponent = 0.5;
  double kappa = 1.0;
  std::function<double(double)> fn;

  double operator()(double u) const;
  double deriv(double u) const;
  double deriv2(double u) const;

  static rate_spec power(double e);
  static rate_spec linear(double k);
  static rate_spec custom(std::function<double(double)> f);
};

// Theta(t) = int_1^t du / theta(u) for non-decreasing concave theta on
// [1, infinity) with theta > 0. Requires t >= 1.
double Theta(const rate_spec& theta, double t);

// Inverse of Theta on [0, infinity).
double Theta_inv(const rate_spec& theta, double s);

// Subgeometric rate r(t) = theta(Theta^{-1}(t)).
double theta_rate(const rate_spec& theta, double t);

// Psi_gamma(t) = int_t^gamma du / psi(u) on (0, gamma], and its inverse on
// [0, infinity), for convex psi vanishing only at 0.
struct psi_profile_t {
  std::function<double(double)> value;    // Psi_gamma
  std::function<double(double)> inverse;  // Psi_gamma^{-1}
  double gamma = 1.0;
};
psi_profile_t psi_profile(const rate_spec& psi, double gamma);

// Limit constant of t^{1/(q-1)} * W(t) for psi(u) = u^q:
// ((1-q)/2 * sum_i Gamma_i lambda_i)^{1/(1-q)}.
double predicted_polynomial_constant(const Eigen::VectorXd& Gamma,
                                     const Eigen::VectorXd& lambda, double q);

// Largest exponential decay rate permitted by the switching and contraction
// constants: min(vartheta / p, -kappa * sum_i Gamma_i lambda_i).
double exponential_rate_bound(const Eigen::VectorXd& Gamma, const Eigen::VectorXd& lambda,
                              double kappa, double vartheta, double p);

// Least-squares fit of log(value) against log(time) over [t_min, t_max].
struct rate_curve_fit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  double slope_stderr = 0.0;
  long n_points = 0;
};
rate_curve_fit rate_fit(const std::vector<double>& times, const std::vector<double>& values,
                        double t_min, double t_max);

}  // namespace rsde::rates
