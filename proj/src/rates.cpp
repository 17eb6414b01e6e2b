#include "rsde/rates.hpp"

#include <cmath>
#include <string>

#include "rsde/quad.hpp"

namespace rsde::rates {

namespace {

double checked_value(const rate_spec& r, double u) {
  const double v = r(u);
  if (!(v > 0.0) || !std::isfinite(v)) {
    fail("NonPositiveTheta", "rate function nonpositive at u = " + std::to_string(u));
  }
  return v;
}

}  // namespace

double rate_spec::operator()(double u) const {
  switch (s) {
    case shape::power:
      return std::pow(u, exponent);
    case shape::linear:
      return kappa * u;
    case shape::custom:
      return fn(u);
  }
  return 0.0;
}

double rate_spec::deriv(double u) const {
  switch (s) {
    case shape::power:
      return exponent * std::pow(u, exponent - 1.0);
    case shape::linear:
      return kappa;
    case shape::custom: {
      const double h = 1e-6 * (1.0 + std::abs(u));
      return (fn(u + h) - fn(u - h)) / (2.0 * h);
    }
  }
  return 0.0;
}

double rate_spec::deriv2(double u) const {
  switch (s) {
    case shape::power:
      return exponent * (exponent - 1.0) * std::pow(u, exponent - 2.0);
    case shape::linear:
      return 0.0;
    case shape::custom: {
      const double h = 1e-4 * (1.0 + std::abs(u));
      return (fn(u + h) - 2.0 * fn(u) + fn(u - h)) / (h * h);
    }
  }
  return 0.0;
}

rate_spec rate_spec::power(double e) {
  rate_spec r;
  r.s = shape::power;
  r.exponent = e;
  return r;
}

rate_spec rate_spec::linear(double k) {
  if (k <= 0.0) fail("NonPositiveTheta", "linear rate needs a positive slope");
  rate_spec r;
  r.s = shape::linear;
  r.kappa = k;
  return r;
}

rate_spec rate_spec::custom(std::function<double(double)> f) {
  rate_spec r;
  r.s = shape::custom;
  r.fn = std::move(f);
  return r;
}

double Theta(const rate_spec& theta, double t) {
  if (t < 1.0) fail("LevelOutOfRange", "Theta is defined on [1, infinity)");
  if (theta.s == rate_spec::shape::power) {
    const double p = theta.exponent;
    if (p <= 0.0 || p > 1.0) fail("InvalidExponent", "theta exponent must lie in (0,1]");
    if (p == 1.0) return std::log(t);
    return (std::pow(t, 1.0 - p) - 1.0) / (1.0 - p);
  }
  if (theta.s == rate_spec::shape::linear) {
    return std::log(t) / theta.kappa;
  }
  if (t == 1.0) return 0.0;
  return quad::integrate([&theta](double u) { return 1.0 / checked_value(theta, u); }, 1.0, t);
}

double Theta_inv(const rate_spec& theta, double s) {
  if (s < 0.0) fail("LevelOutOfRange", "Theta inverse is defined on [0, infinity)");
  if (theta.s == rate_spec::shape::power) {
    const double p = theta.exponent;
    if (p <= 0.0 || p > 1.0) fail("InvalidExponent", "theta exponent must lie in (0,1]");
    if (p == 1.0) return std::exp(s);
    return std::pow(1.0 + (1.0 - p) * s, 1.0 / (1.0 - p));
  }
  if (theta.s == rate_spec::shape::linear) {
    return std::exp(theta.kappa * s);
  }
  if (s == 0.0) return 1.0;
  return quad::bisect_expanding([&theta, s](double t) { return Theta(theta, t) - s; }, 1.0,
                                2.0, 1e-12, 200);
}

double theta_rate(const rate_spec& theta, double t) {
  return checked_value(theta, Theta_inv(theta, t));
}

psi_profile_t psi_profile(const rate_spec& psi, double gamma) {
  if (!(gamma > 0.0)) fail("LevelOutOfRange", "gamma must be positive");

  psi_profile_t out;
  out.gamma = gamma;

  if (psi.s == rate_spec::shape::power && psi.exponent > 1.0) {
    const double q = psi.exponent;
    const double gq = std::pow(gamma, 1.0 - q);
    out.value = [gamma, q, gq](double t) {
      if (!(t > 0.0) || t > gamma) fail("LevelOutOfRange", "Psi needs t in (0, gamma]");
      return (std::pow(t, 1.0 - q) - gq) / (q - 1.0);
    };
    out.inverse = [q, gq](double s) {
      if (s < 0.0) fail("LevelOutOfRange", "Psi inverse needs s >= 0");
      return std::pow(gq + (q - 1.0) * s, 1.0 / (1.0 - q));
    };
    return out;
  }

  if (psi.s == rate_spec::shape::linear ||
      (psi.s == rate_spec::shape::power && psi.exponent == 1.0)) {
    const double k = psi.s == rate_spec::shape::linear ? psi.kappa : 1.0;
    out.value = [gamma, k](double t) {
      if (!(t > 0.0) || t > gamma) fail("LevelOutOfRange", "Psi needs t in (0, gamma]");
      return std::log(gamma / t) / k;
    };
    out.inverse = [gamma, k](double s) {
      if (s < 0.0) fail("LevelOutOfRange", "Psi inverse needs s >= 0");
      return gamma * std::exp(-k * s);
    };
    return out;
  }

  if (psi.s == rate_spec::shape::power) {
    fail("InvalidExponent", "psi power exponent must be >= 1");
  }

  rate_spec copy = psi;
  out.value = [copy, gamma](double t) {
    if (!(t > 0.0) || t > gamma) fail("LevelOutOfRange", "Psi needs t in (0, gamma]");
    if (t == gamma) return 0.0;
    return quad::integrate([&copy](double u) { return 1.0 / checked_value(copy, u); }, t, gamma);
  };
  auto value = out.value;
  out.inverse = [value, gamma](double s) {
    if (s < 0.0) fail("LevelOutOfRange", "Psi inverse needs s >= 0");
    if (s == 0.0) return gamma;
    // Psi decreases from +inf at 0+ to 0 at gamma; bracket downward from gamma.
    double lo = gamma;
    int tries = 0;
    while (value(lo) < s) {
      lo *= 0.5;
      if (++tries > 2000) fail("BracketInvalid", "Psi inverse bracket not found");
    }
    return quad::bisect([&value, s](double t) { return value(t) - s; }, lo, gamma, 1e-12, 200);
  };
  return out;
}

double predicted_polynomial_constant(const Eigen::VectorXd& Gamma,
                                     const Eigen::VectorXd& lambda, double q) {
  if (Gamma.size() != lambda.size()) fail("LengthMismatch", "Gamma and lambda sizes differ");
  if (q <= 1.0 + 1e-9) fail("InvalidExponent", "polynomial constant needs q > 1");
  const double mixture = Gamma.dot(lambda);
  if (mixture >= 0.0) fail("NonNegativeMixture", "sum Gamma_i lambda_i must be negative");
  return std::pow((1.0 - q) / 2.0 * mixture, 1.0 / (1.0 - q));
}

double exponential_rate_bound(const Eigen::VectorXd& Gamma, const Eigen::VectorXd& lambda,
                              double kappa, double vartheta, double p) {
  if (Gamma.size() != lambda.size()) fail("LengthMismatch", "Gamma and lambda sizes differ");
  if (kappa <= 0.0 || vartheta <= 0.0 || p <= 0.0) {
    fail("LevelOutOfRange", "kappa, vartheta and p must be positive");
  }
  const double mixture = Gamma.dot(lambda);
  if (mixture >= 0.0) fail("NonNegativeMixture", "sum Gamma_i lambda_i must be negative");
  return std::min(vartheta / p, -kappa * mixture);
}

rate_curve_fit rate_fit(const std::vector<double>& times, const std::vector<double>& values,
                        double t_min, double t_max) {
  if (times.size() != values.size()) fail("LengthMismatch", "times and values sizes differ");

  std::vector<double> xs, ys;
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (times[k] < t_min || times[k] > t_max) continue;
    if (!(values[k] > 0.0)) {
      fail("NonPositiveValue", "log-log fit needs positive values in the window");
    }
    xs.push_back(std::log(times[k]));
    ys.push_back(std::log(values[k]));
  }
  const long n = static_cast<long>(xs.size());
  if (n < 5) fail("InsufficientData", "need at least 5 points inside the fit window");

  double mx = 0.0, my = 0.0;
  for (long k = 0; k < n; ++k) {
    mx += xs[k];
    my += ys[k];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (long k = 0; k < n; ++k) {
    sxx += (xs[k] - mx) * (xs[k] - mx);
    sxy += (xs[k] - mx) * (ys[k] - my);
    syy += (ys[k] - my) * (ys[k] - my);
  }
  if (sxx <= 0.0) fail("InsufficientData", "fit window has no spread in time");

  rate_curve_fit fit;
  fit.n_points = n;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0;
  for (long k = 0; k < n; ++k) {
    const double e = ys[k] - fit.intercept - fit.slope * xs[k];
    ss_res += e * e;
  }
  fit.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  fit.slope_stderr = n > 2 ? std::sqrt(ss_res / (n - 2) / sxx) : 0.0;
  return fit;
}

}  // namespace rsde::rates
