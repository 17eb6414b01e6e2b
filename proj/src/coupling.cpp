#include "rsde/coupling.hpp"

#include <cmath>
#include <string>

#include "grid_detail.hpp"

namespace rsde::coupling {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool taming_on(const sde::integrate_options& opt, double h) {
  switch (opt.taming) {
    case sde::integrate_options::taming_mode::on:
      return true;
    case sde::integrate_options::taming_mode::off:
      return false;
    case sde::integrate_options::taming_mode::automatic:
      return h > 1e-3;
  }
  return false;
}

// One synchronous run. Both paths advance over the shared grid with the same
// Brownian increments; once fully coupled the second path is aliased to the
// first so post-merge equality is exact.
void run_coupled(const sde::rs_model& m, const start& a, const start& b, double T, double h,
                 rng::stream& rs, const couple_options& opt,
                 const std::vector<double>& sample_times, const couple_observer& observe,
                 coupled_trajectory* record) {
  if (!m.switching_state_free || !m.diffusion_state_free) {
    fail("UnsupportedModel", "coupling needs regime-only sigma and a constant generator");
  }
  const auto& g = m.constant_switching();
  if (a.x.size() != m.dim || b.x.size() != m.dim) {
    fail("DimensionMismatch", "start states must match the model dimension");
  }
  if (a.regime < 0 || a.regime >= g.n() || b.regime < 0 || b.regime >= g.n()) {
    fail("InvalidRegime", "start regime out of range");
  }
  if (T < 0.0) fail("NegativeTime", "horizon must be nonnegative");
  if (h <= 0.0) fail("StepTooLarge", "step size must be positive");
  if (T > 0.0 && h > T * (1.0 + 1e-12)) fail("StepTooLarge", "step size exceeds the horizon");

  auto merged = chain::simulate_merged_chains(g, a.regime, b.regime, T, rs);
  auto grid =
      sde::detail::make_grid(T, h, &merged.first, &merged.second, sample_times,
                             opt.integ.forced_times);
  const double tol = sde::detail::grid_tol(T);
  const std::size_t n = grid.nodes();

  if (record) {
    record->tau_ij = merged.tau;
    record->path_a.times = grid.t;
    record->path_a.regime = grid.regime_a;
    record->path_a.x.reserve(n);
    record->path_b.times = grid.t;
    record->path_b.regime = grid.regime_b;
    record->path_b.x.reserve(n);
  }

  const bool tame = taming_on(opt.integ, h);
  Eigen::VectorXd xa = a.x;
  Eigen::VectorXd xb = b.x;
  Eigen::VectorXd bbuf(m.dim);
  Eigen::MatrixXd sbuf(m.dim, m.noise_dim);
  Eigen::VectorXd dw(m.noise_dim);
  bool fully = false;
  double tau_full = kInf;

  auto advance = [&](Eigen::VectorXd& x, int regime, double dt, double t_next) {
    m.drift(x, regime, bbuf);
    const double scale = tame ? dt / (1.0 + dt * bbuf.norm()) : dt;
    if (!m.zero_noise) {
      m.diffusion(x, regime, sbuf);
      x.noalias() += sbuf * dw;
    }
    x.noalias() += bbuf * scale;
    if (!x.allFinite()) {
      fail("NonFiniteState", "state blew up near t = " + std::to_string(t_next));
    }
  };

  for (std::size_t k = 0; k < n; ++k) {
    if (!fully && grid.t[k] >= merged.tau - tol && grid.regime_a[k] == grid.regime_b[k] &&
        (xa - xb).norm() <= opt.merge_tol) {
      fully = true;
      tau_full = grid.t[k];
      xb = xa;
    }
    if (record) {
      record->path_a.x.push_back(xa);
      record->path_b.x.push_back(xb);
    }
    if (observe && grid.sample_idx[k] >= 0) {
      observe(static_cast<std::size_t>(grid.sample_idx[k]), xa, grid.regime_a[k], xb,
              grid.regime_b[k]);
    }
    if (k + 1 == n) break;
    const double dt = grid.t[k + 1] - grid.t[k];
    if (!m.zero_noise) {
      const double sq = std::sqrt(dt);
      for (int j = 0; j < m.noise_dim; ++j) dw(j) = sq * rs.normal();
    }
    advance(xa, grid.regime_a[k], dt, grid.t[k + 1]);
    if (fully) {
      xb = xa;
    } else {
      advance(xb, grid.regime_b[k], dt, grid.t[k + 1]);
    }
  }
  if (record) record->tau_full = tau_full;
}

// Right difference quotient; for concave f this is the minimal subgradient,
// so the reported ratio is the conservative one at kinks.
double right_derivative(const distance::rho_profile& f, double u) {
  const double step = 1e-7 * (1.0 + u);
  return (f.f(u + step) - f.f(u)) / step;
}

struct probe_ratio {
  double value = 0.0;
  double numerator = 0.0;
  double gap = 0.0;  // f(|x-y|)
};

probe_ratio evaluate_probe(const sde::rs_model& m, const distance::rho_profile& f,
                           const rates::rate_spec& psi, int regime, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& y, Eigen::VectorXd& bx,
                           Eigen::VectorXd& by) {
  if (x.size() != m.dim || y.size() != m.dim) {
    fail("DimensionMismatch", "probe pair has wrong dimension");
  }
  const double d = (x - y).norm();
  if (d == 0.0) fail("DegenerateProbe", "probe pair has x = y");
  m.drift(x, regime, bx);
  m.drift(y, regime, by);
  probe_ratio out;
  out.gap = f.f(d);
  out.numerator = right_derivative(f, d) * (x - y).dot(bx - by);
  const double denom = d * psi(out.gap);
  if (!(denom > 0.0)) fail("DegenerateProbe", "psi(f(|x-y|)) vanishes at a probed gap");
  out.value = out.numerator / denom;
  return out;
}

void check_regime(const sde::rs_model& m, int regime) {
  if (regime < 0 || regime >= m.num_regimes()) fail("InvalidRegime", "regime out of range");
}

// delta = inf{t >= 0 : f(1/t) <= eta} by bisection on the monotone indicator.
double threshold_delta(const distance::rho_profile& f, double eta) {
  if (f.f(1e15) <= eta) return 0.0;
  double hi = 1.0;
  while (f.f(1.0 / hi) > eta) {
    hi *= 2.0;
    if (hi > 1e18) fail("ThresholdTooSmall", "f(1/t) never drops to the threshold");
  }
  double lo = hi / 2.0;
  if (hi == 1.0) {
    lo = 0.5;
    while (f.f(1.0 / lo) <= eta) {
      hi = lo;
      lo /= 2.0;
      if (lo < 1e-15) return 0.0;
    }
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (f.f(1.0 / mid) <= eta) {
      hi = mid;
    } else {
      lo = mid;
    }
    if (hi - lo <= 1e-15 * std::max(1.0, hi)) break;
  }
  return hi;
}

}  // namespace

coupled_trajectory couple(const sde::rs_model& m, const start& a, const start& b, double T,
                          double h, rng::stream& rs, const couple_options& opt) {
  coupled_trajectory out;
  run_coupled(m, a, b, T, h, rs, opt, {}, nullptr, &out);
  return out;
}

void couple_observed(const sde::rs_model& m, const start& a, const start& b, double T,
                     double h, rng::stream& rs, const couple_options& opt,
                     const std::vector<double>& sample_times, const couple_observer& observe) {
  run_coupled(m, a, b, T, h, rs, opt, sample_times, observe, nullptr);
}

decay_curve distance_decay_curve(const sde::rs_model& m, const start& a, const start& b,
                                 const distance::rho_profile& f, double p,
                                 const std::vector<double>& times, long replicates, double h,
                                 const rng::key& key, const couple_options& opt) {
  distance::validate_profile(f);
  if (p < 1.0) fail("InvalidOption", "outer exponent p must be at least 1");
  if (times.empty()) fail("EmptySample", "no sample times requested");
  if (times.front() < 0.0) fail("NegativeTime", "sample times must be nonnegative");
  for (std::size_t s = 1; s < times.size(); ++s) {
    if (times[s] <= times[s - 1]) fail("TimesNotIncreasing", "sample times must increase");
  }
  if (replicates < 1) fail("TooFewReplicates", "need at least one replicate");

  const double T = times.back();
  std::vector<double> sum(times.size(), 0.0);
  std::vector<double> sumsq(times.size(), 0.0);

  for (long rep = 0; rep < replicates; ++rep) {
    auto rs = rng::make_stream(key, static_cast<std::uint64_t>(rep));
    couple_observed(m, a, b, T, h, rs, opt, times,
                    [&](std::size_t si, const Eigen::VectorXd& xa, int ia,
                        const Eigen::VectorXd& xb, int ib) {
                      const double r = distance::rho(f, xa, ia, xb, ib);
                      const double w = std::pow(r, p);
                      sum[si] += w;
                      sumsq[si] += w * w;
                    });
  }

  decay_curve out;
  out.times = times;
  out.replicates = replicates;
  out.estimate.resize(times.size());
  out.stderr_.resize(times.size());
  const double nn = static_cast<double>(replicates);
  for (std::size_t s = 0; s < times.size(); ++s) {
    const double mean = sum[s] / nn;
    out.estimate[s] = mean > 0.0 ? std::pow(mean, 1.0 / p) : 0.0;
    if (replicates > 1 && mean > 0.0) {
      const double var = std::max(0.0, (sumsq[s] - nn * mean * mean) / (nn - 1.0));
      const double se_mean = std::sqrt(var / nn);
      out.stderr_[s] = se_mean * std::pow(mean, 1.0 / p - 1.0) / p;
    } else {
      out.stderr_[s] = 0.0;
    }
  }
  return out;
}

std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> probe_grid_1d(double lo, double hi,
                                                                       int n) {
  if (n < 2) fail("InvalidOption", "probe grid needs at least two points");
  if (!(hi > lo)) fail("InvalidOption", "probe grid needs hi > lo");
  std::vector<double> pts(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    pts[static_cast<std::size_t>(k)] = lo + (hi - lo) * static_cast<double>(k) /
                                                static_cast<double>(n - 1);
  }
  std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> pairs;
  pairs.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(n - 1));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      Eigen::VectorXd x(1), y(1);
      x(0) = pts[static_cast<std::size_t>(i)];
      y(0) = pts[static_cast<std::size_t>(j)];
      pairs.emplace_back(std::move(x), std::move(y));
    }
  }
  return pairs;
}

flatness_estimate flatness_constant(
    const sde::rs_model& m, const distance::rho_profile& f, const rates::rate_spec& psi,
    int regime, const std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& probe_pairs) {
  check_regime(m, regime);
  if (probe_pairs.empty()) fail("EmptyProbeSet", "no probe pairs supplied");
  Eigen::VectorXd bx(m.dim), by(m.dim);
  flatness_estimate out;
  out.gamma = -kInf;
  for (const auto& [x, y] : probe_pairs) {
    const auto r = evaluate_probe(m, f, psi, regime, x, y, bx, by);
    if (r.value > out.gamma) {
      out.gamma = r.value;
      out.arg_x = x;
      out.arg_y = y;
    }
  }
  return out;
}

thresholded_flatness flatness_constant_thresholded(
    const sde::rs_model& m, const distance::rho_profile& f, const rates::rate_spec& psi,
    double eta, int regime,
    const std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& probe_pairs) {
  check_regime(m, regime);
  if (!(eta > f.f(1e-12))) {
    fail("ThresholdTooSmall", "eta must exceed the infimum of f on (0, inf)");
  }
  thresholded_flatness out;
  out.eta = eta;
  out.delta = threshold_delta(f, eta);
  out.gamma = -kInf;
  Eigen::VectorXd bx(m.dim), by(m.dim);
  bool any_below = false;
  for (const auto& [x, y] : probe_pairs) {
    const auto r = evaluate_probe(m, f, psi, regime, x, y, bx, by);
    if (r.gap <= eta) {
      any_below = true;
      if (r.value > out.gamma) {
        out.gamma = r.value;
        out.arg_x = x;
        out.arg_y = y;
      }
    } else if (r.numerator > 0.0) {
      out.above_threshold_ok = false;
    }
  }
  if (!any_below) fail("EmptyProbeSet", "no probe pair falls below the threshold");
  return out;
}

flatness_certificate make_flatness_certificate(
    const sde::rs_model& m, const distance::rho_profile& f, std::string f_tag,
    const rates::rate_spec& psi, std::string psi_tag, const Eigen::VectorXd& lambda,
    const std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& probe_pairs, double eta) {
  const int n = m.num_regimes();
  if (lambda.size() != n) fail("LengthMismatch", "lambda must have one weight per regime");

  flatness_certificate cert;
  cert.f_tag = std::move(f_tag);
  cert.psi_tag = std::move(psi_tag);
  cert.eta = eta;
  cert.n_pairs = static_cast<long>(probe_pairs.size());
  cert.gamma.resize(n);
  cert.witnesses.reserve(static_cast<std::size_t>(n));

  bool above_ok = true;
  for (int i = 0; i < n; ++i) {
    if (std::isinf(eta)) {
      auto est = flatness_constant(m, f, psi, i, probe_pairs);
      cert.gamma(i) = est.gamma;
      cert.witnesses.push_back(std::move(est));
    } else {
      auto est = flatness_constant_thresholded(m, f, psi, eta, i, probe_pairs);
      cert.gamma(i) = est.gamma;
      cert.delta = est.delta;
      above_ok = above_ok && est.above_threshold_ok;
      cert.witnesses.push_back({est.gamma, std::move(est.arg_x), std::move(est.arg_y)});
    }
  }
  cert.mixture = cert.gamma.dot(lambda);
  cert.feasible = (cert.gamma.array() <= 0.0).all() && cert.mixture < 0.0 && above_ok;
  return cert;
}

}  // namespace rsde::coupling
