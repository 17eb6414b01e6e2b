#include "rsde/sde.hpp"

#include <cmath>
#include <string>

#include "grid_detail.hpp"

namespace rsde::sde {

int rs_model::num_regimes() const {
  if (std::holds_alternative<chain::generator_matrix>(switching)) {
    return std::get<chain::generator_matrix>(switching).n();
  }
  const auto& sg = std::get<chain::state_dependent_generator>(switching);
  return sg.at(Eigen::VectorXd::Zero(dim)).n();
}

const chain::generator_matrix& rs_model::constant_switching() const {
  if (!std::holds_alternative<chain::generator_matrix>(switching)) {
    fail("UnsupportedModel", "switching is state-dependent");
  }
  return std::get<chain::generator_matrix>(switching);
}

Eigen::VectorXd trajectory::x_at(double t) const {
  if (times.empty()) fail("EmptySample", "trajectory has no nodes");
  if (t <= times.front()) return x.front();
  if (t >= times.back()) return x.back();
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  const std::size_t k = static_cast<std::size_t>(it - times.begin());
  const double t0 = times[k - 1], t1 = times[k];
  const double w = t1 > t0 ? (t - t0) / (t1 - t0) : 0.0;
  return (1.0 - w) * x[k - 1] + w * x[k];
}

int trajectory::regime_at(double t) const {
  if (times.empty()) fail("EmptySample", "trajectory has no nodes");
  if (t <= times.front()) return regime.front();
  if (t >= times.back()) return regime.back();
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  return regime[static_cast<std::size_t>(it - times.begin()) - 1];
}

namespace {

void check_integration_args(const rs_model& m, const Eigen::VectorXd& x0, double T,
                            double h) {
  if (x0.size() != m.dim) fail("DimensionMismatch", "initial state has wrong dimension");
  if (T < 0.0) fail("NegativeTime", "horizon must be nonnegative");
  if (h <= 0.0) fail("StepTooLarge", "step size must be positive");
  if (T > 0.0 && h > T * (1.0 + 1e-12)) {
    fail("StepTooLarge", "step size exceeds the horizon");
  }
}

bool taming_on(const integrate_options& opt, double h) {
  switch (opt.taming) {
    case integrate_options::taming_mode::on:
      return true;
    case integrate_options::taming_mode::off:
      return false;
    case integrate_options::taming_mode::automatic:
      return h > 1e-3;
  }
  return false;
}

// One Euler-Maruyama substep; coefficient buffers live in the caller.
struct stepper {
  const rs_model& m;
  bool tame;
  Eigen::VectorXd bbuf;
  Eigen::MatrixXd sbuf;
  Eigen::VectorXd dw;

  stepper(const rs_model& model, bool tame_drift)
      : m(model), tame(tame_drift), bbuf(model.dim), sbuf(model.dim, model.noise_dim),
        dw(model.noise_dim) {}

  void draw_noise(double dt, rng::stream& rs) {
    const double sq = std::sqrt(dt);
    for (int k = 0; k < m.noise_dim; ++k) dw(k) = sq * rs.normal();
  }

  void advance(Eigen::VectorXd& x, int regime, double dt, double t_next) {
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
  }
};

using observer_fn = std::function<void(std::size_t, const Eigen::VectorXd&, int)>;

// Core loop along a fixed switching path.
trajectory run_along_path(const rs_model& m, const Eigen::VectorXd& x0,
                          const chain::chain_path& path, double T, double h,
                          rng::stream& rs, const integrate_options& opt,
                          const std::vector<double>& sample_times, const observer_fn& observe,
                          bool record) {
  std::vector<double> forced = opt.forced_times;
  auto g = detail::make_grid(T, h, &path, nullptr, sample_times, forced);
  const std::size_t n = g.nodes();

  trajectory out;
  if (record) {
    out.times = g.t;
    out.x.reserve(n);
    out.regime = g.regime_a;
  }

  stepper st(m, taming_on(opt, h));
  Eigen::VectorXd x = x0;
  if (record) out.x.push_back(x);
  if (observe && g.sample_idx[0] >= 0) {
    observe(static_cast<std::size_t>(g.sample_idx[0]), x, g.regime_a[0]);
  }
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const double dt = g.t[k + 1] - g.t[k];
    if (!m.zero_noise) st.draw_noise(dt, rs);
    st.advance(x, g.regime_a[k], dt, g.t[k + 1]);
    if (record) out.x.push_back(x);
    if (observe && g.sample_idx[k + 1] >= 0) {
      observe(static_cast<std::size_t>(g.sample_idx[k + 1]), x, g.regime_a[k + 1]);
    }
  }
  return out;
}

// Core loop with state-dependent switching: thinning proposals are drawn up
// front (a Poisson process at the majorant rate is independent of the path)
// and accepted with probability q_i.(x)/rate_bound at their grid nodes.
trajectory run_state_dependent(const rs_model& m, const Eigen::VectorXd& x0, int i0,
                               double T, double h, rng::stream& rs,
                               const integrate_options& opt) {
  const auto& sg = std::get<chain::state_dependent_generator>(m.switching);
  if (sg.rate_bound <= 0.0) fail("RateBoundViolated", "thinning majorant must be positive");

  std::vector<double> proposals;
  double tp = 0.0;
  while (true) {
    tp += rs.exponential(sg.rate_bound);
    if (tp > T) break;
    proposals.push_back(tp);
  }

  auto g = detail::make_grid(T, h, nullptr, nullptr, opt.forced_times, proposals);
  const std::size_t n = g.nodes();

  trajectory out;
  out.times = g.t;
  out.x.reserve(n);
  out.regime.reserve(n);

  stepper st(m, taming_on(opt, h));
  Eigen::VectorXd x = x0;
  int regime = i0;
  out.x.push_back(x);
  out.regime.push_back(regime);
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const double dt = g.t[k + 1] - g.t[k];
    if (!m.zero_noise) st.draw_noise(dt, rs);
    st.advance(x, regime, dt, g.t[k + 1]);
    if (g.marked[k + 1]) {
      const chain::generator_matrix local = sg.at(x);
      if (regime >= local.n()) fail("InvalidRegime", "regime out of range for local generator");
      const double exit = -local.q(regime, regime);
      if (exit > sg.rate_bound * (1.0 + 1e-12)) {
        fail("RateBoundViolated", "local exit rate exceeds the majorant");
      }
      double u = rs.uniform() * sg.rate_bound;
      for (int j = 0; j < local.n(); ++j) {
        if (j == regime) continue;
        u -= local.q(regime, j);
        if (u <= 0.0) {
          regime = j;
          break;
        }
      }
    }
    out.x.push_back(x);
    out.regime.push_back(regime);
  }
  return out;
}

}  // namespace

trajectory integrate(const rs_model& m, const Eigen::VectorXd& x0, int i0, double T,
                     double h, rng::stream& rs, const integrate_options& opt) {
  check_integration_args(m, x0, T, h);
  if (i0 < 0 || i0 >= m.num_regimes()) fail("InvalidRegime", "initial regime out of range");

  if (m.switching_state_free) {
    const auto path = chain::simulate_chain(m.constant_switching(), i0, T, rs);
    return run_along_path(m, x0, path, T, h, rs, opt, {}, nullptr, true);
  }
  return run_state_dependent(m, x0, i0, T, h, rs, opt);
}

trajectory integrate_given_path(const rs_model& m, const Eigen::VectorXd& x0,
                                const chain::chain_path& path, double T, double h,
                                rng::stream& rs, const integrate_options& opt) {
  check_integration_args(m, x0, T, h);
  return run_along_path(m, x0, path, T, h, rs, opt, {}, nullptr, true);
}

void integrate_observed(const rs_model& m, const Eigen::VectorXd& x0, int i0, double T,
                        double h, rng::stream& rs, const integrate_options& opt,
                        const std::vector<double>& sample_times,
                        const std::function<void(std::size_t, const Eigen::VectorXd&, int)>& observe) {
  check_integration_args(m, x0, T, h);
  if (i0 < 0 || i0 >= m.num_regimes()) fail("InvalidRegime", "initial regime out of range");

  if (m.switching_state_free) {
    const auto path = chain::simulate_chain(m.constant_switching(), i0, T, rs);
    run_along_path(m, x0, path, T, h, rs, opt, sample_times, observe, false);
    return;
  }
  const trajectory tr = run_state_dependent(m, x0, i0, T, h, rs, opt);
  for (std::size_t k = 0; k < sample_times.size(); ++k) {
    observe(k, tr.x_at(sample_times[k]), tr.regime_at(sample_times[k]));
  }
}

double exact_example_solution(double x, int regime, double t, double b, double q) {
  if (t < 0.0) fail("NegativeTime", "flow time must be nonnegative");
  if (regime == 0) return x + b * t;
  if (regime != 1) fail("InvalidRegime", "exact flow has regimes 0 and 1");
  if (q <= 1.0) fail("InvalidExponent", "contracting flow needs q > 1");
  if (x == 0.0) return 0.0;
  const double s = x > 0.0 ? 1.0 : -1.0;
  return s * std::pow(std::pow(std::abs(x), 1.0 - q) + (q - 1.0) * t, 1.0 / (1.0 - q));
}

double exact_example_endpoint(const chain::chain_path& path, double x0, double T, double b,
                              double q) {
  double x = x0;
  double t = 0.0;
  int s = path.initial_state;
  for (const auto& [time, state] : path.events) {
    if (time >= T) break;
    x = exact_example_solution(x, s, time - t, b, q);
    t = time;
    s = state;
  }
  return exact_example_solution(x, s, T - t, b, q);
}

growth_report linear_growth_constant(const rs_model& m, const std::vector<double>& radii,
                                     const std::vector<Eigen::VectorXd>& directions) {
  if (!m.diffusion_state_free) {
    fail("UnsupportedModel", "growth constant needs regime-only volatility");
  }
  if (radii.empty() || directions.empty()) fail("EmptySample", "need probe radii and directions");

  const int regimes = m.num_regimes();
  Eigen::VectorXd bbuf(m.dim);
  Eigen::MatrixXd sbuf(m.dim, m.noise_dim);

  growth_report rep;
  rep.K_hat = -std::numeric_limits<double>::infinity();
  for (const double r : radii) {
    for (const auto& dir : directions) {
      if (dir.size() != m.dim) fail("DimensionMismatch", "probe direction has wrong dimension");
      const double norm = dir.norm();
      const Eigen::VectorXd x = norm > 0.0 ? Eigen::VectorXd(r * dir / norm)
                                           : Eigen::VectorXd::Zero(m.dim);
      for (int i = 0; i < regimes; ++i) {
        m.drift(x, i, bbuf);
        m.diffusion(x, i, sbuf);
        const double num = 2.0 * x.dot(bbuf) + (sbuf * sbuf.transpose()).trace();
        const double ratio = num / (1.0 + x.squaredNorm());
        if (ratio > rep.K_hat) {
          rep.K_hat = ratio;
          rep.argmax_x = x;
          rep.argmax_regime = i;
        }
      }
    }
  }

  if (m.switching_state_free) {
    const auto& g = m.constant_switching();
    if (g.n() >= 2 && g.irreducible) {
      rep.vartheta = chain::compute_coupling_constants(g).vartheta;
      rep.below_vartheta = rep.K_hat < rep.vartheta;
    }
  }
  return rep;
}

moment_curve second_moment_curve(const rs_model& m, const Eigen::VectorXd& x0, int i0,
                                 const std::vector<double>& times, long replicates,
                                 double h, const rng::key& key, double K_hat) {
  if (replicates < 100) fail("TooFewReplicates", "need at least 100 replicates");
  if (times.empty()) fail("EmptySample", "need at least one sample time");
  double T = 0.0;
  for (const double t : times) {
    if (t < 0.0) fail("NegativeTime", "sample times must be nonnegative");
    T = std::max(T, t);
  }

  const std::size_t nt = times.size();
  std::vector<double> sum(nt, 0.0), sum_sq(nt, 0.0);
  integrate_options opt;
  for (long r = 0; r < replicates; ++r) {
    auto rs = rng::make_stream(key, static_cast<std::uint64_t>(r));
    integrate_observed(m, x0, i0, T, h, rs, opt, times,
                       [&](std::size_t k, const Eigen::VectorXd& x, int) {
                         const double v = x.squaredNorm();
                         sum[k] += v;
                         sum_sq[k] += v * v;
                       });
  }

  moment_curve curve;
  curve.times = times;
  curve.replicates = replicates;
  curve.K_hat = K_hat;
  const double n = static_cast<double>(replicates);
  curve.mean_sq.resize(nt);
  curve.stderr_mean_sq.resize(nt);
  curve.bound.resize(nt);
  for (std::size_t k = 0; k < nt; ++k) {
    const double mean = sum[k] / n;
    const double var = std::max(0.0, sum_sq[k] / n - mean * mean);
    curve.mean_sq[k] = mean;
    curve.stderr_mean_sq[k] = std::sqrt(var / n);
    curve.bound[k] = (1.0 + x0.squaredNorm()) * std::exp(K_hat * times[k]);
  }
  return curve;
}

namespace models {

rs_model power_drift(double b, double exponent, double sigma0, double sigma1,
                     const Eigen::MatrixXd& rates) {
  if (exponent <= 1.0) fail("InvalidExponent", "contracting drift needs exponent > 1");
  rs_model m;
  m.name = "power-drift";
  m.dim = 1;
  m.noise_dim = 1;
  m.drift = [b, exponent](const Eigen::VectorXd& x, int i, Eigen::VectorXd& out) {
    if (i == 0) {
      out(0) = b;
    } else {
      const double v = x(0);
      out(0) = v == 0.0 ? 0.0 : (v > 0.0 ? -1.0 : 1.0) * std::pow(std::abs(v), exponent);
    }
  };
  m.diffusion = [sigma0, sigma1](const Eigen::VectorXd&, int i, Eigen::MatrixXd& out) {
    out(0, 0) = i == 0 ? sigma0 : sigma1;
  };
  m.switching = chain::validate_generator(rates);
  m.zero_noise = sigma0 == 0.0 && sigma1 == 0.0;
  m.diffusion_state_free = true;
  m.switching_state_free = true;
  return m;
}

rs_model planar_degenerate(double ball_radius, const Eigen::MatrixXd& rates) {
  if (ball_radius <= 0.0) fail("LevelOutOfRange", "ball radius must be positive");
  rs_model m;
  m.name = "planar-degenerate";
  m.dim = 2;
  m.noise_dim = 2;
  m.drift = [](const Eigen::VectorXd& x, int i, Eigen::VectorXd& out) {
    if (i == 1) {
      out = -x;
    } else {
      out(0) = -x(1);
      out(1) = x(0);
    }
  };
  const double r2 = ball_radius * ball_radius;
  m.diffusion = [r2](const Eigen::VectorXd& x, int i, Eigen::MatrixXd& out) {
    out.setZero();
    if (i == 1) {
      const double s = std::max(0.0, 1.0 - x.squaredNorm() / r2);
      out(0, 0) = s * s;
      out(1, 1) = s * s;
    } else {
      out(0, 0) = 1.0;
      out(1, 1) = 1.0;
    }
  };
  m.switching = chain::validate_generator(rates);
  m.zero_noise = false;
  m.diffusion_state_free = false;
  m.switching_state_free = true;
  return m;
}

}  // namespace models

}  // namespace rsde::sde
