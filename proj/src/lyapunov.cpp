#include "rsde/lyapunov.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <variant>

#include "rsde/error.hpp"

namespace rsde::lyapunov {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&, int)>& v,
                            const Eigen::VectorXd& x, int i) {
  const double h = 1e-6 * (1.0 + x.norm());
  const int d = static_cast<int>(x.size());
  Eigen::VectorXd g(d);
  Eigen::VectorXd p = x;
  for (int k = 0; k < d; ++k) {
    p(k) = x(k) + h;
    const double fp = v(p, i);
    p(k) = x(k) - h;
    const double fm = v(p, i);
    p(k) = x(k);
    g(k) = (fp - fm) / (2.0 * h);
  }
  return g;
}

Eigen::MatrixXd fd_hessian(const std::function<double(const Eigen::VectorXd&, int)>& v,
                           const Eigen::VectorXd& x, int i) {
  const double h = 1e-4 * (1.0 + x.norm());
  const int d = static_cast<int>(x.size());
  Eigen::MatrixXd H(d, d);
  const double f0 = v(x, i);
  Eigen::VectorXd p = x;
  for (int k = 0; k < d; ++k) {
    p(k) = x(k) + h;
    const double fp = v(p, i);
    p(k) = x(k) - h;
    const double fm = v(p, i);
    p(k) = x(k);
    H(k, k) = (fp - 2.0 * f0 + fm) / (h * h);
  }
  for (int k = 0; k < d; ++k) {
    for (int l = k + 1; l < d; ++l) {
      p(k) = x(k) + h;
      p(l) = x(l) + h;
      const double fpp = v(p, i);
      p(l) = x(l) - h;
      const double fpm = v(p, i);
      p(k) = x(k) - h;
      const double fmm = v(p, i);
      p(l) = x(l) + h;
      const double fmp = v(p, i);
      p(k) = x(k);
      p(l) = x(l);
      H(k, l) = H(l, k) = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
    }
  }
  return H;
}

const Eigen::MatrixXd& switch_rates(const sde::rs_model& model, const Eigen::VectorXd& x,
                                    Eigen::MatrixXd& storage) {
  if (const auto* cg = std::get_if<chain::generator_matrix>(&model.switching)) return cg->q;
  storage = std::get<chain::state_dependent_generator>(model.switching).at(x).q;
  return storage;
}

Eigen::VectorXd unit_direction(const Eigen::VectorXd& d, int dim) {
  if (static_cast<int>(d.size()) != dim)
    fail("DimensionMismatch", "direction dimension does not match the model");
  const double n = d.norm();
  if (!(n > 0.0)) fail("ZeroDirection", "probe directions must be nonzero");
  return d / n;
}

std::vector<Eigen::VectorXd> unit_directions(const std::vector<Eigen::VectorXd>& dirs, int dim) {
  if (dirs.empty()) fail("EmptyDirections", "at least one probe direction is required");
  std::vector<Eigen::VectorXd> out;
  out.reserve(dirs.size());
  for (const auto& d : dirs) out.push_back(unit_direction(d, dim));
  return out;
}

// Lift a regime-independent function to (x, i); the switching term of the
// generator vanishes on it because generator rows sum to zero.
regime_function lift_state(const lyapunov_spec& spec) {
  regime_function f;
  auto V = spec.V;
  f.value = [V](const Eigen::VectorXd& x, int) { return V(x); };
  if (spec.V_grad) {
    auto G = spec.V_grad;
    f.gradient = [G](const Eigen::VectorXd& x, int) { return G(x); };
  }
  if (spec.V_hess) {
    auto H = spec.V_hess;
    f.hessian = [H](const Eigen::VectorXd& x, int) { return H(x); };
  }
  return f;
}

regime_function lift_theta_of_state(const lyapunov_spec& spec) {
  regime_function f;
  auto V = spec.V;
  auto th = spec.theta;
  f.value = [V, th](const Eigen::VectorXd& x, int) { return th(V(x)); };
  if (spec.V_grad) {
    auto G = spec.V_grad;
    f.gradient = [V, th, G](const Eigen::VectorXd& x, int) {
      return (th.deriv(V(x)) * G(x)).eval();
    };
    if (spec.V_hess) {
      auto H = spec.V_hess;
      f.hessian = [V, th, G, H](const Eigen::VectorXd& x, int) {
        const double v = V(x);
        const Eigen::VectorXd g = G(x);
        return (th.deriv(v) * H(x) + th.deriv2(v) * g * g.transpose()).eval();
      };
    }
  }
  return f;
}

double checked_level(const std::function<double(const Eigen::VectorXd&)>& V,
                     const Eigen::VectorXd& x) {
  const double v = V(x);
  if (!(v > 1.0))
    fail("LyapunovRange", "V must exceed 1 at probe |x| = " + std::to_string(x.norm()));
  return v;
}

}  // namespace

double generator_action(const sde::rs_model& model, const regime_function& f,
                        const Eigen::VectorXd& x, int i) {
  if (!f.value) fail("MissingEvaluator", "regime function has no value callback");
  if (static_cast<int>(x.size()) != model.dim)
    fail("DimensionMismatch", "probe dimension does not match the model");
  const int n = model.num_regimes();
  if (i < 0 || i >= n) fail("InvalidRegime", "regime index out of range");

  const Eigen::VectorXd g = f.gradient ? f.gradient(x, i) : fd_gradient(f.value, x, i);
  const Eigen::MatrixXd H = f.hessian ? f.hessian(x, i) : fd_hessian(f.value, x, i);
  if (!g.allFinite() || !H.allFinite())
    fail("NonFiniteDerivative", "derivatives of the test function are not finite");

  Eigen::VectorXd b(model.dim);
  model.drift(x, i, b);
  Eigen::MatrixXd s(model.dim, model.noise_dim);
  model.diffusion(x, i, s);

  double a = b.dot(g) + 0.5 * (s.transpose() * H * s).trace();

  Eigen::MatrixXd storage;
  const Eigen::MatrixXd& q = switch_rates(model, x, storage);
  for (int j = 0; j < n; ++j) a += q(i, j) * f.value(x, j);

  if (!std::isfinite(a)) fail("NonFiniteDerivative", "generator action is not finite");
  return a;
}

drift_certificate check_subgeometric_drift(const lyapunov_spec& spec,
                                           const sde::rs_model& model,
                                           const std::vector<double>& annuli,
                                           const std::vector<Eigen::VectorXd>& directions,
                                           const drift_options& opt) {
  if (!spec.V) fail("MissingEvaluator", "spec.V is required");
  if (annuli.size() < 3) fail("TooFewAnnuli", "need at least three probe radii");
  for (std::size_t k = 0; k < annuli.size(); ++k) {
    if (!(annuli[k] > 0.0) || (k > 0 && !(annuli[k] > annuli[k - 1])))
      fail("AnnuliNotIncreasing", "probe radii must be positive and strictly increasing");
  }
  const auto& g = model.constant_switching();
  const int n = g.n();
  if (static_cast<int>(spec.c.size()) != n)
    fail("LengthMismatch", "c must have one entry per regime");

  const auto dirs = unit_directions(directions, model.dim);
  const auto fV = lift_state(spec);
  const auto fTh = lift_theta_of_state(spec);

  drift_certificate cert;
  cert.c = spec.c;
  cert.lambda = chain::invariant_distribution(g);
  cert.mixture = spec.c.dot(cert.lambda);
  cert.margin = opt.margin_frac * spec.c.cwiseAbs();
  cert.scale_invariant_ratios =
      spec.theta.s == rates::rate_spec::shape::linear ||
      (spec.theta.s == rates::rate_spec::shape::power && std::abs(spec.theta.exponent - 1.0) < 1e-12);
  cert.notes = "trend evidence on finitely many probe spheres; the limits are not certified";

  for (double R : annuli) {
    annulus_row row;
    row.radius = R;
    row.drift_ratio = Eigen::VectorXd::Constant(n, -kInf);
    row.theta_prime = -kInf;
    row.theta_over_v = -kInf;
    row.theta_drift_ratio = -kInf;
    for (const auto& d : dirs) {
      const Eigen::VectorXd x = R * d;
      const double v = checked_level(spec.V, x);
      const double tv = spec.theta(v);
      if (!(tv > 0.0)) fail("NonPositiveTheta", "theta(V) must be positive at probes");
      row.theta_prime = std::max(row.theta_prime, spec.theta.deriv(v));
      row.theta_over_v = std::max(row.theta_over_v, tv / v);
      double worst = -kInf;
      for (int i = 0; i < n; ++i) {
        row.drift_ratio(i) = std::max(row.drift_ratio(i), generator_action(model, fV, x, i) / tv);
        worst = std::max(worst, generator_action(model, fTh, x, i) / tv);
      }
      row.theta_drift_ratio = std::max(row.theta_drift_ratio, worst);
    }
    cert.evidence.push_back(std::move(row));
  }

  const std::size_t K = cert.evidence.size();
  const auto& last = cert.evidence[K - 1];
  const auto& prev = cert.evidence[K - 2];
  const auto& prev2 = cert.evidence[K - 3];
  const auto slack = [&](double v) { return opt.trend_tol * (1.0 + std::abs(v)); };

  bool violated = cert.mixture >= 0.0;
  bool level_ok = true;
  for (int i = 0; i < n; ++i) {
    const double ci = spec.c(i);
    const double mi = cert.margin(i);
    if (last.drift_ratio(i) >= ci + mi) violated = true;
    level_ok = level_ok && last.drift_ratio(i) <= ci - mi && prev.drift_ratio(i) <= ci - mi &&
               last.drift_ratio(i) <= prev.drift_ratio(i) + slack(prev.drift_ratio(i));
  }
  const auto shrinking = [&](double a2, double a1, double a0) {
    return std::abs(a1) <= std::abs(a2) + slack(a2) && std::abs(a0) <= std::abs(a1) + slack(a1);
  };
  const bool limit_ok =
      shrinking(prev2.theta_prime, prev.theta_prime, last.theta_prime) &&
      shrinking(prev2.theta_over_v, prev.theta_over_v, last.theta_over_v) &&
      shrinking(prev2.theta_drift_ratio, prev.theta_drift_ratio, last.theta_drift_ratio);

  if (violated)
    cert.verdict = verdict_t::infeasible;
  else if (level_ok && limit_ok && cert.mixture < 0.0)
    cert.verdict = verdict_t::feasible;
  else
    cert.verdict = verdict_t::inconclusive;
  return cert;
}

poisson_solution poisson_solve(const chain::generator_matrix& g, const Eigen::VectorXd& c) {
  if (!g.irreducible) fail("ReducibleChain", "the Poisson system needs an irreducible generator");
  const int n = g.n();
  if (static_cast<int>(c.size()) != n) fail("LengthMismatch", "c must have one entry per regime");

  const Eigen::VectorXd lambda = chain::invariant_distribution(g);
  poisson_solution sol;
  sol.beta = -c.dot(lambda);
  if (!(sol.beta > 0.0))
    fail("InfeasibleBeta", "sum_i c_i lambda_i must be negative, got beta = " +
                               std::to_string(sol.beta));

  Eigen::MatrixXd A = g.q;
  A.row(0).setZero();
  A(0, 0) = 1.0;
  Eigen::VectorXd rhs = -c - Eigen::VectorXd::Constant(n, sol.beta);
  rhs(0) = 0.0;

  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
  sol.gamma = lu.solve(rhs);
  sol.gamma += lu.solve(rhs - A * sol.gamma);
  sol.residual = (g.q * sol.gamma + c + Eigen::VectorXd::Constant(n, sol.beta))
                     .lpNorm<Eigen::Infinity>();
  return sol;
}

composite_report composite_lyapunov(const sde::rs_model& model, const lyapunov_spec& spec,
                                    const Eigen::VectorXd& gamma, double beta,
                                    const std::vector<Eigen::VectorXd>& directions,
                                    const composite_options& opt) {
  if (!spec.V) fail("MissingEvaluator", "spec.V is required");
  const int n = model.num_regimes();
  if (static_cast<int>(gamma.size()) != n)
    fail("LengthMismatch", "gamma must have one entry per regime");
  if (!(beta > 0.0)) fail("InfeasibleBeta", "beta must be positive");
  const double m = opt.m > 0.0 ? opt.m : std::max(beta, 2.0) + 1.0;
  if (!(m > std::max(beta, 2.0))) fail("InfeasibleM", "need m > max{beta, 2}");
  if (opt.radii_per_annulus < 2) fail("InvalidOption", "radii_per_annulus must be at least 2");
  if (!(opt.R0 > 0.0) || !(opt.R_cap >= opt.R0))
    fail("InvalidOption", "need 0 < R0 <= R_cap");
  const auto dirs = unit_directions(directions, model.dim);

  const double mb = m / beta;
  auto V = spec.V;
  auto th = spec.theta;
  const Eigen::VectorXd gam = gamma;
  const auto raw = [V, th, gam, mb](const Eigen::VectorXd& x, int i) {
    const double v = V(x);
    return mb * (v + gam(i) * th(v));
  };

  double inner_min = kInf;
  for (int k = 0; k <= 4; ++k) {
    const double r = opt.R0 * 0.25 * k;
    for (const auto& d : dirs) {
      const Eigen::VectorXd x = r * d;
      for (int i = 0; i < n; ++i) inner_min = std::min(inner_min, raw(x, i));
    }
  }

  composite_report rep;
  rep.beta = beta;
  rep.m = m;
  rep.gamma = gamma;
  rep.shift = inner_min <= 1.0 ? 1.0 + 1e-9 - inner_min : 0.0;

  const double shift = rep.shift;
  rep.composite.value = [raw, shift](const Eigen::VectorXd& x, int i) { return raw(x, i) + shift; };
  if (spec.V_grad) {
    auto G = spec.V_grad;
    rep.composite.gradient = [V, th, gam, mb, G](const Eigen::VectorXd& x, int i) {
      return (mb * (1.0 + gam(i) * th.deriv(V(x))) * G(x)).eval();
    };
    if (spec.V_hess) {
      auto H = spec.V_hess;
      rep.composite.hessian = [V, th, gam, mb, G, H](const Eigen::VectorXd& x, int i) {
        const double v = V(x);
        const Eigen::VectorXd g = G(x);
        return (mb * ((1.0 + gam(i) * th.deriv(v)) * H(x) +
                      gam(i) * th.deriv2(v) * g * g.transpose()))
            .eval();
      };
    }
  }

  const int rpa = opt.radii_per_annulus;
  for (double R = opt.R0; R <= opt.R_cap; R *= 2.0) {
    double core_margin = kInf;
    double literal_margin = kInf;
    bool dominated = true;
    for (int k = 0; k < rpa; ++k) {
      const double r = R * (1.0 + static_cast<double>(k) / (rpa - 1));
      for (const auto& d : dirs) {
        const Eigen::VectorXd x = r * d;
        const double v = checked_level(spec.V, x);
        const double tv = th(v);
        if (!(tv > 0.0)) fail("NonPositiveTheta", "theta(V) must be positive at probes");
        for (int i = 0; i < n; ++i) {
          const double a = generator_action(model, rep.composite, x, i);
          core_margin = std::min(core_margin, -a - (m - 1.0) * tv);
          const double vb = rep.composite.value(x, i);
          literal_margin = std::min(literal_margin, vb > 0.0 ? -a - th(vb) : -kInf);
          dominated = dominated && vb <= (m - 1.0) * v;
        }
      }
    }
    rep.R = R;
    rep.core_margin = core_margin;
    rep.literal_margin = literal_margin;
    rep.core_ok = core_margin > 0.0;
    rep.literal_ok = literal_margin > 0.0;
    rep.domination_ok = dominated;
    if (rep.core_ok) break;
  }
  rep.verdict = rep.core_ok ? verdict_t::feasible : verdict_t::inconclusive;
  return rep;
}

negative_drift_report check_negative_drift(const sde::rs_model& model,
                                           const regime_function& vcal,
                                           const std::vector<double>& annuli,
                                           const std::vector<Eigen::VectorXd>& directions) {
  if (annuli.size() < 2) fail("TooFewAnnuli", "need at least two probe radii");
  for (std::size_t k = 0; k < annuli.size(); ++k) {
    if (!(annuli[k] > 0.0) || (k > 0 && !(annuli[k] > annuli[k - 1])))
      fail("AnnuliNotIncreasing", "probe radii must be positive and strictly increasing");
  }
  const auto dirs = unit_directions(directions, model.dim);
  const int n = model.num_regimes();

  negative_drift_report rep;
  for (double R : annuli) {
    double gh = kInf;
    for (const auto& d : dirs) {
      const Eigen::VectorXd x = R * d;
      for (int i = 0; i < n; ++i) gh = std::min(gh, -generator_action(model, vcal, x, i));
    }
    rep.radii.push_back(R);
    rep.g_hat.push_back(gh);
  }
  const std::size_t K = rep.g_hat.size();
  rep.feasible = rep.g_hat[K - 2] > 0.0 && rep.g_hat[K - 1] > rep.g_hat[K - 2];
  return rep;
}

m_matrix_report m_matrix_test(const Eigen::MatrixXd& M) {
  if (M.rows() == 0) fail("EmptyMatrix", "matrix must be nonempty");
  if (M.rows() != M.cols()) fail("NotSquare", "matrix must be square");
  const int n = static_cast<int>(M.rows());
  const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());

  m_matrix_report rep;
  rep.z_matrix = true;
  for (int i = 0; i < n && rep.z_matrix; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j && M(i, j) > 1e-12 * scale) {
        rep.z_matrix = false;
        break;
      }

  rep.leading_minors.resize(n);
  for (int k = 1; k <= n; ++k) {
    const Eigen::MatrixXd sub = M.topLeftCorner(k, k);
    rep.leading_minors(k - 1) = sub.determinant();
  }
  const bool minors_positive = (rep.leading_minors.array() > 0.0).all();

  const Eigen::EigenSolver<Eigen::MatrixXd> es(M);
  rep.min_real_eig = es.eigenvalues().real().minCoeff();
  const double tol = 1e-10 * scale;

  if (!rep.z_matrix)
    rep.verdict = m_matrix_verdict::not_m;
  else if (minors_positive)
    rep.verdict = m_matrix_verdict::nonsingular_m;
  else if (rep.min_real_eig >= -tol)
    rep.verdict = m_matrix_verdict::singular_m;
  else
    rep.verdict = m_matrix_verdict::not_m;

  rep.minor_eigen_agree =
      !rep.z_matrix || minors_positive == (rep.min_real_eig > tol) ||
      std::abs(rep.min_real_eig) <= tol;
  return rep;
}

std::pair<double, Eigen::VectorXd> perron_eigenvalue(const Eigen::MatrixXd& metzler, double tol) {
  if (metzler.rows() == 0) fail("EmptyMatrix", "matrix must be nonempty");
  if (metzler.rows() != metzler.cols()) fail("NotSquare", "matrix must be square");
  const int n = static_cast<int>(metzler.rows());
  const double scale = std::max(1.0, metzler.cwiseAbs().maxCoeff());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j && metzler(i, j) < -1e-12 * scale)
        fail("NotMetzler", "off-diagonal entries must be nonnegative");

  // The extra +1 keeps the shifted matrix's diagonal positive, so the power
  // iteration cannot cycle.
  const double s = metzler.diagonal().cwiseAbs().maxCoeff() + 1.0;
  const Eigen::MatrixXd B = metzler + s * Eigen::MatrixXd::Identity(n, n);

  Eigen::VectorXd v = Eigen::VectorXd::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));
  for (int it = 0; it < 200000; ++it) {
    const Eigen::VectorXd w = B * v;
    const double rho = v.dot(w);
    if ((w - rho * v).lpNorm<Eigen::Infinity>() <= tol * std::max(1.0, std::abs(rho))) {
      Eigen::VectorXd vec = w / w.maxCoeff();
      return {rho - s, vec};
    }
    const double nw = w.norm();
    if (!(nw > 0.0)) fail("ConvergenceFailure", "power iteration collapsed to zero");
    v = w / nw;
  }
  fail("ConvergenceFailure", "power iteration did not converge");
}

spectral_certificate geometric_spectral_certificate(const chain::generator_matrix& g,
                                                    const Eigen::VectorXd& c, double eta_min) {
  if (!g.irreducible) fail("ReducibleChain", "the certificate needs an irreducible generator");
  const int n = g.n();
  if (static_cast<int>(c.size()) != n) fail("LengthMismatch", "c must have one entry per regime");
  if (!(eta_min > 0.0)) fail("InvalidOption", "eta_min must be positive");

  const auto matrix_at = [&](double z) {
    Eigen::MatrixXd M = g.q;
    M.diagonal() += z * c;
    return M;
  };
  const auto feasible = [&](double z) {
    return perron_eigenvalue(matrix_at(z)).first <= -eta_min;
  };

  double lo = -1.0;
  double hi = 1.0;
  for (int k = 63; k >= 1; --k) {
    const double z = k / 64.0;
    if (feasible(z)) {
      lo = z;
      hi = k == 63 ? 1.0 : (k + 1) / 64.0;
      break;
    }
  }
  if (lo < 0.0) {
    for (double z : {1.0 / 128, 1.0 / 256, 1.0 / 512, 1.0 / 1024, 1.0 / 4096, 1.0 / 16384}) {
      if (feasible(z)) {
        lo = z;
        hi = 1.0 / 64;
        break;
      }
    }
  }
  if (lo < 0.0)
    fail("NoFeasibleZeta", "no zeta in (0,1) brings the Perron eigenvalue below -eta_min");

  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (feasible(mid))
      lo = mid;
    else
      hi = mid;
  }

  spectral_certificate cert;
  cert.zeta = lo;
  const auto [eig, vec] = perron_eigenvalue(matrix_at(lo));
  cert.eta = -eig;
  cert.gamma = vec / vec.maxCoeff();
  if (!(cert.gamma.minCoeff() > 0.0))
    fail("ConvergenceFailure", "Perron eigenvector is not strictly positive");
  cert.residual = (matrix_at(lo) * cert.gamma + cert.eta * cert.gamma).lpNorm<Eigen::Infinity>();
  return cert;
}

}  // namespace rsde::lyapunov
