#include "rsde/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rsde/chain.hpp"
#include "rsde/coupling.hpp"
#include "rsde/distance.hpp"
#include "rsde/lyapunov.hpp"
#include "rsde/rates.hpp"
#include "rsde/rng.hpp"
#include "rsde/sde.hpp"
#include "rsde/subordination.hpp"

namespace rsde::experiments {

namespace {

using nlohmann::json;

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

// Stable stream ids, one block of 16 channels per experiment, so adding an
// experiment or a channel never reshuffles existing draws.
enum stream_block : std::uint64_t {
  kChainCoupling = 1,
  kWassersteinOde = 2,
  kWassersteinNoise = 3,
  kTvExample = 4,
  kMomentBound = 5,
  kCertificates = 6,
  kSubordination = 7,
};

rng::key stream_key(const json& cfg, std::uint64_t block, std::uint64_t channel) {
  return rng::key{cfg.at("seed").get<std::uint64_t>(), block * 16 + channel};
}

// JSON has no literal for non-finite numbers; they are emitted as strings so
// the report stays lossless instead of degrading to null.
json json_num(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0.0 ? "inf" : "-inf";
}

json vec_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(json_num(v(i)));
  return a;
}

json seq_json(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(json_num(x));
  return a;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

void deep_merge(json& base, const json& over) {
  if (!base.is_object() || !over.is_object()) {
    base = over;
    return;
  }
  for (const auto& [k, v] : over.items()) {
    if (base.contains(k) && base[k].is_object() && v.is_object()) {
      deep_merge(base[k], v);
    } else {
      base[k] = v;
    }
  }
}

std::pair<double, std::string> named_tolerance(const json& cfg, const std::string& name) {
  const json& tols = cfg.at("tolerances");
  if (!tols.contains(name) || !tols.at(name).is_number()) {
    fail("InvalidConfig", "missing numeric tolerances." + name);
  }
  return {tols.at(name).get<double>(), "tolerances." + name};
}

verdict make_verdict(std::string name, double value, bool pass,
                     std::pair<double, std::string> tol) {
  verdict v;
  v.name = std::move(name);
  v.pass = pass;
  v.value = value;
  v.tolerance = tol.first;
  v.tolerance_name = std::move(tol.second);
  return v;
}

// value <= tolerance
verdict check_le(const json& cfg, std::string name, double value, const std::string& tol_name) {
  auto tol = named_tolerance(cfg, tol_name);
  return make_verdict(std::move(name), value, value <= tol.first, tol);
}

// Arithmetic or explicit grid: either an array of numbers or
// {start, stop, step}.
std::vector<double> resolve_grid(const json& g) {
  std::vector<double> out;
  if (g.is_array()) {
    for (const auto& v : g) {
      if (!v.is_number()) fail("InvalidConfig", "time grid entries must be numbers");
      out.push_back(v.get<double>());
    }
  } else if (g.is_object()) {
    for (const char* k : {"start", "stop", "step"}) {
      if (!g.contains(k) || !g.at(k).is_number()) {
        fail("InvalidConfig", std::string("time grid range needs numeric ") + k);
      }
    }
    const double start = g.at("start").get<double>();
    const double stop = g.at("stop").get<double>();
    const double step = g.at("step").get<double>();
    if (!(step > 0.0) || stop < start) fail("InvalidConfig", "bad time grid range");
    const long count = static_cast<long>(std::floor((stop - start) / step + 1e-9)) + 1;
    for (long k = 0; k < count; ++k) out.push_back(start + static_cast<double>(k) * step);
  } else {
    fail("InvalidConfig", "time grid must be an array or a range object");
  }
  if (out.empty()) fail("InvalidConfig", "time grid is empty");
  for (std::size_t k = 1; k < out.size(); ++k) {
    if (!(out[k] > out[k - 1])) fail("InvalidConfig", "time grid must be strictly increasing");
  }
  return out;
}

Eigen::MatrixXd matrix_from(const json& rows) {
  if (!rows.is_array() || rows.empty()) fail("InvalidConfig", "rate matrix must be an array");
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd q(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = rows[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n) {
      fail("InvalidConfig", "rate matrix must be square");
    }
    for (Eigen::Index j = 0; j < n; ++j) q(i, j) = row[static_cast<std::size_t>(j)].get<double>();
  }
  return q;
}

Eigen::VectorXd vector_from(const json& arr) {
  if (!arr.is_array() || arr.empty()) fail("InvalidConfig", "expected a numeric array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(arr.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = arr[static_cast<std::size_t>(i)].get<double>();
  return v;
}

std::string write_curve(const std::string& dir, const std::string& name,
                        const std::vector<double>& t, const std::vector<double>& estimate,
                        const std::vector<double>& stderr_, long n) {
  std::filesystem::create_directories(dir);
  const std::string path = (std::filesystem::path(dir) / (name + ".csv")).string();
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) fail("WriteFailed", "cannot open " + path);
  std::fprintf(fp, "t,estimate,stderr,n\n");
  for (std::size_t k = 0; k < t.size(); ++k) {
    std::fprintf(fp, "%.17g,%.17g,%.17g,%ld\n", t[k], estimate[k], stderr_[k], n);
  }
  std::fclose(fp);
  return path;
}

json fit_json(const rates::rate_curve_fit& f) {
  return json{{"slope", json_num(f.slope)},
              {"intercept", json_num(f.intercept)},
              {"r_squared", json_num(f.r_squared)},
              {"slope_stderr", json_num(f.slope_stderr)},
              {"n_points", f.n_points}};
}

json flatness_json(const coupling::flatness_certificate& c) {
  json witnesses = json::array();
  for (const auto& w : c.witnesses) {
    witnesses.push_back(json{{"gamma", json_num(w.gamma)},
                             {"x", vec_json(w.arg_x)},
                             {"y", vec_json(w.arg_y)}});
  }
  return json{{"kind", "asymptotic-flatness"},
              {"gamma", vec_json(c.gamma)},
              {"mixture", json_num(c.mixture)},
              {"feasible", c.feasible},
              {"eta", json_num(c.eta)},
              {"delta", json_num(c.delta)},
              {"f", c.f_tag},
              {"psi", c.psi_tag},
              {"n_pairs", c.n_pairs},
              {"witnesses", witnesses}};
}

const char* verdict_name(lyapunov::verdict_t v) {
  switch (v) {
    case lyapunov::verdict_t::feasible:
      return "feasible";
    case lyapunov::verdict_t::infeasible:
      return "infeasible";
    default:
      return "inconclusive";
  }
}

json drift_json(const lyapunov::drift_certificate& c) {
  json rows = json::array();
  for (const auto& row : c.evidence) {
    rows.push_back(json{{"radius", row.radius},
                        {"drift_ratio", vec_json(row.drift_ratio)},
                        {"theta_prime", json_num(row.theta_prime)},
                        {"theta_over_v", json_num(row.theta_over_v)},
                        {"theta_drift_ratio", json_num(row.theta_drift_ratio)}});
  }
  return json{{"kind", c.kind},
              {"verdict", verdict_name(c.verdict)},
              {"c", vec_json(c.c)},
              {"lambda", vec_json(c.lambda)},
              {"mixture", json_num(c.mixture)},
              {"evidence", rows},
              {"notes", c.notes}};
}

json poisson_json(const lyapunov::poisson_solution& p) {
  return json{{"kind", "chain-poisson"},
              {"beta", json_num(p.beta)},
              {"gamma", vec_json(p.gamma)},
              {"residual", json_num(p.residual)}};
}

json spectral_json(const lyapunov::spectral_certificate& s) {
  return json{{"kind", "geometric-spectral"},
              {"zeta", json_num(s.zeta)},
              {"eta", json_num(s.eta)},
              {"gamma", vec_json(s.gamma)},
              {"residual", json_num(s.residual)}};
}

const char* m_verdict_name(lyapunov::m_matrix_verdict v) {
  switch (v) {
    case lyapunov::m_matrix_verdict::nonsingular_m:
      return "nonsingular-m";
    case lyapunov::m_matrix_verdict::singular_m:
      return "singular-m";
    default:
      return "not-m";
  }
}

json m_matrix_json(const std::string& formula, const lyapunov::m_matrix_report& r) {
  return json{{"kind", "m-matrix"},
              {"matrix", formula},
              {"verdict", m_verdict_name(r.verdict)},
              {"z_matrix", r.z_matrix},
              {"leading_minors", vec_json(r.leading_minors)},
              {"min_real_eig", json_num(r.min_real_eig)},
              {"minor_eigen_agree", r.minor_eigen_agree}};
}

sde::rs_model model_from(const json& m) {
  const auto sigma = vector_from(m.at("sigma"));
  if (sigma.size() != 2) fail("InvalidConfig", "model.sigma needs two entries");
  return sde::models::power_drift(m.at("b").get<double>(), m.at("q").get<double>(), sigma(0),
                                  sigma(1), matrix_from(m.at("rates")));
}

std::vector<Eigen::VectorXd> line_directions() {
  return {Eigen::VectorXd::Constant(1, 1.0), Eigen::VectorXd::Constant(1, -1.0)};
}

std::vector<double> radius_ladder(const json& growth) {
  const double rmax = growth.at("radius_max").get<double>();
  const double rstep = growth.at("radius_step").get<double>();
  if (!(rstep > 0.0) || !(rmax > 0.0)) fail("InvalidConfig", "bad growth radius ladder");
  std::vector<double> radii;
  const long count = static_cast<long>(std::floor(rmax / rstep + 1e-9)) + 1;
  for (long k = 0; k < count; ++k) radii.push_back(static_cast<double>(k) * rstep);
  return radii;
}

// ---------------------------------------------------------------------------
// chain-coupling: coalescence-time survival of two independent copies of the
// two-state chain against the exact exponential and the integer-floor bound.

void run_chain_coupling(const json& cfg, const std::string& outdir, experiment_report& rep) {
  const auto g = chain::validate_generator(matrix_from(cfg.at("model").at("rates")));
  if (g.n() != 2) fail("InvalidConfig", "the exact coupling-time law is wired for two states");
  const auto regimes = cfg.at("model").at("start_regimes");
  const int i = regimes.at(0).get<int>();
  const int j = regimes.at(1).get<int>();

  const auto cc = chain::compute_coupling_constants(g);
  const auto lambda = chain::invariant_distribution(g);
  const auto grid = resolve_grid(cfg.at("mc").at("time_grid"));
  const long n = cfg.at("mc").at("replicates").get<long>();

  // Both copies jump to the shared state at their own rate, so the distance
  // to coalescence is exponential with the summed off-diagonal rate.
  const double exact_rate = g.q(0, 1) + g.q(1, 0);

  const auto key = stream_key(cfg, kChainCoupling, 0);
  std::vector<long> above(grid.size(), 0);
  for (long r = 0; r < n; ++r) {
    auto rs = rng::make_stream(key, static_cast<std::uint64_t>(r));
    const double tau = chain::sample_coupling_time(g, i, j, rs).tau;
    for (std::size_t k = 0; k < grid.size(); ++k) {
      if (tau > grid[k]) ++above[k];
    }
  }

  std::vector<double> survival(grid.size()), se(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    survival[k] = static_cast<double>(above[k]) / static_cast<double>(n);
    se[k] = std::sqrt(survival[k] * (1.0 - survival[k]) / static_cast<double>(n));
  }
  rep.curve_files.push_back(write_curve(outdir, "survival", grid, survival, se, n));

  const double se_floor = 1.0 / static_cast<double>(n);
  double law_z = 0.0;
  for (const auto& tj : cfg.at("law_check_times")) {
    const double t = tj.get<double>();
    const auto it = std::lower_bound(grid.begin(), grid.end(), t - 1e-12);
    if (it == grid.end() || std::abs(*it - t) > 1e-9) {
      fail("InvalidConfig", "law_check_times must lie on the time grid");
    }
    const std::size_t k = static_cast<std::size_t>(it - grid.begin());
    const double z = std::abs(survival[k] - std::exp(-exact_rate * t)) / std::max(se[k], se_floor);
    law_z = std::max(law_z, z);
  }
  rep.verdicts.push_back(check_le(cfg, "exact-law", law_z, "exact_law_z"));

  double bound_z = -kInf;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double bound = std::exp(-cc.vartheta * std::floor(grid[k]));
    bound_z = std::max(bound_z, (survival[k] - bound) / std::max(se[k], se_floor));
  }
  rep.verdicts.push_back(check_le(cfg, "tail-bound", bound_z, "bound_z"));

  Eigen::Vector2d exact_lambda(g.q(1, 0), g.q(0, 1));
  exact_lambda /= exact_lambda.sum();
  const double inv_err = (lambda - exact_lambda).cwiseAbs().maxCoeff();
  rep.verdicts.push_back(check_le(cfg, "invariant", inv_err, "invariant_abs"));

  rep.predicted = json{{"exact_rate", exact_rate},
                       {"zeta", json_num(cc.zeta)},
                       {"vartheta", json_num(cc.vartheta)},
                       {"lambda", vec_json(lambda)}};
}

// ---------------------------------------------------------------------------
// wasserstein-ode / wasserstein-noise: coupled distance decay, log-log slope
// against the predicted polynomial rate, flatness certificate, and (bounded
// profile only) the limit-constant sanity factor.

void run_wasserstein(const json& cfg, const std::string& outdir, std::uint64_t block,
                     experiment_report& rep) {
  const auto m = model_from(cfg.at("model"));
  const double q = cfg.at("model").at("q").get<double>();
  const auto g = m.constant_switching();
  const auto lambda = chain::invariant_distribution(g);

  const auto xs = cfg.at("start").at("x");
  const auto is = cfg.at("start").at("regimes");
  coupling::start a{Eigen::VectorXd::Constant(1, xs.at(0).get<double>()), is.at(0).get<int>()};
  coupling::start b{Eigen::VectorXd::Constant(1, xs.at(1).get<double>()), is.at(1).get<int>()};

  const json& metric = cfg.at("metric");
  const std::string prof_name = metric.at("profile").get<std::string>();
  distance::rho_profile prof;
  if (prof_name == "identity") {
    prof = distance::rho_profile::identity();
  } else if (prof_name == "clipped") {
    prof = distance::rho_profile::clipped(metric.at("cap").get<double>());
  } else {
    fail("InvalidConfig", "metric.profile must be identity or clipped");
  }
  const double p = metric.at("p").get<double>();

  const auto grid = resolve_grid(cfg.at("mc").at("time_grid"));
  const long n = cfg.at("mc").at("replicates").get<long>();
  const double h = cfg.at("mc").at("h").get<double>();

  const auto curve = coupling::distance_decay_curve(m, a, b, prof, p, grid, n, h,
                                                    stream_key(cfg, block, 0));
  rep.curve_files.push_back(
      write_curve(outdir, "wasserstein_decay", curve.times, curve.estimate, curve.stderr_, n));

  const json& fw = cfg.at("fit");
  double fit_slope = kNan;
  bool fit_ok = false;
  try {
    const auto fit =
        rates::rate_fit(curve.times, curve.estimate, fw.at("t_min").get<double>(),
                        fw.at("t_max").get<double>());
    rep.fits["decay"] = fit_json(fit);
    fit_slope = fit.slope;
    fit_ok = true;
  } catch (const error& e) {
    // A curve that collapses to exact zero inside the window (full coalescence
    // below the merge tolerance) has no log-log fit; record that instead.
    rep.fits["decay"] = json{{"status", "unavailable"}, {"reason", e.what()}};
  }

  const json& fl = cfg.at("flatness");
  const auto pairs = coupling::probe_grid_1d(fl.at("probe_lo").get<double>(),
                                             fl.at("probe_hi").get<double>(),
                                             fl.at("probe_n").get<int>());
  const double eta = fl.contains("eta") ? fl.at("eta").get<double>() : kInf;
  const auto cert = coupling::make_flatness_certificate(
      m, distance::rho_profile::identity(), "u", rates::rate_spec::power(q), "u^q", lambda,
      pairs, eta);
  rep.certificates["flatness"] = flatness_json(cert);

  const double pred_slope = -1.0 / (q - 1.0);
  const double pred_const = rates::predicted_polynomial_constant(cert.gamma, lambda, q);
  rep.predicted = json{{"slope", json_num(pred_slope)},
                       {"polynomial_constant", json_num(pred_const)},
                       {"q", q}};

  const auto slope_tol = named_tolerance(cfg, "slope_abs");
  const double slope_err = fit_ok ? std::abs(fit_slope - pred_slope) : kNan;
  rep.verdicts.push_back(
      make_verdict("slope", slope_err, fit_ok && slope_err <= slope_tol.first, slope_tol));

  if (cfg.at("tolerances").contains("constant_factor")) {
    const double t_last = curve.times.back();
    const double scaled = std::pow(t_last, -pred_slope) * curve.estimate.back();
    rep.verdicts.push_back(check_le(cfg, "constant", scaled / pred_const, "constant_factor"));
  }

  const auto mix_tol = named_tolerance(cfg, "mixture_max");
  rep.verdicts.push_back(
      make_verdict("mixture", cert.mixture, cert.feasible && cert.mixture < mix_tol.first,
                   mix_tol));

  if (cfg.contains("growth")) {
    const auto growth = sde::linear_growth_constant(m, radius_ladder(cfg.at("growth")),
                                                    line_directions());
    rep.predicted["K_hat"] = json_num(growth.K_hat);
    rep.predicted["vartheta"] = json_num(growth.vartheta);
    rep.predicted["below_vartheta"] = growth.below_vartheta;
  }
}

// ---------------------------------------------------------------------------
// tv-example: drift certificate and chain Poisson solve for the heavy-tailed
// switching example, plus a qualitative monotone total-variation curve against
// a long-run reference sample. The quantitative rate is reported, not gated:
// histogram TV noise swamps it at any feasible replicate count.

void run_tv_example(const json& cfg, const std::string& outdir, experiment_report& rep) {
  const json& mj = cfg.at("model");
  const auto sigma = vector_from(mj.at("sigma"));
  const auto m = sde::models::power_drift(mj.at("b").get<double>(), mj.at("s").get<double>(),
                                          sigma(0), sigma(1), matrix_from(mj.at("rates")));
  const auto g = m.constant_switching();
  const double p = cfg.at("rate").at("p").get<double>();

  const json& dj = cfg.at("drift");
  lyapunov::lyapunov_spec spec;
  spec.V = [](const Eigen::VectorXd& x) { return 1.0 + x.squaredNorm(); };
  spec.V_grad = [](const Eigen::VectorXd& x) { return Eigen::VectorXd(2.0 * x); };
  spec.V_hess = [](const Eigen::VectorXd& x) {
    return Eigen::MatrixXd(2.0 * Eigen::MatrixXd::Identity(x.size(), x.size()));
  };
  spec.theta = rates::rate_spec::power(p);
  spec.c = vector_from(dj.at("c"));

  std::vector<double> annuli;
  for (const auto& r : dj.at("annuli")) annuli.push_back(r.get<double>());
  lyapunov::drift_options dopt;
  dopt.margin_frac = dj.at("margin_frac").get<double>();
  const auto cert = lyapunov::check_subgeometric_drift(spec, m, annuli, line_directions(), dopt);
  rep.certificates["drift"] = drift_json(cert);

  const auto poisson = lyapunov::poisson_solve(g, spec.c);
  rep.certificates["poisson"] = poisson_json(poisson);

  rep.verdicts.push_back(check_le(cfg, "poisson-residual", poisson.residual, "poisson_residual"));

  const auto mix_tol = named_tolerance(cfg, "mixture_max");
  rep.verdicts.push_back(make_verdict(
      "drift-feasible", cert.mixture,
      cert.verdict == lyapunov::verdict_t::feasible && cert.mixture < mix_tol.first, mix_tol));

  const double outer_ratio = cert.evidence.back().drift_ratio(1);
  rep.verdicts.push_back(check_le(cfg, "outer-ratio", outer_ratio, "outer_ratio_max"));

  const json& mc = cfg.at("mc");
  const auto grid = resolve_grid(mc.at("time_grid"));
  const long n = mc.at("replicates").get<long>();
  const double h = mc.at("h").get<double>();
  const double t_ref = mc.at("reference_time").get<double>();
  if (t_ref < grid.back()) fail("InvalidConfig", "reference_time must dominate the grid");

  const Eigen::VectorXd x0 = Eigen::VectorXd::Constant(1, cfg.at("start").at("x").get<double>());
  const int i0 = cfg.at("start").at("regime").get<int>();

  std::vector<std::vector<distance::labeled_sample>> at_time(grid.size());
  for (auto& s : at_time) s.reserve(static_cast<std::size_t>(n));
  const auto key_t = stream_key(cfg, kTvExample, 0);
  for (long r = 0; r < n; ++r) {
    auto rs = rng::make_stream(key_t, static_cast<std::uint64_t>(r));
    sde::integrate_observed(m, x0, i0, grid.back(), h, rs, {}, grid,
                            [&](std::size_t k, const Eigen::VectorXd& x, int i) {
                              at_time[k].push_back({x(0), i});
                            });
  }

  std::vector<distance::labeled_sample> reference;
  reference.reserve(static_cast<std::size_t>(n));
  const auto key_ref = stream_key(cfg, kTvExample, 1);
  const std::vector<double> ref_times{t_ref};
  for (long r = 0; r < n; ++r) {
    auto rs = rng::make_stream(key_ref, static_cast<std::uint64_t>(r));
    sde::integrate_observed(m, x0, i0, t_ref, h, rs, {}, ref_times,
                            [&](std::size_t, const Eigen::VectorXd& x, int i) {
                              reference.push_back({x(0), i});
                            });
  }

  std::vector<double> tv(grid.size()), tv_se(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const auto est = distance::empirical_tv(at_time[k], reference);
    tv[k] = est.value;
    tv_se[k] = est.aggregate_stderr;
  }
  rep.curve_files.push_back(write_curve(outdir, "tv_decay", grid, tv, tv_se, n));

  double mono_z = -kInf;
  for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
    const double pooled = std::sqrt(tv_se[k] * tv_se[k] + tv_se[k + 1] * tv_se[k + 1]);
    mono_z = std::max(mono_z, (tv[k + 1] - tv[k]) / std::max(pooled, 1e-300));
  }
  rep.verdicts.push_back(check_le(cfg, "tv-monotone", mono_z, "tv_monotone_z"));

  rep.predicted = json{{"rate_exponent", json_num(p / (1.0 - p))},
                       {"beta", json_num(poisson.beta)}};
}

// ---------------------------------------------------------------------------
// moment-bound: Monte Carlo second moments under the exponential envelope
// (1 + |x0|^2) e^{K t} with K from the probed linear-growth constant.

void run_moment_bound(const json& cfg, const std::string& outdir, experiment_report& rep) {
  const auto m = model_from(cfg.at("model"));
  const auto growth =
      sde::linear_growth_constant(m, radius_ladder(cfg.at("growth")), line_directions());

  const Eigen::VectorXd x0 = Eigen::VectorXd::Constant(1, cfg.at("start").at("x").get<double>());
  const int i0 = cfg.at("start").at("regime").get<int>();
  const json& mc = cfg.at("mc");
  const auto grid = resolve_grid(mc.at("time_grid"));
  const long n = mc.at("replicates").get<long>();
  const double h = mc.at("h").get<double>();

  const auto curve = sde::second_moment_curve(m, x0, i0, grid, n, h,
                                              stream_key(cfg, kMomentBound, 0), growth.K_hat);
  rep.curve_files.push_back(
      write_curve(outdir, "second_moment", curve.times, curve.mean_sq, curve.stderr_mean_sq, n));

  double z = -kInf;
  for (std::size_t k = 0; k < curve.times.size(); ++k) {
    const double rel_se =
        std::max(curve.stderr_mean_sq[k] / std::max(curve.mean_sq[k], 1e-300), 1e-300);
    z = std::max(z, (curve.mean_sq[k] / curve.bound[k] - 1.0) / rel_se);
  }
  rep.verdicts.push_back(check_le(cfg, "moment-bound", z, "moment_z"));

  rep.predicted = json{{"K_hat", json_num(growth.K_hat)},
                       {"vartheta", json_num(growth.vartheta)},
                       {"below_vartheta", growth.below_vartheta},
                       {"bound", seq_json(curve.bound)},
                       {"argmax_x", vec_json(growth.argmax_x)},
                       {"argmax_regime", growth.argmax_regime}};
}

// ---------------------------------------------------------------------------
// certificates: the algebraic checks in one place. The two M-matrix demos pin
// down the wiring -(Q + diag c) (a nonsingular M-matrix exactly when the
// geometric certificate is feasible) against the sign-flipped -Q + diag c,
// which is not an M-matrix for the same data.

void run_certificates(const json& cfg, const std::string&, experiment_report& rep) {
  const auto g = chain::validate_generator(matrix_from(cfg.at("model").at("rates")));

  const auto poisson = lyapunov::poisson_solve(g, vector_from(cfg.at("poisson").at("c")));
  rep.certificates["poisson"] = poisson_json(poisson);
  rep.verdicts.push_back(check_le(cfg, "poisson-residual", poisson.residual, "poisson_residual"));

  const auto cm = vector_from(cfg.at("m_matrix").at("c"));
  const Eigen::MatrixXd good = -(g.q + Eigen::MatrixXd(cm.asDiagonal()));
  const Eigen::MatrixXd flipped = -g.q + Eigen::MatrixXd(cm.asDiagonal());
  const auto good_rep = lyapunov::m_matrix_test(good);
  const auto flipped_rep = lyapunov::m_matrix_test(flipped);
  rep.certificates["m_matrix"] = json::array(
      {m_matrix_json("-(Q + diag c)", good_rep), m_matrix_json("-Q + diag c", flipped_rep)});
  if (good_rep.verdict == lyapunov::m_matrix_verdict::nonsingular_m) {
    rep.certificates["m_matrix"][0]["gamma"] =
        vec_json(good.fullPivLu().solve(Eigen::VectorXd::Ones(good.rows())));
  }

  const long trials = cfg.at("m_matrix").at("random_trials").get<long>();
  if (trials < 1) fail("InvalidConfig", "m_matrix.random_trials must be positive");
  auto rs = rng::make_stream(stream_key(cfg, kCertificates, 0), 0);
  long agree = 0;
  for (long t = 0; t < trials; ++t) {
    const int nn = 2 + static_cast<int>(rs.uniform() * 4.0);
    Eigen::MatrixXd nonneg(nn, nn);
    for (int i = 0; i < nn; ++i)
      for (int j = 0; j < nn; ++j) nonneg(i, j) = rs.uniform();
    const Eigen::MatrixXd candidate =
        rs.uniform() * nn * Eigen::MatrixXd::Identity(nn, nn) - nonneg;
    if (lyapunov::m_matrix_test(candidate).minor_eigen_agree) ++agree;
  }
  const double agreement = static_cast<double>(agree) / static_cast<double>(trials);
  const auto agree_tol = named_tolerance(cfg, "agreement_min");
  rep.verdicts.push_back(
      make_verdict("minor-eigen-agreement", agreement, agreement >= agree_tol.first, agree_tol));

  const auto spectral =
      lyapunov::geometric_spectral_certificate(g, vector_from(cfg.at("spectral").at("c")));
  rep.certificates["spectral"] = spectral_json(spectral);
  const auto zeta_tol = named_tolerance(cfg, "spectral_zeta_max");
  rep.verdicts.push_back(make_verdict(
      "spectral-zeta", spectral.zeta,
      spectral.zeta > 0.0 && spectral.zeta < zeta_tol.first && spectral.eta > 0.0, zeta_tol));
  rep.verdicts.push_back(
      check_le(cfg, "spectral-residual", spectral.residual, "spectral_residual"));

  const json& dj = cfg.at("drift");
  const auto sigma = vector_from(dj.at("sigma"));
  const auto m = sde::models::power_drift(dj.at("b").get<double>(), dj.at("s").get<double>(),
                                          sigma(0), sigma(1), matrix_from(cfg.at("model").at("rates")));
  lyapunov::lyapunov_spec spec;
  spec.V = [](const Eigen::VectorXd& x) { return 1.0 + x.squaredNorm(); };
  spec.V_grad = [](const Eigen::VectorXd& x) { return Eigen::VectorXd(2.0 * x); };
  spec.V_hess = [](const Eigen::VectorXd& x) {
    return Eigen::MatrixXd(2.0 * Eigen::MatrixXd::Identity(x.size(), x.size()));
  };
  spec.theta = rates::rate_spec::power(dj.at("p").get<double>());
  spec.c = vector_from(dj.at("c"));
  std::vector<double> annuli;
  for (const auto& r : dj.at("annuli")) annuli.push_back(r.get<double>());
  const auto drift = lyapunov::check_subgeometric_drift(spec, m, annuli, line_directions());
  rep.certificates["drift"] = drift_json(drift);
  const auto mix_tol = named_tolerance(cfg, "mixture_max");
  rep.verdicts.push_back(make_verdict(
      "drift-feasible", drift.mixture,
      drift.verdict == lyapunov::verdict_t::feasible && drift.mixture < mix_tol.first, mix_tol));

  rep.predicted = json{{"poisson_beta", json_num(poisson.beta)}};
}

// ---------------------------------------------------------------------------
// subordination: the rate transform under a stable time change. A power rate
// stays a power with slope exponent/alpha; the Laplace transform at u = 1
// cross-checks the sampler against the Bernstein function.

void run_subordination(const json& cfg, const std::string& outdir, experiment_report& rep) {
  const json& sj = cfg.at("subordinator");
  if (sj.at("kind").get<std::string>() != "stable") {
    fail("InvalidConfig", "the subordination experiment is wired for the stable kind");
  }
  const double alpha = sj.at("alpha").get<double>();
  const auto spec =
      subordination::subordinator_spec::stable_spec(alpha, sj.at("beta").get<double>());

  const double exponent = cfg.at("rate").at("exponent").get<double>();
  const auto r = [exponent](double u) { return std::pow(u, exponent); };

  const auto grid = resolve_grid(cfg.at("mc").at("time_grid"));
  const long n = cfg.at("mc").at("replicates").get<long>();
  const auto curve =
      subordination::subordinate_rate(r, spec, grid, n, stream_key(cfg, kSubordination, 0));
  rep.curve_files.push_back(
      write_curve(outdir, "subordinated_rate", curve.times, curve.value, curve.stderr_, n));

  const json& fw = cfg.at("fit");
  const auto fit = rates::rate_fit(curve.times, curve.value, fw.at("t_min").get<double>(),
                                   fw.at("t_max").get<double>());
  rep.fits["transformed"] = fit_json(fit);

  const double pred_slope = exponent / alpha;
  rep.verdicts.push_back(check_le(cfg, "slope", std::abs(fit.slope - pred_slope), "slope_abs"));

  const double u = cfg.at("laplace").at("u").get<double>();
  const double target = std::exp(-subordination::bernstein_phi(spec, u));
  const auto key_l = stream_key(cfg, kSubordination, 1);
  double mean = 0.0, msq = 0.0;
  for (long k = 0; k < n; ++k) {
    auto rs = rng::make_stream(key_l, static_cast<std::uint64_t>(k));
    const double v = std::exp(-u * subordination::sample_subordinator(spec, 1.0, rs));
    mean += v;
    msq += v * v;
  }
  mean /= static_cast<double>(n);
  msq /= static_cast<double>(n);
  const double se =
      std::sqrt(std::max(msq - mean * mean, 0.0) / static_cast<double>(n));
  const double z = std::abs(mean - target) / std::max(se, 1e-300);
  rep.verdicts.push_back(check_le(cfg, "laplace", z, "laplace_z"));

  rep.predicted = json{{"slope", json_num(pred_slope)},
                       {"laplace_target", json_num(target)},
                       {"laplace_mean", json_num(mean)}};
}

json wasserstein_defaults(bool noise) {
  json grid = json::array();
  for (int k = 0; k <= 12; ++k) grid.push_back(std::pow(10.0, k / 6.0));
  json cfg{
      {"experiment", noise ? "wasserstein-noise" : "wasserstein-ode"},
      {"seed", 1},
      {"output", noise ? "out/wasserstein-noise" : "out/wasserstein-ode"},
      {"model",
       {{"b", 0.0},
        {"q", 2.0},
        {"sigma", noise ? json::array({1.0, 1.0}) : json::array({0.0, 0.0})},
        {"rates", {{-1.0, 1.0}, {1.0, -1.0}}}}},
      {"start", {{"x", {1.0, -1.0}}, {"regimes", {0, 1}}}},
      {"mc", {{"replicates", 10000}, {"h", 0.01}, {"time_grid", grid}}},
      {"fit", {{"t_min", 10.0}, {"t_max", 100.0}}},
      {"flatness", {{"probe_lo", -5.0}, {"probe_hi", 5.0}, {"probe_n", 41}}},
      {"tolerances", {{"slope_abs", 0.15}, {"mixture_max", 0.0}}}};
  if (noise) {
    cfg["metric"] = json{{"profile", "identity"}, {"p", 1.0}};
    cfg["flatness"]["eta"] = 0.5;
    cfg["growth"] = json{{"radius_max", 5.0}, {"radius_step", 0.01}};
  } else {
    cfg["metric"] = json{{"profile", "clipped"}, {"cap", 1.0}, {"p", 1.0}};
    cfg["tolerances"]["constant_factor"] = 1.5;
  }
  return cfg;
}

struct runner_row {
  const char* name;
  const char* summary;
  void (*fn)(const json&, const std::string&, experiment_report&);
};

void run_wasserstein_ode(const json& cfg, const std::string& outdir, experiment_report& rep) {
  run_wasserstein(cfg, outdir, kWassersteinOde, rep);
}
void run_wasserstein_noise(const json& cfg, const std::string& outdir, experiment_report& rep) {
  run_wasserstein(cfg, outdir, kWassersteinNoise, rep);
}

constexpr runner_row kRunners[] = {
    {"chain-coupling",
     "Coalescence-time law of the two-state switching chain against the exact exponential "
     "and the integer-floor tail bound.",
     run_chain_coupling},
    {"wasserstein-ode",
     "Coupled distance decay for the piecewise-deterministic contraction example: slope, "
     "flatness certificate, limit-constant factor.",
     run_wasserstein_ode},
    {"wasserstein-noise",
     "The same contraction with regime-constant volatility, an unbounded profile, and a "
     "thresholded flatness certificate.",
     run_wasserstein_noise},
    {"tv-example",
     "Drift certificate for the heavy-tailed switching example plus a qualitative "
     "monotone total-variation curve.",
     run_tv_example},
    {"moment-bound",
     "Monte Carlo second moments against the linear-growth exponential envelope.",
     run_moment_bound},
    {"certificates",
     "Algebraic certificates in one pass: chain Poisson equation, M-matrix wiring demos and "
     "random agreement, geometric spectral certificate, subgeometric drift.",
     run_certificates},
    {"subordination",
     "Stable time change of a power rate: transformed curve, slope, Laplace cross-check.",
     run_subordination},
};

const runner_row* find_runner(const std::string& name) {
  for (const auto& row : kRunners) {
    if (name == row.name) return &row;
  }
  return nullptr;
}

}  // namespace

bool experiment_report::all_pass() const {
  if (verdicts.empty()) return false;
  return std::all_of(verdicts.begin(), verdicts.end(), [](const verdict& v) { return v.pass; });
}

nlohmann::json experiment_report::to_json() const {
  json vs = json::array();
  for (const auto& v : verdicts) {
    vs.push_back(json{{"name", v.name},
                      {"pass", v.pass},
                      {"value", json_num(v.value)},
                      {"tolerance", json_num(v.tolerance)},
                      {"tolerance_name", v.tolerance_name}});
  }
  return json{{"experiment", experiment},
              {"seed", seed},
              {"config_hash", config_hash},
              {"config", config},
              {"curves", curve_files},
              {"fits", fits},
              {"certificates", certificates},
              {"predicted", predicted},
              {"verdicts", vs},
              {"all_pass", all_pass()}};
}

std::vector<catalog_entry> list_experiments() {
  std::vector<catalog_entry> out;
  for (const auto& row : kRunners) out.push_back({row.name, row.summary});
  return out;
}

nlohmann::json default_config(const std::string& experiment) {
  if (experiment == "chain-coupling") {
    return json{
        {"experiment", "chain-coupling"},
        {"seed", 1},
        {"output", "out/chain-coupling"},
        {"model", {{"rates", {{-1.0, 1.0}, {1.0, -1.0}}}, {"start_regimes", {0, 1}}}},
        {"mc",
         {{"replicates", 100000},
          {"time_grid", {{"start", 0.25}, {"stop", 5.0}, {"step", 0.25}}}}},
        {"law_check_times", {0.25, 0.5, 1.0, 2.0}},
        {"tolerances",
         {{"exact_law_z", 3.0}, {"bound_z", 3.0}, {"invariant_abs", 1e-12}}}};
  }
  if (experiment == "wasserstein-ode") return wasserstein_defaults(false);
  if (experiment == "wasserstein-noise") return wasserstein_defaults(true);
  if (experiment == "tv-example") {
    return json{{"experiment", "tv-example"},
                {"seed", 1},
                {"output", "out/tv-example"},
                {"model",
                 {{"b", 1.0},
                  {"s", 2.0},
                  {"sigma", {1.0, 1.0}},
                  {"rates", {{-1.0, 1.0}, {1.0, -1.0}}}}},
                {"rate", {{"p", 0.75}}},
                {"drift",
                 {{"c", {1.0, -2.0}},
                  {"annuli", {4.0, 8.0, 16.0, 32.0, 64.0}},
                  {"margin_frac", 0.05}}},
                {"start", {{"x", 5.0}, {"regime", 0}}},
                {"mc",
                 {{"replicates", 100000},
                  {"h", 0.01},
                  {"time_grid", {1.0, 2.0, 4.0, 8.0}},
                  {"reference_time", 32.0}}},
                {"tolerances",
                 {{"poisson_residual", 1e-10},
                  {"outer_ratio_max", -10.0},
                  {"mixture_max", 0.0},
                  {"tv_monotone_z", 2.0}}}};
  }
  if (experiment == "moment-bound") {
    return json{{"experiment", "moment-bound"},
                {"seed", 1},
                {"output", "out/moment-bound"},
                {"model",
                 {{"b", 1.0},
                  {"q", 2.0},
                  {"sigma", {1.0, 1.0}},
                  {"rates", {{-1.0, 1.0}, {1.0, -1.0}}}}},
                {"start", {{"x", 1.0}, {"regime", 0}}},
                {"growth", {{"radius_max", 5.0}, {"radius_step", 0.01}}},
                {"mc", {{"replicates", 10000}, {"h", 0.01}, {"time_grid", {0.5, 1.0, 2.0}}}},
                {"tolerances", {{"moment_z", 3.0}}}};
  }
  if (experiment == "certificates") {
    return json{{"experiment", "certificates"},
                {"seed", 1},
                {"output", "out/certificates"},
                {"model", {{"rates", {{-1.0, 1.0}, {1.0, -1.0}}}}},
                {"poisson", {{"c", {1.0, -2.0}}}},
                {"m_matrix", {{"c", {0.5, -2.0}}, {"random_trials", 1000}}},
                {"spectral", {{"c", {1.0, -2.0}}}},
                {"drift",
                 {{"b", 1.0},
                  {"s", 2.0},
                  {"sigma", {1.0, 1.0}},
                  {"p", 0.75},
                  {"c", {1.0, -2.0}},
                  {"annuli", {4.0, 8.0, 16.0, 32.0, 64.0}}}},
                {"tolerances",
                 {{"poisson_residual", 1e-10},
                  {"spectral_residual", 1e-8},
                  {"spectral_zeta_max", 0.5},
                  {"agreement_min", 1.0},
                  {"mixture_max", 0.0}}}};
  }
  if (experiment == "subordination") {
    json grid = json::array();
    for (int k = 0; k <= 11; ++k) grid.push_back(std::pow(10.0, 2.0 * k / 11.0));
    return json{{"experiment", "subordination"},
                {"seed", 1},
                {"output", "out/subordination"},
                {"subordinator", {{"kind", "stable"}, {"alpha", 0.8}, {"beta", 0.0}}},
                {"rate", {{"exponent", 0.5}}},
                {"mc", {{"replicates", 100000}, {"time_grid", grid}}},
                {"fit", {{"t_min", 1.0}, {"t_max", 100.0}}},
                {"laplace", {{"u", 1.0}}},
                {"tolerances", {{"slope_abs", 0.05}, {"laplace_z", 3.0}}}};
  }
  fail("UnknownExperiment", "no experiment named '" + experiment + "'");
}

void validate_config(const nlohmann::json& config) {
  if (!config.is_object()) fail("InvalidConfig", "config must be a JSON object");
  if (!config.contains("experiment") || !config.at("experiment").is_string()) {
    fail("InvalidConfig", "config needs an \"experiment\" string");
  }
  const auto name = config.at("experiment").get<std::string>();
  if (find_runner(name) == nullptr) {
    fail("UnknownExperiment", "no experiment named '" + name + "'");
  }
  if (config.contains("seed") &&
      !(config.at("seed").is_number_unsigned() || config.at("seed").is_number_integer())) {
    fail("InvalidConfig", "seed must be an integer");
  }
  if (config.contains("output") &&
      (!config.at("output").is_string() || config.at("output").get<std::string>().empty())) {
    fail("InvalidConfig", "output must be a nonempty string");
  }
  if (config.contains("mc")) {
    const json& mc = config.at("mc");
    if (!mc.is_object()) fail("InvalidConfig", "mc must be an object");
    if (mc.contains("replicates")) {
      if (!mc.at("replicates").is_number_integer() || mc.at("replicates").get<long>() < 1) {
        fail("InvalidConfig", "mc.replicates must be a positive integer");
      }
    }
    if (mc.contains("h")) {
      if (!mc.at("h").is_number() || !(mc.at("h").get<double>() > 0.0)) {
        fail("InvalidConfig", "mc.h must be positive");
      }
    }
    if (mc.contains("time_grid")) resolve_grid(mc.at("time_grid"));
  }
}

std::string config_fingerprint(const nlohmann::json& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(config.dump())));
  return std::string(buf);
}

experiment_report run(const nlohmann::json& config, const std::string& out_override,
                      std::optional<std::uint64_t> seed_override) {
  validate_config(config);
  const auto name = config.at("experiment").get<std::string>();

  json eff = default_config(name);
  deep_merge(eff, config);
  if (seed_override) eff["seed"] = *seed_override;
  if (!out_override.empty()) eff["output"] = out_override;
  validate_config(eff);

  experiment_report rep;
  rep.experiment = name;
  rep.seed = eff.at("seed").get<std::uint64_t>();
  rep.config = eff;
  rep.config_hash = config_fingerprint(eff);

  const auto outdir = eff.at("output").get<std::string>();
  try {
    find_runner(name)->fn(eff, outdir, rep);
  } catch (const rsde::error& e) {
    // e.what() is "code: message"; keep the code, prepend the experiment.
    std::string msg = e.what();
    const auto prefix = e.code() + ": ";
    if (msg.rfind(prefix, 0) == 0) msg.erase(0, prefix.size());
    fail(e.code(), "experiment '" + name + "': " + msg);
  } catch (const json::exception& e) {
    fail("InvalidConfig", "experiment '" + name + "': " + e.what());
  }

  std::filesystem::create_directories(outdir);
  const std::string report_path = (std::filesystem::path(outdir) / "report.json").string();
  std::FILE* fp = std::fopen(report_path.c_str(), "wb");
  if (!fp) fail("WriteFailed", "cannot open " + report_path);
  const std::string body = rep.to_json().dump(2) + "\n";
  std::fwrite(body.data(), 1, body.size(), fp);
  std::fclose(fp);

  return rep;
}

}  // namespace rsde::experiments
