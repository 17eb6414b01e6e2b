#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "rsde/chain.hpp"
#include "rsde/rates.hpp"
#include "rsde/sde.hpp"

namespace rsde::lyapunov {

// Test function on R^d x regimes. Gradient and Hessian are optional; when
// absent they are replaced by central finite differences with steps
// 1e-6*(1+|x|) and 1e-4*(1+|x|).
struct regime_function {
  std::function<double(const Eigen::VectorXd&, int)> value;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&, int)> gradient;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&, int)> hessian;
};

// Full generator action at (x, i):
//   <b(x,i), grad f> + 1/2 tr(sigma sigma^T hess f) + sum_j q_ij(x) f(x,j).
double generator_action(const sde::rs_model& model, const regime_function& f,
                        const Eigen::VectorXd& x, int i);

// Candidate certificate data: a regime-independent V > 1, a concave rate
// theta, and per-regime drift levels c_i.
struct lyapunov_spec {
  std::function<double(const Eigen::VectorXd&)> V;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> V_grad;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> V_hess;
  rates::rate_spec theta = rates::rate_spec::power(0.5);
  Eigen::VectorXd c;
};

enum class verdict_t { feasible, infeasible, inconclusive };

// Worst-case ratios over one probe sphere.
struct annulus_row {
  double radius = 0.0;
  Eigen::VectorXd drift_ratio;     // per regime: max over probes of L_i V / theta(V)
  double theta_prime = 0.0;        // max theta'(V)
  double theta_over_v = 0.0;       // max theta(V) / V
  double theta_drift_ratio = 0.0;  // max over probes of sup_i L_i(theta o V) / theta(V)
};

struct drift_certificate {
  std::string kind = "subgeometric-drift";
  verdict_t verdict = verdict_t::inconclusive;
  Eigen::VectorXd c;
  Eigen::VectorXd lambda;
  Eigen::VectorXd margin;          // per regime: margin_frac * |c_i|
  double mixture = 0.0;            // sum_i c_i lambda_i
  std::vector<annulus_row> evidence;
  bool scale_invariant_ratios = false;  // theta positively homogeneous of degree 1
  std::string notes;
};

struct drift_options {
  double margin_frac = 0.05;
  double trend_tol = 1e-9;  // slack for the non-increase tests
};

// Evaluates the four ratio families on probe spheres |x| = R_k along the
// given directions. Feasible needs, on the outer two spheres: every
// L_i V / theta(V) below c_i minus the margin and non-increasing, the three
// limit families non-increasing in absolute value, and sum c_i lambda_i < 0.
// A clear violation of the level inequality on the outermost sphere is
// reported as infeasible; anything between is inconclusive.
drift_certificate check_subgeometric_drift(const lyapunov_spec& spec,
                                           const sde::rs_model& model,
                                           const std::vector<double>& annuli,
                                           const std::vector<Eigen::VectorXd>& directions,
                                           const drift_options& opt = {});

struct poisson_solution {
  double beta = 0.0;
  Eigen::VectorXd gamma;
  double residual = 0.0;  // ||Q gamma + c + beta 1||_inf
};

// Solves Q gamma = -c - beta 1 with beta = -sum_i c_i lambda_i, pinning
// gamma_0 = 0 (solutions are unique up to additive constants).
poisson_solution poisson_solve(const chain::generator_matrix& g, const Eigen::VectorXd& c);

struct composite_options {
  double R0 = 1.0;
  double R_cap = 1e7;
  double m = 0.0;  // 0 picks max{beta, 2} + 1
  int radii_per_annulus = 5;
};

struct composite_report {
  double beta = 0.0;
  double m = 0.0;
  Eigen::VectorXd gamma;
  double shift = 0.0;     // additive constant keeping the composite >= 1 near 0
  double R = 0.0;         // smallest doubling radius whose annulus [R, 2R] passes
  bool core_ok = false;   // L Vbar <= -(m-1) theta(V) on [R, 2R]
  bool literal_ok = false;    // L Vbar <= -theta(Vbar) on [R, 2R]
  bool domination_ok = false; // Vbar <= (m-1) V on [R, 2R]
  double core_margin = 0.0;   // min over probes of -L Vbar - (m-1) theta(V)
  double literal_margin = 0.0;
  verdict_t verdict = verdict_t::inconclusive;  // feasible iff core_ok
  regime_function composite;  // Vbar(x,i) = (m/beta)(V + gamma_i theta(V)) + shift
};

// Builds the composite function and searches doubling radii R0, 2 R0, ... for
// the first annulus [R, 2R] on which the core inequality
// L Vbar <= -(m-1) theta(V) holds at every probe; the stronger literal form
// L Vbar <= -theta(Vbar) and the domination Vbar <= (m-1) V it would follow
// from are evaluated on the same annulus and reported with margins.
composite_report composite_lyapunov(const sde::rs_model& model, const lyapunov_spec& spec,
                                    const Eigen::VectorXd& gamma, double beta,
                                    const std::vector<Eigen::VectorXd>& directions,
                                    const composite_options& opt = {});

struct negative_drift_report {
  std::vector<double> radii;
  std::vector<double> g_hat;  // min over the sphere and regimes of -L Vcal
  bool feasible = false;      // positive everywhere, increasing on the outer spheres
};

// Checks L Vcal(x,i) <= -g(x) with g growing at infinity, via
// g_hat(R) = min over the probe sphere of -L Vcal.
negative_drift_report check_negative_drift(const sde::rs_model& model,
                                           const regime_function& vcal,
                                           const std::vector<double>& annuli,
                                           const std::vector<Eigen::VectorXd>& directions);

enum class m_matrix_verdict { nonsingular_m, singular_m, not_m };

struct m_matrix_report {
  m_matrix_verdict verdict = m_matrix_verdict::not_m;
  bool z_matrix = false;             // off-diagonal entries <= 0
  Eigen::VectorXd leading_minors;
  double min_real_eig = 0.0;
  bool minor_eigen_agree = true;     // minor criterion vs spectral criterion
};

// Z-matrix test, then: nonsingular M iff all leading principal minors are
// positive; otherwise singular M iff no eigenvalue real part is below -1e-10.
m_matrix_report m_matrix_test(const Eigen::MatrixXd& M);

// Perron eigenvalue (largest real part) and positive eigenvector of an
// irreducible Metzler matrix, by power iteration on a positive diagonal shift.
std::pair<double, Eigen::VectorXd> perron_eigenvalue(const Eigen::MatrixXd& metzler,
                                                     double tol = 1e-10);

struct spectral_certificate {
  double zeta = 0.0;
  double eta = 0.0;
  Eigen::VectorXd gamma;   // positive, normalized to max entry 1
  double residual = 0.0;   // ||(Q + zeta diag c) gamma + eta gamma||_inf
};

// Finds the largest zeta in (0,1) whose Perron eigenvalue of Q + zeta diag c
// is at most -eta_min, by grid scan plus bisection toward the boundary.
spectral_certificate geometric_spectral_certificate(const chain::generator_matrix& g,
                                                    const Eigen::VectorXd& c,
                                                    double eta_min = 1e-6);

}  // namespace rsde::lyapunov
