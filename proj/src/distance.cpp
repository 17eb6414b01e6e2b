#include "rsde/distance.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

namespace rsde::distance {

rho_profile rho_profile::identity() {
  rho_profile p;
  p.f = [](double u) { return u; };
  p.bounded_sup = std::numeric_limits<double>::infinity();
  return p;
}

rho_profile rho_profile::clipped(double cap) {
  if (cap <= 0.0) fail("InvalidProfile", "clip level must be positive");
  rho_profile p;
  p.f = [cap](double u) { return std::min(u, cap); };
  p.bounded_sup = cap;
  return p;
}

rho_profile rho_profile::custom(std::function<double(double)> f, double sup) {
  rho_profile p;
  p.f = std::move(f);
  p.bounded_sup = sup;
  return p;
}

void validate_profile(const rho_profile& p, double probe_max) {
  if (!p.f) fail("InvalidProfile", "profile has no callable");
  if (std::abs(p.f(0.0)) > 1e-12) fail("InvalidProfile", "f(0) must be 0");
  const int n = 64;
  double prev = 0.0;
  for (int k = 1; k <= n; ++k) {
    const double u = probe_max * k / n;
    const double v = p.f(u);
    if (!std::isfinite(v)) fail("InvalidProfile", "f not finite at " + std::to_string(u));
    if (v < prev - 1e-12) fail("InvalidProfile", "f must be non-decreasing");
    prev = v;
  }
  for (int k = 0; k + 2 <= n; k += 2) {
    const double u = probe_max * k / n;
    const double w = probe_max * (k + 2) / n;
    const double mid = p.f(0.5 * (u + w));
    if (mid < 0.5 * (p.f(u) + p.f(w)) - 1e-12) {
      fail("InvalidProfile", "f must be concave");
    }
  }
}

double rho(const rho_profile& p, const Eigen::VectorXd& x, int i, const Eigen::VectorXd& y,
           int j) {
  if (x.size() != y.size()) fail("LengthMismatch", "points live in different dimensions");
  return p.f((x - y).norm()) + (i != j ? 1.0 : 0.0);
}

double empirical_w1_1d(std::vector<double> a, std::vector<double> b) {
  if (a.size() != b.size()) fail("LengthMismatch", "samples must have equal size");
  if (a.empty()) fail("EmptySample", "need at least one point");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double sum = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) sum += std::abs(a[k] - b[k]);
  return sum / static_cast<double>(a.size());
}

namespace {

double fd_width(std::vector<double>& pooled) {
  std::sort(pooled.begin(), pooled.end());
  const std::size_t n = pooled.size();
  const double q1 = pooled[n / 4];
  const double q3 = pooled[(3 * n) / 4];
  const double iqr = q3 - q1;
  return 2.0 * iqr / std::cbrt(static_cast<double>(n));
}

}  // namespace

tv_estimate empirical_tv(const std::vector<labeled_sample>& a,
                         const std::vector<labeled_sample>& b, double bin_width) {
  if (a.empty() || b.empty()) fail("EmptySample", "need points in both samples");
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());

  int max_regime = 0;
  for (const auto& s : a) max_regime = std::max(max_regime, s.regime);
  for (const auto& s : b) max_regime = std::max(max_regime, s.regime);

  tv_estimate out;
  double var_sum = 0.0;

  for (int regime = 0; regime <= max_regime; ++regime) {
    std::vector<double> pooled;
    for (const auto& s : a)
      if (s.regime == regime) pooled.push_back(s.x);
    for (const auto& s : b)
      if (s.regime == regime) pooled.push_back(s.x);
    if (pooled.empty()) continue;

    double width = bin_width > 0.0 ? bin_width : fd_width(pooled);
    const double lo = *std::min_element(pooled.begin(), pooled.end());
    const double hi = *std::max_element(pooled.begin(), pooled.end());
    if (width <= 0.0 || (hi - lo) / width > 4e6) width = hi - lo;  // degenerate spread

    auto bin_of = [lo, width](double x) {
      if (width <= 0.0) return 0L;
      return static_cast<long>(std::floor((x - lo) / width));
    };

    std::map<long, std::pair<double, double>> counts;
    for (const auto& s : a)
      if (s.regime == regime) counts[bin_of(s.x)].first += 1.0;
    for (const auto& s : b)
      if (s.regime == regime) counts[bin_of(s.x)].second += 1.0;

    for (const auto& [bin, c] : counts) {
      const double pa = c.first / na;
      const double pb = c.second / nb;
      out.value += 0.5 * std::abs(pa - pb);
      var_sum += pa * (1.0 - pa) / na + pb * (1.0 - pb) / nb;
      ++out.bins;
    }
  }
  out.value = std::min(out.value, 1.0);
  out.aggregate_stderr = 0.5 * std::sqrt(var_sum);
  return out;
}

}  // namespace rsde::distance
