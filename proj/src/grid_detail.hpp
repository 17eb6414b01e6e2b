#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "rsde/chain.hpp"

namespace rsde::sde::detail {

// Integration grid: the uniform mesh with switch times, requested sample
// times and any marked times (thinning proposals) spliced in. Times closer
// than tol collapse to one node; annotations key off tolerant equality.
struct grid {
  std::vector<double> t;
  std::vector<long> sample_idx;  // index into sample_times, or -1
  std::vector<char> marked;
  std::vector<int> regime_a;
  std::vector<int> regime_b;

  std::size_t nodes() const { return t.size(); }
};

inline double grid_tol(double T) { return 1e-12 * std::max(1.0, T); }

inline void annotate_regimes(const chain::chain_path& p, const std::vector<double>& t,
                             double tol, std::vector<int>& out) {
  out.assign(t.size(), p.initial_state);
  std::size_t e = 0;
  int s = p.initial_state;
  for (std::size_t k = 0; k < t.size(); ++k) {
    while (e < p.events.size() && p.events[e].first <= t[k] + tol) {
      s = p.events[e].second;
      ++e;
    }
    out[k] = s;
  }
}

inline grid make_grid(double T, double h, const chain::chain_path* a,
                      const chain::chain_path* b, const std::vector<double>& sample_times,
                      const std::vector<double>& marked_times) {
  const double tol = grid_tol(T);
  std::vector<double> pts;
  const long steps = std::max(1L, static_cast<long>(std::ceil(T / h - 1e-9)));
  pts.reserve(static_cast<std::size_t>(steps) + 2 + sample_times.size() +
              marked_times.size() + (a ? a->events.size() : 0) +
              (b ? b->events.size() : 0));
  for (long k = 0; k < steps; ++k) pts.push_back(static_cast<double>(k) * h);
  pts.push_back(T);
  if (a) {
    for (const auto& ev : a->events)
      if (ev.first <= T + tol) pts.push_back(std::min(ev.first, T));
  }
  if (b) {
    for (const auto& ev : b->events)
      if (ev.first <= T + tol) pts.push_back(std::min(ev.first, T));
  }
  for (const double s : sample_times)
    if (s >= -tol && s <= T + tol) pts.push_back(std::clamp(s, 0.0, T));
  for (const double s : marked_times)
    if (s >= -tol && s <= T + tol) pts.push_back(std::clamp(s, 0.0, T));
  std::sort(pts.begin(), pts.end());

  grid g;
  g.t.reserve(pts.size());
  for (const double v : pts) {
    if (g.t.empty() || v - g.t.back() > tol) g.t.push_back(v);
  }

  g.sample_idx.assign(g.t.size(), -1);
  for (std::size_t si = 0; si < sample_times.size(); ++si) {
    const double s = sample_times[si];
    if (s < -tol || s > T + tol) continue;
    auto it = std::lower_bound(g.t.begin(), g.t.end(), s - 2.0 * tol);
    if (it != g.t.end() && std::abs(*it - s) <= 2.0 * tol) {
      g.sample_idx[static_cast<std::size_t>(it - g.t.begin())] = static_cast<long>(si);
    }
  }

  g.marked.assign(g.t.size(), 0);
  for (const double s : marked_times) {
    if (s < -tol || s > T + tol) continue;
    auto it = std::lower_bound(g.t.begin(), g.t.end(), s - 2.0 * tol);
    if (it != g.t.end() && std::abs(*it - s) <= 2.0 * tol) {
      g.marked[static_cast<std::size_t>(it - g.t.begin())] = 1;
    }
  }

  if (a) annotate_regimes(*a, g.t, tol, g.regime_a);
  if (b) annotate_regimes(*b, g.t, tol, g.regime_b);
  return g;
}

}  // namespace rsde::sde::detail
