#include "rsde/subordination.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace rsde::subordination {

namespace {

constexpr double kPi = 3.14159265358979323846;

void validate(const subordinator_spec& spec) {
  if (spec.beta < 0.0) fail("NegativeDrift", "drift must be nonnegative");
  switch (spec.kind) {
    case subordinator_spec::kind_t::stable:
      if (!(spec.alpha > 0.0 && spec.alpha < 1.0)) {
        fail("InvalidAlpha", "stable index must lie in (0, 1)");
      }
      break;
    case subordinator_spec::kind_t::cpp: {
      if (spec.rate < 0.0) fail("InvalidJumpLaw", "jump rate must be nonnegative");
      if (spec.rate > 0.0 && spec.jump_atoms.empty()) {
        fail("InvalidJumpLaw", "positive rate needs jump atoms");
      }
      double total = 0.0;
      for (const auto& [size, weight] : spec.jump_atoms) {
        if (size <= 0.0) fail("InvalidJumpLaw", "jump sizes must be positive");
        if (weight <= 0.0) fail("InvalidJumpLaw", "jump weights must be positive");
        total += weight;
      }
      if (!spec.jump_atoms.empty() && std::abs(total - 1.0) > 1e-9) {
        fail("InvalidJumpLaw", "jump weights must sum to one");
      }
      break;
    }
    case subordinator_spec::kind_t::drift_only:
      break;
  }
}

// One-sided CMS transform: S has Laplace transform e^{-u^alpha}.
double stable_one(double alpha, rng::stream& rs) {
  const double v = kPi * rs.uniform();  // in (0, pi)
  const double e = rs.exponential(1.0);
  const double ratio = (1.0 - alpha) / alpha;
  return std::sin(alpha * v) * std::pow(std::sin((1.0 - alpha) * v), ratio) /
         (std::pow(std::sin(v), 1.0 / alpha) * std::pow(e, ratio));
}

double cpp_jumps(const subordinator_spec& spec, double t, rng::stream& rs) {
  if (spec.rate == 0.0 || t == 0.0) return 0.0;
  const std::uint64_t n = rs.poisson(spec.rate * t);
  double total = 0.0;
  for (std::uint64_t k = 0; k < n; ++k) {
    double u = rs.uniform();
    double size = spec.jump_atoms.back().first;
    for (const auto& [s, w] : spec.jump_atoms) {
      u -= w;
      if (u <= 0.0) {
        size = s;
        break;
      }
    }
    total += size;
  }
  return total;
}

double increment(const subordinator_spec& spec, double dt, rng::stream& rs) {
  if (dt <= 0.0) return 0.0;
  switch (spec.kind) {
    case subordinator_spec::kind_t::stable:
      return spec.beta * dt + std::pow(dt, 1.0 / spec.alpha) * stable_one(spec.alpha, rs);
    case subordinator_spec::kind_t::cpp:
      return spec.beta * dt + cpp_jumps(spec, dt, rs);
    case subordinator_spec::kind_t::drift_only:
      return spec.beta * dt;
  }
  return 0.0;
}

void check_times(const std::vector<double>& times) {
  if (times.empty()) fail("EmptySample", "no sample times requested");
  if (times.front() < 0.0) fail("NegativeTime", "sample times must be nonnegative");
  for (std::size_t s = 1; s < times.size(); ++s) {
    if (times[s] <= times[s - 1]) fail("TimesNotIncreasing", "sample times must increase");
  }
}

}  // namespace

subordinator_spec subordinator_spec::stable_spec(double alpha, double beta) {
  subordinator_spec spec;
  spec.kind = kind_t::stable;
  spec.alpha = alpha;
  spec.beta = beta;
  validate(spec);
  return spec;
}

subordinator_spec subordinator_spec::drift_spec(double beta) {
  subordinator_spec spec;
  spec.kind = kind_t::drift_only;
  spec.beta = beta;
  validate(spec);
  return spec;
}

subordinator_spec subordinator_spec::cpp_spec(double beta, double rate,
                                              std::vector<std::pair<double, double>> atoms) {
  subordinator_spec spec;
  spec.kind = kind_t::cpp;
  spec.beta = beta;
  spec.rate = rate;
  spec.jump_atoms = std::move(atoms);
  validate(spec);
  return spec;
}

double bernstein_phi(const subordinator_spec& spec, double u) {
  validate(spec);
  if (u <= 0.0) fail("NonPositiveArgument", "phi is evaluated on u > 0");
  switch (spec.kind) {
    case subordinator_spec::kind_t::stable:
      return spec.beta * u + std::pow(u, spec.alpha);
    case subordinator_spec::kind_t::cpp: {
      double jump = 0.0;
      for (const auto& [size, weight] : spec.jump_atoms) {
        jump += weight * (1.0 - std::exp(-u * size));
      }
      return spec.beta * u + spec.rate * jump;
    }
    case subordinator_spec::kind_t::drift_only:
      return spec.beta * u;
  }
  return 0.0;
}

double sample_subordinator(const subordinator_spec& spec, double t, rng::stream& rs) {
  validate(spec);
  if (t < 0.0) fail("NegativeTime", "time must be nonnegative");
  return increment(spec, t, rs);
}

rate_curve subordinate_rate(const std::function<double(double)>& r,
                            const subordinator_spec& spec, const std::vector<double>& times,
                            long replicates, const rng::key& key, int batches) {
  validate(spec);
  if (!r) fail("MissingEvaluator", "rate evaluator is required");
  check_times(times);
  if (replicates < 100) fail("TooFewReplicates", "need at least 100 replicates");
  if (batches < 2 || static_cast<long>(batches) > replicates) {
    fail("InvalidOption", "batches must lie in [2, replicates]");
  }

  const std::size_t nt = times.size();
  std::vector<double> sum(nt, 0.0), sumsq(nt, 0.0);
  std::vector<std::vector<double>> batch_sum(nt,
                                             std::vector<double>(static_cast<std::size_t>(batches), 0.0));
  std::vector<long> batch_n(static_cast<std::size_t>(batches), 0);

  for (long rep = 0; rep < replicates; ++rep) {
    auto rs = rng::make_stream(key, static_cast<std::uint64_t>(rep));
    const std::size_t b = static_cast<std::size_t>((rep * batches) / replicates);
    ++batch_n[b];
    double s1 = 0.0;
    if (spec.kind == subordinator_spec::kind_t::stable) s1 = stable_one(spec.alpha, rs);
    for (std::size_t k = 0; k < nt; ++k) {
      const double t = times[k];
      double s;
      if (spec.kind == subordinator_spec::kind_t::stable) {
        s = spec.beta * t + std::pow(t, 1.0 / spec.alpha) * s1;
      } else {
        s = increment(spec, t, rs);
      }
      const double v = r(s);
      sum[k] += v;
      sumsq[k] += v * v;
      batch_sum[k][b] += v;
    }
  }

  const double nn = static_cast<double>(replicates);
  rate_curve out;
  out.times = times;
  out.replicates = replicates;
  out.value.resize(nt);
  out.stderr_.resize(nt);
  for (std::size_t k = 0; k < nt; ++k) {
    const double mean = sum[k] / nn;
    out.value[k] = mean;
    const double var = std::max(0.0, (sumsq[k] - nn * mean * mean) / (nn - 1.0));
    out.stderr_[k] = std::sqrt(var / nn);

    std::vector<double> means(static_cast<std::size_t>(batches));
    for (std::size_t b = 0; b < means.size(); ++b) {
      means[b] = batch_n[b] > 0 ? batch_sum[k][b] / static_cast<double>(batch_n[b]) : 0.0;
    }
    std::sort(means.begin(), means.end());
    const double median = means[means.size() / 2];
    const double top = means.back();
    if (median > 0.0 && top > 25.0 * median) {
      fail("MomentBlowup", "batch means are unstable at t = " + std::to_string(times[k]) +
                               "; the subordinated mean looks infinite");
    }
  }
  return out;
}

time_changed_path subordinate_path(const sde::trajectory& traj, const subordinator_spec& spec,
                                   const std::vector<double>& sample_times, rng::stream& rs) {
  validate(spec);
  if (traj.times.empty()) fail("EmptySample", "trajectory has no nodes");
  check_times(sample_times);

  const double horizon = traj.horizon();
  time_changed_path out;
  out.times.reserve(sample_times.size());
  out.s.reserve(sample_times.size());
  out.x.reserve(sample_times.size());
  out.regime.reserve(sample_times.size());

  double s = 0.0;
  double prev = 0.0;
  for (const double t : sample_times) {
    s += increment(spec, t - prev, rs);
    prev = t;
    if (s > horizon * (1.0 + 1e-12)) {
      fail("HorizonExceeded", "time change reached " + std::to_string(s) +
                                  " past the stored horizon " + std::to_string(horizon));
    }
    out.times.push_back(t);
    out.s.push_back(s);
    out.x.push_back(traj.x_at(s));
    out.regime.push_back(traj.regime_at(s));
  }
  return out;
}

}  // namespace rsde::subordination
