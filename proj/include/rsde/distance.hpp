#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "rsde/error.hpp"

namespace rsde::distance {

// Concave non-decreasing distance profile f with f(0) = 0. bounded_sup is
// sup f (infinity when unbounded); callers branch on boundedness, nothing
// enforces it here.
struct rho_profile {
  std::function<double(double)> f;
  double bounded_sup = std::numeric_limits<double>::infinity();

  static rho_profile identity();
  static rho_profile clipped(double cap);
  static rho_profile custom(std::function<double(double)> f, double sup);
};

// Shape check on a probe grid: f(0)=0, non-decreasing, midpoint concave.
// Throws InvalidProfile.
void validate_profile(const rho_profile& p, double probe_max = 8.0);

// Product-space semimetric rho((x,i),(y,j)) = f(|x-y|) + 1{i != j}.
double rho(const rho_profile& p, const Eigen::VectorXd& x, int i, const Eigen::VectorXd& y,
           int j);

// Exact empirical 1-Wasserstein distance between two equally sized 1d
// samples: mean absolute difference of sorted samples.
double empirical_w1_1d(std::vector<double> a, std::vector<double> b);

struct labeled_sample {
  double x = 0.0;
  int regime = 0;
};

// Histogram total variation distance between labeled samples on the product
// space. Bins are Freedman-Diaconis per regime on the pooled sample.
// aggregate_stderr is a first-order error bar for the estimate.
struct tv_estimate {
  double value = 0.0;
  double aggregate_stderr = 0.0;
  long bins = 0;
};
tv_estimate empirical_tv(const std::vector<labeled_sample>& a,
                         const std::vector<labeled_sample>& b, double bin_width = 0.0);

}  // namespace rsde::distance
