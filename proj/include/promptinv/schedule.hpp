#pragma once

#include <Eigen/Dense>

namespace promptinv {

/// Cumulative signal-retention coefficients of the forward diffusion chain.
/// alpha_bar(t) is indexed with t in [1, T] and strictly decreasing.
class NoiseSchedule {
 public:
  explicit NoiseSchedule(Eigen::VectorXd alpha_bar);

  /// Linear-beta convention: alpha_bar_t = prod_{s<=t} (1 - beta_s) with
  /// beta linear from beta_start to beta_end over T steps.
  static NoiseSchedule linear_beta(int T, double beta_start = 1e-4,
                                   double beta_end = 2e-2);

  int T() const { return static_cast<int>(alpha_bar_.size()); }
  double alpha_bar(int t) const;
  double beta(int t) const;
  const Eigen::VectorXd& alpha_bar() const { return alpha_bar_; }

  void check_timestep(int t) const;

 private:
  Eigen::VectorXd alpha_bar_;
};

}  // namespace promptinv
