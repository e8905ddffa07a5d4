#pragma once

#include <Eigen/Dense>
#include <deque>

namespace promptinv {

/// Limited-memory curvature pairs over the flattened prompt variable.
/// Pairs failing the cautious test y's > curvature_threshold are dropped
/// at the door, never stored.
class LbfgsHistory {
 public:
  explicit LbfgsHistory(int capacity, double curvature_threshold = 1e-8);

  /// Returns false when the pair was rejected by the cautious test.
  bool push(const Eigen::VectorXd& s, const Eigen::VectorXd& y);

  int size() const { return static_cast<int>(pairs_.size()); }
  int capacity() const { return capacity_; }
  double curvature_threshold() const { return threshold_; }
  double rho(int i) const { return pairs_[static_cast<std::size_t>(i)].rho; }
  const Eigen::VectorXd& s(int i) const { return pairs_[static_cast<std::size_t>(i)].s; }
  const Eigen::VectorXd& y(int i) const { return pairs_[static_cast<std::size_t>(i)].y; }

 private:
  struct Pair {
    Eigen::VectorXd s, y;
    double rho;  // 1 / (y's)
  };
  std::deque<Pair> pairs_;  // oldest first
  int capacity_;
  double threshold_;
};

/// Two-loop recursion: returns an approximation of H * gradient with the
/// initial Hessian gamma * I, gamma = (s'y)/(y'y) of the newest pair.
/// Empty history degrades to steepest descent (the gradient itself).
Eigen::VectorXd lbfgs_direction(const LbfgsHistory& history,
                                const Eigen::VectorXd& gradient);

}  // namespace promptinv
