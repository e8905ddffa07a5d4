#include "promptinv/lbfgs.hpp"

#include <stdexcept>
#include <vector>

namespace promptinv {

LbfgsHistory::LbfgsHistory(int capacity, double curvature_threshold)
    : capacity_(capacity), threshold_(curvature_threshold) {
  if (capacity < 0) throw std::invalid_argument("history capacity must be >= 0");
  if (curvature_threshold <= 0.0)
    throw std::invalid_argument("curvature threshold must be positive");
}

bool LbfgsHistory::push(const Eigen::VectorXd& s, const Eigen::VectorXd& y) {
  if (capacity_ == 0) return false;
  double sy = s.dot(y);
  if (!(sy > threshold_)) return false;  // also rejects NaN
  if (static_cast<int>(pairs_.size()) == capacity_) pairs_.pop_front();
  pairs_.push_back({s, y, 1.0 / sy});
  return true;
}

Eigen::VectorXd lbfgs_direction(const LbfgsHistory& history,
                                const Eigen::VectorXd& gradient) {
  if (!gradient.allFinite())
    throw std::domain_error("non-finite gradient passed to L-BFGS");

  const int k = history.size();
  if (k == 0) return gradient;

  Eigen::VectorXd q = gradient;
  std::vector<double> alpha(static_cast<std::size_t>(k));
  for (int i = k - 1; i >= 0; --i) {
    alpha[static_cast<std::size_t>(i)] = history.rho(i) * history.s(i).dot(q);
    q -= alpha[static_cast<std::size_t>(i)] * history.y(i);
  }

  double gamma = 1.0 / (history.rho(k - 1) * history.y(k - 1).squaredNorm());
  Eigen::VectorXd r = gamma * q;

  for (int i = 0; i < k; ++i) {
    double beta = history.rho(i) * history.y(i).dot(r);
    r += (alpha[static_cast<std::size_t>(i)] - beta) * history.s(i);
  }
  return r;
}

}  // namespace promptinv
