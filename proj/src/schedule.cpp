#include "promptinv/schedule.hpp"

#include <stdexcept>
#include <string>

namespace promptinv {

NoiseSchedule::NoiseSchedule(Eigen::VectorXd alpha_bar)
    : alpha_bar_(std::move(alpha_bar)) {
  if (alpha_bar_.size() == 0)
    throw std::invalid_argument("noise schedule is empty");
  if (alpha_bar_[0] > 1.0 || alpha_bar_[alpha_bar_.size() - 1] <= 0.0)
    throw std::invalid_argument("alpha_bar must stay in (0, 1]");
  for (Eigen::Index t = 1; t < alpha_bar_.size(); ++t)
    if (alpha_bar_[t] >= alpha_bar_[t - 1])
      throw std::invalid_argument("alpha_bar must be strictly decreasing");
}

NoiseSchedule NoiseSchedule::linear_beta(int T, double beta_start, double beta_end) {
  if (T < 1) throw std::invalid_argument("schedule needs T >= 1");
  Eigen::VectorXd ab(T);
  double prod = 1.0;
  for (int t = 0; t < T; ++t) {
    double beta = T == 1 ? beta_start
                         : beta_start + (beta_end - beta_start) * t / (T - 1);
    prod *= 1.0 - beta;
    ab[t] = prod;
  }
  return NoiseSchedule(std::move(ab));
}

void NoiseSchedule::check_timestep(int t) const {
  if (t < 1 || t > T())
    throw std::out_of_range("timestep " + std::to_string(t) +
                            " outside [1, " + std::to_string(T()) + "]");
}

double NoiseSchedule::alpha_bar(int t) const {
  check_timestep(t);
  return alpha_bar_[t - 1];
}

double NoiseSchedule::beta(int t) const {
  check_timestep(t);
  return t == 1 ? 1.0 - alpha_bar_[0] : 1.0 - alpha_bar_[t - 1] / alpha_bar_[t - 2];
}

}  // namespace promptinv
