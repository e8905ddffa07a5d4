#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "promptinv/schedule.hpp"

using namespace promptinv;

TEST_CASE("linear beta schedule matches the closed-form product") {
  NoiseSchedule s = NoiseSchedule::linear_beta(1000);
  CHECK(s.T() == 1000);

  // independent recomputation of the cumulative product
  double prod = 1.0;
  for (int t = 1; t <= 1000; ++t) {
    double beta = 1e-4 + (2e-2 - 1e-4) * (t - 1) / 999.0;
    prod *= 1.0 - beta;
    CHECK(s.alpha_bar(t) == doctest::Approx(prod).epsilon(1e-12));
  }

  CHECK(s.alpha_bar(1) == doctest::Approx(1.0 - 1e-4));
  CHECK(s.beta(1) == doctest::Approx(1e-4));
  CHECK(s.beta(1000) == doctest::Approx(2e-2).epsilon(1e-9));

  // beta(t) inverts the product: alpha_bar(t) == (1 - beta(t)) alpha_bar(t-1)
  for (int t : {2, 17, 500, 999}) {
    CHECK(s.alpha_bar(t) ==
          doctest::Approx((1.0 - s.beta(t)) * s.alpha_bar(t - 1)).epsilon(1e-12));
  }
}

TEST_CASE("alpha_bar is strictly decreasing and positive") {
  NoiseSchedule s = NoiseSchedule::linear_beta(1000);
  for (int t = 2; t <= 1000; ++t) CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
  CHECK(s.alpha_bar(1000) > 0.0);
  CHECK(s.alpha_bar(1) <= 1.0);
}

TEST_CASE("timestep bounds are enforced") {
  NoiseSchedule s = NoiseSchedule::linear_beta(10);
  CHECK_NOTHROW(s.check_timestep(1));
  CHECK_NOTHROW(s.check_timestep(10));
  CHECK_THROWS_AS(s.check_timestep(0), std::out_of_range);
  CHECK_THROWS_AS(s.check_timestep(11), std::out_of_range);
  CHECK_THROWS_AS(s.alpha_bar(0), std::out_of_range);
  CHECK_THROWS_AS(s.beta(-1), std::out_of_range);
}

TEST_CASE("constructor validates the sequence") {
  Eigen::VectorXd ok(3);
  ok << 0.9, 0.5, 0.1;
  CHECK_NOTHROW(NoiseSchedule{ok});

  Eigen::VectorXd empty(0);
  CHECK_THROWS_AS(NoiseSchedule{empty}, std::invalid_argument);

  Eigen::VectorXd rising(2);
  rising << 0.5, 0.6;
  CHECK_THROWS_AS(NoiseSchedule{rising}, std::invalid_argument);

  Eigen::VectorXd flat(2);
  flat << 0.5, 0.5;
  CHECK_THROWS_AS(NoiseSchedule{flat}, std::invalid_argument);

  Eigen::VectorXd nonpos(2);
  nonpos << 0.5, 0.0;
  CHECK_THROWS_AS(NoiseSchedule{nonpos}, std::invalid_argument);

  Eigen::VectorXd above_one(2);
  above_one << 1.5, 0.5;
  CHECK_THROWS_AS(NoiseSchedule{above_one}, std::invalid_argument);

  CHECK_THROWS_AS(NoiseSchedule::linear_beta(0), std::invalid_argument);
}
