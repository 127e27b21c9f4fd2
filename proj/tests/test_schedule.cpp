// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "sgia/error.hpp"
#include "sgia/schedule.hpp"

using namespace sgia;

TEST_CASE("cycle ends over 128 epochs") {
  const CosineRestartSchedule s;
  CHECK(cycle_ends(128, s) == std::vector<long long>{1, 3, 7, 15, 31, 63, 127});
}

TEST_CASE("lr restarts at lr0 and reaches lr_min at each cycle end") {
  const CosineRestartSchedule s;
  for (int start : {0, 1, 3, 7, 15, 31, 63}) CHECK(lr_at_epoch(start, s) == 0.01);
  for (int cycle = 0; cycle < 7; ++cycle) CHECK(lr_at(1.0, cycle, s) == 0.0);
  // Just before a boundary the rate is close to the floor.
  CHECK(lr_at_epoch(2.999, s) < 1e-6);
}

TEST_CASE("lr follows the half cosine inside a cycle") {
  const CosineRestartSchedule s{0.02, 0.001, 2, 3};
  const auto pos = locate(2.0 + 3.0, s);  // second cycle: [2, 8)
  CHECK(pos.cycle == 1);
  CHECK(pos.cycle_start == 2);
  CHECK(pos.cycle_length == 6);
  CHECK(pos.fraction == doctest::Approx(0.5));
  const double expect = 0.001 + 0.5 * (0.02 - 0.001) * (1.0 + std::cos(std::numbers::pi * 0.5));
  CHECK(lr_at_epoch(5.0, s) == doctest::Approx(expect));
}

TEST_CASE("t_mult = 1 gives equal cycles") {
  const CosineRestartSchedule s{0.1, 0.0, 4, 1};
  CHECK(cycle_ends(13, s) == std::vector<long long>{4, 8, 12});
  CHECK(lr_at_epoch(8.0, s) == 0.1);
}

TEST_CASE("invalid schedules are rejected") {
  CHECK_THROWS_AS((CosineRestartSchedule{0.0, 0.0, 1, 2}.validate()), ConfigError);
  CHECK_THROWS_AS((CosineRestartSchedule{0.01, 0.02, 1, 2}.validate()), ConfigError);
  CHECK_THROWS_AS((CosineRestartSchedule{0.01, 0.0, 0, 2}.validate()), ConfigError);
  CHECK_THROWS_AS((CosineRestartSchedule{0.01, 0.0, 1, 0}.validate()), ConfigError);
}
