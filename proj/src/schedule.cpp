// SPDX-License-Identifier: Apache-2.0

#include "sgia/schedule.hpp"

#include <cmath>
#include <numbers>

#include "sgia/error.hpp"

namespace sgia {

void CosineRestartSchedule::validate() const {
  if (!(lr0 > 0.0)) throw ConfigError("lr0 must be positive");
  if (lr_min < 0.0 || lr_min > lr0) throw ConfigError("lr_min must be in [0, lr0]");
  if (t0 < 1) throw ConfigError("t0 must be >= 1");
  if (t_mult < 1) throw ConfigError("t_mult must be >= 1");
}

double lr_at(double fraction, int /*cycle_index*/, const CosineRestartSchedule& s) {
  return s.lr_min + 0.5 * (s.lr0 - s.lr_min) * (1.0 + std::cos(std::numbers::pi * fraction));
}

CyclePosition locate(double epochs, const CosineRestartSchedule& s) {
  s.validate();
  if (epochs < 0.0) throw ConfigError("schedule time must be non-negative");
  CyclePosition pos;
  pos.cycle_length = s.t0;
  while (static_cast<double>(pos.cycle_start + pos.cycle_length) <= epochs) {
    pos.cycle_start += pos.cycle_length;
    pos.cycle_length *= s.t_mult;
    ++pos.cycle;
  }
  pos.fraction = (epochs - static_cast<double>(pos.cycle_start)) /
                 static_cast<double>(pos.cycle_length);
  return pos;
}

double lr_at_epoch(double epochs, const CosineRestartSchedule& s) {
  const auto pos = locate(epochs, s);
  return lr_at(pos.fraction, pos.cycle, s);
}

std::vector<long long> cycle_ends(long long total_epochs, const CosineRestartSchedule& s) {
  s.validate();
  std::vector<long long> ends;
  long long end = 0;
  long long length = s.t0;
  while (end + length <= total_epochs) {
    end += length;
    ends.push_back(end);
    length *= s.t_mult;
  }
  return ends;
}

}  // namespace sgia
