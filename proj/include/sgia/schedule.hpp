// SPDX-License-Identifier: Apache-2.0
//
// Cosine annealing with warm restarts. Cycle c (0-based) lasts
// t0 * t_mult^c epochs; within a cycle the rate falls from lr0 to lr_min
// along half a cosine period and jumps back to lr0 at the next restart.
#pragma once

#include <vector>

namespace sgia {

struct CosineRestartSchedule {
  double lr0 = 0.01;
  double lr_min = 0.0;
  int t0 = 1;
  int t_mult = 2;

  void validate() const;
};

// lr_min + (lr0 - lr_min) * (1 + cos(pi * fraction)) / 2 for fraction in
// [0, 1]. The cycle index does not change the value; it is accepted so call
// sites state which cycle they mean.
double lr_at(double fraction, int cycle_index, const CosineRestartSchedule& schedule);

struct CyclePosition {
  int cycle = 0;
  long long cycle_start = 0;   // epoch at which the cycle begins
  long long cycle_length = 0;  // in epochs
  double fraction = 0.0;       // position within the cycle, [0, 1)
};

// Position of continuous training time `epochs` (>= 0, fractional epochs
// allowed) within the restart structure.
CyclePosition locate(double epochs, const CosineRestartSchedule& schedule);

double lr_at_epoch(double epochs, const CosineRestartSchedule& schedule);

// Cumulative epoch counts at which cycles end, up to and including
// total_epochs.
std::vector<long long> cycle_ends(long long total_epochs, const CosineRestartSchedule& schedule);

}  // namespace sgia
