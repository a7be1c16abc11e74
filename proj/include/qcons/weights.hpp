#pragma once

// Decaying consensus weight sequences alpha(i) = s*a/(i+1)^tau and the
// optional time-varying quantization step schedule Delta(i) = d0*(i+1)^tau_d.

#include <cmath>
#include <optional>
#include <stdexcept>

namespace qcons {

struct DeltaSchedule {
  double d0 = 1.0;
  double tau_d = 0.0;  // >= 0
};

struct WeightSequence {
  double a = 1.0;        // > 0
  double tau = 1.0;      // (0.5, 1] for persistence
  double scale_s = 1.0;  // > 0
  std::optional<DeltaSchedule> delta_schedule;

  double alpha(long long i) const {
    return scale_s * a / std::pow(static_cast<double>(i) + 1.0, tau);
  }

  double delta_at(long long i, double base_delta) const {
    if (!delta_schedule) return base_delta;
    return delta_schedule->d0 *
           std::pow(static_cast<double>(i) + 1.0, delta_schedule->tau_d);
  }

  void validate() const {
    if (a <= 0.0) throw std::invalid_argument("WeightSequence: a must be positive");
    if (scale_s <= 0.0) throw std::invalid_argument("WeightSequence: scale_s must be positive");
    if (delta_schedule && (delta_schedule->d0 <= 0.0 || delta_schedule->tau_d < 0.0))
      throw std::invalid_argument("WeightSequence: bad delta schedule");
  }
};

struct PersistenceReport {
  bool persistent = false;              // sum alpha = inf, sum alpha^2 < inf
  bool generalized_persistent = false;  // sum alpha = inf, sum alpha^2 Delta^2 < inf
};

// p-series tests: sum 1/(i+1)^tau diverges iff tau <= 1; sum 1/(i+1)^{2 tau}
// converges iff tau > 1/2; with Delta(i) ~ (i+1)^{tau_d}, sum alpha^2 Delta^2
// converges iff 2 tau - 2 tau_d > 1.
inline PersistenceReport persistence_check(const WeightSequence& w) {
  w.validate();
  PersistenceReport r;
  const bool diverging_sum = w.tau <= 1.0;
  r.persistent = diverging_sum && w.tau > 0.5;
  const double tau_d = w.delta_schedule ? w.delta_schedule->tau_d : 0.0;
  r.generalized_persistent = diverging_sum && (2.0 * w.tau - 2.0 * tau_d > 1.0);
  return r;
}

}  // namespace qcons
