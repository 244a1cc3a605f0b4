#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>

#include "auxbo/tasks/dataset.hpp"

namespace auxbo {

/// Disturbance-ramp family. A damped spring-mass "grip" with a design-
/// parameterized feedback controller is pushed by a disturbance that steps
/// up through 0.5, 0.6, ..., 6.0, each level held for a fixed number of
/// integration steps. The reward is the last level survived without the
/// position leaving the unit band around g0.
struct RampSpec {
  static constexpr double dt = 0.05;
  static constexpr std::size_t steps_per_level = 20;
  static constexpr std::size_t levels = 56;  // 0.5 .. 6.0
  static constexpr std::size_t input_dim = 4;
  static constexpr std::size_t aux_channels = 4;  // s, v, level, done

  /// Level j as an exact-as-possible decimal: (5 + j) / 10.
  static double level(std::size_t j) { return static_cast<double>(5 + j) / 10.0; }
};

/// Integrates one trial. `levels` < RampSpec::levels truncates the ramp early
/// (used to check reward monotonicity).
inline TrialRecord simulate_trial(const Theta& th, std::span<const double> x,
                                  std::size_t levels = RampSpec::levels) {
  require(x.size() == RampSpec::input_dim, "simulate_trial: design must have 4 entries");
  for (double xi : x) require(xi >= -1.0 && xi <= 1.0, "simulate_trial: design outside [-1,1]^4");
  require(levels >= 1 && levels <= RampSpec::levels, "simulate_trial: level count out of range");

  TrialRecord rec;
  rec.x.assign(x.begin(), x.end());
  rec.h.channels = RampSpec::aux_channels;

  const double dt = RampSpec::dt;
  double s = th.g0;
  double v = 0.0;
  auto push = [&rec](double s, double v, double level, double done) {
    rec.h.values.insert(rec.h.values.end(), {s, v, level, done});
  };

  for (std::size_t j = 0; j < levels; ++j) {
    const double level = RampSpec::level(j);
    for (std::size_t r = 0; r < RampSpec::steps_per_level; ++r) {
      const double arg = x[0] + x[1] * (s - th.g0) + x[2] * v + x[3] * std::sin(std::numbers::pi * s);
      const double u = 2.0 * std::tanh(arg);
      const double s_next = s + dt * v;
      const double v_next = v + (dt / th.m) * (-th.k * (s - th.g0) - th.c * v + u + level);
      s = s_next;
      v = v_next;
      if (std::abs(s - th.g0) > 1.0) {
        push(s, v, level, 1.0);
        rec.h.terminated_at = rec.h.steps() - 1;
        rec.f = j == 0 ? 0.0 : RampSpec::level(j - 1);
        return rec;
      }
    }
    push(s, v, level, 0.0);
  }
  rec.f = RampSpec::level(levels - 1);
  return rec;
}

}  // namespace auxbo
