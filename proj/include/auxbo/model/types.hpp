#pragma once

#include <cstddef>
#include <optional>
#include <vector>

namespace auxbo {

/// Auxiliary observation sequence h(x): one row of `channels` values per
/// recorded time step. By convention the last channel is the termination
/// flag (0 before termination, 1 at and after it).
struct AuxSequence {
  std::size_t channels = 0;
  std::vector<double> values;  // steps() x channels, row-major
  std::optional<std::size_t> terminated_at;

  std::size_t steps() const { return channels == 0 ? 0 : values.size() / channels; }
  const double* step(std::size_t t) const { return values.data() + t * channels; }
  bool operator==(const AuxSequence&) const = default;
};

struct ContextPoint {
  std::vector<double> x;
  double f = 0.0;
  AuxSequence h;
};

/// The few-shot conditioning set: evaluated designs with reward and h.
using ContextSet = std::vector<ContextPoint>;

/// Query designs whose reward is to be predicted.
using TargetInputs = std::vector<std::vector<double>>;

struct GaussianPrediction {
  double mu = 0.0;
  double sigma = 1.0;
};

}  // namespace auxbo
