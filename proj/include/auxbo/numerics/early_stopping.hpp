#pragma once

#include <cstddef>
#include <limits>

namespace auxbo {

/// Tracks a validation loss (lower is better). Training stops once more than
/// `patience` consecutive epochs failed to improve on the best value, so
/// patience 0 stops right after the first non-improving epoch.
struct EarlyStopping {
  std::size_t patience = 5;
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  std::size_t bad_epochs = 0;

  /// Returns true when `loss` is a new best.
  bool update(double loss, std::size_t epoch) {
    if (loss < best) {
      best = loss;
      best_epoch = epoch;
      bad_epochs = 0;
      return true;
    }
    ++bad_epochs;
    return false;
  }

  bool should_stop() const { return bad_epochs > patience; }
};

/// One line of a training log; losses are per-target means.
struct TrainLogRow {
  std::size_t epoch = 0;
  double train_nll = 0.0;
  double val_nll = 0.0;
  bool best = false;
};

}  // namespace auxbo
