#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "auxbo/model/types.hpp"
#include "auxbo/numerics/errors.hpp"

namespace auxbo {

/// Hidden parameters of one synthetic task. Never shown to a surrogate.
struct Theta {
  double k = 1.0;   // stiffness, [0.5, 2.0]
  double c = 0.3;   // damping, [0.05, 0.6]
  double m = 1.0;   // mass, [0.5, 1.5]
  double g0 = 0.0;  // grip offset, [-0.3, 0.3]
  bool operator==(const Theta&) const = default;
};

/// One evaluation F(x) = (f(x), h(x)).
struct TrialRecord {
  std::vector<double> x;
  double f = 0.0;
  AuxSequence h;
  bool operator==(const TrialRecord&) const = default;
};

enum class Split { train, val, test };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::train:
      return "train";
    case Split::val:
      return "val";
    case Split::test:
      return "test";
  }
  return "?";
}

inline std::optional<Split> parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  return std::nullopt;
}

/// All pre-evaluated candidates of one task.
struct TaskDataset {
  std::string task_id;
  Split split = Split::train;
  std::optional<Theta> theta;
  std::vector<TrialRecord> records;
  double max_f = 0.0;

  std::size_t size() const { return records.size(); }
  std::size_t input_dim() const { return records.empty() ? 0 : records.front().x.size(); }
  std::size_t aux_channels() const { return records.empty() ? 0 : records.front().h.channels; }

  void refresh_max() {
    max_f = records.empty() ? 0.0 : records.front().f;
    for (const auto& r : records) max_f = std::max(max_f, r.f);
  }

  ContextPoint context_point(std::size_t i) const {
    const auto& r = records.at(i);
    return {r.x, r.f, r.h};
  }
  bool operator==(const TaskDataset&) const = default;
};

/// Train/val/test task lists of one benchmark.
struct Benchmark {
  std::vector<TaskDataset> train, val, test;
};

}  // namespace auxbo
