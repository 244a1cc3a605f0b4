#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "auxbo/numerics/rng.hpp"
#include "auxbo/tasks/dataset.hpp"

namespace auxbo {

/// Context/target draw distribution Q(C, T).
struct SamplerConfig {
  std::size_t context_min = 5;
  std::size_t context_max = 30;
  std::size_t target_size = 100;
  // Balanced draws pick the high-reward stratum with probability 1/2.
  bool balanced_context = true;
  bool balanced_target = true;
  double high_quantile = 0.8;

  void validate(std::size_t pool_size) const {
    require(context_min >= 1 && context_min <= context_max, "SamplerConfig: need 1 <= context_min <= context_max");
    require(target_size >= 1, "SamplerConfig: target_size must be positive");
    require(high_quantile > 0.0 && high_quantile < 1.0, "SamplerConfig: high_quantile must be in (0,1)");
    require(context_max + target_size < pool_size,
            "SamplerConfig: pool of " + std::to_string(pool_size) + " too small for context_max " +
                std::to_string(context_max) + " + target_size " + std::to_string(target_size));
  }
};

struct RewardStrata {
  double threshold = 0.0;
  std::vector<std::size_t> high;  // f >= threshold
  std::vector<std::size_t> low;
};

/// Splits pool indices at the nearest-rank `quantile` of the task's rewards.
inline RewardStrata reward_strata(const TaskDataset& task, double quantile) {
  require(!task.records.empty(), "reward_strata: empty task");
  std::vector<double> fs;
  fs.reserve(task.size());
  for (const auto& r : task.records) fs.push_back(r.f);
  std::sort(fs.begin(), fs.end());
  const auto n = static_cast<double>(fs.size());
  std::size_t rank = static_cast<std::size_t>(std::ceil(quantile * n));
  rank = std::clamp<std::size_t>(rank, 1, fs.size());
  RewardStrata st;
  st.threshold = fs[rank - 1];
  for (std::size_t i = 0; i < task.size(); ++i) (task.records[i].f >= st.threshold ? st.high : st.low).push_back(i);
  return st;
}

/// Pool indices of one context/target draw; the two lists are disjoint.
struct ContextTargetDraw {
  std::vector<std::size_t> context;
  std::vector<std::size_t> target;
};

namespace detail {

inline std::size_t take_at(std::vector<std::size_t>& v, std::size_t pos) {
  const std::size_t out = v[pos];
  v.erase(v.begin() + static_cast<std::ptrdiff_t>(pos));
  return out;
}

/// Draws n indices without replacement from the union of the two strata.
/// Balanced: each draw picks a stratum by a fair coin, falling back to the
/// other one when the chosen stratum is exhausted.
inline std::vector<std::size_t> draw_from_strata(std::vector<std::size_t>& high, std::vector<std::size_t>& low,
                                                 std::size_t n, bool balanced, Rng& rng) {
  std::vector<std::size_t> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    require(!high.empty() || !low.empty(), "sample_context_target: pool exhausted");
    if (balanced) {
      const bool want_high = rng.uniform() < 0.5;
      auto& src = (want_high && !high.empty()) || low.empty() ? high : low;
      out.push_back(take_at(src, rng.index(src.size())));
    } else {
      const std::size_t pos = rng.index(high.size() + low.size());
      out.push_back(pos < high.size() ? take_at(high, pos) : take_at(low, pos - high.size()));
    }
  }
  return out;
}

}  // namespace detail

/// N_C ~ U{context_min..context_max}, N_T = target_size, C then T drawn
/// without replacement from what remains.
inline ContextTargetDraw sample_context_target(const TaskDataset& task, const SamplerConfig& cfg, Rng& rng,
                                               std::optional<std::size_t> context_size = std::nullopt) {
  cfg.validate(task.size());
  RewardStrata st = reward_strata(task, cfg.high_quantile);
  const std::size_t nc = context_size ? *context_size
                                      : static_cast<std::size_t>(rng.uniform_int(
                                            static_cast<std::int64_t>(cfg.context_min),
                                            static_cast<std::int64_t>(cfg.context_max)));
  require(nc >= 1 && nc + cfg.target_size < task.size() + 1, "sample_context_target: context size too large for pool");
  ContextTargetDraw d;
  d.context = detail::draw_from_strata(st.high, st.low, nc, cfg.balanced_context, rng);
  d.target = detail::draw_from_strata(st.high, st.low, cfg.target_size, cfg.balanced_target, rng);
  return d;
}

inline ContextSet make_context(const TaskDataset& task, const std::vector<std::size_t>& idx) {
  ContextSet c;
  c.reserve(idx.size());
  for (std::size_t i : idx) c.push_back(task.context_point(i));
  return c;
}

inline TargetInputs make_targets(const TaskDataset& task, const std::vector<std::size_t>& idx) {
  TargetInputs t;
  t.reserve(idx.size());
  for (std::size_t i : idx) t.push_back(task.records.at(i).x);
  return t;
}

inline std::vector<double> rewards_at(const TaskDataset& task, const std::vector<std::size_t>& idx) {
  std::vector<double> y;
  y.reserve(idx.size());
  for (std::size_t i : idx) y.push_back(task.records.at(i).f);
  return y;
}

}  // namespace auxbo
