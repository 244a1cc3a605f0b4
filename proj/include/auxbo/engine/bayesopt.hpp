#pragma once

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "auxbo/engine/acquisition.hpp"
#include "auxbo/engine/surrogate.hpp"

namespace auxbo {

/// One row of a trace. Initial-context rows carry trials 1-init .. 0; BO
/// trials are numbered 1 .. trials.
struct TraceStep {
  int trial = 0;
  std::size_t selected_index = 0;
  double observed_f = 0.0;
  double best_f = 0.0;
  double regret = 0.0;
};

struct OptimizationTrace {
  std::string task_id;
  std::size_t run = 0;
  std::uint64_t seed = 0;
  std::string surrogate;
  AcquisitionKind acquisition = AcquisitionKind::pi;
  double max_f = 0.0;
  bool init_fallback = false;  // init filter left fewer than init_size designs
  std::vector<TraceStep> steps;
};

struct BayesOptConfig {
  std::size_t init_size = 5;
  std::size_t trials = 30;
  AcquisitionKind acquisition = AcquisitionKind::pi;
  double init_fraction = 0.3;  // initial designs have f <= init_fraction * max_f
};

/// Initial context: `init_size` designs drawn uniformly among those with
/// f <= init_fraction * max_f; when too few qualify, the init_size lowest-f
/// designs (ties by index) and `fallback` is set.
inline std::vector<std::size_t> initial_design(const TaskDataset& task, std::size_t init_size, double init_fraction,
                                               Rng& rng, bool& fallback) {
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < task.size(); ++i)
    if (task.records[i].f <= init_fraction * task.max_f) eligible.push_back(i);
  fallback = eligible.size() < init_size;
  if (fallback) {
    std::vector<std::size_t> order(task.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return task.records[a].f < task.records[b].f; });
    order.resize(init_size);
    return order;
  }
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < init_size; ++k) {
    const std::size_t pos = rng.index(eligible.size());
    out.push_back(eligible[pos]);
    eligible.erase(eligible.begin() + static_cast<std::ptrdiff_t>(pos));
  }
  return out;
}

/// Discrete Bayesian optimization over the task's pool. Each trial scores
/// every unobserved design, takes the argmax (lowest pool index on ties),
/// and appends the stored (x, f, h) record to the context.
inline OptimizationTrace bayesopt_run(const Surrogate& surrogate, const TaskDataset& task, const BayesOptConfig& cfg,
                                      std::uint64_t seed, std::size_t run = 0) {
  require(cfg.init_size >= 1, "bayesopt_run: init_size must be positive");
  require(task.size() >= cfg.init_size + cfg.trials, "bayesopt_run: pool smaller than init_size + trials");
  OptimizationTrace tr;
  tr.task_id = task.task_id;
  tr.run = run;
  tr.seed = seed;
  tr.surrogate = surrogate.name();
  tr.acquisition = cfg.acquisition;
  tr.max_f = task.max_f;

  Rng rng(seed);
  std::vector<std::size_t> observed = initial_design(task, cfg.init_size, cfg.init_fraction, rng, tr.init_fallback);
  std::vector<bool> seen(task.size(), false);
  ContextSet context;
  double best = -std::numeric_limits<double>::infinity();
  int trial = 1 - static_cast<int>(cfg.init_size);
  auto record = [&](std::size_t idx) {
    seen[idx] = true;
    context.push_back(task.context_point(idx));
    best = std::max(best, task.records[idx].f);
    tr.steps.push_back({trial++, idx, task.records[idx].f, best, task.max_f - best});
  };
  for (std::size_t idx : observed) record(idx);

  for (std::size_t t = 0; t < cfg.trials; ++t) {
    std::vector<std::size_t> candidates;
    TargetInputs xs;
    for (std::size_t i = 0; i < task.size(); ++i)
      if (!seen[i]) {
        candidates.push_back(i);
        xs.push_back(task.records[i].x);
      }
    const auto pred = surrogate.predict(context, xs);
    require(pred.size() == xs.size(), "bayesopt_run: surrogate returned wrong prediction count");
    std::size_t pick = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < pred.size(); ++k) {
      const double s = acquisition_score(cfg.acquisition, pred[k], best);
      if (!std::isfinite(s)) throw NumericFailure("bayesopt_run: non-finite acquisition score");
      if (s > best_score) {  // strict: candidates are in index order, so ties keep the lowest index
        best_score = s;
        pick = k;
      }
    }
    record(candidates[pick]);
  }
  return tr;
}

}  // namespace auxbo
