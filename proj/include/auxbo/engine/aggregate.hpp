#pragma once

#include <map>
#include <string>
#include <vector>

#include "auxbo/engine/bayesopt.hpp"

namespace auxbo {

struct AggregateRow {
  int trial = 0;
  double mean_norm_best = 0.0;
  double mean_regret = 0.0;
  std::vector<double> frac_solved;  // one per threshold
};

struct AggregateSummary {
  std::vector<double> thresholds;
  std::vector<AggregateRow> rows;  // ordered by trial
  std::size_t n_tasks = 0;
  std::size_t n_excluded = 0;  // tasks with max_f == 0
};

/// Per trial index: runs of a task are averaged first, then tasks. A (task,
/// run) counts as solved at threshold c when its regret is <= c.
inline AggregateSummary aggregate_runs(const std::vector<OptimizationTrace>& traces,
                                       const std::vector<double>& thresholds = {0.5}) {
  require(!traces.empty(), "aggregate_runs: no traces");
  AggregateSummary s;
  s.thresholds = thresholds;
  std::map<std::string, std::vector<const OptimizationTrace*>> by_task;
  for (const auto& t : traces) by_task[t.task_id].push_back(&t);

  struct Acc {
    double norm = 0.0, regret = 0.0;
    std::vector<double> solved;
    std::size_t tasks = 0;
  };
  std::map<int, Acc> acc;
  for (const auto& [id, runs] : by_task) {
    if (runs.front()->max_f == 0.0) {
      ++s.n_excluded;
      continue;
    }
    ++s.n_tasks;
    std::map<int, Acc> task_acc;
    std::map<int, std::size_t> task_runs;
    for (const OptimizationTrace* tr : runs)
      for (const TraceStep& st : tr->steps) {
        Acc& a = task_acc[st.trial];
        a.solved.resize(thresholds.size(), 0.0);
        a.norm += st.best_f / tr->max_f;
        a.regret += st.regret;
        for (std::size_t c = 0; c < thresholds.size(); ++c) a.solved[c] += st.regret <= thresholds[c] ? 1.0 : 0.0;
        ++task_runs[st.trial];
      }
    for (auto& [trial, a] : task_acc) {
      const double n = static_cast<double>(task_runs[trial]);
      Acc& g = acc[trial];
      g.solved.resize(thresholds.size(), 0.0);
      g.norm += a.norm / n;
      g.regret += a.regret / n;
      for (std::size_t c = 0; c < thresholds.size(); ++c) g.solved[c] += a.solved[c] / n;
      ++g.tasks;
    }
  }
  for (const auto& [trial, g] : acc) {
    AggregateRow row;
    row.trial = trial;
    const double n = static_cast<double>(g.tasks);
    row.mean_norm_best = g.norm / n;
    row.mean_regret = g.regret / n;
    for (double v : g.solved) row.frac_solved.push_back(v / n);
    s.rows.push_back(std::move(row));
  }
  return s;
}

}  // namespace auxbo
