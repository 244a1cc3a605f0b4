#pragma once

#include <cmath>
#include <vector>

#include "auxbo/engine/surrogate.hpp"
#include "auxbo/engine/train.hpp"

namespace auxbo {

struct PredictionMetrics {
  std::size_t context_size = 0;
  double mse_sum = 0.0;   // squared error summed over targets, mean over draws and tasks
  double nll_mean = 0.0;  // per-target NLL, mean over everything
  std::size_t n_tasks = 0;
  std::size_t n_repeats = 0;
  std::vector<double> per_task_mse_sum;  // same statistic per task, in task order
};

struct EvalConfig {
  std::vector<std::size_t> sizes{5, 10, 20, 30};
  std::size_t repeats = 10;
  std::size_t target_size = 100;
  std::uint64_t seed = 0;
  SamplerConfig sampler;  // balance flags, quantile and context bounds
};

/// For each context size and task, `repeats` independent (C, T) draws. Errors
/// are measured in normalized reward units using `norm`. Draws depend only on
/// (seed, task index, size, repeat), so different surrogates see the same
/// draws and their per-task results are paired.
inline std::vector<PredictionMetrics> evaluate_prediction(const Surrogate& surrogate,
                                                          const std::vector<TaskDataset>& tasks,
                                                          const Normalization& norm, const EvalConfig& cfg) {
  require(!tasks.empty(), "evaluate_prediction: no tasks");
  require(cfg.repeats >= 1, "evaluate_prediction: repeats must be positive");
  SamplerConfig sampler = cfg.sampler;
  sampler.target_size = cfg.target_size;
  std::vector<PredictionMetrics> out;
  for (std::size_t size : cfg.sizes) {
    require(size >= sampler.context_min && size <= sampler.context_max,
            "evaluate_prediction: context size " + std::to_string(size) + " outside sampler bounds [" +
                std::to_string(sampler.context_min) + ", " + std::to_string(sampler.context_max) + "]");
    PredictionMetrics m;
    m.context_size = size;
    m.n_tasks = tasks.size();
    m.n_repeats = cfg.repeats;
    double nll_total = 0.0;
    std::size_t nll_count = 0;
    for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
      double task_sse = 0.0;
      for (std::size_t r = 0; r < cfg.repeats; ++r) {
        Rng rng(derive_seed(cfg.seed, {0xE7, ti, size, r}));
        detail::PreparedDraw d = detail::prepare_draw(tasks[ti], sampler, rng, size);
        const auto pred = surrogate.predict(d.context, d.targets);
        require(pred.size() == d.rewards.size(), "evaluate_prediction: surrogate returned wrong prediction count");
        for (std::size_t k = 0; k < pred.size(); ++k) {
          const double y = norm.normalize(d.rewards[k]);
          const double mu = norm.normalize(pred[k].mu);
          const double sigma = pred[k].sigma / norm.reward_std;
          task_sse += (mu - y) * (mu - y);
          nll_total += gaussian_nll(y, mu, sigma);
          ++nll_count;
        }
      }
      m.per_task_mse_sum.push_back(task_sse / static_cast<double>(cfg.repeats));
    }
    double s = 0.0;
    for (double v : m.per_task_mse_sum) s += v;
    m.mse_sum = s / static_cast<double>(tasks.size());
    m.nll_mean = nll_total / static_cast<double>(nll_count);
    out.push_back(std::move(m));
  }
  return out;
}

struct SignTestResult {
  std::size_t wins = 0;    // a < b
  std::size_t losses = 0;  // a > b
  std::size_t ties = 0;
  double p_value = 1.0;  // one-sided: P(X >= wins), X ~ Bin(wins + losses, 1/2)
};

/// Exact one-sided paired sign test of H1 "a tends to be smaller than b".
/// Ties are dropped.
inline SignTestResult sign_test_less(const std::vector<double>& a, const std::vector<double>& b) {
  require(a.size() == b.size(), "sign_test_less: samples must be paired");
  SignTestResult r;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] < b[i])
      ++r.wins;
    else if (a[i] > b[i])
      ++r.losses;
    else
      ++r.ties;
  }
  const std::size_t n = r.wins + r.losses;
  if (n == 0) return r;
  // sum_{k >= wins} C(n, k) / 2^n in log space
  double p = 0.0;
  for (std::size_t k = r.wins; k <= n; ++k) {
    const double log_c = std::lgamma(static_cast<double>(n) + 1) - std::lgamma(static_cast<double>(k) + 1) -
                         std::lgamma(static_cast<double>(n - k) + 1);
    p += std::exp(log_c - static_cast<double>(n) * std::log(2.0));
  }
  r.p_value = std::min(1.0, p);
  return r;
}

}  // namespace auxbo
