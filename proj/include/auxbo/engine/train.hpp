#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "auxbo/model/surrogate_model.hpp"
#include "auxbo/numerics/adamw.hpp"
#include "auxbo/numerics/early_stopping.hpp"
#include "auxbo/tasks/sampler.hpp"

namespace auxbo {

struct TrainConfig {
  std::size_t batch_tasks = 8;
  double learning_rate = 1e-4;
  double weight_decay = 0.01;
  std::optional<double> dropout;  // unset: the model's configured rate
  std::size_t max_epochs = 100;
  std::size_t patience = 5;
  std::size_t steps_per_epoch = 0;  // 0: one pass over the training tasks
  std::size_t val_draws = 4;        // fixed (C, T) draws per validation task
  std::uint64_t seed = 0;

  void validate() const {
    require(batch_tasks >= 1, "TrainConfig: batch_tasks must be positive");
    require(learning_rate > 0.0, "TrainConfig: learning_rate must be positive");
    require(weight_decay >= 0.0, "TrainConfig: weight_decay must be nonnegative");
    require(!dropout || (*dropout >= 0.0 && *dropout < 1.0), "TrainConfig: dropout must be in [0,1)");
    require(max_epochs >= 1, "TrainConfig: max_epochs must be positive");
    require(val_draws >= 1, "TrainConfig: val_draws must be positive");
  }
};

struct TrainResult {
  std::vector<TrainLogRow> log;
  std::size_t best_epoch = 0;
  double best_val_nll = 0.0;
  std::size_t steps = 0;
};

namespace detail {

struct PreparedDraw {
  ContextSet context;
  TargetInputs targets;
  std::vector<double> rewards;
};

inline PreparedDraw prepare_draw(const TaskDataset& task, const SamplerConfig& sampler, Rng& rng,
                                 std::optional<std::size_t> context_size = std::nullopt) {
  ContextTargetDraw d = sample_context_target(task, sampler, rng, context_size);
  return {make_context(task, d.context), make_targets(task, d.target), rewards_at(task, d.target)};
}

/// Mean per-target NLL over prepared draws, evaluated in batches.
inline double mean_target_nll(const SurrogateModel& model, const std::vector<PreparedDraw>& draws,
                              std::size_t batch) {
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t start = 0; start < draws.size(); start += batch) {
    const std::size_t end = std::min(draws.size(), start + batch);
    Tape tape;
    tape.set_grad_enabled(false);
    std::vector<Episode> eps;
    std::vector<double> y;
    for (std::size_t i = start; i < end; ++i) {
      eps.push_back({&draws[i].context, &draws[i].targets});
      for (double f : draws[i].rewards) y.push_back(model.normalization().normalize(f));
    }
    ForwardResult fr = model.forward(tape, eps, false);
    total += ops::gaussian_nll_sum(y, fr.mu, fr.sigma).value().item();
    count += y.size();
  }
  return total / static_cast<double>(count);
}

}  // namespace detail

/// Episodic training: each step draws `batch_tasks` tasks from a cycling
/// seeded shuffle, samples (C, T) per task, averages the summed target NLL
/// over the batch and takes one AdamW step. After every epoch the validation
/// NLL on a fixed seeded set of draws decides early stopping; the model is
/// left holding the best-validation parameters.
inline TrainResult train(SurrogateModel& model, const std::vector<TaskDataset>& train_tasks,
                         const std::vector<TaskDataset>& val_tasks, const SamplerConfig& sampler,
                         const TrainConfig& cfg, const std::function<void(const TrainLogRow&)>& on_epoch = {}) {
  cfg.validate();
  require(!train_tasks.empty(), "train: need at least one training task");
  require(!val_tasks.empty(), "train: need at least one validation task");

  std::vector<detail::PreparedDraw> val_draws;
  for (std::size_t v = 0; v < val_tasks.size(); ++v)
    for (std::size_t r = 0; r < cfg.val_draws; ++r) {
      Rng rng(derive_seed(cfg.seed, {0x7A1, v, r}));
      val_draws.push_back(detail::prepare_draw(val_tasks[v], sampler, rng));
    }

  const std::size_t steps_per_epoch =
      cfg.steps_per_epoch ? cfg.steps_per_epoch : (train_tasks.size() + cfg.batch_tasks - 1) / cfg.batch_tasks;
  AdamW opt({cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.weight_decay});
  EarlyStopping stop{cfg.patience};
  std::vector<Parameter> best_params(model.parameters().begin(), model.parameters().end());
  TrainResult res;

  std::vector<std::size_t> order(train_tasks.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(cfg.seed, {0x7A2}));
  rng.shuffle(order);
  std::size_t cursor = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    double epoch_loss = 0.0;
    std::size_t epoch_targets = 0;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      std::vector<detail::PreparedDraw> batch;
      std::vector<double> y;
      for (std::size_t b = 0; b < cfg.batch_tasks; ++b) {
        if (cursor == order.size()) {
          rng.shuffle(order);
          cursor = 0;
        }
        batch.push_back(detail::prepare_draw(train_tasks[order[cursor++]], sampler, rng));
        for (double f : batch.back().rewards) y.push_back(model.normalization().normalize(f));
      }
      std::vector<Episode> eps;
      for (const auto& d : batch) eps.push_back({&d.context, &d.targets});
      Tape tape;
      Var loss;
      GradientMap g;
      try {
        ForwardResult fr = model.forward(tape, eps, true, derive_seed(cfg.seed, {0xD0, res.steps}), cfg.dropout);
        loss = ops::scale(ops::gaussian_nll_sum(y, fr.mu, fr.sigma), 1.0 / static_cast<double>(batch.size()));
        g = tape.backward(loss);
      } catch (const NumericFailure& e) {
        throw NumericFailure("train: step " + std::to_string(res.steps) + ": " + e.what());
      }
      opt.step(model.parameters(), g);
      epoch_loss += loss.value().item() * static_cast<double>(batch.size());
      epoch_targets += y.size();
      ++res.steps;
    }
    const double val_nll = detail::mean_target_nll(model, val_draws, cfg.batch_tasks);
    const bool improved = stop.update(val_nll, epoch);
    if (improved) best_params.assign(model.parameters().begin(), model.parameters().end());
    TrainLogRow row{epoch, epoch_loss / static_cast<double>(epoch_targets), val_nll, improved};
    res.log.push_back(row);
    if (on_epoch) on_epoch(row);
    if (stop.should_stop()) break;
  }
  for (std::size_t i = 0; i < best_params.size(); ++i) model.parameters()[i].value = best_params[i].value;
  res.best_epoch = stop.best_epoch;
  res.best_val_nll = stop.best;
  return res;
}

}  // namespace auxbo
