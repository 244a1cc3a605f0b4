#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "test_util.hpp"

using namespace auxbo;
using auxbo::test::TempDir;

namespace {

/// Predicts the stored reward of each design exactly.
class OracleSurrogate final : public Surrogate {
 public:
  explicit OracleSurrogate(const TaskDataset& task) {
    for (const auto& r : task.records) truth_[r.x] = r.f;
  }
  std::vector<GaussianPrediction> predict(const ContextSet&, const TargetInputs& t) const override {
    std::vector<GaussianPrediction> out;
    for (const auto& x : t) out.push_back({truth_.at(x), 0.5});
    return out;
  }
  std::string name() const override { return "oracle"; }

 private:
  std::map<std::vector<double>, double> truth_;
};

class ConstantSurrogate final : public Surrogate {
 public:
  std::vector<GaussianPrediction> predict(const ContextSet&, const TargetInputs& t) const override {
    return std::vector<GaussianPrediction>(t.size(), {1.0, 1.0});
  }
  std::string name() const override { return "constant"; }
};

/// Arbitrary but deterministic predictions that depend on the context.
class ScrambledSurrogate final : public Surrogate {
 public:
  std::vector<GaussianPrediction> predict(const ContextSet& c, const TargetInputs& t) const override {
    Rng rng(derive_seed(c.size(), {t.size()}));
    std::vector<GaussianPrediction> out;
    for (std::size_t i = 0; i < t.size(); ++i) out.push_back({rng.normal(), 0.1 + rng.uniform()});
    return out;
  }
  std::string name() const override { return "scrambled"; }
};

SamplerConfig small_sampler() {
  SamplerConfig s;
  s.context_min = 5;
  s.context_max = 15;
  s.target_size = 20;
  return s;
}

TaskDataset flat_task(std::size_t n, double f) {
  TaskDataset t;
  t.task_id = "flat";
  for (std::size_t i = 0; i < n; ++i)
    t.records.push_back({{static_cast<double>(i) / n, 0.0, 0.0, 0.0}, f, AuxSequence{4, {0, 0, 0.5, 1}, 0}});
  t.max_f = f;
  return t;
}

OptimizationTrace manual_trace(const std::string& id, double max_f, std::vector<double> best, std::size_t run = 0) {
  OptimizationTrace t;
  t.task_id = id;
  t.run = run;
  t.max_f = max_f;
  int trial = 0;
  for (double b : best) t.steps.push_back({trial++, 0, b, b, max_f - b});
  return t;
}

}  // namespace

TEST(Train, SingleTaskNllDecreasesOverFirstHundredSteps) {
  const TaskDataset task = test::small_task(60, 160);
  const Normalization norm = compute_normalization({task});
  const SamplerConfig sampler = small_sampler();
  std::size_t decreased = 0;
  const std::size_t seeds = 20;
  for (std::uint64_t seed = 0; seed < seeds; ++seed) {
    ModelConfig mc = test::tiny_model_config(Variant::aux);
    mc.dropout_rate = 0.0;
    SurrogateModel m(mc, norm, seed);
    std::vector<detail::PreparedDraw> probe;
    for (std::size_t r = 0; r < 8; ++r) {
      Rng rng(derive_seed(seed, {0xAB, r}));
      probe.push_back(detail::prepare_draw(task, sampler, rng));
    }
    const double before = detail::mean_target_nll(m, probe, 8);
    TrainConfig tc;
    tc.batch_tasks = 1;
    tc.learning_rate = 1e-3;
    tc.max_epochs = 1;
    tc.steps_per_epoch = 100;
    tc.val_draws = 1;
    tc.seed = seed;
    train(m, {task}, {task}, sampler, tc);
    const double after = detail::mean_target_nll(m, probe, 8);
    decreased += after < before ? 1 : 0;
  }
  std::cout << "training NLL decreased for " << decreased << "/" << seeds << " seeds\n";
  EXPECT_GE(static_cast<double>(decreased), 0.95 * seeds);
}

TEST(Train, FixedSeedGivesBitIdenticalCheckpoint) {
  TempDir dir("train_det");
  const Benchmark b = generate_benchmark({61, 4, 2, 1, 80});
  const Normalization norm = compute_normalization(b.train);
  TrainConfig tc;
  tc.batch_tasks = 2;
  tc.max_epochs = 2;
  tc.steps_per_epoch = 3;
  tc.seed = 9;
  for (const char* name : {"a.bin", "b.bin"}) {
    SurrogateModel m(test::tiny_model_config(Variant::aux), norm, 4);
    train(m, b.train, b.val, small_sampler(), tc);
    save_model(dir / name, m);
  }
  EXPECT_EQ(test::read_file(dir / "a.bin"), test::read_file(dir / "b.bin"));
}

TEST(Train, ZeroPatienceStopsAtFirstNonImprovement) {
  const Benchmark b = generate_benchmark({62, 4, 2, 1, 80});
  const Normalization norm = compute_normalization(b.train);
  TrainConfig tc;
  tc.batch_tasks = 2;
  tc.learning_rate = 3e-2;  // large steps make a non-improving epoch likely
  tc.max_epochs = 30;
  tc.steps_per_epoch = 2;
  tc.patience = 0;
  SurrogateModel m(test::tiny_model_config(Variant::reward_only), norm, 5);
  const TrainResult r = train(m, b.train, b.val, small_sampler(), tc);
  ASSERT_FALSE(r.log.empty());
  ASSERT_LT(r.log.size(), tc.max_epochs) << "no non-improving epoch occurred";
  for (std::size_t i = 0; i + 1 < r.log.size(); ++i) EXPECT_TRUE(r.log[i].best) << "epoch " << r.log[i].epoch;
  EXPECT_FALSE(r.log.back().best);
  EXPECT_EQ(r.best_epoch, r.log.size() - 1);
}

TEST(Train, KeepsBestValidationParameters) {
  const Benchmark b = generate_benchmark({63, 4, 2, 1, 80});
  const Normalization norm = compute_normalization(b.train);
  TrainConfig tc;
  tc.batch_tasks = 2;
  tc.learning_rate = 1e-2;
  tc.max_epochs = 6;
  tc.steps_per_epoch = 2;
  tc.patience = 10;
  tc.val_draws = 2;
  SurrogateModel m(test::tiny_model_config(Variant::aux), norm, 6);
  const TrainResult r = train(m, b.train, b.val, small_sampler(), tc);
  std::vector<detail::PreparedDraw> val;
  for (std::size_t v = 0; v < b.val.size(); ++v)
    for (std::size_t k = 0; k < tc.val_draws; ++k) {
      Rng rng(derive_seed(tc.seed, {0x7A1, v, k}));
      val.push_back(detail::prepare_draw(b.val[v], small_sampler(), rng));
    }
  EXPECT_DOUBLE_EQ(detail::mean_target_nll(m, val, tc.batch_tasks), r.best_val_nll);
}

TEST(Train, NonFiniteLossReportsStep) {
  const Benchmark b = generate_benchmark({64, 2, 1, 1, 80});
  SurrogateModel m(test::tiny_model_config(Variant::reward_only), compute_normalization(b.train), 7);
  for (auto& p : m.parameters())
    if (p.name.rfind("head", 0) == 0) std::fill(p.value.data.begin(), p.value.data.end(), std::nan(""));
  TrainConfig tc;
  tc.max_epochs = 1;
  tc.steps_per_epoch = 1;
  try {
    train(m, b.train, b.val, small_sampler(), tc);
    FAIL() << "expected NumericFailure";
  } catch (const NumericFailure& e) {
    EXPECT_NE(std::string(e.what()).find("step 0"), std::string::npos) << e.what();
  }
}

TEST(Evaluate, OracleSurrogateHasZeroError) {
  const TaskDataset task = test::small_task(65, 160);
  const OracleSurrogate oracle(task);
  EvalConfig ec;
  ec.sizes = {5, 10};
  ec.repeats = 3;
  ec.target_size = 50;
  const auto rows = evaluate_prediction(oracle, {task}, compute_normalization({task}), ec);
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& r : rows) {
    EXPECT_EQ(r.mse_sum, 0.0);
    EXPECT_TRUE(std::isfinite(r.nll_mean));
    EXPECT_EQ(r.n_repeats, 3u);
  }
}

TEST(Evaluate, MseIsSummedOverTargetsInNormalizedUnits) {
  const TaskDataset task = test::small_task(66, 160);
  Normalization norm = compute_normalization({task});
  EvalConfig ec;
  ec.sizes = {5};
  ec.repeats = 2;
  ec.target_size = 40;
  // a surrogate predicting 1.0 everywhere: the oracle error per draw is
  // sum over targets of ((1 - f) / std)^2
  const auto rows = evaluate_prediction(ConstantSurrogate(), {task}, norm, ec);
  double expect = 0.0;
  for (std::size_t r = 0; r < ec.repeats; ++r) {
    Rng rng(derive_seed(ec.seed, {0xE7, 0, 5, r}));
    SamplerConfig s = ec.sampler;
    s.target_size = ec.target_size;
    const auto d = detail::prepare_draw(task, s, rng, 5);
    for (double f : d.rewards) expect += std::pow((1.0 - f) / norm.reward_std, 2);
  }
  EXPECT_NEAR(rows[0].mse_sum, expect / ec.repeats, 1e-9);
}

TEST(Evaluate, SizesOutsideSamplerBoundsRejected) {
  const TaskDataset task = test::small_task(67, 160);
  EvalConfig ec;
  ec.sizes = {31};
  EXPECT_THROW(evaluate_prediction(ConstantSurrogate(), {task}, compute_normalization({task}), ec),
               ContractViolation);
}

TEST(Acquisition, ProbabilityOfImprovementValues) {
  EXPECT_DOUBLE_EQ(acquisition_score(AcquisitionKind::pi, {2.0, 0.5}, 2.0), 0.5);
  EXPECT_NEAR(acquisition_score(AcquisitionKind::pi, {2.5, 0.5}, 2.0), 0.8413447, 1e-7);
  EXPECT_EQ(acquisition_score(AcquisitionKind::pi, {2.5, 0.5}, -std::numeric_limits<double>::infinity()), 1.0);
  EXPECT_EQ(acquisition_score(AcquisitionKind::greedy, {2.5, 0.5}, 100.0), 2.5);
}

TEST(Acquisition, ProbabilityOfImprovementMonotone) {
  Rng rng(68);
  // kept where Phi is not yet saturated in double precision
  for (int i = 0; i < 200; ++i) {
    const double mu = rng.uniform(-1, 1), sigma = rng.uniform(0.5, 2), best = rng.uniform(-1, 1);
    const double d = rng.uniform(0.01, 0.5);
    const double base = acquisition_score(AcquisitionKind::pi, {mu, sigma}, best);
    EXPECT_LT(base, acquisition_score(AcquisitionKind::pi, {mu + d, sigma}, best));
    EXPECT_GT(base, acquisition_score(AcquisitionKind::pi, {mu, sigma}, best + d));
  }
}

TEST(BayesOpt, InitialContextHoldingMaximumGivesFlatTrace) {
  const TaskDataset task = flat_task(12, 1.0);
  const OptimizationTrace tr = bayesopt_run(ConstantSurrogate(), task, {5, 4, AcquisitionKind::pi, 0.3}, 1);
  EXPECT_TRUE(tr.init_fallback);
  ASSERT_EQ(tr.steps.size(), 9u);
  for (const auto& s : tr.steps) {
    if (s.trial >= 0) {
      EXPECT_EQ(s.regret, 0.0);
      EXPECT_EQ(s.best_f, 1.0);
    }
  }
}

TEST(BayesOpt, GreedyOracleFindsOptimumAtFirstTrial) {
  for (std::uint64_t seed : {70, 71, 72}) {
    const TaskDataset task = test::small_task(seed, 64);
    const OptimizationTrace tr =
        bayesopt_run(OracleSurrogate(task), task, {5, 3, AcquisitionKind::greedy, 0.3}, seed);
    const auto& first = tr.steps[5];
    EXPECT_EQ(first.trial, 1);
    EXPECT_EQ(first.observed_f, task.max_f);
    EXPECT_EQ(first.regret, 0.0);
  }
}

TEST(BayesOpt, TiesSelectLowestUnobservedIndex) {
  const TaskDataset task = test::small_task(73, 40);
  const OptimizationTrace tr = bayesopt_run(ConstantSurrogate(), task, {5, 6, AcquisitionKind::pi, 0.3}, 2);
  std::set<std::size_t> observed;
  for (std::size_t i = 0; i < 5; ++i) observed.insert(tr.steps[i].selected_index);
  for (std::size_t i = 5; i < tr.steps.size(); ++i) {
    std::size_t lowest = 0;
    while (observed.count(lowest)) ++lowest;
    EXPECT_EQ(tr.steps[i].selected_index, lowest);
    observed.insert(lowest);
  }
}

TEST(BayesOpt, TraceInvariants) {
  for (std::uint64_t seed = 80; seed < 90; ++seed) {
    const TaskDataset task = test::small_task(seed, 64);
    const OptimizationTrace tr =
        bayesopt_run(ScrambledSurrogate(), task, {5, 20, AcquisitionKind::pi, 0.3}, seed, 3);
    ASSERT_EQ(tr.steps.size(), 25u);
    EXPECT_EQ(tr.run, 3u);
    EXPECT_EQ(tr.surrogate, "scrambled");
    std::set<std::size_t> picked;
    for (std::size_t i = 0; i < tr.steps.size(); ++i) {
      const auto& s = tr.steps[i];
      EXPECT_EQ(s.trial, static_cast<int>(i) - 4);
      EXPECT_TRUE(picked.insert(s.selected_index).second) << "design selected twice";
      EXPECT_EQ(s.observed_f, task.records[s.selected_index].f);
      EXPECT_DOUBLE_EQ(s.regret, task.max_f - s.best_f);
      if (i > 0) {
        EXPECT_GE(s.best_f, tr.steps[i - 1].best_f);
        EXPECT_LE(s.regret, tr.steps[i - 1].regret);
      }
      if (i < 5 && !tr.init_fallback) {
        EXPECT_LE(s.observed_f, 0.3 * task.max_f);
      }
    }
  }
}

TEST(BayesOpt, SingleTaskGpRunsAndRejectsSmallPool) {
  const TaskDataset task = test::small_task(91, 40);
  const OptimizationTrace tr = bayesopt_run(SingleTaskGpSurrogate(), task, {5, 3, AcquisitionKind::pi, 0.3}, 4);
  EXPECT_EQ(tr.steps.size(), 8u);
  EXPECT_EQ(tr.surrogate, "stgp");
  EXPECT_THROW(bayesopt_run(ConstantSurrogate(), task, {5, 40, AcquisitionKind::pi, 0.3}, 4), ContractViolation);
}

TEST(Aggregate, NormalizedBestAndRegret) {
  const auto s = aggregate_runs({manual_trace("a", 6.0, {5.4})}, {0.5, 1.0});
  ASSERT_EQ(s.rows.size(), 1u);
  EXPECT_DOUBLE_EQ(s.rows[0].mean_norm_best, 0.9);
  EXPECT_NEAR(s.rows[0].mean_regret, 0.6, 1e-15);
  EXPECT_EQ(s.rows[0].frac_solved[0], 0.0);
  EXPECT_EQ(s.rows[0].frac_solved[1], 1.0);
}

TEST(Aggregate, RunsAveragedBeforeTasksAndZeroMaxExcluded) {
  // task a: two runs (regret 0 and 2); task b: one run (regret 1); task z excluded
  const auto s = aggregate_runs({manual_trace("a", 4.0, {4.0}, 0), manual_trace("a", 4.0, {2.0}, 1),
                                 manual_trace("b", 2.0, {1.0}), manual_trace("z", 0.0, {0.0})},
                                {0.5});
  EXPECT_EQ(s.n_tasks, 2u);
  EXPECT_EQ(s.n_excluded, 1u);
  EXPECT_DOUBLE_EQ(s.rows[0].mean_regret, (1.0 + 1.0) / 2.0);
  EXPECT_DOUBLE_EQ(s.rows[0].mean_norm_best, (0.75 + 0.5) / 2.0);
  EXPECT_DOUBLE_EQ(s.rows[0].frac_solved[0], (0.5 + 0.0) / 2.0);
}

TEST(Aggregate, SignTest) {
  const std::vector<double> a = {1, 1, 1, 1, 1, 1, 1, 1, 3, 3, 2};
  const std::vector<double> b = {2, 2, 2, 2, 2, 2, 2, 2, 2, 2, 2};
  const SignTestResult r = sign_test_less(a, b);
  EXPECT_EQ(r.wins, 8u);
  EXPECT_EQ(r.losses, 2u);
  EXPECT_EQ(r.ties, 1u);
  EXPECT_NEAR(r.p_value, 56.0 / 1024.0, 1e-12);
}
