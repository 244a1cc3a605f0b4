#include <gtest/gtest.h>

#include <cmath>

#include <Eigen/Dense>

#include "test_util.hpp"

using namespace auxbo;
using namespace auxbo::gp;
using auxbo::test::TempDir;

namespace {

Matrix random_designs(Rng& rng, std::size_t n, std::size_t d, double lo = -1.0, double hi = 1.0) {
  Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(lo, hi);
  return x;
}

Eigen::VectorXd random_vector(Rng& rng, std::size_t n) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.normal();
  return v;
}

KernelConfig random_kernel(Rng& rng, std::size_t d) {
  KernelConfig k;
  k.family = rng.uniform() < 0.5 ? KernelFamily::rbf : KernelFamily::matern52;
  for (std::size_t i = 0; i < d; ++i) k.lengthscales.push_back(rng.uniform(0.3, 2.0));
  k.signal_variance = rng.uniform(0.5, 2.0);
  k.noise_variance = rng.uniform(1e-3, 0.2);
  return k;
}

}  // namespace

TEST(Kernel, ClosedFormValues) {
  KernelConfig k;
  k.lengthscales = {0.7};
  Matrix a(1, 1), b(1, 1);
  a << 0.2;
  b << 0.9;
  EXPECT_NEAR(kernel_eval(k, a, b)(0, 0), 0.6065307, 1e-7);
  k.family = KernelFamily::matern52;
  EXPECT_NEAR(kernel_eval(k, a, b)(0, 0), 0.5239941088318203, 1e-12);
  for (KernelFamily f : {KernelFamily::rbf, KernelFamily::matern52}) {
    k.family = f;
    k.signal_variance = 2.5;
    EXPECT_DOUBLE_EQ(kernel_eval(k, a, a)(0, 0), 2.5);
  }
}

TEST(Kernel, ArdScalesEachDimension) {
  KernelConfig k;
  k.lengthscales = {1.0, 2.0};
  Matrix a(1, 2), b(1, 2);
  a << 0.0, 0.0;
  b << 1.0, 2.0;
  // both coordinates contribute r^2 = 1
  EXPECT_NEAR(kernel_eval(k, a, b)(0, 0), std::exp(-1.0), 1e-15);
}

TEST(Kernel, GramMatrixIsSymmetric) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const KernelConfig k = random_kernel(rng, 3);
    const Matrix x = random_designs(rng, 7, 3);
    const Matrix g = kernel_eval(k, x, x);
    EXPECT_LE((g - g.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Kernel, RejectsBadConfig) {
  KernelConfig k;
  k.lengthscales = {1.0};
  Matrix x(2, 2);
  x.setZero();
  EXPECT_THROW(kernel_eval(k, x, x), ContractViolation);
  k.lengthscales = {1.0, -1.0};
  EXPECT_THROW(kernel_eval(k, x, x), ContractViolation);
}

TEST(GpPosterior, InterpolatesSinglePoint) {
  KernelConfig k;
  k.lengthscales = {0.5, 0.5};
  k.noise_variance = 1e-12;
  Matrix x(1, 2);
  x << 0.3, -0.2;
  Eigen::VectorXd y(1);
  y << 1.7;
  EXPECT_NEAR(gp_posterior(k, x, y, x)[0].mu, 1.7, 1e-5);
}

TEST(GpPosterior, FarQueriesRevertToPrior) {
  Rng rng(2);
  for (KernelFamily f : {KernelFamily::rbf, KernelFamily::matern52}) {
    KernelConfig k = random_kernel(rng, 2);
    k.family = f;
    const Matrix x = random_designs(rng, 6, 2);
    const Eigen::VectorXd y = random_vector(rng, 6);
    Matrix far(1, 2);
    far << 1e3, -1e3;
    const auto p = gp_posterior(k, x, y, far)[0];
    EXPECT_NEAR(p.mu, 0.0, 1e-9);
    EXPECT_NEAR(p.sigma * p.sigma, k.signal_variance + k.noise_variance, 1e-9);

    // with a prior mean the far query reverts to that mean
    Eigen::VectorXd mt = random_vector(rng, 6), mq(1);
    mq << 0.8;
    EXPECT_NEAR(gp_posterior(k, x, y, far, mt, mq)[0].mu, 0.8, 1e-9);
  }
}

TEST(GpPosterior, AddingPointLeavesFarPredictionUnchanged) {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const KernelConfig k = random_kernel(rng, 3);
    Matrix x = random_designs(rng, 5, 3);
    Eigen::VectorXd y = random_vector(rng, 5);
    Matrix far(1, 3);
    far << 1e4, 1e4, -1e4;
    const auto before = gp_posterior(k, x, y, far)[0];
    x.conservativeResize(6, Eigen::NoChange);
    x.row(5) = random_designs(rng, 1, 3).row(0);
    y.conservativeResize(6);
    y[5] = rng.normal();
    const auto after = gp_posterior(k, x, y, far)[0];
    EXPECT_NEAR(before.mu, after.mu, 1e-6);
    EXPECT_NEAR(before.sigma, after.sigma, 1e-6);
  }
}

TEST(GpPosterior, FixedInstanceMatchesExplicitInverse) {
  KernelConfig k;
  k.family = KernelFamily::matern52;
  k.lengthscales = {0.6, 1.3};
  k.signal_variance = 1.7;
  k.noise_variance = 0.05;
  k.jitter = 1e-15;
  Matrix x(5, 2), q(3, 2);
  x << 0.1, -0.4, 0.7, 0.2, -0.5, 0.5, 0.3, 0.9, -0.8, -0.6;
  q << 0.0, 0.0, 0.6, -0.2, -1.0, 1.0;
  Eigen::VectorXd y(5);
  y << 1.2, -0.3, 0.5, 2.0, -1.1;
  const auto p = gp_posterior(k, x, y, q);
  const double mu[] = {1.4653151036608771, -0.057725029475335664, -0.13268449276896693};
  const double sd[] = {0.4985901380569074, 0.5383702610533151, 1.078107474882231};
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(p[i].mu, mu[i], 1e-8);
    EXPECT_NEAR(p[i].sigma, sd[i], 1e-8);
  }
}

TEST(GpPosterior, MatchesDenseInverseOracle) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.index(8), d = 1 + rng.index(4), m = 1 + rng.index(4);
    KernelConfig k = random_kernel(rng, d);
    k.jitter = 1e-15;
    const Matrix x = random_designs(rng, n, d), q = random_designs(rng, m, d, -1.5, 1.5);
    const Eigen::VectorXd y = random_vector(rng, n);
    const auto p = gp_posterior(k, x, y, q);

    const Eigen::MatrixXd kinv =
        (Eigen::MatrixXd(kernel_eval(k, x, x)) + k.noise_variance * Eigen::MatrixXd::Identity(n, n)).inverse();
    const Eigen::MatrixXd ks = kernel_eval(k, x, q);
    for (std::size_t j = 0; j < m; ++j) {
      const auto col = ks.col(static_cast<Eigen::Index>(j));
      const double mu = col.dot(kinv * y);
      const double var = k.signal_variance - col.dot(kinv * col) + k.noise_variance;
      EXPECT_NEAR(p[j].mu, mu, 1e-8) << "instance " << trial;
      EXPECT_NEAR(p[j].sigma, std::sqrt(var), 1e-8) << "instance " << trial;
      EXPECT_GE(p[j].sigma * p[j].sigma, k.noise_variance - 1e-9);
    }
  }
}

TEST(GpPosterior, LogMarginalLikelihoodMatchesDenseFormula) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 2 + rng.index(6);
    KernelConfig k = random_kernel(rng, 2);
    k.jitter = 1e-15;
    const Matrix x = random_designs(rng, n, 2);
    const Eigen::VectorXd y = random_vector(rng, n);
    const Eigen::MatrixXd a =
        Eigen::MatrixXd(kernel_eval(k, x, x)) + k.noise_variance * Eigen::MatrixXd::Identity(n, n);
    const double expect = -0.5 * y.dot(a.inverse() * y) - 0.5 * std::log(a.determinant()) -
                          0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
    EXPECT_NEAR(log_marginal_likelihood(k, x, y), expect, 1e-9);
  }
}

TEST(GpPosterior, MarginalLikelihoodGradientMatchesFiniteDifferences) {
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 3 + rng.index(6), d = 1 + rng.index(3);
    const KernelFamily family = trial % 2 ? KernelFamily::matern52 : KernelFamily::rbf;
    const Matrix x = random_designs(rng, n, d);
    const Eigen::VectorXd y = random_vector(rng, n);
    ParameterStore store;
    store.add("log_ls", test::random_tensor(Shape{d}, rng, 0.3));
    store.add("log_signal", Tensor::scalar(rng.uniform(-0.5, 0.5)));
    store.add("log_noise", Tensor::scalar(rng.uniform(-4.0, -1.0)));
    const auto res = test::check_gradients(store, [&](Tape& tape, ParameterStore& s) {
      Var xv = tape.constant(Tensor(Shape{n, d}, std::vector<double>(x.data(), x.data() + x.size())));
      Var yv = tape.constant(Tensor(Shape{n}, std::vector<double>(y.data(), y.data() + y.size())));
      Var kv = kernel_matrix(family, xv, xv, tape.parameter(s, 0), tape.parameter(s, 1));
      return log_marginal_var(kv, ops::exp(tape.parameter(s, 2)), yv, 1e-6);
    });
    EXPECT_LE(res.worst_relative, 1e-4) << "instance " << trial << " " << res.worst_param;
  }
}

TEST(GpPosterior, JitterEscalatesThenFails) {
  Matrix k(2, 2);
  k << 1.0, 0.0, 0.0, -5e-5;
  const Factorization f = factorize(k, 0.0, 1e-6);
  EXPECT_DOUBLE_EQ(f.jitter, 1e-4);
  k(1, 1) = -1.0;
  EXPECT_THROW(factorize(k, 0.0, 1e-6), NumericFailure);
}

TEST(Stgp, RecoversLengthscaleOfGeneratingProcess) {
  const double true_ls = 0.3;
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    Rng rng(100 + seed);
    const Matrix x = random_designs(rng, 40, 1);
    KernelConfig k;
    k.lengthscales = {true_ls};
    k.noise_variance = 1e-2;
    Eigen::MatrixXd a = Eigen::MatrixXd(kernel_eval(k, x, x)) + 1e-2 * Eigen::MatrixXd::Identity(40, 40);
    const Eigen::VectorXd y = a.llt().matrixL() * random_vector(rng, 40);
    StgpConfig cfg;
    cfg.seed = seed;
    const StgpFit fit = fit_stgp(x, y, cfg);
    const double ls = fit.kernel.lengthscales[0];
    EXPECT_GE(ls, true_ls / 2.0) << "seed " << seed;
    EXPECT_LE(ls, true_ls * 2.0) << "seed " << seed;
  }
}

TEST(Stgp, DuplicateInputsKeepNoiseAwayFromZero) {
  Matrix x(6, 2);
  x << 0.1, 0.1, 0.1, 0.1, -0.5, 0.4, -0.5, 0.4, 0.8, -0.3, 0.8, -0.3;
  Eigen::VectorXd y(6);
  y << 1.0, 2.0, -0.5, 0.5, 0.3, 1.4;
  const StgpFit fit = fit_stgp(x, y);
  EXPECT_GT(fit.kernel.noise_variance, 1e-2);
  for (const auto& p : stgp_predict(fit, x, y, x)) EXPECT_TRUE(std::isfinite(p.mu) && p.sigma > 0.0);
}

TEST(Stgp, FinalObjectiveNotBelowAnyStart) {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix x = random_designs(rng, 5 + rng.index(20), 4);
    const Eigen::VectorXd y = random_vector(rng, static_cast<std::size_t>(x.rows()));
    StgpConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(trial);
    const StgpFit fit = fit_stgp(x, y, cfg);
    ASSERT_EQ(fit.initial_objectives.size(), cfg.restarts);
    for (double v : fit.initial_objectives) EXPECT_GE(fit.objective, v);
  }
}

TEST(Stgp, PredictionsReturnToOriginalUnits) {
  Rng rng(8);
  const Matrix x = random_designs(rng, 12, 2);
  Eigen::VectorXd y = random_vector(rng, 12);
  y = (y.array() * 3.0 + 10.0).matrix();
  const StgpFit fit = fit_stgp(x, y);
  Matrix far(1, 2);
  far << 1e3, 1e3;
  EXPECT_NEAR(stgp_predict(fit, x, y, far)[0].mu, y.mean(), 1e-6);
  EXPECT_THROW(fit_stgp(x.topRows(1), y.head(1)), ContractViolation);
}

TEST(Stgp, DeterministicForSeed) {
  Rng rng(9);
  const Matrix x = random_designs(rng, 15, 3);
  const Eigen::VectorXd y = random_vector(rng, 15);
  StgpConfig cfg;
  cfg.seed = 42;
  const StgpFit a = fit_stgp(x, y, cfg), b = fit_stgp(x, y, cfg);
  EXPECT_EQ(a.kernel.lengthscales, b.kernel.lengthscales);
  EXPECT_EQ(a.kernel.noise_variance, b.kernel.noise_variance);
  EXPECT_EQ(a.objective, b.objective);
}

namespace {

DgpConfig small_dgp_config() {
  DgpConfig c;
  c.hidden_dim = 16;
  c.embedding_dim = 4;
  return c;
}

DgpTrainConfig quick_dgp_training() {
  DgpTrainConfig t;
  t.batch_tasks = 1;
  t.learning_rate = 3e-3;
  t.max_epochs = 40;
  t.patience = 40;
  t.seed = 5;
  return t;
}

}  // namespace

TEST(Dgp, SingleTaskTrainingImprovesValidationLikelihood) {
  const TaskDataset task = test::small_task(50, 160);
  const Normalization norm = compute_normalization({task});
  const DgpTrainResult r = train_dgp({task}, {task}, norm, small_dgp_config(), quick_dgp_training());
  std::cout << "validation nll " << r.initial_val_nll << " -> " << r.best_val_nll << "\n";
  EXPECT_LT(r.best_val_nll, r.initial_val_nll);
  EXPECT_GT(r.steps, 0u);
}

TEST(Dgp, DeterministicUnderFixedSeed) {
  const TaskDataset task = test::small_task(51, 80);
  const Normalization norm = compute_normalization({task});
  DgpTrainConfig tc = quick_dgp_training();
  tc.max_epochs = 5;
  const DgpTrainResult a = train_dgp({task}, {task}, norm, small_dgp_config(), tc);
  const DgpTrainResult b = train_dgp({task}, {task}, norm, small_dgp_config(), tc);
  ASSERT_EQ(a.model.parameters().size(), b.model.parameters().size());
  for (std::size_t i = 0; i < a.model.parameters().size(); ++i)
    EXPECT_EQ(a.model.parameters()[i].value.data, b.model.parameters()[i].value.data);
}

TEST(Dgp, UntrainedPosteriorIsFinite) {
  Rng rng(52);
  const TaskDataset task = test::small_task(52, 40);
  const DeepKernelModel m(small_dgp_config(), compute_normalization({task}), 3);
  ContextSet c;
  for (std::size_t i = 0; i < 10; ++i) c.push_back({task.records[i].x, task.records[i].f, {}});
  TargetInputs t;
  for (int i = 0; i < 20; ++i) {
    std::vector<double> x(4);
    for (double& v : x) v = rng.uniform(-1.0, 1.0);
    t.push_back(x);
  }
  for (const auto& p : m.predict(c, t)) {
    EXPECT_TRUE(std::isfinite(p.mu));
    EXPECT_TRUE(std::isfinite(p.sigma));
    EXPECT_GT(p.sigma, 0.0);
  }
}

TEST(Dgp, MeanIsLinearReadoutOfEmbedding) {
  const TaskDataset task = test::small_task(53, 40);
  const DeepKernelModel m(small_dgp_config(), compute_normalization({task}), 4);
  Tape tape;
  Var x = tape.constant(Tensor(Shape{2, 4}, {0.1, 0.2, 0.3, 0.4, -0.5, 0.0, 0.5, 0.9}));
  Var e = m.embed(tape, x);
  Var mu = m.mean(tape, e);
  const auto& w = m.parameters()[m.parameters().size() - 4].value.data;
  ASSERT_EQ(m.parameters()[m.parameters().size() - 4].name, "mean.w");
  for (std::size_t r = 0; r < 2; ++r) {
    double dot = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) dot += e.value().data[r * w.size() + j] * w[j];
    EXPECT_DOUBLE_EQ(mu.value().data[r], dot);
  }
}

TEST(Dgp, SmallTaskSampledWithReplacement) {
  const TaskDataset task = test::small_task(54, 20);
  Rng rng(1);
  const auto idx = balanced_sample(task, 50, 0.8, rng);
  EXPECT_EQ(idx.size(), 50u);
  for (std::size_t i : idx) EXPECT_LT(i, task.size());
}

TEST(Dgp, CheckpointRoundTripAndKindTag) {
  TempDir dir("dgp");
  const TaskDataset task = test::small_task(55, 40);
  const DeepKernelModel m(small_dgp_config(), compute_normalization({task}), 6);
  save_dgp(dir / "d.bin", m);
  const DeepKernelModel back = load_dgp(dir / "d.bin");
  ContextSet c;
  for (std::size_t i = 0; i < 8; ++i) c.push_back({task.records[i].x, task.records[i].f, {}});
  const TargetInputs t = {task.records[20].x, task.records[21].x};
  const auto a = m.predict(c, t), b = back.predict(c, t);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].mu, b[i].mu);
    EXPECT_EQ(a[i].sigma, b[i].sigma);
  }
  try {
    load_model(dir / "d.bin");
    FAIL() << "expected kind mismatch";
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.kind(), CheckpointError::Kind::kind_mismatch);
  }
}
