#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>

#include "test_util.hpp"

using namespace auxbo;
using auxbo::test::check_gradients;
using auxbo::test::random_graph;
using auxbo::test::random_graph_inputs;
using auxbo::test::random_tensor;

namespace {

constexpr double kFdStep = 1e-5;
constexpr double kFdTol = 1e-4;

}  // namespace

TEST(Gradients, RandomCompositeGraphsMatchFiniteDifferences) {
  for (std::uint64_t g = 0; g < 20; ++g) {
    ParameterStore store = random_graph_inputs(g);
    auto res = check_gradients(store, [g](Tape& t, ParameterStore& s) { return random_graph(t, s, g); }, kFdStep);
    EXPECT_LE(res.worst_relative, kFdTol) << "graph " << g << " worst at " << res.worst_param;
  }
}

TEST(Gradients, ReductionAndShapeOps) {
  Rng rng(3);
  ParameterStore store;
  store.add("a", random_tensor({4, 3}, rng));
  store.add("b", random_tensor({2, 3}, rng));
  auto res = check_gradients(store, [](Tape& t, ParameterStore& s) {
    Var a = t.parameter(s, 0), b = t.parameter(s, 1);
    Var d = ops::sq_dist(a, b);                                // [4, 2]
    Var m = ops::matern52_from_sq(d);                          // [4, 2]
    Var c = ops::column(ops::reshape(a, Shape{6, 2}), 1);      // [6]
    Var e = ops::exp(ops::scale(d, -0.5));
    return ops::add(ops::add(ops::mean(m), ops::sum(ops::square(c))), ops::sum(e));
  });
  EXPECT_LE(res.worst_relative, kFdTol) << res.worst_param;
}

TEST(Gradients, GaussianLikelihoods) {
  Rng rng(5);
  ParameterStore store;
  store.add("mu", random_tensor({5}, rng));
  store.add("log_sigma", random_tensor({5}, rng, 0.3));
  store.add("a", random_tensor({5, 5}, rng, 0.5));
  store.add("noise", Tensor::scalar(0.2));
  const std::vector<double> y = {0.1, -0.4, 1.2, 0.0, 2.0};
  auto res = check_gradients(store, [&y](Tape& t, ParameterStore& s) {
    Var nll = ops::gaussian_nll_sum(y, t.parameter(s, 0), ops::exp(t.parameter(s, 1)));
    Var a = t.parameter(s, 2);
    Var gram = ops::exp(ops::scale(ops::sq_dist(a, a), -0.5));
    Var lml = ops::gaussian_log_marginal(ops::add_diagonal(gram, t.parameter(s, 3), 0.5), t.parameter(s, 0));
    return ops::add(nll, lml);
  });
  EXPECT_LE(res.worst_relative, kFdTol) << res.worst_param;
}

TEST(Gradients, MaskedAttentionAndDropout) {
  Rng rng(9);
  ParameterStore store;
  store.add("q", random_tensor({3, 4}, rng));
  store.add("k", random_tensor({5, 4}, rng));
  store.add("v", random_tensor({5, 4}, rng));
  store.add("w", random_tensor({3, 4}, rng));
  std::vector<std::vector<bool>> mask = {{true, false, true, true, false},
                                         {false, true, false, false, false},
                                         {true, true, true, true, true}};
  auto res = check_gradients(store, [&mask](Tape& t, ParameterStore& s) {
    Var o = ops::masked_multihead_attention(t.parameter(s, 0), t.parameter(s, 1), t.parameter(s, 2), mask, 2);
    o = ops::dropout(o, 0.3, 17, true);
    return ops::sum(ops::mul(o, t.parameter(s, 3)));
  });
  EXPECT_LE(res.worst_relative, kFdTol) << res.worst_param;
}

TEST(Softmax, RowsSumToOne) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    Tape tape;
    Tensor x = random_tensor({6, 9}, rng, trial < 25 ? 1.0 : 300.0);
    Var y = ops::softmax_rows(tape.constant(x));
    for (std::size_t i = 0; i < 6; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 9; ++j) s += y.value()(i, j);
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(LayerNorm, ZeroMeanUnitVariancePreAffine) {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    Tape tape;
    const std::size_t d = 2 + rng.index(30);
    Tensor x = random_tensor({3, d}, rng, std::pow(10.0, rng.uniform(-3, 3)));
    const double offset = rng.uniform(-50, 50);
    for (double& v : x.data) v += offset;
    Var y = ops::layer_norm(tape.constant(x), tape.constant(Tensor({d}, 1.0)), tape.constant(Tensor({d}, 0.0)), 0.0);
    for (std::size_t i = 0; i < 3; ++i) {
      double m = 0.0, v = 0.0;
      for (std::size_t j = 0; j < d; ++j) m += y.value()(i, j);
      m /= static_cast<double>(d);
      for (std::size_t j = 0; j < d; ++j) v += (y.value()(i, j) - m) * (y.value()(i, j) - m);
      v /= static_cast<double>(d);
      EXPECT_NEAR(m, 0.0, 1e-9);
      EXPECT_NEAR(v, 1.0, 1e-9);
    }
  }
}

TEST(Attention, SingleKeyReturnsItsValue) {
  Rng rng(13);
  Tape tape;
  Var q = tape.constant(random_tensor({4, 6}, rng));
  Var k = tape.constant(random_tensor({1, 6}, rng));
  Tensor vt = random_tensor({1, 6}, rng);
  Var o = ops::attention(q, k, tape.constant(vt), 3, {AttentionBlock{0, 4, 0, 1, {}}});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 6; ++j) EXPECT_DOUBLE_EQ(o.value()(i, j), vt.data[j]);
}

TEST(Attention, OutputInvariantToMaskedKeys) {
  Rng rng(14);
  std::vector<std::vector<bool>> mask = {{true, false, true, false}, {true, true, false, false}};
  Tensor q = random_tensor({2, 4}, rng), k = random_tensor({4, 4}, rng), v = random_tensor({4, 4}, rng);
  Tape t1;
  Tensor base = ops::masked_multihead_attention(t1.constant(q), t1.constant(k), t1.constant(v), mask, 2).value();
  // key/value row 3 is masked for every query; row 1 only for query 0.
  for (int trial = 0; trial < 10; ++trial) {
    Tensor k2 = k, v2 = v;
    for (std::size_t j = 0; j < 4; ++j) {
      k2(3, j) = rng.normal() * 100.0;
      v2(3, j) = rng.normal() * 100.0;
    }
    Tape t2;
    Tensor out = ops::masked_multihead_attention(t2.constant(q), t2.constant(k2), t2.constant(v2), mask, 2).value();
    EXPECT_EQ(out.data, base.data);
  }
}

TEST(Determinism, RepeatedRunsAreBitIdentical) {
  auto run = [] {
    ParameterStore store = random_graph_inputs(4);
    Tape tape;
    Var loss = random_graph(tape, store, 4);
    GradientMap g = tape.backward(loss);
    std::vector<double> out{loss.value().item()};
    for (auto& [id, t] : g) out.insert(out.end(), t.data.begin(), t.data.end());
    return out;
  };
  const auto a = run(), b = run();
  ASSERT_EQ(a.size(), b.size());
  EXPECT_EQ(0, std::memcmp(a.data(), b.data(), a.size() * sizeof(double)));
}

TEST(Dropout, SeededMaskAndInference) {
  Tape tape;
  Var x = tape.constant(Tensor({4, 8}, 1.0));
  Var a = ops::dropout(x, 0.5, 42, true), b = ops::dropout(x, 0.5, 42, true), c = ops::dropout(x, 0.5, 43, true);
  EXPECT_EQ(a.value().data, b.value().data);
  EXPECT_NE(a.value().data, c.value().data);
  for (double v : a.value().data) EXPECT_TRUE(v == 0.0 || v == 2.0);
  EXPECT_EQ(ops::dropout(x, 0.5, 42, false).value().data, x.value().data);
}

TEST(PositionalTable, SinCosPattern) {
  Tensor pe = ops::sinusoidal_table(5, 6);
  ASSERT_EQ(pe.shape, (Shape{5, 6}));
  for (std::size_t j = 0; j < 6; j += 2) {
    EXPECT_DOUBLE_EQ(pe(0, j), 0.0);
    EXPECT_DOUBLE_EQ(pe(0, j + 1), 1.0);
  }
  EXPECT_NEAR(pe(3, 0), std::sin(3.0), 1e-15);
}

TEST(GaussianNll, ReferenceValues) {
  EXPECT_NEAR(gaussian_nll(0.0, 0.0, 1.0), 0.9189385, 1e-7);
  EXPECT_NEAR(gaussian_nll(1.0, 0.0, 1.0), 1.4189385, 1e-7);
  EXPECT_NEAR(gaussian_nll(0.0, 0.0, 2.0), 1.6120857, 1e-7);
  EXPECT_THROW(gaussian_nll(0.0, 0.0, 0.0), ContractViolation);
}

TEST(NormalCdf, ReferenceValues) {
  EXPECT_DOUBLE_EQ(normal_cdf(0.0), 0.5);
  EXPECT_NEAR(normal_cdf(1.0), 0.8413447460685429, 1e-15);
  EXPECT_NEAR(normal_cdf(-10.0), 7.61985302416047e-24, 1e-36);
}

TEST(AdamW, FirstStepIsLearningRateSized) {
  ParameterStore store;
  store.add("p", Tensor::scalar(0.0));
  AdamW opt({1e-3, 0.9, 0.999, 1e-8, 0.0});
  GradientMap g;
  g[0] = Tensor::scalar(1.0);
  opt.step(store, g);
  EXPECT_NEAR(store[0].value.item(), -9.99999995e-4, 1e-11);
}

TEST(AdamW, ZeroGradientZeroDecayLeavesParameters) {
  ParameterStore store;
  store.add("p", Tensor::vector({0.3, -1.7}));
  AdamW opt({1e-3, 0.9, 0.999, 1e-8, 0.0});
  GradientMap g;
  g[0] = Tensor(Shape{2}, 0.0);
  for (int i = 0; i < 3; ++i) opt.step(store, g);
  EXPECT_EQ(store[0].value.data, (std::vector<double>{0.3, -1.7}));
}

TEST(AdamW, DecoupledDecayOnly) {
  ParameterStore store;
  store.add("p", Tensor::scalar(1.0));
  AdamW opt({1e-4, 0.9, 0.999, 1e-8, 0.01});
  opt.step(store, GradientMap{});
  EXPECT_NEAR(store[0].value.item(), 0.999999, 1e-15);
}

TEST(AdamW, RejectsShapeMismatch) {
  ParameterStore store;
  store.add("p", Tensor::vector({1.0, 2.0}));
  AdamW opt;
  GradientMap g;
  g[0] = Tensor::scalar(1.0);
  EXPECT_THROW(opt.step(store, g), ContractViolation);
}

TEST(Backward, NonFiniteLossIsNumericFailure) {
  ParameterStore store;
  store.add("p", Tensor::scalar(-1.0));
  Tape tape;
  Var l = ops::log(tape.parameter(store, 0));
  EXPECT_THROW(tape.backward(l), NumericFailure);
}

TEST(Backward, RequiresScalarLoss) {
  ParameterStore store;
  store.add("p", Tensor::vector({1.0, 2.0}));
  Tape tape;
  EXPECT_THROW(tape.backward(tape.parameter(store, 0)), ContractViolation);
}

TEST(Ops, ShapeMismatchIsContractViolation) {
  Tape tape;
  Var a = tape.constant(Tensor({2, 3}, 1.0));
  Var b = tape.constant(Tensor({3, 2}, 1.0));
  EXPECT_THROW(ops::add(a, b), ContractViolation);
  EXPECT_THROW(ops::matmul(a, a), ContractViolation);
  EXPECT_THROW(ops::attention(a, a, a, 2, {}), ContractViolation);
}

TEST(EarlyStopping, PatienceZeroStopsAfterFirstNonImprovement) {
  EarlyStopping es{0};
  EXPECT_TRUE(es.update(1.0, 1));
  EXPECT_FALSE(es.should_stop());
  EXPECT_TRUE(es.update(0.9, 2));
  EXPECT_FALSE(es.update(0.95, 3));
  EXPECT_TRUE(es.should_stop());
  EXPECT_EQ(es.best_epoch, 2u);
}

TEST(EarlyStopping, CountsConsecutiveBadEpochs) {
  EarlyStopping es{2};
  es.update(1.0, 1);
  es.update(1.1, 2);
  es.update(1.2, 3);
  EXPECT_FALSE(es.should_stop());
  es.update(0.5, 4);
  EXPECT_EQ(es.bad_epochs, 0u);
  es.update(0.6, 5);
  es.update(0.6, 6);
  es.update(0.6, 7);
  EXPECT_TRUE(es.should_stop());
}

TEST(Rng, SeededStreamsAndDerivation) {
  Rng a(5), b(5);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  EXPECT_NE(derive_seed(1, {2, 3}), derive_seed(1, {3, 2}));
  EXPECT_EQ(derive_seed(1, {2, 3}), derive_seed(1, {2, 3}));
  Rng c(9);
  for (int i = 0; i < 1000; ++i) {
    const auto v = c.uniform_int(-3, 3);
    EXPECT_GE(v, -3);
    EXPECT_LE(v, 3);
  }
}
