#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "auxbo/gp/posterior.hpp"
#include "auxbo/numerics/adamw.hpp"
#include "auxbo/numerics/gaussian.hpp"
#include "auxbo/numerics/rng.hpp"

namespace auxbo::gp {

/// Differentiable log N(r | 0, K + (noise + jitter) I) with the same jitter
/// escalation as factorize().
inline Var log_marginal_var(Var k, Var noise, Var r, double jitter) {
  double j = jitter;
  for (int attempt = 0;; ++attempt, j *= 10.0) {
    try {
      return ops::gaussian_log_marginal(ops::add_diagonal(k, noise, j), r);
    } catch (const NumericFailure&) {
      if (attempt == kMaxJitterEscalations) throw;
    }
  }
}

struct StgpConfig {
  KernelFamily family = KernelFamily::rbf;
  std::size_t restarts = 4;
  std::size_t iterations = 80;
  double learning_rate = 0.05;
  // log-normal lengthscale prior: median sqrt(d), log-scale sd
  double lengthscale_prior_scale = 1.0;
  double min_noise = 1e-6;
  double jitter = 1e-6;
  std::uint64_t seed = 0;
};

/// Result of a MAP fit on standardized outcomes.
struct StgpFit {
  KernelConfig kernel;
  double y_mean = 0.0;
  double y_std = 1.0;
  double objective = -std::numeric_limits<double>::infinity();  // best log posterior (up to a constant)
  std::vector<double> initial_objectives;                         // one per restart that evaluated
};

namespace detail {

struct StgpObjective {
  const Matrix& x;
  const Eigen::VectorXd& y;
  const StgpConfig& cfg;

  /// Log marginal likelihood plus log-normal lengthscale log prior.
  Var operator()(Tape& tape, ParameterStore& store) const {
    const auto n = static_cast<std::size_t>(x.rows()), d = static_cast<std::size_t>(x.cols());
    Var xv = tape.constant(Tensor(Shape{n, d}, std::vector<double>(x.data(), x.data() + x.size())));
    Var rv = tape.constant(Tensor(Shape{n}, std::vector<double>(y.data(), y.data() + y.size())));
    Var log_ls = tape.parameter(store, 0);
    Var k = kernel_matrix(cfg.family, xv, xv, log_ls, tape.parameter(store, 1));
    Var noise = ops::add_scalar(ops::exp(tape.parameter(store, 2)), cfg.min_noise);
    Var lml = log_marginal_var(k, noise, rv, cfg.jitter);
    const double median = 0.5 * std::log(static_cast<double>(d));
    const double s2 = cfg.lengthscale_prior_scale * cfg.lengthscale_prior_scale;
    Var prior = ops::scale(ops::sum(ops::square(ops::add_scalar(log_ls, -median))), -0.5 / s2);
    return ops::add(lml, prior);
  }
};

inline KernelConfig kernel_from_store(const ParameterStore& store, const StgpConfig& cfg) {
  KernelConfig k;
  k.family = cfg.family;
  for (double v : store[0].value.data) k.lengthscales.push_back(std::exp(v));
  k.signal_variance = std::exp(store[1].value.item());
  k.noise_variance = std::exp(store[2].value.item()) + cfg.min_noise;
  k.jitter = cfg.jitter;
  return k;
}

}  // namespace detail

/// MAP fit of an ARD GP to (x, y) by Adam ascent on log-hyperparameters from
/// `restarts` seeded starts. Outcomes are standardized inside the fit. The
/// returned objective is the best value seen over all iterates, so it is never
/// below any restart's starting value.
inline StgpFit fit_stgp(const Matrix& x, const Eigen::VectorXd& y, const StgpConfig& cfg = {}) {
  require(x.rows() >= 2, "fit_stgp: need at least 2 training points");
  require(x.rows() == y.size(), "fit_stgp: one target per design required");
  require(cfg.restarts >= 1, "fit_stgp: restarts must be >= 1");
  const std::size_t d = static_cast<std::size_t>(x.cols());
  StgpFit best;
  best.y_mean = y.mean();
  const double var = (y.array() - best.y_mean).square().mean();
  best.y_std = var > 1e-12 ? std::sqrt(var) : 1.0;
  const Eigen::VectorXd ys = (y.array() - best.y_mean) / best.y_std;
  detail::StgpObjective objective{x, ys, cfg};
  const double median = 0.5 * std::log(static_cast<double>(d));

  Rng rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(x.rows())}));
  std::optional<std::string> last_failure;
  bool any = false;
  for (std::size_t r = 0; r < cfg.restarts; ++r) {
    ParameterStore store;
    Tensor ls(Shape{d});
    for (double& v : ls.data) v = r == 0 ? median : median + cfg.lengthscale_prior_scale * rng.normal();
    store.add("log_lengthscale", std::move(ls));
    store.add("log_signal", Tensor::scalar(r == 0 ? 0.0 : rng.uniform(std::log(0.5), std::log(2.0))));
    store.add("log_noise", Tensor::scalar(r == 0 ? std::log(0.1) : rng.uniform(std::log(1e-3), std::log(0.3))));
    AdamW opt({cfg.learning_rate, 0.9, 0.999, 1e-8, 0.0});
    bool first = true;
    try {
      for (std::size_t it = 0; it <= cfg.iterations; ++it) {
        Tape tape;
        Var obj = objective(tape, store);
        const double value = obj.value().item();
        if (first) {
          best.initial_objectives.push_back(value);
          first = false;
        }
        if (value > best.objective) {
          best.objective = value;
          best.kernel = detail::kernel_from_store(store, cfg);
          any = true;
        }
        if (it == cfg.iterations) break;
        GradientMap g = tape.backward(ops::scale(obj, -1.0));
        opt.step(store, g);
      }
    } catch (const NumericFailure& e) {
      last_failure = e.what();
    }
  }
  if (!any) throw NumericFailure("fit_stgp: all restarts failed: " + last_failure.value_or("unknown"));
  return best;
}

/// Posterior of a fitted STGP in the original outcome units.
inline std::vector<GaussianPrediction> stgp_predict(const StgpFit& fit, const Matrix& x, const Eigen::VectorXd& y,
                                                    const Matrix& xq) {
  const Eigen::VectorXd ys = (y.array() - fit.y_mean) / fit.y_std;
  auto out = gp_posterior(fit.kernel, x, ys, xq);
  for (auto& p : out) {
    p.mu = p.mu * fit.y_std + fit.y_mean;
    p.sigma *= fit.y_std;
  }
  return out;
}

}  // namespace auxbo::gp
