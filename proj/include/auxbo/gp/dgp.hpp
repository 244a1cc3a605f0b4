#pragma once

#include <cmath>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "auxbo/gp/stgp.hpp"
#include "auxbo/model/checkpoint.hpp"
#include "auxbo/model/config.hpp"
#include "auxbo/model/layers.hpp"
#include "auxbo/numerics/early_stopping.hpp"
#include "auxbo/tasks/sampler.hpp"

namespace auxbo::gp {

struct DgpConfig {
  std::size_t input_dim = 4;
  std::size_t hidden_dim = 64;
  std::size_t hidden_layers = 3;
  std::size_t embedding_dim = 16;
  KernelFamily family = KernelFamily::rbf;
  double min_noise = 1e-6;
  double jitter = 1e-6;

  void validate() const {
    require(input_dim >= 1 && hidden_dim >= 1 && hidden_layers >= 1 && embedding_dim >= 1,
            "DgpConfig: dimensions must be positive");
    require(min_noise > 0.0 && jitter > 0.0, "DgpConfig: min_noise and jitter must be positive");
  }
  bool operator==(const DgpConfig&) const = default;
};

inline nlohmann::ordered_json to_json(const DgpConfig& c) {
  return {{"input_dim", c.input_dim},         {"hidden_dim", c.hidden_dim}, {"hidden_layers", c.hidden_layers},
          {"embedding_dim", c.embedding_dim}, {"family", family_name(c.family)}, {"min_noise", c.min_noise},
          {"jitter", c.jitter}};
}

inline DgpConfig dgp_config_from_json(const nlohmann::json& j) {
  DgpConfig c;
  c.input_dim = j.at("input_dim").get<std::size_t>();
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.hidden_layers = j.at("hidden_layers").get<std::size_t>();
  c.embedding_dim = j.at("embedding_dim").get<std::size_t>();
  auto f = parse_family(j.at("family").get<std::string>());
  if (!f) throw std::invalid_argument("unknown kernel family");
  c.family = *f;
  c.min_noise = j.at("min_noise").get<double>();
  c.jitter = j.at("jitter").get<double>();
  return c;
}

/// Shared GP across tasks: mean W . E(x) and kernel k(E(x), E(x')) with an
/// MLP encoder E. Works on normalized rewards internally.
class DeepKernelModel {
 public:
  DeepKernelModel(DgpConfig cfg, Normalization norm, std::uint64_t seed) : cfg_(cfg), norm_(std::move(norm)) {
    cfg_.validate();
    Rng rng(seed);
    std::size_t in = cfg_.input_dim;
    for (std::size_t l = 0; l < cfg_.hidden_layers; ++l) {
      encoder_.push_back(layers::Linear::create(store_, "enc." + std::to_string(l), in, cfg_.hidden_dim, rng));
      in = cfg_.hidden_dim;
    }
    encoder_.push_back(
        layers::Linear::create(store_, "enc." + std::to_string(cfg_.hidden_layers), in, cfg_.embedding_dim, rng));
    Tensor w(Shape{cfg_.embedding_dim, 1});
    const double a = std::sqrt(6.0 / static_cast<double>(cfg_.embedding_dim + 1));
    for (double& v : w.data) v = rng.uniform(-a, a);
    mean_w_ = store_.add("mean.w", std::move(w));
    log_ls_ = store_.add("kernel.log_lengthscale", Tensor(Shape{cfg_.embedding_dim}, 0.0));
    log_signal_ = store_.add("kernel.log_signal", Tensor::scalar(0.0));
    log_noise_ = store_.add("kernel.log_noise", Tensor::scalar(std::log(0.1)));
  }

  const DgpConfig& config() const { return cfg_; }
  const Normalization& normalization() const { return norm_; }
  ParameterStore& parameters() { return store_; }
  const ParameterStore& parameters() const { return store_; }

  Var embed(Tape& tape, Var x) const {
    layers::Pass pass{tape, store_, false, 0, 0.0, 0};
    for (std::size_t l = 0; l + 1 < encoder_.size(); ++l) x = ops::tanh(encoder_[l](pass, x));
    return encoder_.back()(pass, x);
  }

  /// Prior mean W . E(x) for embeddings e[n, emb], as a length-n vector.
  Var mean(Tape& tape, Var e) const {
    Var m = ops::matmul(e, tape.parameter(store_, mean_w_));
    return ops::reshape(m, Shape{e.rows()});
  }

  /// Joint log marginal likelihood of normalized rewards at the designs.
  Var log_likelihood(Tape& tape, const std::vector<std::vector<double>>& xs, std::span<const double> f) const {
    require(xs.size() == f.size() && !xs.empty(), "DeepKernelModel: one reward per design required");
    Var x = tape.constant(design_tensor(xs));
    std::vector<double> y(f.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = norm_.normalize(f[i]);
    Var e = embed(tape, x);
    const std::size_t n = y.size();
    Var resid = ops::sub(tape.constant(Tensor(Shape{n}, std::move(y))), mean(tape, e));
    Var k = kernel_matrix(cfg_.family, e, e, tape.parameter(store_, log_ls_), tape.parameter(store_, log_signal_));
    Var noise = ops::add_scalar(ops::exp(tape.parameter(store_, log_noise_)), cfg_.min_noise);
    return log_marginal_var(k, noise, resid, cfg_.jitter);
  }

  KernelConfig kernel() const {
    KernelConfig k;
    k.family = cfg_.family;
    for (double v : store_[log_ls_].value.data) k.lengthscales.push_back(std::exp(v));
    k.signal_variance = std::exp(store_[log_signal_].value.item());
    k.noise_variance = std::exp(store_[log_noise_].value.item()) + cfg_.min_noise;
    k.jitter = cfg_.jitter;
    return k;
  }

  /// Posterior over raw rewards at `targets` given the (x, f) part of `context`.
  std::vector<GaussianPrediction> predict(const ContextSet& context, const TargetInputs& targets) const {
    require(!context.empty(), "DeepKernelModel::predict: empty context");
    require(!targets.empty(), "DeepKernelModel::predict: empty target set");
    std::vector<std::vector<double>> xc;
    Eigen::VectorXd y(static_cast<Eigen::Index>(context.size()));
    for (std::size_t i = 0; i < context.size(); ++i) {
      xc.push_back(context[i].x);
      y(static_cast<Eigen::Index>(i)) = norm_.normalize(context[i].f);
    }
    auto [ec, mc] = embed_values(xc);
    auto [et, mt] = embed_values(targets);
    auto out = gp_posterior(kernel(), ec, y, et, mc, mt);
    for (auto& p : out) {
      p.mu = norm_.denormalize(p.mu);
      p.sigma *= norm_.reward_std;
    }
    return out;
  }

 private:
  Tensor design_tensor(const std::vector<std::vector<double>>& xs) const {
    Tensor t(Shape{xs.size(), cfg_.input_dim});
    for (std::size_t i = 0; i < xs.size(); ++i) {
      require(xs[i].size() == cfg_.input_dim, "DeepKernelModel: design has wrong dimension");
      std::copy(xs[i].begin(), xs[i].end(), &t.data[i * cfg_.input_dim]);
    }
    return t;
  }

  std::pair<Matrix, Eigen::VectorXd> embed_values(const std::vector<std::vector<double>>& xs) const {
    Tape tape;
    tape.set_grad_enabled(false);
    Var e = embed(tape, tape.constant(design_tensor(xs)));
    Var m = mean(tape, e);
    const auto& ev = e.value();
    Matrix em = Eigen::Map<const Matrix>(ev.data.data(), static_cast<Eigen::Index>(ev.rows()),
                                         static_cast<Eigen::Index>(ev.cols()));
    Eigen::VectorXd mv = Eigen::Map<const Eigen::VectorXd>(m.value().data.data(), static_cast<Eigen::Index>(xs.size()));
    return {std::move(em), std::move(mv)};
  }

  DgpConfig cfg_;
  Normalization norm_;
  mutable ParameterStore store_;
  std::vector<layers::Linear> encoder_;
  ParamId mean_w_ = 0, log_ls_ = 0, log_signal_ = 0, log_noise_ = 0;
};

struct DgpTrainConfig {
  std::size_t batch_tasks = 8;
  double learning_rate = 1e-4;
  double weight_decay = 0.01;
  std::size_t max_epochs = 50;
  std::size_t patience = 5;
  std::size_t sample_size = 50;
  std::size_t val_draws = 2;  // fixed samples per validation task
  double high_quantile = 0.8;
  std::uint64_t seed = 0;
};

struct DgpTrainResult {
  DeepKernelModel model;
  std::vector<TrainLogRow> log;
  double initial_val_nll = 0.0;  // per-point negative log likelihood before training
  double best_val_nll = 0.0;
  std::size_t steps = 0;
};

/// `sample_size` indices drawn balanced across the task's reward strata;
/// with replacement when the pool is smaller than the sample.
inline std::vector<std::size_t> balanced_sample(const TaskDataset& task, std::size_t sample_size, double quantile,
                                                Rng& rng) {
  RewardStrata st = reward_strata(task, quantile);
  if (task.size() >= sample_size) return auxbo::detail::draw_from_strata(st.high, st.low, sample_size, true, rng);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < sample_size; ++i) {
    const bool hi = (rng.uniform() < 0.5 && !st.high.empty()) || st.low.empty();
    const auto& src = hi ? st.high : st.low;
    out.push_back(src[rng.index(src.size())]);
  }
  return out;
}

namespace detail {

struct DgpSample {
  std::vector<std::vector<double>> x;
  std::vector<double> f;
};

inline DgpSample make_dgp_sample(const TaskDataset& task, const std::vector<std::size_t>& idx) {
  DgpSample s;
  for (std::size_t i : idx) {
    s.x.push_back(task.records[i].x);
    s.f.push_back(task.records[i].f);
  }
  return s;
}

inline double dgp_mean_nll(const DeepKernelModel& m, const std::vector<DgpSample>& samples) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& s : samples) {
    Tape tape;
    tape.set_grad_enabled(false);
    total -= m.log_likelihood(tape, s.x, s.f).value().item();
    count += s.f.size();
  }
  return total / static_cast<double>(count);
}

}  // namespace detail

/// Trains the deep-kernel GP by ascending the joint log marginal likelihood
/// of balanced per-task samples. One epoch is one pass over a seeded
/// shuffle of the training tasks in batches of `batch_tasks`. Keeps the
/// parameters with the best validation likelihood.
inline DgpTrainResult train_dgp(const std::vector<TaskDataset>& train, const std::vector<TaskDataset>& val,
                                const Normalization& norm, const DgpConfig& cfg, const DgpTrainConfig& tc) {
  require(!train.empty(), "train_dgp: need at least one training task");
  require(!val.empty(), "train_dgp: need at least one validation task");
  require(tc.batch_tasks >= 1 && tc.sample_size >= 2 && tc.max_epochs >= 1, "train_dgp: invalid train config");
  DgpTrainResult res{DeepKernelModel(cfg, norm, derive_seed(tc.seed, {0xD6})), {}, 0.0, 0.0, 0};
  DeepKernelModel& model = res.model;

  std::vector<detail::DgpSample> val_samples;
  for (std::size_t v = 0; v < val.size(); ++v)
    for (std::size_t r = 0; r < tc.val_draws; ++r) {
      Rng rng(derive_seed(tc.seed, {0x7A1, v, r}));
      val_samples.push_back(
          detail::make_dgp_sample(val[v], balanced_sample(val[v], tc.sample_size, tc.high_quantile, rng)));
    }
  res.initial_val_nll = detail::dgp_mean_nll(model, val_samples);

  AdamW opt({tc.learning_rate, 0.9, 0.999, 1e-8, tc.weight_decay});
  EarlyStopping stop{tc.patience};
  stop.update(res.initial_val_nll, 0);
  std::vector<Parameter> best_params(model.parameters().begin(), model.parameters().end());
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(tc.seed, {0x7A2}));

  for (std::size_t epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    rng.shuffle(order);
    double train_total = 0.0;
    std::size_t train_count = 0;
    for (std::size_t start = 0; start < order.size(); start += tc.batch_tasks) {
      const std::size_t end = std::min(order.size(), start + tc.batch_tasks);
      std::vector<detail::DgpSample> batch;
      for (std::size_t b = start; b < end; ++b) {
        const TaskDataset& task = train[order[b]];
        batch.push_back(detail::make_dgp_sample(task, balanced_sample(task, tc.sample_size, tc.high_quantile, rng)));
      }
      Tape tape;
      Var loss;
      GradientMap g;
      try {
        for (std::size_t b = 0; b < batch.size(); ++b) {
          const auto& s = batch[b];
          Var nll = ops::scale(model.log_likelihood(tape, s.x, s.f), -1.0 / static_cast<double>(s.f.size()));
          loss = b == 0 ? nll : ops::add(loss, nll);
        }
        loss = ops::scale(loss, 1.0 / static_cast<double>(end - start));
        g = tape.backward(loss);
      } catch (const NumericFailure& e) {
        throw NumericFailure("train_dgp: step " + std::to_string(res.steps) + ": " + e.what());
      }
      train_total += loss.value().item() * static_cast<double>(end - start);
      train_count += end - start;
      opt.step(model.parameters(), g);
      ++res.steps;
    }
    const double val_nll = detail::dgp_mean_nll(model, val_samples);
    const bool improved = stop.update(val_nll, epoch);
    if (improved) best_params.assign(model.parameters().begin(), model.parameters().end());
    res.log.push_back({epoch, train_total / static_cast<double>(train_count), val_nll, improved});
    if (stop.should_stop()) break;
  }
  restore_parameters(model.parameters(), best_params, "<best>");
  res.best_val_nll = stop.best;
  return res;
}

struct DgpGridEntry {
  KernelFamily family;
  std::size_t embedding_dim;
  double best_val_nll;
};

struct DgpSelection {
  DgpTrainResult best;
  std::vector<DgpGridEntry> grid;
};

/// Grid search over kernel family x embedding dimension on validation likelihood.
inline DgpSelection select_dgp(const std::vector<TaskDataset>& train, const std::vector<TaskDataset>& val,
                               const Normalization& norm, DgpConfig base, const DgpTrainConfig& tc,
                               const std::vector<KernelFamily>& families = {KernelFamily::rbf, KernelFamily::matern52},
                               const std::vector<std::size_t>& dims = {8, 16, 32}) {
  require(!families.empty() && !dims.empty(), "select_dgp: empty grid");
  std::optional<DgpTrainResult> best;
  std::vector<DgpGridEntry> grid;
  for (KernelFamily fam : families)
    for (std::size_t dim : dims) {
      base.family = fam;
      base.embedding_dim = dim;
      DgpTrainResult r = train_dgp(train, val, norm, base, tc);
      grid.push_back({fam, dim, r.best_val_nll});
      if (!best || r.best_val_nll < best->best_val_nll) best.emplace(std::move(r));
    }
  return {std::move(*best), std::move(grid)};
}

inline void save_dgp(const std::filesystem::path& path, const DeepKernelModel& model,
                     const nlohmann::ordered_json& extra = nlohmann::ordered_json::object()) {
  ModelFile mf;
  mf.kind = ModelKind::dgp;
  mf.header["config"] = to_json(model.config());
  mf.header["normalization"] = to_json(model.normalization());
  mf.header["meta"] = extra;
  mf.params.assign(model.parameters().begin(), model.parameters().end());
  write_model_file(path, mf);
}

inline DeepKernelModel load_dgp(const std::filesystem::path& path) {
  ModelFile mf = read_model_file(path);
  if (mf.kind != ModelKind::dgp)
    throw CheckpointError(CheckpointError::Kind::kind_mismatch, path.string(),
                          std::string("file holds a ") + model_kind_name(mf.kind) + " model, expected dgp");
  DgpConfig cfg;
  Normalization norm;
  try {
    cfg = dgp_config_from_json(mf.header.at("config"));
    norm = normalization_from_json(mf.header.at("normalization"));
  } catch (const std::exception& e) {
    throw CheckpointError(CheckpointError::Kind::corrupt, path.string(), std::string("bad header: ") + e.what());
  }
  DeepKernelModel model(cfg, norm, 0);
  restore_parameters(model.parameters(), mf.params, path.string());
  return model;
}

}  // namespace auxbo::gp
