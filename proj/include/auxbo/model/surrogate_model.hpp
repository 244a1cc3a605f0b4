#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "auxbo/model/config.hpp"
#include "auxbo/model/layers.hpp"
#include "auxbo/model/types.hpp"
#include "auxbo/numerics/gaussian.hpp"

namespace auxbo {

/// One conditioning problem: predict f at `targets` given `context`.
struct Episode {
  const ContextSet* context = nullptr;
  const TargetInputs* targets = nullptr;
};

/// Output of a batched forward pass in normalized reward units. mu and sigma
/// hold every target of every episode back to back; offsets[b] is where
/// episode b starts.
struct ForwardResult {
  Var mu;
  Var sigma;
  std::vector<std::size_t> offsets;
};

/// Few-shot transformer surrogate. Context tokens are embeddings of (x, f, h),
/// target tokens embeddings of x; a transformer without positional encodings
/// lets context tokens attend to the context and target tokens attend only to
/// the context. A two-layer head gives (mu, sigma) per target with
/// sigma = sigma_floor + softplus(raw).
class SurrogateModel {
 public:
  SurrogateModel(ModelConfig cfg, Normalization norm, std::uint64_t seed)
      : cfg_(std::move(cfg)), norm_(std::move(norm)) {
    cfg_.validate();
    if (cfg_.variant == Variant::aux)
      require(norm_.aux_mean.size() == cfg_.aux_channels && norm_.aux_std.size() == cfg_.aux_channels,
              "SurrogateModel: normalization channel count != aux_channels");
    build(seed);
  }

  const ModelConfig& config() const { return cfg_; }
  const Normalization& normalization() const { return norm_; }
  ParameterStore& parameters() { return store_; }
  const ParameterStore& parameters() const { return store_; }

  /// Batched forward on `tape`. Dropout is active only when training;
  /// `dropout_rate` overrides the configured rate when given.
  ForwardResult forward(Tape& tape, std::span<const Episode> episodes, bool training, std::uint64_t dropout_seed = 0,
                        std::optional<double> dropout_rate = std::nullopt) const {
    require(!episodes.empty(), "SurrogateModel::forward: no episodes");
    layers::Pass pass{tape, store_, training, dropout_seed, dropout_rate.value_or(cfg_.dropout_rate), 0};

    std::size_t n_ctx = 0, n_tgt = 0;
    for (const Episode& e : episodes) {
      require(e.context && !e.context->empty(), "SurrogateModel: empty context");
      require(e.targets && !e.targets->empty(), "SurrogateModel: empty target set");
      n_ctx += e.context->size();
      n_tgt += e.targets->size();
    }

    Var ctx = encode_contexts(pass, episodes, n_ctx);

    Tensor tgt_in(Shape{n_tgt, cfg_.input_dim});
    std::size_t r = 0;
    for (const Episode& e : episodes)
      for (const auto& x : *e.targets) {
        require(x.size() == cfg_.input_dim, "SurrogateModel: target design has wrong dimension");
        std::copy(x.begin(), x.end(), &tgt_in.data[r++ * cfg_.input_dim]);
      }
    Var tgt = target_encoder_(pass, tape.constant(std::move(tgt_in)));

    // token order: per episode, its context points then its targets
    Var src = ops::concat_rows(ctx, tgt);
    std::vector<std::size_t> order, target_rows;
    order.reserve(n_ctx + n_tgt);
    AttentionLayout layout;
    ForwardResult out;
    std::size_t c_off = 0, t_off = 0;
    for (const Episode& e : episodes) {
      const std::size_t nc = e.context->size(), nt = e.targets->size();
      const std::size_t start = order.size();
      for (std::size_t i = 0; i < nc; ++i) order.push_back(c_off + i);
      for (std::size_t i = 0; i < nt; ++i) {
        target_rows.push_back(order.size());
        order.push_back(n_ctx + t_off + i);
      }
      layout.push_back(AttentionBlock{start, nc + nt, start, nc, {}});
      out.offsets.push_back(t_off);
      c_off += nc;
      t_off += nt;
    }
    Var x = ops::gather_rows(src, std::move(order));
    for (const auto& blk : predictor_) x = blk(pass, x, layout);
    x = ops::gather_rows(predictor_norm_(pass, x), std::move(target_rows));
    Var head = head_(pass, x);
    out.mu = ops::column(head, 0);
    out.sigma = ops::add_scalar(ops::softplus(ops::column(head, 1)), cfg_.sigma_floor);
    return out;
  }

  /// Predictions in normalized reward units.
  std::vector<GaussianPrediction> predict_normalized(const ContextSet& context, const TargetInputs& targets) const {
    Tape tape;
    tape.set_grad_enabled(false);
    Episode ep{&context, &targets};
    ForwardResult fr = forward(tape, std::span<const Episode>(&ep, 1), false);
    const auto& mu = fr.mu.value().data;
    const auto& sg = fr.sigma.value().data;
    std::vector<GaussianPrediction> out(mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) out[i] = {mu[i], sg[i]};
    return out;
  }

  /// Predictions in raw reward units.
  std::vector<GaussianPrediction> predict(const ContextSet& context, const TargetInputs& targets) const {
    auto out = predict_normalized(context, targets);
    for (auto& p : out) {
      p.mu = norm_.denormalize(p.mu);
      p.sigma *= norm_.reward_std;
    }
    return out;
  }

  /// Sum over targets of the Gaussian NLL of normalized rewards.
  Var nll_loss(Tape& tape, const ContextSet& context, const TargetInputs& targets, std::span<const double> rewards,
               bool training = false, std::uint64_t dropout_seed = 0) const {
    require(rewards.size() == targets.size(), "nll_loss: one reward per target required");
    Episode ep{&context, &targets};
    ForwardResult fr = forward(tape, std::span<const Episode>(&ep, 1), training, dropout_seed);
    std::vector<double> y(rewards.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = norm_.normalize(rewards[i]);
    return ops::gaussian_nll_sum(y, fr.mu, fr.sigma);
  }

  /// Context-point embedding e_ctxt for each point of `context`, [n, model_dim].
  Tensor encode_context_points(const ContextSet& context) const {
    Tape tape;
    tape.set_grad_enabled(false);
    layers::Pass pass{tape, store_, false, 0, 0.0, 0};
    TargetInputs dummy{std::vector<double>(cfg_.input_dim, 0.0)};
    Episode ep{&context, &dummy};
    return encode_contexts(pass, std::span<const Episode>(&ep, 1), context.size()).value();
  }

 private:
  void build(std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t d = cfg_.model_dim;
    const std::size_t xf_dim = cfg_.input_dim + 1;
    xf_encoder_ = layers::Mlp::create(store_, "ctx.xf", xf_dim, d, d, rng);
    if (cfg_.variant == Variant::aux) {
      cls_ = store_.add("ctx.seq.cls", [&] {
        Tensor t(Shape{1, d});
        for (double& v : t.data) v = 0.02 * rng.normal();
        return t;
      }());
      xf_token_ = layers::Linear::create(store_, "ctx.seq.xf_token", xf_dim, d, rng);
      step_embed_ = layers::Linear::create(store_, "ctx.seq.step", cfg_.aux_channels, d, rng);
      for (std::size_t l = 0; l < cfg_.sequence_encoder_layers; ++l)
        sequence_.push_back(layers::TransformerBlock::create(store_, "ctx.seq.block" + std::to_string(l), d,
                                                             cfg_.ffn_dim, cfg_.heads, rng));
      sequence_norm_ = layers::LayerNorm::create(store_, "ctx.seq.norm", d);
    }
    target_encoder_ = layers::Mlp::create(store_, "tgt.x", cfg_.input_dim, d, d, rng);
    for (std::size_t l = 0; l < cfg_.predictor_layers; ++l)
      predictor_.push_back(
          layers::TransformerBlock::create(store_, "pred.block" + std::to_string(l), d, cfg_.ffn_dim, cfg_.heads, rng));
    predictor_norm_ = layers::LayerNorm::create(store_, "pred.norm", d);
    head_ = layers::Mlp::create(store_, "head", d, d, 2, rng);
  }

  /// e_ctxt for every context point of every episode, in episode order.
  Var encode_contexts(layers::Pass& pass, std::span<const Episode> episodes, std::size_t n_ctx) const {
    Tape& tape = pass.tape;
    const std::size_t in = cfg_.input_dim;
    Tensor xf(Shape{n_ctx, in + 1});
    std::size_t r = 0;
    for (const Episode& e : episodes)
      for (const auto& cp : *e.context) {
        require(cp.x.size() == in, "SurrogateModel: context design has wrong dimension");
        std::copy(cp.x.begin(), cp.x.end(), &xf.data[r * (in + 1)]);
        xf.data[r * (in + 1) + in] = norm_.normalize(cp.f);
        ++r;
      }
    Var xf_var = tape.constant(std::move(xf));
    Var e_xf = xf_encoder_(pass, xf_var);
    if (cfg_.variant == Variant::reward_only) return e_xf;

    const std::size_t ch = cfg_.aux_channels;
    const std::size_t d = cfg_.model_dim;
    // per point: [CLS, (x,f) token, h_0 .. h_{L-1}]
    std::vector<double> steps;
    std::vector<std::size_t> lengths;
    lengths.reserve(n_ctx);
    std::size_t max_len = 0;
    for (const Episode& e : episodes)
      for (const auto& cp : *e.context) {
        const AuxSequence& h = cp.h;
        if (h.steps() == 0) {
          // degenerate trial: one all-zero step with the termination flag set
          for (std::size_t c = 0; c < ch; ++c) steps.push_back(((c + 1 == ch ? 1.0 : 0.0) - norm_.aux_mean[c]) / norm_.aux_std[c]);
          lengths.push_back(1);
        } else {
          require(h.channels == ch, "SurrogateModel: aux sequence has " + std::to_string(h.channels) +
                                        " channels, model expects " + std::to_string(ch));
          for (std::size_t s = 0; s < h.steps(); ++s)
            for (std::size_t c = 0; c < ch; ++c) steps.push_back((h.step(s)[c] - norm_.aux_mean[c]) / norm_.aux_std[c]);
          lengths.push_back(h.steps());
        }
        max_len = std::max(max_len, lengths.back());
      }
    const std::size_t n_steps = steps.size() / ch;
    const Tensor pe = ops::sinusoidal_table(max_len, d);
    Tensor pe_rows(Shape{n_steps, d});
    {
      std::size_t row = 0;
      for (std::size_t len : lengths)
        for (std::size_t t = 0; t < len; ++t, ++row) std::copy_n(&pe.data[t * d], d, &pe_rows.data[row * d]);
    }
    Var step_emb = ops::add(step_embed_(pass, tape.constant(Tensor(Shape{n_steps, ch}, std::move(steps)))),
                            tape.constant(std::move(pe_rows)));
    Var tok = xf_token_(pass, xf_var);
    Var src = ops::concat_rows(ops::concat_rows(pass.param(cls_), tok), step_emb);

    std::vector<std::size_t> order, cls_rows;
    AttentionLayout layout;
    std::size_t step_off = 0;
    for (std::size_t p = 0; p < n_ctx; ++p) {
      const std::size_t start = order.size(), len = lengths[p] + 2;
      cls_rows.push_back(start);
      order.push_back(0);
      order.push_back(1 + p);
      for (std::size_t t = 0; t < lengths[p]; ++t) order.push_back(1 + n_ctx + step_off + t);
      step_off += lengths[p];
      layout.push_back(AttentionBlock{start, len, start, len, {}});
    }
    Var x = ops::gather_rows(src, std::move(order));
    for (const auto& blk : sequence_) x = blk(pass, x, layout);
    Var e_seq = ops::gather_rows(sequence_norm_(pass, x), std::move(cls_rows));
    return ops::add(e_seq, e_xf);
  }

  ModelConfig cfg_;
  Normalization norm_;
  mutable ParameterStore store_;  // tapes bind parameters by reference; forward never mutates values

  layers::Mlp xf_encoder_;
  ParamId cls_ = 0;
  layers::Linear xf_token_, step_embed_;
  std::vector<layers::TransformerBlock> sequence_;
  layers::LayerNorm sequence_norm_;
  layers::Mlp target_encoder_;
  std::vector<layers::TransformerBlock> predictor_;
  layers::LayerNorm predictor_norm_;
  layers::Mlp head_;
};

}  // namespace auxbo
