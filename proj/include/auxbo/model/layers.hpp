#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "auxbo/numerics/attention.hpp"
#include "auxbo/numerics/ops.hpp"
#include "auxbo/numerics/rng.hpp"

namespace auxbo::layers {

/// Per-forward context threaded through every layer.
struct Pass {
  Tape& tape;
  ParameterStore& store;
  bool training = false;
  std::uint64_t dropout_seed = 0;
  double dropout_rate = 0.0;
  std::uint64_t dropout_sites = 0;

  Var param(ParamId id) { return tape.parameter(store, id); }
  Var dropout(Var x) {
    if (!training || dropout_rate == 0.0) return x;
    return ops::dropout(x, dropout_rate, derive_seed(dropout_seed, {dropout_sites++}), true);
  }
};

struct Linear {
  ParamId w = 0, b = 0;

  static Linear create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(in + out));
    Tensor w(Shape{in, out});
    for (double& v : w.data) v = rng.uniform(-a, a);
    return {store.add(name + ".w", std::move(w)), store.add(name + ".b", Tensor(Shape{out}))};
  }

  Var operator()(Pass& p, Var x) const { return ops::linear(x, p.param(w), p.param(b)); }
};

struct LayerNorm {
  ParamId gamma = 0, beta = 0;

  static LayerNorm create(ParameterStore& store, const std::string& name, std::size_t d) {
    return {store.add(name + ".gamma", Tensor(Shape{d}, 1.0)), store.add(name + ".beta", Tensor(Shape{d}))};
  }

  Var operator()(Pass& p, Var x) const { return ops::layer_norm(x, p.param(gamma), p.param(beta)); }
};

/// Linear -> GELU -> Linear.
struct Mlp {
  Linear l1, l2;

  static Mlp create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t hidden,
                    std::size_t out, Rng& rng) {
    return {Linear::create(store, name + ".0", in, hidden, rng), Linear::create(store, name + ".1", hidden, out, rng)};
  }

  Var operator()(Pass& p, Var x) const { return l2(p, ops::gelu(l1(p, x))); }
};

/// Pre-LN transformer block over packed tokens; `layout` defines which rows
/// attend to which.
struct TransformerBlock {
  LayerNorm ln1, ln2;
  Linear q, k, v, o;
  Mlp ffn;
  std::size_t heads = 1;

  static TransformerBlock create(ParameterStore& store, const std::string& name, std::size_t d, std::size_t ffn_dim,
                                 std::size_t heads, Rng& rng) {
    TransformerBlock b;
    b.ln1 = LayerNorm::create(store, name + ".ln1", d);
    b.q = Linear::create(store, name + ".attn.q", d, d, rng);
    b.k = Linear::create(store, name + ".attn.k", d, d, rng);
    b.v = Linear::create(store, name + ".attn.v", d, d, rng);
    b.o = Linear::create(store, name + ".attn.o", d, d, rng);
    b.ln2 = LayerNorm::create(store, name + ".ln2", d);
    b.ffn = Mlp::create(store, name + ".ffn", d, ffn_dim, d, rng);
    b.heads = heads;
    return b;
  }

  Var operator()(Pass& p, Var x, const AttentionLayout& layout) const {
    Var h = ln1(p, x);
    Var a = ops::attention(q(p, h), k(p, h), v(p, h), heads, layout);
    x = ops::add(x, p.dropout(o(p, a)));
    return ops::add(x, p.dropout(ffn(p, ln2(p, x))));
  }
};

}  // namespace auxbo::layers
