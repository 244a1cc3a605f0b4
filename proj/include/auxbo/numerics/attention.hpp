#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "auxbo/numerics/autodiff.hpp"

namespace auxbo {

/// One independent attention problem inside packed [N, D] query/key tensors.
/// Query rows [q_offset, q_offset + q_length) attend to key rows
/// [k_offset, k_offset + k_length). An empty mask allows every pair;
/// otherwise mask is q_length x k_length, row-major, nonzero = allowed.
struct AttentionBlock {
  std::size_t q_offset = 0;
  std::size_t q_length = 0;
  std::size_t k_offset = 0;
  std::size_t k_length = 0;
  std::vector<std::uint8_t> mask;
};

using AttentionLayout = std::vector<AttentionBlock>;

namespace ops {

/// Scaled dot-product attention over pre-projected q[Nq,D], k[Nk,D], v[Nk,D]
/// split into `heads` equal slices. Query rows not covered by any block
/// produce zeros. Masked-out keys receive exactly zero weight.
inline Var attention(Var q, Var k, Var v, std::size_t heads, AttentionLayout layout) {
  const std::size_t d = q.cols();
  require(heads > 0 && d % heads == 0, "attention: width " + std::to_string(d) + " not divisible by heads");
  require(k.cols() == d && v.cols() == d, "attention: q/k/v widths differ");
  require(k.rows() == v.rows(), "attention: k and v row counts differ");
  const std::size_t nq = q.rows(), nk = k.rows();
  const std::size_t dh = d / heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  const auto& qd = q.value().data;
  const auto& kd = k.value().data;
  const auto& vd = v.value().data;
  Tensor y(Shape{nq, d});

  // probs[b] holds heads x q_length x k_length weights (zero where masked)
  std::vector<std::vector<double>> probs(layout.size());
  for (std::size_t b = 0; b < layout.size(); ++b) {
    const AttentionBlock& blk = layout[b];
    require(blk.q_offset + blk.q_length <= nq && blk.k_offset + blk.k_length <= nk,
            "attention: block exceeds tensor rows");
    require(blk.mask.empty() || blk.mask.size() == blk.q_length * blk.k_length, "attention: mask size mismatch");
    const std::size_t ql = blk.q_length, kl = blk.k_length;
    for (std::size_t i = 0; i < ql; ++i) {
      bool any = blk.mask.empty() && kl > 0;
      for (std::size_t j = 0; !any && j < kl; ++j) any = blk.mask[i * kl + j] != 0;
      if (!any)
        throw ContractViolation("attention: query row " + std::to_string(blk.q_offset + i) +
                                " has no allowed key");
    }
    auto& pb = probs[b];
    pb.assign(heads * ql * kl, 0.0);
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < ql; ++i) {
        const double* qi = &qd[(blk.q_offset + i) * d + h * dh];
        double* p = &pb[(h * ql + i) * kl];
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < kl; ++j) {
          if (!blk.mask.empty() && !blk.mask[i * kl + j]) continue;
          const double* kj = &kd[(blk.k_offset + j) * d + h * dh];
          double s = 0.0;
          for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
          p[j] = s * inv_scale;
          mx = std::max(mx, p[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < kl; ++j) {
          if (!blk.mask.empty() && !blk.mask[i * kl + j]) continue;
          p[j] = std::exp(p[j] - mx);
          z += p[j];
        }
        double* out = &y.data[(blk.q_offset + i) * d + h * dh];
        for (std::size_t j = 0; j < kl; ++j) {
          if (p[j] == 0.0) continue;
          p[j] /= z;
          const double* vj = &vd[(blk.k_offset + j) * d + h * dh];
          for (std::size_t c = 0; c < dh; ++c) out[c] += p[j] * vj[c];
        }
      }
    }
  }

  return q.tape->record(
      std::move(y), {q, k, v},
      [q, k, v, heads, d, dh, inv_scale, layout = std::move(layout), probs = std::move(probs)](Tape& t, int self) {
        const auto& g = t.grad(self);
        const auto& qd = t.value(q.id).data;
        const auto& kd = t.value(k.id).data;
        const auto& vd = t.value(v.id).data;
        const bool wq = t.needs_grad(q.id), wk = t.needs_grad(k.id), wv = t.needs_grad(v.id);
        std::vector<double>* gq = wq ? &t.grad(q.id) : nullptr;
        std::vector<double>* gk = wk ? &t.grad(k.id) : nullptr;
        std::vector<double>* gv = wv ? &t.grad(v.id) : nullptr;
        std::vector<double> dp;
        for (std::size_t b = 0; b < layout.size(); ++b) {
          const AttentionBlock& blk = layout[b];
          const std::size_t ql = blk.q_length, kl = blk.k_length;
          dp.assign(kl, 0.0);
          for (std::size_t h = 0; h < heads; ++h) {
            for (std::size_t i = 0; i < ql; ++i) {
              const double* p = &probs[b][(h * ql + i) * kl];
              const double* gi = &g[(blk.q_offset + i) * d + h * dh];
              double dot = 0.0;
              for (std::size_t j = 0; j < kl; ++j) {
                if (p[j] == 0.0) {
                  dp[j] = 0.0;
                  continue;
                }
                const double* vj = &vd[(blk.k_offset + j) * d + h * dh];
                double s = 0.0;
                for (std::size_t c = 0; c < dh; ++c) s += gi[c] * vj[c];
                dp[j] = s;
                dot += p[j] * s;
                if (wv) {
                  double* gvj = &(*gv)[(blk.k_offset + j) * d + h * dh];
                  for (std::size_t c = 0; c < dh; ++c) gvj[c] += p[j] * gi[c];
                }
              }
              if (!wq && !wk) continue;
              const double* qi = &qd[(blk.q_offset + i) * d + h * dh];
              for (std::size_t j = 0; j < kl; ++j) {
                if (p[j] == 0.0) continue;
                const double ds = p[j] * (dp[j] - dot) * inv_scale;
                const double* kj = &kd[(blk.k_offset + j) * d + h * dh];
                if (wq) {
                  double* gqi = &(*gq)[(blk.q_offset + i) * d + h * dh];
                  for (std::size_t c = 0; c < dh; ++c) gqi[c] += ds * kj[c];
                }
                if (wk) {
                  double* gkj = &(*gk)[(blk.k_offset + j) * d + h * dh];
                  for (std::size_t c = 0; c < dh; ++c) gkj[c] += ds * qi[c];
                }
              }
            }
          }
        }
      });
}

/// Single-problem form: mask is [Nq x Nk], mask[i][j] true iff query i may
/// attend to key j.
inline Var masked_multihead_attention(Var queries, Var keys, Var values,
                                      const std::vector<std::vector<bool>>& mask, std::size_t heads) {
  const std::size_t nq = queries.rows(), nk = keys.rows();
  require(mask.size() == nq, "masked_multihead_attention: mask must have one row per query");
  AttentionBlock blk{0, nq, 0, nk, std::vector<std::uint8_t>(nq * nk)};
  for (std::size_t i = 0; i < nq; ++i) {
    require(mask[i].size() == nk, "masked_multihead_attention: mask row length != key count");
    for (std::size_t j = 0; j < nk; ++j) blk.mask[i * nk + j] = mask[i][j] ? 1 : 0;
  }
  return attention(queries, keys, values, heads, AttentionLayout{std::move(blk)});
}

}  // namespace ops
}  // namespace auxbo
