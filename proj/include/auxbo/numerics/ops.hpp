#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "auxbo/numerics/autodiff.hpp"
#include "auxbo/numerics/rng.hpp"

namespace auxbo::ops {

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;

// Eigen's small-product kernels pick code paths by pointer alignment, and
// std::vector storage is only 16-byte aligned. Products therefore run on
// Eigen-owned (fully aligned) copies so results do not depend on where the
// allocator happened to put a buffer.
inline RowMat mat(const std::vector<double>& d, std::size_t r, std::size_t c) {
  return CMap(d.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}
inline void store(std::vector<double>& d, const RowMat& m) { std::copy(m.data(), m.data() + m.size(), d.begin()); }
inline void add_into(std::vector<double>& d, const RowMat& m) {
  const double* src = m.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += src[i];
}

inline void same_shape(const Var& a, const Var& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                      shape_str(b.shape()));
}

inline void require_matrix(const Var& a, const char* op) {
  require(a.value().rank() == 2, std::string(op) + ": expected rank-2 tensor, got " + shape_str(a.shape()));
}

inline void accumulate(Tape& t, Var v, const std::vector<double>& g) {
  if (!t.needs_grad(v.id)) return;
  auto& dst = t.grad(v.id);
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

/// Elementwise op with derivative expressed through input x and output y.
template <class F, class DF>
Var unary(Var a, F f, DF df) {
  Tape& t = *a.tape;
  const Tensor& x = a.value();
  Tensor y(x.shape);
  for (std::size_t i = 0; i < x.numel(); ++i) y.data[i] = f(x.data[i]);
  return t.record(std::move(y), {a}, [a, df](Tape& t, int self) {
    if (!t.needs_grad(a.id)) return;
    const auto& x = t.value(a.id).data;
    const auto& y = t.value(self).data;
    const auto& g = t.grad(self);
    auto& ga = t.grad(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(x[i], y[i]);
  });
}

}  // namespace detail

inline Var add(Var a, Var b) {
  detail::same_shape(a, b, "add");
  Tensor y = a.value();
  y.requires_grad = false;
  const auto& bd = b.value().data;
  for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] += bd[i];
  return a.tape->record(std::move(y), {a, b}, [a, b](Tape& t, int self) {
    const auto& g = t.grad(self);
    detail::accumulate(t, a, g);
    detail::accumulate(t, b, g);
  });
}

inline Var sub(Var a, Var b) {
  detail::same_shape(a, b, "sub");
  Tensor y = a.value();
  y.requires_grad = false;
  const auto& bd = b.value().data;
  for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] -= bd[i];
  return a.tape->record(std::move(y), {a, b}, [a, b](Tape& t, int self) {
    const auto& g = t.grad(self);
    detail::accumulate(t, a, g);
    if (t.needs_grad(b.id)) {
      auto& gb = t.grad(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

inline Var mul(Var a, Var b) {
  detail::same_shape(a, b, "mul");
  Tensor y = a.value();
  y.requires_grad = false;
  const auto& bd = b.value().data;
  for (std::size_t i = 0; i < y.numel(); ++i) y.data[i] *= bd[i];
  return a.tape->record(std::move(y), {a, b}, [a, b](Tape& t, int self) {
    const auto& g = t.grad(self);
    const auto& ad = t.value(a.id).data;
    const auto& bd = t.value(b.id).data;
    if (t.needs_grad(a.id)) {
      auto& ga = t.grad(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bd[i];
    }
    if (t.needs_grad(b.id)) {
      auto& gb = t.grad(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * ad[i];
    }
  });
}

/// a[N,D] + b[D], broadcast over rows.
inline Var add_row(Var a, Var b) {
  const std::size_t n = a.rows(), d = a.cols();
  require(b.numel() == d, "add_row: bias length " + std::to_string(b.numel()) + " != " + std::to_string(d));
  Tensor y = a.value();
  y.requires_grad = false;
  const auto& bd = b.value().data;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) y.data[i * d + j] += bd[j];
  return a.tape->record(std::move(y), {a, b}, [a, b, n, d](Tape& t, int self) {
    const auto& g = t.grad(self);
    detail::accumulate(t, a, g);
    if (t.needs_grad(b.id)) {
      auto& gb = t.grad(b.id);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) gb[j] += g[i * d + j];
    }
  });
}

/// a[N,D] * b[D], broadcast over rows.
inline Var mul_row(Var a, Var b) {
  const std::size_t n = a.rows(), d = a.cols();
  require(b.numel() == d, "mul_row: scale length " + std::to_string(b.numel()) + " != " + std::to_string(d));
  Tensor y = a.value();
  y.requires_grad = false;
  const auto& bd = b.value().data;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) y.data[i * d + j] *= bd[j];
  return a.tape->record(std::move(y), {a, b}, [a, b, n, d](Tape& t, int self) {
    const auto& g = t.grad(self);
    const auto& ad = t.value(a.id).data;
    const auto& bd = t.value(b.id).data;
    if (t.needs_grad(a.id)) {
      auto& ga = t.grad(a.id);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) ga[i * d + j] += g[i * d + j] * bd[j];
    }
    if (t.needs_grad(b.id)) {
      auto& gb = t.grad(b.id);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) gb[j] += g[i * d + j] * ad[i * d + j];
    }
  });
}

/// a * s where s has shape [].
inline Var mul_scalar(Var a, Var s) {
  require(s.numel() == 1, "mul_scalar: multiplier must be a scalar");
  const double sv = s.value().data[0];
  Tensor y = a.value();
  y.requires_grad = false;
  for (double& v : y.data) v *= sv;
  return a.tape->record(std::move(y), {a, s}, [a, s](Tape& t, int self) {
    const auto& g = t.grad(self);
    const auto& ad = t.value(a.id).data;
    const double sv = t.value(s.id).data[0];
    if (t.needs_grad(a.id)) {
      auto& ga = t.grad(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * sv;
    }
    if (t.needs_grad(s.id)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * ad[i];
      t.grad(s.id)[0] += acc;
    }
  });
}

inline Var scale(Var a, double c) {
  return detail::unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

inline Var add_scalar(Var a, double c) {
  return detail::unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

inline Var exp(Var a) {
  return detail::unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Var log(Var a) {
  return detail::unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Var square(Var a) {
  return detail::unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

inline Var tanh(Var a) {
  return detail::unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

/// Exact (erf) GELU.
inline Var gelu(Var a) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  constexpr double inv_sqrt_2pi = 0.39894228040143267794;
  return detail::unary(
      a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
      [](double x, double) { return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) + x * inv_sqrt_2pi * std::exp(-0.5 * x * x); });
}

inline double softplus_value(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline Var softplus(Var a) {
  return detail::unary(a, softplus_value, [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

inline Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data) s += v;
  return a.tape->record(Tensor::scalar(s), {a}, [a](Tape& t, int self) {
    if (!t.needs_grad(a.id)) return;
    const double g = t.grad(self)[0];
    for (double& v : t.grad(a.id)) v += g;
  });
}

inline Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

/// Reinterprets the buffer with a new shape of equal size.
inline Var reshape(Var a, Shape shape) {
  Tensor y(std::move(shape), a.value().data);
  return a.tape->record(std::move(y), {a}, [a](Tape& t, int self) { detail::accumulate(t, a, t.grad(self)); });
}

/// a[N,K] @ b[K,M].
inline Var matmul(Var a, Var b) {
  detail::require_matrix(a, "matmul");
  detail::require_matrix(b, "matmul");
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  require(b.rows() == k, "matmul: inner dimensions " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Tensor y(Shape{n, m});
  detail::store(y.data, detail::mat(a.value().data, n, k) * detail::mat(b.value().data, k, m));
  return a.tape->record(std::move(y), {a, b}, [a, b, n, k, m](Tape& t, int self) {
    const detail::RowMat G = detail::mat(t.grad(self), n, m);
    if (t.needs_grad(a.id))
      detail::add_into(t.grad(a.id), G * detail::mat(t.value(b.id).data, k, m).transpose());
    if (t.needs_grad(b.id))
      detail::add_into(t.grad(b.id), detail::mat(t.value(a.id).data, n, k).transpose() * G);
  });
}

/// x[N,in] @ w[in,out] + bias[out].
inline Var linear(Var x, Var w, Var bias) {
  detail::require_matrix(x, "linear");
  detail::require_matrix(w, "linear");
  const std::size_t n = x.rows(), in = x.cols(), out = w.cols();
  require(w.rows() == in, "linear: input width " + std::to_string(in) + " vs weight " + shape_str(w.shape()));
  require(bias.numel() == out, "linear: bias length mismatch");
  Tensor y(Shape{n, out});
  detail::RowMat Y = detail::mat(x.value().data, n, in) * detail::mat(w.value().data, in, out);
  Y.rowwise() += detail::mat(bias.value().data, 1, out).row(0);
  detail::store(y.data, Y);
  return x.tape->record(std::move(y), {x, w, bias}, [x, w, bias, n, in, out](Tape& t, int self) {
    const detail::RowMat G = detail::mat(t.grad(self), n, out);
    if (t.needs_grad(x.id))
      detail::add_into(t.grad(x.id), G * detail::mat(t.value(w.id).data, in, out).transpose());
    if (t.needs_grad(w.id))
      detail::add_into(t.grad(w.id), detail::mat(t.value(x.id).data, n, in).transpose() * G);
    if (t.needs_grad(bias.id)) detail::add_into(t.grad(bias.id), G.colwise().sum());
  });
}

/// Row-wise layer normalization with affine gamma/beta of length D.
inline Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5) {
  const std::size_t n = x.rows(), d = x.cols();
  require(gamma.numel() == d && beta.numel() == d, "layer_norm: affine length mismatch");
  const auto& xd = x.value().data;
  const auto& gd = gamma.value().data;
  const auto& bd = beta.value().data;
  std::vector<double> xhat(n * d), inv_std(n);
  Tensor y(x.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = &xd[i * d];
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (row[j] - mu) * is;
      y.data[i * d + j] = gd[j] * xhat[i * d + j] + bd[j];
    }
  }
  return x.tape->record(std::move(y), {x, gamma, beta},
                        [x, gamma, beta, n, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, int self) {
                          const auto& g = t.grad(self);
                          const auto& gd = t.value(gamma.id).data;
                          if (t.needs_grad(gamma.id)) {
                            auto& gg = t.grad(gamma.id);
                            for (std::size_t i = 0; i < n; ++i)
                              for (std::size_t j = 0; j < d; ++j) gg[j] += g[i * d + j] * xhat[i * d + j];
                          }
                          if (t.needs_grad(beta.id)) {
                            auto& gb = t.grad(beta.id);
                            for (std::size_t i = 0; i < n; ++i)
                              for (std::size_t j = 0; j < d; ++j) gb[j] += g[i * d + j];
                          }
                          if (t.needs_grad(x.id)) {
                            auto& gx = t.grad(x.id);
                            const double inv_d = 1.0 / static_cast<double>(d);
                            for (std::size_t i = 0; i < n; ++i) {
                              double m1 = 0.0, m2 = 0.0;
                              for (std::size_t j = 0; j < d; ++j) {
                                const double gh = g[i * d + j] * gd[j];
                                m1 += gh;
                                m2 += gh * xhat[i * d + j];
                              }
                              m1 *= inv_d;
                              m2 *= inv_d;
                              for (std::size_t j = 0; j < d; ++j) {
                                const double gh = g[i * d + j] * gd[j];
                                gx[i * d + j] += inv_std[i] * (gh - m1 - xhat[i * d + j] * m2);
                              }
                            }
                          }
                        });
}

inline void softmax_inplace(std::span<double> row) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : row) mx = std::max(mx, v);
  double s = 0.0;
  for (double& v : row) {
    v = std::exp(v - mx);
    s += v;
  }
  for (double& v : row) v /= s;
}

inline Var softmax_rows(Var x) {
  const std::size_t n = x.rows(), d = x.cols();
  Tensor y = x.value();
  y.requires_grad = false;
  for (std::size_t i = 0; i < n; ++i) softmax_inplace(std::span<double>(&y.data[i * d], d));
  return x.tape->record(std::move(y), {x}, [x, n, d](Tape& t, int self) {
    if (!t.needs_grad(x.id)) return;
    const auto& g = t.grad(self);
    const auto& y = t.value(self).data;
    auto& gx = t.grad(x.id);
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += g[i * d + j] * y[i * d + j];
      for (std::size_t j = 0; j < d; ++j) gx[i * d + j] += y[i * d + j] * (g[i * d + j] - dot);
    }
  });
}

/// Inverted dropout. The keep mask is a pure function of (seed, element index).
inline Var dropout(Var x, double rate, std::uint64_t seed, bool training) {
  require(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0,1)");
  if (!training || rate == 0.0) return x;
  const std::size_t n = x.numel();
  std::vector<double> mask(n);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < n; ++i) mask[i] = unit_hash(seed, i) >= rate ? keep_scale : 0.0;
  Tensor y = x.value();
  y.requires_grad = false;
  for (std::size_t i = 0; i < n; ++i) y.data[i] *= mask[i];
  return x.tape->record(std::move(y), {x}, [x, mask = std::move(mask)](Tape& t, int self) {
    if (!t.needs_grad(x.id)) return;
    const auto& g = t.grad(self);
    auto& gx = t.grad(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
  });
}

/// Rows of x[N,D] selected by index (repeats allowed).
inline Var gather_rows(Var x, std::vector<std::size_t> index) {
  const std::size_t n = x.rows(), d = x.cols();
  Tensor y(Shape{index.size(), d});
  const auto& xd = x.value().data;
  for (std::size_t r = 0; r < index.size(); ++r) {
    require(index[r] < n, "gather_rows: index out of range");
    std::copy_n(&xd[index[r] * d], d, &y.data[r * d]);
  }
  return x.tape->record(std::move(y), {x}, [x, d, index = std::move(index)](Tape& t, int self) {
    if (!t.needs_grad(x.id)) return;
    const auto& g = t.grad(self);
    auto& gx = t.grad(x.id);
    for (std::size_t r = 0; r < index.size(); ++r)
      for (std::size_t j = 0; j < d; ++j) gx[index[r] * d + j] += g[r * d + j];
  });
}

/// Vertical stack of a[Na,D] and b[Nb,D].
inline Var concat_rows(Var a, Var b) {
  const std::size_t d = a.cols();
  require(b.cols() == d, "concat_rows: width mismatch");
  const std::size_t na = a.rows(), nb = b.rows();
  Tensor y(Shape{na + nb, d});
  std::copy(a.value().data.begin(), a.value().data.end(), y.data.begin());
  std::copy(b.value().data.begin(), b.value().data.end(), y.data.begin() + static_cast<std::ptrdiff_t>(na * d));
  return a.tape->record(std::move(y), {a, b}, [a, b, na, d](Tape& t, int self) {
    const auto& g = t.grad(self);
    if (t.needs_grad(a.id)) {
      auto& ga = t.grad(a.id);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
    }
    if (t.needs_grad(b.id)) {
      auto& gb = t.grad(b.id);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[na * d + i];
    }
  });
}

/// Column j of x[N,M] as a length-N vector.
inline Var column(Var x, std::size_t j) {
  const std::size_t n = x.rows(), m = x.cols();
  require(j < m, "column: index out of range");
  Tensor y(Shape{n});
  const auto& xd = x.value().data;
  for (std::size_t i = 0; i < n; ++i) y.data[i] = xd[i * m + j];
  return x.tape->record(std::move(y), {x}, [x, j, n, m](Tape& t, int self) {
    if (!t.needs_grad(x.id)) return;
    const auto& g = t.grad(self);
    auto& gx = t.grad(x.id);
    for (std::size_t i = 0; i < n; ++i) gx[i * m + j] += g[i];
  });
}

/// Pairwise squared Euclidean distances between rows: out[i][j] = |a_i - b_j|^2.
inline Var sq_dist(Var a, Var b) {
  const std::size_t n = a.rows(), m = b.rows(), d = a.cols();
  require(b.cols() == d, "sq_dist: dimension mismatch");
  const auto& ad = a.value().data;
  const auto& bd = b.value().data;
  Tensor y(Shape{n, m});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = ad[i * d + k] - bd[j * d + k];
        s += diff * diff;
      }
      y.data[i * m + j] = s;
    }
  return a.tape->record(std::move(y), {a, b}, [a, b, n, m, d](Tape& t, int self) {
    const auto& g = t.grad(self);
    const auto& ad = t.value(a.id).data;
    const auto& bd = t.value(b.id).data;
    const bool wa = t.needs_grad(a.id), wb = t.needs_grad(b.id);
    std::vector<double>* ga = wa ? &t.grad(a.id) : nullptr;
    std::vector<double>* gb = wb ? &t.grad(b.id) : nullptr;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        const double gij = 2.0 * g[i * m + j];
        for (std::size_t k = 0; k < d; ++k) {
          const double diff = gij * (ad[i * d + k] - bd[j * d + k]);
          if (wa) (*ga)[i * d + k] += diff;
          if (wb) (*gb)[j * d + k] -= diff;
        }
      }
  });
}

/// Matern-5/2 profile (1 + sqrt5 r + 5r^2/3) exp(-sqrt5 r) as a function of r^2.
/// Differentiating in r^2 keeps the derivative finite at r = 0.
inline Var matern52_from_sq(Var r2) {
  constexpr double s5 = 2.2360679774997896964;
  return detail::unary(
      r2,
      [](double q) {
        const double r = std::sqrt(std::max(q, 0.0));
        return (1.0 + s5 * r + 5.0 * q / 3.0) * std::exp(-s5 * r);
      },
      [](double q, double) {
        const double r = std::sqrt(std::max(q, 0.0));
        return -(5.0 / 6.0) * (1.0 + s5 * r) * std::exp(-s5 * r);
      });
}

/// K + (s + extra) I for square K and scalar s.
inline Var add_diagonal(Var k, Var s, double extra) {
  const std::size_t n = k.rows();
  require(k.cols() == n, "add_diagonal: matrix must be square");
  require(s.numel() == 1, "add_diagonal: shift must be a scalar");
  Tensor y = k.value();
  y.requires_grad = false;
  const double sv = s.value().data[0] + extra;
  for (std::size_t i = 0; i < n; ++i) y.data[i * n + i] += sv;
  return k.tape->record(std::move(y), {k, s}, [k, s, n](Tape& t, int self) {
    const auto& g = t.grad(self);
    detail::accumulate(t, k, g);
    if (t.needs_grad(s.id)) {
      double tr = 0.0;
      for (std::size_t i = 0; i < n; ++i) tr += g[i * n + i];
      t.grad(s.id)[0] += tr;
    }
  });
}

/// Standard sin/cos positional table, [length, dim].
inline Tensor sinusoidal_table(std::size_t length, std::size_t dim) {
  Tensor pe(Shape{length, dim});
  for (std::size_t pos = 0; pos < length; ++pos)
    for (std::size_t i = 0; i < dim; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(dim));
      pe(pos, i) = std::sin(static_cast<double>(pos) * freq);
      if (i + 1 < dim) pe(pos, i + 1) = std::cos(static_cast<double>(pos) * freq);
    }
  return pe;
}

}  // namespace auxbo::ops
