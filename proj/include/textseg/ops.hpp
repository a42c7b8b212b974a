// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <vector>

#include "textseg/tensor.hpp"

namespace textseg {

// ---------------------------------------------------------------------------
// raw kernels
// ---------------------------------------------------------------------------

namespace kern {

// c += a*b, a[M,K] row-major, b[K,N] row-major. Register-tiled: 4 output rows
// by 64 output cols per block so the inner loops stay in vector registers.
// Caller zeroes c when a pure product is wanted.
template <typename S>
void mm_acc(const S* __restrict a, const S* __restrict b, S* __restrict c,
            size_t M, size_t K, size_t N) {
  constexpr size_t MR = 4;
  constexpr size_t NR = 64;
  size_t i = 0;
  for (; i + MR <= M; i += MR) {
    const S* a0 = a + (i + 0) * K;
    const S* a1 = a + (i + 1) * K;
    const S* a2 = a + (i + 2) * K;
    const S* a3 = a + (i + 3) * K;
    size_t j = 0;
    for (; j + NR <= N; j += NR) {
      S acc0[NR] = {0}, acc1[NR] = {0}, acc2[NR] = {0}, acc3[NR] = {0};
      for (size_t k = 0; k < K; ++k) {
        const S* bk = b + k * N + j;
        S v0 = a0[k], v1 = a1[k], v2 = a2[k], v3 = a3[k];
        for (size_t t = 0; t < NR; ++t) {
          acc0[t] += v0 * bk[t];
          acc1[t] += v1 * bk[t];
          acc2[t] += v2 * bk[t];
          acc3[t] += v3 * bk[t];
        }
      }
      S* c0 = c + (i + 0) * N + j;
      S* c1 = c + (i + 1) * N + j;
      S* c2 = c + (i + 2) * N + j;
      S* c3 = c + (i + 3) * N + j;
      for (size_t t = 0; t < NR; ++t) {
        c0[t] += acc0[t];
        c1[t] += acc1[t];
        c2[t] += acc2[t];
        c3[t] += acc3[t];
      }
    }
    if (j < N) {
      for (size_t k = 0; k < K; ++k) {
        const S* bk = b + k * N;
        S v0 = a0[k], v1 = a1[k], v2 = a2[k], v3 = a3[k];
        for (size_t t = j; t < N; ++t) {
          c[(i + 0) * N + t] += v0 * bk[t];
          c[(i + 1) * N + t] += v1 * bk[t];
          c[(i + 2) * N + t] += v2 * bk[t];
          c[(i + 3) * N + t] += v3 * bk[t];
        }
      }
    }
  }
  for (; i < M; ++i) {
    const S* ai = a + i * K;
    S* ci = c + i * N;
    for (size_t k = 0; k < K; ++k) {
      S v = ai[k];
      const S* bk = b + k * N;
      for (size_t t = 0; t < N; ++t) ci[t] += v * bk[t];
    }
  }
}

template <typename S>
void transpose(const S* src, size_t R, size_t C, S* dst) {
  for (size_t r = 0; r < R; ++r)
    for (size_t c = 0; c < C; ++c) dst[c * R + r] = src[r * C + c];
}

// c += a * b^T, b[N,K] row-major. Goes through an explicit transpose so the
// hot path is always mm_acc (plain reductions do not vectorize without
// reassociation).
template <typename S>
void mm_acc_bt(const S* a, const S* b, S* c, size_t M, size_t K, size_t N) {
  std::vector<S> bt(K * N);
  transpose(b, N, K, bt.data());
  mm_acc(a, bt.data(), c, M, K, N);
}

// c += a^T * b, a[K,M] row-major.
template <typename S>
void mm_acc_at(const S* a, const S* b, S* c, size_t M, size_t K, size_t N) {
  std::vector<S> at(M * K);
  transpose(a, K, M, at.data());
  mm_acc(at.data(), b, c, M, K, N);
}

}  // namespace kern

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  require_shape(a.ndim() == 2 && b.ndim() == 2,
                "matmul: expects 2-d operands, got " + shape_str(a.shape()) + " and " +
                    shape_str(b.shape()));
  require_shape(a.dim(1) == b.dim(0), "matmul: inner dimensions differ, " +
                                          shape_str(a.shape()) + " x " + shape_str(b.shape()));
  size_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
  std::vector<S> out(M * N, S(0));
  kern::mm_acc(a.data().data(), b.data().data(), out.data(), M, K, N);
  return make_op_node<S>(
      "matmul", {M, N}, std::move(out), {a, b}, [M, K, N](Node<S>& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.requires_grad)
          kern::mm_acc_bt(n.grad.data(), pb.value.data(), pa.grad.data(), M, N, K);
        if (pb.requires_grad)
          kern::mm_acc_at(pa.value.data(), n.grad.data(), pb.grad.data(), K, M, N);
      });
}

// a[M,K] * b[N,K]^T -> [M,N]
template <typename S>
Tensor<S> matmul_t(const Tensor<S>& a, const Tensor<S>& b) {
  require_shape(a.ndim() == 2 && b.ndim() == 2,
                "matmul_t: expects 2-d operands, got " + shape_str(a.shape()) + " and " +
                    shape_str(b.shape()));
  require_shape(a.dim(1) == b.dim(1), "matmul_t: inner dimensions differ, " +
                                          shape_str(a.shape()) + " x " + shape_str(b.shape()) +
                                          "^T");
  size_t M = a.dim(0), K = a.dim(1), N = b.dim(0);
  std::vector<S> out(M * N, S(0));
  kern::mm_acc_bt(a.data().data(), b.data().data(), out.data(), M, K, N);
  return make_op_node<S>(
      "matmul_t", {M, N}, std::move(out), {a, b}, [M, K, N](Node<S>& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.requires_grad)
          kern::mm_acc(n.grad.data(), pb.value.data(), pa.grad.data(), M, N, K);
        if (pb.requires_grad)
          kern::mm_acc_at(n.grad.data(), pa.value.data(), pb.grad.data(), N, M, K);
      });
}

// ---------------------------------------------------------------------------
// elementwise binary with limited broadcasting: identical shapes, or 2-d
// operands where each axis either matches or is 1; a 1-d [D] against [M,D]
// is treated as [1,D]; a scalar [1] broadcasts against anything.
// ---------------------------------------------------------------------------

namespace detail {

struct BcPlan {
  size_t rows, cols;        // output extents (flattened to 2-d)
  size_t ar0, ac0, br0, bc0;  // stride multipliers (0 when broadcast)
  Shape out_shape;
  bool flat;  // identical shapes, use flat loop
};

inline BcPlan broadcast_plan(const Shape& a, const Shape& b, const char* op) {
  BcPlan p{};
  if (a == b) {
    p.flat = true;
    p.out_shape = a;
    p.rows = 1;
    p.cols = numel(a);
    return p;
  }
  auto as2d = [](const Shape& s) -> Shape {
    if (s.size() == 1) return (s[0] == 1) ? Shape{1, 1} : Shape{1, s[0]};
    return s;
  };
  Shape a2 = as2d(a), b2 = as2d(b);
  if (a2.size() != 2 || b2.size() != 2)
    throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " +
                     shape_str(b));
  auto pick = [&](size_t x, size_t y) {
    if (x == y) return x;
    if (x == 1) return y;
    if (y == 1) return x;
    throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " +
                     shape_str(b));
  };
  p.rows = pick(a2[0], b2[0]);
  p.cols = pick(a2[1], b2[1]);
  p.ar0 = (a2[0] == 1) ? 0 : a2[1];
  p.ac0 = (a2[1] == 1) ? 0 : 1;
  p.br0 = (b2[0] == 1) ? 0 : b2[1];
  p.bc0 = (b2[1] == 1) ? 0 : 1;
  p.out_shape = {p.rows, p.cols};
  return p;
}

}  // namespace detail

template <typename S, typename FwdFn, typename BwdFn>
Tensor<S> binary_op(const char* name, const Tensor<S>& a, const Tensor<S>& b, FwdFn f,
                    BwdFn partials) {
  auto plan = detail::broadcast_plan(a.shape(), b.shape(), name);
  std::vector<S> out(plan.rows * plan.cols);
  const auto& av = a.data();
  const auto& bv = b.data();
  if (plan.flat) {
    for (size_t i = 0; i < out.size(); ++i) out[i] = f(av[i], bv[i]);
  } else {
    for (size_t r = 0; r < plan.rows; ++r)
      for (size_t c = 0; c < plan.cols; ++c)
        out[r * plan.cols + c] = f(av[r * plan.ar0 + c * plan.ac0], bv[r * plan.br0 + c * plan.bc0]);
  }
  return make_op_node<S>(
      name, plan.out_shape, std::move(out), {a, b}, [plan, partials](Node<S>& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        size_t rows = plan.flat ? 1 : plan.rows;
        size_t cols = plan.flat ? n.value.size() : plan.cols;
        size_t ar0 = plan.flat ? cols : plan.ar0, ac0 = plan.flat ? 1 : plan.ac0;
        size_t br0 = plan.flat ? cols : plan.br0, bc0 = plan.flat ? 1 : plan.bc0;
        for (size_t r = 0; r < rows; ++r)
          for (size_t c = 0; c < cols; ++c) {
            size_t ia = r * ar0 + c * ac0, ib = r * br0 + c * bc0;
            S da, db;
            partials(pa.value[ia], pb.value[ib], da, db);
            S g = n.grad[r * cols + c];
            if (pa.requires_grad) pa.grad[ia] += g * da;
            if (pb.requires_grad) pb.grad[ib] += g * db;
          }
      });
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  return binary_op<S>(
      "add", a, b, [](S x, S y) { return x + y; },
      [](S, S, S& da, S& db) { da = S(1); db = S(1); });
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  return binary_op<S>(
      "sub", a, b, [](S x, S y) { return x - y; },
      [](S, S, S& da, S& db) { da = S(1); db = S(-1); });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  return binary_op<S>(
      "mul", a, b, [](S x, S y) { return x * y; },
      [](S x, S y, S& da, S& db) { da = y; db = x; });
}

template <typename S>
Tensor<S> div(const Tensor<S>& a, const Tensor<S>& b) {
  return binary_op<S>(
      "div", a, b, [](S x, S y) { return x / y; },
      [](S x, S y, S& da, S& db) {
        da = S(1) / y;
        db = -x / (y * y);
      });
}

// ---------------------------------------------------------------------------
// elementwise unary
// ---------------------------------------------------------------------------

template <typename S, typename FwdFn, typename BwdFn>
Tensor<S> unary_op(const char* name, const Tensor<S>& a, FwdFn f, BwdFn dfdx) {
  std::vector<S> out(a.size());
  const auto& av = a.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = f(av[i]);
  return make_op_node<S>(name, a.shape(), std::move(out), {a}, [dfdx](Node<S>& n) {
    auto& p = *n.parents[0];
    if (!p.requires_grad) return;
    for (size_t i = 0; i < n.value.size(); ++i) p.grad[i] += n.grad[i] * dfdx(p.value[i], n.value[i]);
  });
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S c) {
  return unary_op<S>(
      "scale", a, [c](S x) { return x * c; }, [c](S, S) { return c; });
}

template <typename S>
Tensor<S> add_scalar(const Tensor<S>& a, S c) {
  return unary_op<S>(
      "add_scalar", a, [c](S x) { return x + c; }, [](S, S) { return S(1); });
}

template <typename S>
Tensor<S> neg(const Tensor<S>& a) {
  return scale(a, S(-1));
}

template <typename S>
Tensor<S> relu(const Tensor<S>& a) {
  return unary_op<S>(
      "relu", a, [](S x) { return x > S(0) ? x : S(0); },
      [](S x, S) { return x > S(0) ? S(1) : S(0); });
}

template <typename S>
Tensor<S> square(const Tensor<S>& a) {
  return unary_op<S>(
      "square", a, [](S x) { return x * x; }, [](S x, S) { return S(2) * x; });
}

template <typename S>
Tensor<S> sqrt(const Tensor<S>& a) {
  for (S v : a.data())
    if (v < S(0)) throw NumericError("sqrt: negative input");
  return unary_op<S>(
      "sqrt", a, [](S x) { return std::sqrt(x); },
      [](S, S y) { return S(0.5) / y; });
}

template <typename S>
Tensor<S> exp(const Tensor<S>& a) {
  return unary_op<S>(
      "exp", a, [](S x) { return std::exp(x); }, [](S, S y) { return y; });
}

template <typename S>
Tensor<S> log(const Tensor<S>& a) {
  for (S v : a.data())
    if (v <= S(0)) throw NumericError("log: non-positive input");
  return unary_op<S>(
      "log", a, [](S x) { return std::log(x); }, [](S x, S) { return S(1) / x; });
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& a) {
  return unary_op<S>(
      "sigmoid", a,
      [](S x) {
        // split on sign for stability
        if (x >= S(0)) return S(1) / (S(1) + std::exp(-x));
        S e = std::exp(x);
        return e / (S(1) + e);
      },
      [](S, S y) { return y * (S(1) - y); });
}

// gradient passes only strictly inside (lo, hi)
template <typename S>
Tensor<S> clamp(const Tensor<S>& a, S lo, S hi) {
  return unary_op<S>(
      "clamp", a,
      [lo, hi](S x) { return x < lo ? lo : (x > hi ? hi : x); },
      [lo, hi](S x, S) { return (x > lo && x < hi) ? S(1) : S(0); });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> sum_all(const Tensor<S>& a) {
  S s = S(0);
  for (S v : a.data()) s += v;
  return make_op_node<S>("sum", {1}, {s}, {a}, [](Node<S>& n) {
    auto& p = *n.parents[0];
    if (!p.requires_grad) return;
    S g = n.grad[0];
    for (auto& pg : p.grad) pg += g;
  });
}

template <typename S>
Tensor<S> mean_all(const Tensor<S>& a) {
  return scale(sum_all(a), S(1) / S(a.size()));
}

// axis=0: column sums -> [N]; axis=1: row sums -> [M]
template <typename S>
Tensor<S> sum_axis(const Tensor<S>& a, int axis) {
  require_shape(a.ndim() == 2, "sum_axis: expects 2-d, got " + shape_str(a.shape()));
  size_t M = a.dim(0), N = a.dim(1);
  const auto& av = a.data();
  if (axis == 1) {
    std::vector<S> out(M, S(0));
    for (size_t i = 0; i < M; ++i)
      for (size_t j = 0; j < N; ++j) out[i] += av[i * N + j];
    return make_op_node<S>("sum_axis1", {M}, std::move(out), {a}, [M, N](Node<S>& n) {
      auto& p = *n.parents[0];
      if (!p.requires_grad) return;
      for (size_t i = 0; i < M; ++i)
        for (size_t j = 0; j < N; ++j) p.grad[i * N + j] += n.grad[i];
    });
  }
  if (axis == 0) {
    std::vector<S> out(N, S(0));
    for (size_t i = 0; i < M; ++i)
      for (size_t j = 0; j < N; ++j) out[j] += av[i * N + j];
    return make_op_node<S>("sum_axis0", {N}, std::move(out), {a}, [M, N](Node<S>& n) {
      auto& p = *n.parents[0];
      if (!p.requires_grad) return;
      for (size_t i = 0; i < M; ++i)
        for (size_t j = 0; j < N; ++j) p.grad[i * N + j] += n.grad[j];
    });
  }
  throw ShapeError("sum_axis: axis must be 0 or 1");
}

// Row or column max with first-hit argmax routing. keep, when non-empty,
// flags which positions along the reduced axis participate; fully masked
// reductions are a numeric error.
template <typename S>
Tensor<S> max_axis(const Tensor<S>& a, int axis, const std::vector<uint8_t>& keep = {}) {
  require_shape(a.ndim() == 2, "max_axis: expects 2-d, got " + shape_str(a.shape()));
  size_t M = a.dim(0), N = a.dim(1);
  const auto& av = a.data();
  size_t out_n = (axis == 1) ? M : N;
  size_t red_n = (axis == 1) ? N : M;
  if (!keep.empty() && keep.size() != red_n)
    throw ShapeError("max_axis: keep mask length " + std::to_string(keep.size()) +
                     " does not match reduced extent " + std::to_string(red_n));
  std::vector<S> out(out_n);
  std::vector<size_t> arg(out_n);
  for (size_t o = 0; o < out_n; ++o) {
    bool found = false;
    S best = std::numeric_limits<S>::lowest();
    size_t bi = 0;
    for (size_t r = 0; r < red_n; ++r) {
      if (!keep.empty() && !keep[r]) continue;
      S v = (axis == 1) ? av[o * N + r] : av[r * N + o];
      if (!found || v > best) {
        best = v;
        bi = r;
        found = true;
      }
    }
    if (!found) throw NumericError("max_axis: all positions masked out");
    out[o] = best;
    arg[o] = bi;
  }
  return make_op_node<S>(
      "max_axis", {out_n}, std::move(out), {a}, [axis, N, arg](Node<S>& n) {
        auto& p = *n.parents[0];
        if (!p.requires_grad) return;
        for (size_t o = 0; o < arg.size(); ++o) {
          size_t idx = (axis == 1) ? o * N + arg[o] : arg[o] * N + o;
          p.grad[idx] += n.grad[o];
        }
      });
}

// ---------------------------------------------------------------------------
// softmax over rows of a 2-d tensor, with optional key mask. Masked columns
// produce exactly zero and are excluded from the max and the sum. NaN input
// is rejected.
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> masked_softmax(const Tensor<S>& a, const std::vector<uint8_t>& keep) {
  require_shape(a.ndim() == 2, "softmax: expects 2-d, got " + shape_str(a.shape()));
  size_t M = a.dim(0), N = a.dim(1);
  if (!keep.empty() && keep.size() != N)
    throw ShapeError("softmax: mask length " + std::to_string(keep.size()) +
                     " does not match column count " + std::to_string(N));
  const auto& av = a.data();
  std::vector<S> out(M * N, S(0));
  for (size_t i = 0; i < M; ++i) {
    S mx = std::numeric_limits<S>::lowest();
    bool any = false;
    for (size_t j = 0; j < N; ++j) {
      if (!keep.empty() && !keep[j]) continue;
      S v = av[i * N + j];
      if (std::isnan(static_cast<double>(v))) throw NumericError("softmax: NaN input");
      if (!any || v > mx) mx = v;
      any = true;
    }
    if (!any) throw NumericError("softmax: all columns masked out");
    S z = S(0);
    for (size_t j = 0; j < N; ++j) {
      if (!keep.empty() && !keep[j]) continue;
      S e = std::exp(av[i * N + j] - mx);
      out[i * N + j] = e;
      z += e;
    }
    for (size_t j = 0; j < N; ++j) {
      if (!keep.empty() && !keep[j]) continue;
      out[i * N + j] /= z;
    }
  }
  return make_op_node<S>(
      "softmax", {M, N}, std::move(out), {a}, [M, N](Node<S>& n) {
        auto& p = *n.parents[0];
        if (!p.requires_grad) return;
        // dx_j = y_j * (dy_j - sum_k y_k dy_k); masked entries have y = 0
        for (size_t i = 0; i < M; ++i) {
          S dot = S(0);
          for (size_t j = 0; j < N; ++j) dot += n.value[i * N + j] * n.grad[i * N + j];
          for (size_t j = 0; j < N; ++j)
            p.grad[i * N + j] += n.value[i * N + j] * (n.grad[i * N + j] - dot);
        }
      });
}

template <typename S>
Tensor<S> softmax_rows(const Tensor<S>& a) {
  return masked_softmax(a, {});
}

// ---------------------------------------------------------------------------
// indexing / layout
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> reshape(const Tensor<S>& a, Shape shape) {
  require_shape(numel(shape) == a.size(), "reshape: " + shape_str(a.shape()) + " to " +
                                              shape_str(shape) + " changes element count");
  std::vector<S> out = a.data();
  return make_op_node<S>("reshape", std::move(shape), std::move(out), {a}, [](Node<S>& n) {
    auto& p = *n.parents[0];
    if (!p.requires_grad) return;
    for (size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
  });
}

// rows of an embedding-style table; out-of-range ids are an internal error
// (callers validate against the vocabulary first).
template <typename S>
Tensor<S> gather_rows(const Tensor<S>& table, const std::vector<size_t>& ids) {
  require_shape(table.ndim() == 2, "gather_rows: table must be 2-d, got " + shape_str(table.shape()));
  size_t V = table.dim(0), D = table.dim(1);
  for (size_t id : ids)
    if (id >= V) throw InternalError("gather_rows: id " + std::to_string(id) + " out of range");
  std::vector<S> out(ids.size() * D);
  for (size_t r = 0; r < ids.size(); ++r)
    std::memcpy(out.data() + r * D, table.data().data() + ids[r] * D, D * sizeof(S));
  return make_op_node<S>(
      "gather_rows", {ids.size(), D}, std::move(out), {table}, [ids, D](Node<S>& n) {
        auto& p = *n.parents[0];
        if (!p.requires_grad) return;
        for (size_t r = 0; r < ids.size(); ++r)
          for (size_t c = 0; c < D; ++c) p.grad[ids[r] * D + c] += n.grad[r * D + c];
      });
}

// copy with the listed rows forced to zero; the row set is data, not graph
template <typename S>
Tensor<S> zero_rows(const Tensor<S>& a, const std::vector<size_t>& rows) {
  require_shape(a.ndim() == 2, "zero_rows: expects 2-d, got " + shape_str(a.shape()));
  size_t M = a.dim(0), N = a.dim(1);
  for (size_t r : rows)
    if (r >= M) throw InternalError("zero_rows: row " + std::to_string(r) + " out of range");
  std::vector<S> out = a.data();
  std::vector<uint8_t> dead(M, 0);
  for (size_t r : rows) dead[r] = 1;
  for (size_t r = 0; r < M; ++r)
    if (dead[r]) std::fill(out.begin() + r * N, out.begin() + (r + 1) * N, S(0));
  return make_op_node<S>(
      "zero_rows", a.shape(), std::move(out), {a}, [dead, N](Node<S>& n) {
        auto& p = *n.parents[0];
        if (!p.requires_grad) return;
        for (size_t r = 0; r < dead.size(); ++r) {
          if (dead[r]) continue;
          for (size_t c = 0; c < N; ++c) p.grad[r * N + c] += n.grad[r * N + c];
        }
      });
}

template <typename S>
Tensor<S> slice_rows(const Tensor<S>& a, size_t r0, size_t r1) {
  require_shape(a.ndim() == 2, "slice_rows: expects 2-d, got " + shape_str(a.shape()));
  size_t M = a.dim(0), N = a.dim(1);
  require_shape(r0 < r1 && r1 <= M, "slice_rows: range [" + std::to_string(r0) + "," +
                                        std::to_string(r1) + ") outside " + shape_str(a.shape()));
  std::vector<S> out(a.data().begin() + r0 * N, a.data().begin() + r1 * N);
  return make_op_node<S>(
      "slice_rows", {r1 - r0, N}, std::move(out), {a}, [r0, N](Node<S>& n) {
        auto& p = *n.parents[0];
        if (!p.requires_grad) return;
        for (size_t i = 0; i < n.grad.size(); ++i) p.grad[r0 * N + i] += n.grad[i];
      });
}

template <typename S>
Tensor<S> slice_cols(const Tensor<S>& a, size_t c0, size_t c1) {
  require_shape(a.ndim() == 2, "slice_cols: expects 2-d, got " + shape_str(a.shape()));
  size_t M = a.dim(0), N = a.dim(1);
  require_shape(c0 < c1 && c1 <= N, "slice_cols: range [" + std::to_string(c0) + "," +
                                        std::to_string(c1) + ") outside " + shape_str(a.shape()));
  size_t W = c1 - c0;
  std::vector<S> out(M * W);
  const auto& av = a.data();
  for (size_t i = 0; i < M; ++i)
    std::memcpy(out.data() + i * W, av.data() + i * N + c0, W * sizeof(S));
  return make_op_node<S>(
      "slice_cols", {M, W}, std::move(out), {a}, [c0, N, W](Node<S>& n) {
        auto& p = *n.parents[0];
        if (!p.requires_grad) return;
        size_t M2 = n.value.size() / W;
        for (size_t i = 0; i < M2; ++i)
          for (size_t c = 0; c < W; ++c) p.grad[i * N + c0 + c] += n.grad[i * W + c];
      });
}

// concatenate along axis 0 (works for 2-d rows and CHW channel stacks alike:
// leading-axis blocks are contiguous)
template <typename S>
Tensor<S> concat0(const std::vector<Tensor<S>>& parts) {
  require_shape(!parts.empty(), "concat0: no inputs");
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  size_t lead = 0, total = 0;
  for (auto& t : parts) {
    Shape tt(t.shape().begin() + 1, t.shape().end());
    require_shape(tt == tail, "concat0: trailing dims differ, " + shape_str(parts[0].shape()) +
                                  " vs " + shape_str(t.shape()));
    lead += t.dim(0);
    total += t.size();
  }
  std::vector<S> out;
  out.reserve(total);
  std::vector<size_t> sizes;
  for (auto& t : parts) {
    out.insert(out.end(), t.data().begin(), t.data().end());
    sizes.push_back(t.size());
  }
  Shape os = parts[0].shape();
  os[0] = lead;
  return make_op_node<S>("concat0", std::move(os), std::move(out), parts, [sizes](Node<S>& n) {
    size_t off = 0;
    for (size_t pi = 0; pi < sizes.size(); ++pi) {
      auto& p = *n.parents[pi];
      if (p.requires_grad)
        for (size_t i = 0; i < sizes[pi]; ++i) p.grad[i] += n.grad[off + i];
      off += sizes[pi];
    }
  });
}

template <typename S>
Tensor<S> concat_cols(const std::vector<Tensor<S>>& parts) {
  require_shape(!parts.empty(), "concat_cols: no inputs");
  size_t M = parts[0].dim(0), N = 0;
  for (auto& t : parts) {
    require_shape(t.ndim() == 2 && t.dim(0) == M,
                  "concat_cols: row counts differ, " + shape_str(parts[0].shape()) + " vs " +
                      shape_str(t.shape()));
    N += t.dim(1);
  }
  std::vector<S> out(M * N);
  std::vector<size_t> widths;
  size_t off = 0;
  for (auto& t : parts) {
    size_t w = t.dim(1);
    for (size_t i = 0; i < M; ++i)
      std::memcpy(out.data() + i * N + off, t.data().data() + i * w, w * sizeof(S));
    widths.push_back(w);
    off += w;
  }
  return make_op_node<S>(
      "concat_cols", {M, N}, std::move(out), parts, [M, N, widths](Node<S>& n) {
        size_t off = 0;
        for (size_t pi = 0; pi < widths.size(); ++pi) {
          auto& p = *n.parents[pi];
          size_t w = widths[pi];
          if (p.requires_grad)
            for (size_t i = 0; i < M; ++i)
              for (size_t c = 0; c < w; ++c) p.grad[i * w + c] += n.grad[i * N + off + c];
          off += w;
        }
      });
}

}  // namespace textseg
