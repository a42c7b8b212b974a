// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "textseg/ops.hpp"
#include "textseg/rng.hpp"

namespace textseg {

// Named parameter registry. Construction order defines checkpoint layout, so
// model assembly must be deterministic.
template <typename S>
class ParamStore {
 public:
  explicit ParamStore(uint64_t seed) : seed_(seed) {}

  // uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)), stream keyed by name so layout
  // changes elsewhere do not reshuffle a layer's draw
  Tensor<S> uniform(const std::string& name, Shape shape, size_t fan_in) {
    Rng rng(mix_seed(seed_, hash_name(name)));
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<S> v(numel(shape));
    for (auto& x : v) x = static_cast<S>(rng.uniform(-bound, bound));
    return add(name, std::move(shape), std::move(v));
  }

  Tensor<S> constant(const std::string& name, Shape shape, S fill) {
    std::vector<S> v(numel(shape), fill);
    return add(name, std::move(shape), std::move(v));
  }

  Tensor<S> add(const std::string& name, Shape shape, std::vector<S> value) {
    for (auto& [n, t] : items_)
      if (n == name) throw InternalError("duplicate parameter name " + name);
    Tensor<S> t = Tensor<S>::param(std::move(shape), std::move(value));
    items_.emplace_back(name, t);
    return t;
  }

  const std::vector<std::pair<std::string, Tensor<S>>>& items() const { return items_; }

  Tensor<S> find(const std::string& name) const {
    for (auto& [n, t] : items_)
      if (n == name) return t;
    throw InternalError("unknown parameter " + name);
  }

  size_t total_size() const {
    size_t n = 0;
    for (auto& [name, t] : items_) n += t.size();
    return n;
  }

 private:
  static uint64_t hash_name(const std::string& s) {
    uint64_t h = 1469598103934665603ull;  // FNV-1a
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
    return h;
  }

  uint64_t seed_;
  std::vector<std::pair<std::string, Tensor<S>>> items_;
};

template <typename S>
struct Linear {
  Tensor<S> w;  // [in, out]
  Tensor<S> b;  // [out]

  static Linear create(ParamStore<S>& ps, const std::string& name, size_t in, size_t out) {
    return {ps.uniform(name + ".w", {in, out}, in), ps.uniform(name + ".b", {out}, in)};
  }

  Tensor<S> operator()(const Tensor<S>& x) const { return add(matmul(x, w), b); }
};

template <typename S>
struct LayerNorm {
  Tensor<S> g;  // [d]
  Tensor<S> b;  // [d]
  static constexpr double kEps = 1e-5;

  static LayerNorm create(ParamStore<S>& ps, const std::string& name, size_t d) {
    return {ps.constant(name + ".g", {d}, S(1)), ps.constant(name + ".b", {d}, S(0))};
  }

  // per-row normalization of [L, d]
  Tensor<S> operator()(const Tensor<S>& x) const {
    size_t d = x.dim(1);
    auto mu = scale(sum_axis(x, 1), S(1.0 / d));                       // [L]
    auto cent = sub(x, reshape(mu, {x.dim(0), 1}));                    // [L,d]
    auto var = scale(sum_axis(square(cent), 1), S(1.0 / d));           // [L]
    auto denom = textseg::sqrt(add_scalar(var, S(kEps)));              // [L]
    auto norm = div(cent, reshape(denom, {x.dim(0), 1}));
    return add(mul(norm, g), b);
  }
};

// q[P,d] attends over kv[Q,d]; single head, scale 1/sqrt(d); keep flags pad
// keys out of the softmax. Returns the attention output only.
template <typename S>
Tensor<S> attention(const Tensor<S>& q, const Tensor<S>& k, const Tensor<S>& v,
                    const std::vector<uint8_t>& keep) {
  require_shape(q.dim(1) == k.dim(1), "attention: query width " + std::to_string(q.dim(1)) +
                                          " differs from key width " + std::to_string(k.dim(1)));
  S inv = static_cast<S>(1.0 / std::sqrt(static_cast<double>(q.dim(1))));
  auto logits = scale(matmul_t(q, k), inv);
  auto a = masked_softmax(logits, keep);
  return matmul(a, v);
}

// pre-LN transformer block with multi-head self-attention
template <typename S>
struct TransformerBlock {
  LayerNorm<S> ln1, ln2;
  Linear<S> wq, wk, wv, wo, ff1, ff2;
  size_t heads;

  static TransformerBlock create(ParamStore<S>& ps, const std::string& name, size_t d, size_t heads,
                                 size_t ff) {
    return {LayerNorm<S>::create(ps, name + ".ln1", d),
            LayerNorm<S>::create(ps, name + ".ln2", d),
            Linear<S>::create(ps, name + ".q", d, d),
            Linear<S>::create(ps, name + ".k", d, d),
            Linear<S>::create(ps, name + ".v", d, d),
            Linear<S>::create(ps, name + ".o", d, d),
            Linear<S>::create(ps, name + ".ff1", d, ff),
            Linear<S>::create(ps, name + ".ff2", ff, d),
            heads};
  }

  Tensor<S> operator()(const Tensor<S>& x, const std::vector<uint8_t>& keep) const {
    size_t d = x.dim(1), hd = d / heads;
    auto n1 = ln1(x);
    auto q = wq(n1), k = wk(n1), v = wv(n1);
    std::vector<Tensor<S>> outs;
    outs.reserve(heads);
    for (size_t h = 0; h < heads; ++h) {
      auto qh = slice_cols(q, h * hd, (h + 1) * hd);
      auto kh = slice_cols(k, h * hd, (h + 1) * hd);
      auto vh = slice_cols(v, h * hd, (h + 1) * hd);
      outs.push_back(attention(qh, kh, vh, keep));
    }
    auto attn = wo(concat_cols(outs));
    auto x1 = add(x, attn);
    auto n2 = ln2(x1);
    auto f = ff2(relu(ff1(n2)));
    return add(x1, f);
  }
};

}  // namespace textseg
