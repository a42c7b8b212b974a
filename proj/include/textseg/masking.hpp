// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>

#include "textseg/nn.hpp"
#include "textseg/rng.hpp"

namespace textseg {

struct MaskSpec {
  double alpha = 0.0;
  std::vector<size_t> indices;  // distinct positions to zero
  uint64_t seed = 0;

  size_t m() const { return indices.size(); }
};

// round-half-up count with a floor of one mask whenever alpha > 0
inline size_t mask_count(double alpha, size_t n) {
  if (alpha < 0.0 || alpha > 1.0)
    throw ConfigError("mask ratio must lie in [0,1], got " + std::to_string(alpha));
  if (alpha == 0.0 || n == 0) return 0;
  size_t m = static_cast<size_t>(std::floor(alpha * static_cast<double>(n) + 0.5));
  m = std::max<size_t>(1, m);
  return std::min(m, n);
}

// Weighted sampling without replacement via perturbed keys: key_i = log w_i +
// Gumbel noise, take the top m. Scale-invariant in w. Zero-weight positions
// are drawn only after every positive-weight position, uniformly among
// themselves (their Gumbel keys are shifted below any finite log-weight).
inline std::vector<size_t> gumbel_top_k(const std::vector<double>& weights, size_t m, Rng& rng) {
  size_t n = weights.size();
  if (m > n) throw ConfigError("cannot draw " + std::to_string(m) + " of " + std::to_string(n));
  std::vector<std::pair<double, size_t>> keys(n);
  for (size_t i = 0; i < n; ++i) {
    if (weights[i] < 0.0) throw ConfigError("sampling weights must be nonnegative");
    double g = rng.gumbel();
    if (weights[i] > 0.0) {
      keys[i] = {std::log(weights[i]) + g, i};
    } else {
      // finite but below any positive-weight key: rank only among zeros
      keys[i] = {-1e300 + g, i};
    }
  }
  std::partial_sort(keys.begin(), keys.begin() + m, keys.end(),
                    [](const auto& a, const auto& b) {
                      if (a.first != b.first) return a.first > b.first;
                      return a.second < b.second;
                    });
  std::vector<size_t> out(m);
  for (size_t i = 0; i < m; ++i) out[i] = keys[i].second;
  return out;
}

// strategy "weighted": proportional to the (detached) interest weights;
// "random": uniform. Candidates are the positions eligible for masking (for
// text, the non-pad positions); returned indices refer to the original axis.
inline MaskSpec sample_mask(const std::vector<double>& weights,
                            const std::vector<size_t>& candidates, double alpha, bool weighted,
                            uint64_t seed) {
  if (weights.size() != candidates.size())
    throw InternalError("sample_mask: weight/candidate size mismatch");
  MaskSpec spec;
  spec.alpha = alpha;
  spec.seed = seed;
  size_t m = mask_count(alpha, candidates.size());
  if (m == 0) return spec;
  Rng rng(seed);
  std::vector<size_t> local;
  if (weighted) {
    local = gumbel_top_k(weights, m, rng);
  } else {
    std::vector<double> uniform(weights.size(), 1.0);
    local = gumbel_top_k(uniform, m, rng);
  }
  spec.indices.reserve(m);
  for (size_t i : local) spec.indices.push_back(candidates[i]);
  std::sort(spec.indices.begin(), spec.indices.end());
  return spec;
}

// masked rows exactly zero, all other rows bit-identical
template <typename S>
Tensor<S> apply_mask(const Tensor<S>& x, const MaskSpec& spec) {
  if (spec.indices.empty()) return x;
  return zero_rows(x, spec.indices);
}

// One conditioned cross-attention block: the condition row scales the
// pre-softmax logits (Hadamard over the key axis), pad keys stay excluded.
template <typename S>
struct ReconBlock {
  Tensor<S> wq, wk, wv;
  Linear<S> ff1, ff2;

  static ReconBlock create(ParamStore<S>& ps, const std::string& name, size_t d) {
    return {ps.uniform(name + ".wq", {d, d}, d), ps.uniform(name + ".wk", {d, d}, d),
            ps.uniform(name + ".wv", {d, d}, d), Linear<S>::create(ps, name + ".ff1", d, d),
            Linear<S>::create(ps, name + ".ff2", d, d)};
  }
};

template <typename S>
struct ReconstructorParams {
  std::vector<ReconBlock<S>> blocks;

  static ReconstructorParams create(ParamStore<S>& ps, const std::string& name, size_t d,
                                    size_t k) {
    if (k < 1) throw ConfigError("reconstructor needs at least one block");
    ReconstructorParams r;
    for (size_t i = 0; i < k; ++i)
      r.blocks.push_back(ReconBlock<S>::create(ps, name + ".blk" + std::to_string(i), d));
    return r;
  }
};

// query_masked [P,D] reconstructed from context [Q,D]; condition, when
// defined, is a length-Q tensor multiplied into the scaled logits before the
// softmax (gradient flows through it); ctx_keep masks pad context rows.
template <typename S>
Tensor<S> reconstruct(const Tensor<S>& query_masked, const Tensor<S>& context,
                      const Tensor<S>& condition, const std::vector<uint8_t>& ctx_keep,
                      const ReconstructorParams<S>& params) {
  require_shape(query_masked.ndim() == 2 && context.ndim() == 2 &&
                    query_masked.dim(1) == context.dim(1),
                "reconstruct: width mismatch, " + shape_str(query_masked.shape()) + " vs " +
                    shape_str(context.shape()));
  if (condition.defined())
    require_shape(condition.size() == context.dim(0),
                  "reconstruct: condition length " + std::to_string(condition.size()) +
                      " does not match context rows " + std::to_string(context.dim(0)));
  auto x = query_masked;
  S inv = static_cast<S>(1.0 / std::sqrt(static_cast<double>(context.dim(1))));
  for (auto& blk : params.blocks) {
    auto q = matmul(x, blk.wq);
    auto k = matmul(context, blk.wk);
    auto v = matmul(context, blk.wv);
    auto logits = scale(matmul_t(q, k), inv);
    if (condition.defined())
      logits = mul(logits, reshape(condition, {1, context.dim(0)}));
    auto attn = matmul(masked_softmax(logits, ctx_keep), v);
    auto x1 = add(x, attn);
    x = add(x1, blk.ff2(relu(blk.ff1(x1))));
  }
  return x;
}

// interest-weighted feature MSE: (1/N) sum_j w_j |x_j - x_hat_j|^2 with the
// squared error summed over D. Weights and targets arrive detached; N is the
// weight-carrying position count (patches, or non-pad tokens).
template <typename S>
Tensor<S> weighted_recon_loss(const Tensor<S>& target_detached, const Tensor<S>& recon,
                              const Tensor<S>& weights_detached, size_t position_count) {
  require_shape(target_detached.shape() == recon.shape(),
                "recon loss: shapes differ, " + shape_str(target_detached.shape()) + " vs " +
                    shape_str(recon.shape()));
  if (position_count == 0) throw InternalError("recon loss: zero positions");
  auto per_row = sum_axis(square(sub(recon, target_detached)), 1);  // [P]
  return scale(sum_all(mul(weights_detached, per_row)),
               static_cast<S>(1.0 / static_cast<double>(position_count)));
}

}  // namespace textseg
