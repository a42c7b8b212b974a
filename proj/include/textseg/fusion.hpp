// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "textseg/encoders.hpp"

namespace textseg {

// Conditioned interaction: one bidirectional cross-attention layer over V and
// E, interest weights over both modalities, the patch-word alignment matrix,
// and the batch contrastive loss.

template <typename S>
struct CrossAttentionParams {
  Tensor<S> wq, wk, wv;  // [D, D], no biases: pure projections

  static CrossAttentionParams create(ParamStore<S>& ps, const std::string& name, size_t d) {
    return {ps.uniform(name + ".wq", {d, d}, d), ps.uniform(name + ".wk", {d, d}, d),
            ps.uniform(name + ".wv", {d, d}, d)};
  }
};

template <typename S>
struct InterestHeads {
  Linear<S> poi;  // D -> 1 over patches
  Linear<S> woi;  // D -> 1 over tokens

  static InterestHeads create(ParamStore<S>& ps, size_t d) {
    return {Linear<S>::create(ps, "fus.poi", d, 1), Linear<S>::create(ps, "fus.woi", d, 1)};
  }
};

namespace detail {
template <typename S>
Tensor<S> cross_attend(const Tensor<S>& q_src, const Tensor<S>& kv_src,
                       const CrossAttentionParams<S>& p, const std::vector<uint8_t>& keep) {
  require_shape(q_src.dim(1) == kv_src.dim(1),
                "fusion: query width " + std::to_string(q_src.dim(1)) +
                    " differs from key/value width " + std::to_string(kv_src.dim(1)));
  auto q = matmul(q_src, p.wq);
  auto k = matmul(kv_src, p.wk);
  auto v = matmul(kv_src, p.wv);
  S inv = static_cast<S>(1.0 / std::sqrt(static_cast<double>(q.dim(1))));
  return matmul(masked_softmax(scale(matmul_t(q, k), inv), keep), v);
}
}  // namespace detail

// E' : text queries attend over all N patch keys
template <typename S>
Tensor<S> vision_to_text(const Tensor<S>& E, const Tensor<S>& V, const CrossAttentionParams<S>& p) {
  return detail::cross_attend(E, V, p, {});
}

// V' : patch queries attend over non-pad token keys
template <typename S>
Tensor<S> text_to_vision(const Tensor<S>& V, const Tensor<S>& E, const CrossAttentionParams<S>& p,
                         const std::vector<uint8_t>& text_keep) {
  return detail::cross_attend(V, E, p, text_keep);
}

// ablation variant: one self-attention pass over the stacked [V;E] rows with
// shared projections, split back into the two modalities afterwards
template <typename S>
std::pair<Tensor<S>, Tensor<S>> self_fusion(const Tensor<S>& V, const Tensor<S>& E,
                                            const CrossAttentionParams<S>& p,
                                            const std::vector<uint8_t>& text_keep) {
  size_t n = V.dim(0), l = E.dim(0);
  auto x = concat0<S>({V, E});
  std::vector<uint8_t> keep(n + l, 1);
  for (size_t j = 0; j < l; ++j) keep[n + j] = text_keep.empty() ? 1 : text_keep[j];
  auto fused = detail::cross_attend(x, x, p, keep);
  return {slice_rows(fused, 0, n), slice_rows(fused, n, n + l)};
}

// W_poi over patches, W_woi over non-pad tokens; both simplex-normalized
template <typename S>
std::pair<Tensor<S>, Tensor<S>> interest_weights(const Tensor<S>& V_prime, const Tensor<S>& E_prime,
                                                 const std::vector<uint8_t>& text_keep,
                                                 const InterestHeads<S>& heads) {
  auto poi_logits = reshape(heads.poi(V_prime), {1, V_prime.dim(0)});
  auto woi_logits = reshape(heads.woi(E_prime), {1, E_prime.dim(0)});
  auto w_poi = reshape(masked_softmax(poi_logits, {}), {V_prime.dim(0)});
  auto w_woi = reshape(masked_softmax(woi_logits, text_keep), {E_prime.dim(0)});
  return {w_poi, w_woi};
}

// cosine alignment of raw (pre-fusion) features, clamped to the exact bound.
// The denominator is floored at the smallest normal rather than shifted by an
// additive eps: a shift breaks scale invariance for small-norm rows, while the
// floor only engages on all-zero rows, which score 0 against everything.
template <typename S>
Tensor<S> alignment_matrix(const Tensor<S>& V, const Tensor<S>& E) {
  auto nv = textseg::sqrt(sum_axis(square(V), 1));  // [N]
  auto ne = textseg::sqrt(sum_axis(square(E), 1));  // [L]
  auto denom = matmul(reshape(nv, {V.dim(0), 1}), reshape(ne, {1, E.dim(0)}));
  auto floored = clamp(denom, std::numeric_limits<S>::min(), std::numeric_limits<S>::max());
  return clamp(div(matmul_t(V, E), floored), S(-1), S(1));
}

// S = 1/2 (sum_i w_poi[i] max_j A[i,j] + sum_j w_woi[j] max_i A[i,j]); pad
// columns are excluded from the row-wise max and carry zero w_woi
template <typename S>
Tensor<S> pair_similarity(const Tensor<S>& A, const Tensor<S>& w_poi, const Tensor<S>& w_woi,
                          const std::vector<uint8_t>& text_keep) {
  auto best_word = max_axis(A, 1, text_keep);  // [N]
  auto best_patch = max_axis(A, 0);            // [L]
  auto sv = sum_all(mul(w_poi, best_word));
  auto st = sum_all(mul(w_woi, best_patch));
  return scale(add(sv, st), S(0.5));
}

// symmetric InfoNCE over the B x B pair-similarity matrix, exp(S/tau) form
template <typename S>
Tensor<S> contrastive_from_matrix(const Tensor<S>& sim, double tau) {
  if (tau <= 0.0) throw ConfigError("contrastive: tau must be positive, got " + std::to_string(tau));
  require_shape(sim.ndim() == 2 && sim.dim(0) == sim.dim(1),
                "contrastive: similarity matrix must be square, got " + shape_str(sim.shape()));
  size_t b = sim.dim(0);
  auto p = scale(sim, static_cast<S>(1.0 / tau));
  auto e = textseg::exp(p);
  auto row_sum = sum_axis(e, 1);  // [B]
  auto col_sum = sum_axis(e, 0);  // [B]
  std::vector<S> eye(b * b, S(0));
  for (size_t i = 0; i < b; ++i) eye[i * b + i] = S(1);
  auto diag = sum_axis(mul(e, Tensor<S>::constant({b, b}, eye)), 1);  // [B]
  // kept in the quotient shape -log(e_ii / sum_j e_ij); S is clamped to
  // [-1, 1] upstream, so e never overflows and the quotients sit in (0, 1]
  auto per_pair = add(neg(textseg::log(div(diag, row_sum))),
                      neg(textseg::log(div(diag, col_sum))));
  return scale(sum_all(per_pair), static_cast<S>(1.0 / (2.0 * b)));
}

}  // namespace textseg
