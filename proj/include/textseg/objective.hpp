// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "textseg/ops.hpp"

namespace textseg {

// absolute value with subgradient 0 at the origin; only used inside the
// stabilized cross-entropy
template <typename S>
Tensor<S> abs_val(const Tensor<S>& a) {
  return unary_op<S>(
      "abs", a, [](S x) { return x < S(0) ? -x : x; },
      [](S x, S) { return x > S(0) ? S(1) : (x < S(0) ? S(-1) : S(0)); });
}

struct LossWeights {
  double l1 = 1.0, l2 = 1.0, l3 = 0.2, l4 = 5.0;
};

// 1 - (2 sum(p*y) + eps) / (sum p + sum y + eps), p = sigmoid(logits), eps = 1
template <typename S>
Tensor<S> dice_loss(const Tensor<S>& logits, const Tensor<S>& target) {
  require_shape(logits.shape() == target.shape(), "dice: shapes differ, " +
                                                      shape_str(logits.shape()) + " vs " +
                                                      shape_str(target.shape()));
  constexpr S kEps = S(1);
  auto p = sigmoid(logits);
  auto inter = sum_all(mul(p, target));
  auto denom = add(sum_all(p), sum_all(target));
  auto ratio = div(add_scalar(scale(inter, S(2)), kEps), add_scalar(denom, kEps));
  return sub(Tensor<S>::scalar(S(1)), ratio);
}

// mean over pixels of max(z,0) - z*y + log(1 + exp(-|z|))
template <typename S>
Tensor<S> ce_loss(const Tensor<S>& logits, const Tensor<S>& target) {
  require_shape(logits.shape() == target.shape(), "ce: shapes differ, " +
                                                      shape_str(logits.shape()) + " vs " +
                                                      shape_str(target.shape()));
  auto softplus = textseg::log(add_scalar(textseg::exp(neg(abs_val(logits))), S(1)));
  auto per_pixel = add(sub(relu(logits), mul(logits, target)), softplus);
  return mean_all(per_pixel);
}

// L = l1*L_V2T + l2*L_T2V + l3*L_CCL + l4*(L_Dice + L_CE)
template <typename S>
Tensor<S> total_loss(const Tensor<S>& l_v2t, const Tensor<S>& l_t2v, const Tensor<S>& l_ccl,
                     const Tensor<S>& l_dice, const Tensor<S>& l_ce, const LossWeights& lw) {
  auto seg = scale(add(l_dice, l_ce), static_cast<S>(lw.l4));
  auto rec = add(scale(l_v2t, static_cast<S>(lw.l1)), scale(l_t2v, static_cast<S>(lw.l2)));
  return add(add(rec, scale(l_ccl, static_cast<S>(lw.l3))), seg);
}

}  // namespace textseg
