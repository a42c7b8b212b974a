// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <numeric>

#include "textseg/config.hpp"
#include "textseg/fusion.hpp"
#include "textseg/masking.hpp"
#include "textseg/objective.hpp"

namespace textseg {

template <typename S>
struct Sample {
  Tensor<S> image;          // [1,H,W], values in [0,1]
  std::vector<size_t> ids;  // length L_max, right-padded
  std::vector<uint8_t> keep;
  Tensor<S> target;         // [1,H,W], 0/1
  std::string id;
};

// One segmentation forward. e_prime is populated by the joint-attention
// variant (both directions fall out of a single pass) and left undefined by
// the pruned cross-attention path.
template <typename S>
struct SegForward {
  VisualFeatures<S> vf;
  TextFeatures<S> tf;
  Tensor<S> v_prime;
  Tensor<S> e_prime;
  Tensor<S> logits;  // [1,H,W]
};

// The reconstruction targets and loss weights enter the objective as
// detached snapshots, and the mask draws use detached weights too. For
// finite-difference checks those snapshots must stay fixed while parameters
// are probed (they are constants of the optimized function, not part of its
// gradient), so forward_train records them here and can replay them.
template <typename S>
struct TrainAux {
  std::vector<Tensor<S>> v_target, e_target, wp_loss, ww_loss;
  std::vector<MaskSpec> cvr_mask, clr_mask;
};

template <typename S>
struct TrainStepOutput {
  Tensor<S> total;
  Tensor<S> l_v2t, l_t2v, l_ccl, l_dice, l_ce;  // batch means
  std::vector<Tensor<S>> logits;                // per sample
  TrainAux<S> aux;
};

// Multiply-accumulate counts (matmul and convolution terms only; elementwise
// work is not counted). All figures are per sample; `align` covers one
// similarity pair and scales with B^2 in a batch.
struct CostReport {
  size_t params = 0;
  unsigned long long vis = 0, txt = 0, fusion_seg = 0, decoder = 0;
  unsigned long long fusion_aux = 0, interest = 0, align = 0, recon_v = 0, recon_t = 0;

  unsigned long long infer() const { return vis + txt + fusion_seg + decoder; }
  unsigned long long train_forward() const {
    return infer() + fusion_aux + interest + align + recon_v + recon_t;
  }
};

template <typename S>
class Model {
 public:
  Model(const ModelDims& dims, const RunConfig& cfg, size_t vocab_size)
      : dims_(dims), cfg_(cfg), vocab_size_(vocab_size), store_(cfg.master_seed) {
    vis_ = VisualEncoder<S>::create(store_, dims_);
    txt_ = TextEncoder<S>::create(store_, dims_, vocab_size_);
    if (cfg_.attention == FusionAttention::cross) {
      t2v_ = CrossAttentionParams<S>::create(store_, "fus.t2v", dims_.d);
      v2t_ = CrossAttentionParams<S>::create(store_, "fus.v2t", dims_.d);
    } else {
      joint_ = CrossAttentionParams<S>::create(store_, "fus.joint", dims_.d);
    }
    heads_ = InterestHeads<S>::create(store_, dims_.d);
    recon_v_ = ReconstructorParams<S>::create(store_, "rv", dims_.d, cfg_.recon_layers);
    recon_t_ = ReconstructorParams<S>::create(store_, "rt", dims_.d, cfg_.recon_layers);
    dec_ = MaskDecoder<S>::create(store_, dims_);
  }

  // Shared segmentation branch: encoders, text-to-vision attention, residual
  // fusion, decoder. Training, evaluation and inference all route through
  // here, which is what makes the pruned inference path bit-identical.
  SegForward<S> forward_seg(const Tensor<S>& image, const std::vector<size_t>& ids,
                            const std::vector<uint8_t>& keep) const {
    SegForward<S> f;
    f.vf = vis_(image);
    f.tf = txt_(ids, keep);
    if (cfg_.attention == FusionAttention::cross) {
      f.v_prime = text_to_vision(f.vf.values, f.tf.values, t2v_, f.tf.keep);
    } else {
      auto [vp, ep] = self_fusion(f.vf.values, f.tf.values, joint_, f.tf.keep);
      f.v_prime = vp;
      f.e_prime = ep;
    }
    f.logits = dec_(add(f.vf.values, f.v_prime), f.vf.hp, f.vf.wp, f.vf.skips);
    return f;
  }

  // W_poi/W_woi for a finished forward; computes the vision-to-text direction
  // on demand when the segmentation branch skipped it
  std::pair<Tensor<S>, Tensor<S>> interest_maps(const SegForward<S>& f) const {
    Tensor<S> ep = f.e_prime;
    if (!ep.defined()) ep = vision_to_text(f.tf.values, f.vf.values, v2t_);
    return interest_weights(f.v_prime, ep, f.tf.keep, heads_);
  }

  // Full training objective over one batch. Reconstruction masks are drawn
  // per sample from mix_seed(mask_seed_base, branch, i), so a replayed step
  // reproduces them exactly. When `frozen` is given, the detached snapshots
  // and mask draws recorded in it are replayed instead of recomputed, which
  // holds the stop-gradient constants fixed across repeated builds.
  TrainStepOutput<S> forward_train(const std::vector<Sample<S>>& batch, uint64_t mask_seed_base,
                                   const TrainAux<S>* frozen = nullptr) const {
    if (batch.empty()) throw ConfigError("train step: empty batch");
    size_t b = batch.size();
    size_t n = dims_.patches();
    bool weighted = cfg_.mask_strategy == MaskStrategy::weighted;

    std::vector<SegForward<S>> segs;
    segs.reserve(b);
    std::vector<Tensor<S>> w_poi(b), w_woi(b);
    Tensor<S> dice_acc, ce_acc, v2t_acc, t2v_acc;
    TrainStepOutput<S> out;
    out.logits.reserve(b);

    for (size_t i = 0; i < b; ++i) {
      const auto& s = batch[i];
      auto f = forward_seg(s.image, s.ids, s.keep);
      out.logits.push_back(f.logits);

      auto [wp, ww] = interest_maps(f);
      w_poi[i] = wp;
      w_woi[i] = ww;

      auto v_tgt = frozen ? frozen->v_target[i] : f.vf.values.detach();
      auto e_tgt = frozen ? frozen->e_target[i] : f.tf.values.detach();
      auto wp_loss = frozen ? frozen->wp_loss[i] : wp.detach();
      auto ww_loss = frozen ? frozen->ww_loss[i] : ww.detach();
      out.aux.v_target.push_back(v_tgt);
      out.aux.e_target.push_back(e_tgt);
      out.aux.wp_loss.push_back(wp_loss);
      out.aux.ww_loss.push_back(ww_loss);

      auto d = dice_loss(f.logits, s.target);
      auto c = ce_loss(f.logits, s.target);
      dice_acc = dice_acc.defined() ? add(dice_acc, d) : d;
      ce_acc = ce_acc.defined() ? add(ce_acc, c) : c;

      if (cfg_.use_cvr) {
        // mask interesting patches, rebuild them from the full text
        MaskSpec spec;
        if (frozen) {
          spec = frozen->cvr_mask[i];
        } else {
          std::vector<size_t> cand(n);
          std::iota(cand.begin(), cand.end(), size_t{0});
          std::vector<double> wts(n);
          for (size_t j = 0; j < n; ++j) wts[j] = static_cast<double>(wp.data()[j]);
          spec = sample_mask(wts, cand, cfg_.alpha_v, weighted, mix_seed(mask_seed_base, 1, i));
        }
        out.aux.cvr_mask.push_back(spec);
        auto vm = apply_mask(f.vf.values, spec);
        Tensor<S> cond = cfg_.use_cvr_condition ? ww : Tensor<S>{};
        auto rec = reconstruct(vm, f.tf.values, cond, f.tf.keep, recon_v_);
        auto l = weighted_recon_loss(v_tgt, rec, wp_loss, n);
        t2v_acc = t2v_acc.defined() ? add(t2v_acc, l) : l;
      }
      if (cfg_.use_clr) {
        // same in the other direction, over non-pad tokens only
        size_t nonpad = 0;
        for (uint8_t k : f.tf.keep) nonpad += k ? 1 : 0;
        MaskSpec spec;
        if (frozen) {
          spec = frozen->clr_mask[i];
        } else {
          std::vector<size_t> cand;
          std::vector<double> wts;
          for (size_t j = 0; j < f.tf.keep.size(); ++j)
            if (f.tf.keep[j]) {
              cand.push_back(j);
              wts.push_back(static_cast<double>(ww.data()[j]));
            }
          spec = sample_mask(wts, cand, cfg_.alpha_t, weighted, mix_seed(mask_seed_base, 2, i));
        }
        out.aux.clr_mask.push_back(spec);
        auto em = apply_mask(f.tf.values, spec);
        Tensor<S> cond = cfg_.use_clr_condition ? wp : Tensor<S>{};
        auto rec = reconstruct(em, f.vf.values, cond, {}, recon_t_);
        auto l = weighted_recon_loss(e_tgt, rec, ww_loss, nonpad);
        v2t_acc = v2t_acc.defined() ? add(v2t_acc, l) : l;
      }
      segs.push_back(std::move(f));
    }

    // pairwise similarity from raw features; each side keeps its own sample's
    // interest weights, or uniform ones when the condition is ablated
    std::vector<Tensor<S>> u_text(b);
    Tensor<S> u_vis;
    if (!cfg_.use_ccl_condition) {
      u_vis = Tensor<S>::full({n}, static_cast<S>(1.0 / static_cast<double>(n)));
      for (size_t j = 0; j < b; ++j) {
        const auto& keep = segs[j].tf.keep;
        double cnt = 0;
        for (uint8_t k : keep) cnt += k ? 1.0 : 0.0;
        std::vector<S> u(keep.size(), S(0));
        for (size_t t = 0; t < keep.size(); ++t)
          if (keep[t]) u[t] = static_cast<S>(1.0 / cnt);
        u_text[j] = Tensor<S>::constant({keep.size()}, std::move(u));
      }
    }
    std::vector<Tensor<S>> sims;
    sims.reserve(b * b);
    for (size_t i = 0; i < b; ++i)
      for (size_t j = 0; j < b; ++j) {
        auto A = alignment_matrix(segs[i].vf.values, segs[j].tf.values);
        const auto& wp = cfg_.use_ccl_condition ? w_poi[i] : u_vis;
        const auto& ww = cfg_.use_ccl_condition ? w_woi[j] : u_text[j];
        sims.push_back(reshape(pair_similarity(A, wp, ww, segs[j].tf.keep), {1, 1}));
      }
    auto sim = reshape(concat0<S>(sims), {b, b});
    out.l_ccl = contrastive_from_matrix(sim, cfg_.tau);

    S invb = static_cast<S>(1.0 / static_cast<double>(b));
    out.l_dice = scale(dice_acc, invb);
    out.l_ce = scale(ce_acc, invb);
    out.l_t2v = t2v_acc.defined() ? scale(t2v_acc, invb) : Tensor<S>::scalar(S(0));
    out.l_v2t = v2t_acc.defined() ? scale(v2t_acc, invb) : Tensor<S>::scalar(S(0));
    LossWeights lw{cfg_.lambda1, cfg_.lambda2, cfg_.lambda3, cfg_.lambda4};
    out.total = total_loss(out.l_v2t, out.l_t2v, out.l_ccl, out.l_dice, out.l_ce, lw);
    return out;
  }

  CostReport cost() const {
    using ull = unsigned long long;
    CostReport r;
    r.params = store_.total_size();
    size_t H = dims_.image, c1 = dims_.c1, c2 = dims_.c2, d = dims_.d;
    size_t h2 = H / 2, h4 = H / 4, h8 = H / 8;
    size_t L = dims_.l_max, N = dims_.patches();
    auto conv = [](size_t oh, size_t ow, size_t co, size_t ci, size_t k) {
      return static_cast<ull>(oh) * ow * co * ci * k * k;
    };
    r.vis = conv(h2, h2, c1, 1, 3) + conv(h4, h4, c2, c1, 3) + conv(h4, h4, d, c2, 3) +
            conv(h8, h8, d, d, 3);
    // per block: four d x d projections, two attention matmuls, feed-forward
    r.txt = static_cast<ull>(dims_.text_layers) *
            (4ull * L * d * d + 2ull * L * L * d + 2ull * L * d * dims_.ff);
    if (cfg_.attention == FusionAttention::cross) {
      r.fusion_seg = static_cast<ull>(N) * d * d + 2ull * L * d * d + 2ull * N * L * d;
      r.fusion_aux = static_cast<ull>(L) * d * d + 2ull * N * d * d + 2ull * N * L * d;
    } else {
      size_t M = N + L;  // one joint pass produces both directions
      r.fusion_seg = 3ull * M * d * d + 2ull * M * M * d;
      r.fusion_aux = 0;
    }
    r.decoder = conv(h4, h4, c2, d + c2, 3) + conv(h2, h2, c1, c2 + c1, 3) +
                conv(H, H, c1 / 2, c1 + 1, 3) + conv(H, H, 1, c1 / 2, 1);
    r.interest = static_cast<ull>(N) * d + static_cast<ull>(L) * d;
    r.align = static_cast<ull>(N) * L * d + static_cast<ull>(N + L) * d;
    auto recon = [&](size_t P, size_t C) {
      return static_cast<ull>(cfg_.recon_layers) *
             (3ull * P * d * d + 2ull * C * d * d + 2ull * P * C * d);
    };
    if (cfg_.use_cvr) r.recon_v = recon(N, L);
    if (cfg_.use_clr) r.recon_t = recon(L, N);
    return r;
  }

  ParamStore<S>& params() { return store_; }
  const ParamStore<S>& params() const { return store_; }
  const ModelDims& dims() const { return dims_; }
  const RunConfig& config() const { return cfg_; }
  size_t vocab_size() const { return vocab_size_; }

 private:
  ModelDims dims_;
  RunConfig cfg_;
  size_t vocab_size_ = 0;
  ParamStore<S> store_;
  VisualEncoder<S> vis_;
  TextEncoder<S> txt_;
  CrossAttentionParams<S> t2v_, v2t_, joint_;
  InterestHeads<S> heads_;
  ReconstructorParams<S> recon_v_, recon_t_;
  MaskDecoder<S> dec_;
};

}  // namespace textseg
