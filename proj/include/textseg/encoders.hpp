// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "textseg/nn.hpp"
#include "textseg/ops_spatial.hpp"
#include "textseg/vocab.hpp"

namespace textseg {

// Fixed architecture dimensions. The defaults give a 64x64 image, an 8x8
// patch grid and a shared width of 64; the micro preset shrinks everything
// for finite-difference checks.
struct ModelDims {
  size_t image = 64;
  size_t d = 64;           // shared embedding width
  size_t l_max = 10;       // token positions
  size_t c1 = 16, c2 = 32; // downsampler stage widths (stage 3 ends at d)
  size_t text_layers = 2;
  size_t heads = 4;
  size_t ff = 256;

  size_t grid() const { return image / 8; }      // three stride-2 stages
  size_t patches() const { return grid() * grid(); }

  static ModelDims desk() { return {}; }
  static ModelDims micro() {
    // N = 4 patches (16x16 image -> 2x2 grid), L = 3, D = 8
    ModelDims m;
    m.image = 16;
    m.d = 8;
    m.l_max = 3;
    m.c1 = 4;
    m.c2 = 8;
    m.heads = 2;
    m.ff = 32;
    return m;
  }
};

template <typename S>
struct VisualFeatures {
  Tensor<S> values;                 // [N, D] patch rows (position-tagged)
  size_t hp = 0, wp = 0;            // N = hp * wp
  std::vector<Tensor<S>> skips;     // decoder skip stack, one per stage
};

template <typename S>
struct TextFeatures {
  Tensor<S> values;                 // [L, D]
  std::vector<size_t> ids;
  std::vector<uint8_t> keep;        // 1 = real token
};

// Three stride-2 stages (c1 -> c2 -> d); the third stage widens its
// receptive field with a stride-1 conv before downsampling. Patch rows get
// a learned positional embedding, without which conv features are
// translation-equivariant and position words could never steer the mask.
template <typename S>
struct VisualEncoder {
  Tensor<S> w1, b1, w2, b2, w3a, b3a, w3b, b3b;
  Tensor<S> pos;  // [N, D]
  ModelDims dims;

  static VisualEncoder create(ParamStore<S>& ps, const ModelDims& dm) {
    VisualEncoder e;
    e.dims = dm;
    e.w1 = ps.uniform("vis.s1.w", {dm.c1, 1, 3, 3}, 9);
    e.b1 = ps.uniform("vis.s1.b", {dm.c1}, 9);
    e.w2 = ps.uniform("vis.s2.w", {dm.c2, dm.c1, 3, 3}, dm.c1 * 9);
    e.b2 = ps.uniform("vis.s2.b", {dm.c2}, dm.c1 * 9);
    e.w3a = ps.uniform("vis.s3a.w", {dm.d, dm.c2, 3, 3}, dm.c2 * 9);
    e.b3a = ps.uniform("vis.s3a.b", {dm.d}, dm.c2 * 9);
    e.w3b = ps.uniform("vis.s3b.w", {dm.d, dm.d, 3, 3}, dm.d * 9);
    e.b3b = ps.uniform("vis.s3b.b", {dm.d}, dm.d * 9);
    e.pos = ps.uniform("vis.pos", {dm.patches(), dm.d}, dm.d);
    return e;
  }

  VisualFeatures<S> operator()(const Tensor<S>& image) const {
    require_shape(image.ndim() == 3 && image.dim(0) == 1 && image.dim(1) == dims.image &&
                      image.dim(2) == dims.image,
                  "encode_image: expected [1," + std::to_string(dims.image) + "," +
                      std::to_string(dims.image) + "], got " + shape_str(image.shape()));
    auto e1 = relu(conv2d(image, w1, b1, 2, 1));   // [c1, H/2, H/2]
    auto e2 = relu(conv2d(e1, w2, b2, 2, 1));      // [c2, H/4, H/4]
    auto e3 = relu(conv2d(e2, w3a, b3a, 1, 1));    // [d,  H/4, H/4]
    auto e4 = relu(conv2d(e3, w3b, b3b, 2, 1));    // [d,  H/8, H/8]
    VisualFeatures<S> out;
    out.hp = dims.grid();
    out.wp = dims.grid();
    out.values = add(chw_to_rows(e4), pos);
    out.skips = {image, e1, e2};  // input of each downsampling stage
    return out;
  }
};

template <typename S>
struct TextEncoder {
  Tensor<S> tok_emb;  // [V, D]
  Tensor<S> pos;      // [L_max, D]
  std::vector<TransformerBlock<S>> blocks;
  LayerNorm<S> ln_final;
  ModelDims dims;
  size_t vocab_size = 0;

  static TextEncoder create(ParamStore<S>& ps, const ModelDims& dm, size_t vocab) {
    TextEncoder e;
    e.dims = dm;
    e.vocab_size = vocab;
    e.tok_emb = ps.uniform("txt.emb", {vocab, dm.d}, dm.d);
    e.pos = ps.uniform("txt.pos", {dm.l_max, dm.d}, dm.d);
    for (size_t l = 0; l < dm.text_layers; ++l)
      e.blocks.push_back(TransformerBlock<S>::create(ps, "txt.blk" + std::to_string(l), dm.d,
                                                     dm.heads, dm.ff));
    e.ln_final = LayerNorm<S>::create(ps, "txt.lnf", dm.d);
    return e;
  }

  TextFeatures<S> operator()(const std::vector<size_t>& ids,
                             const std::vector<uint8_t>& keep) const {
    if (ids.size() != dims.l_max || keep.size() != dims.l_max)
      throw ShapeError("encode_text: expected " + std::to_string(dims.l_max) + " ids, got " +
                       std::to_string(ids.size()));
    for (size_t id : ids)
      if (id >= vocab_size)
        throw VocabError("encode_text: id " + std::to_string(id) + " outside vocabulary of " +
                         std::to_string(vocab_size));
    auto x = add(gather_rows(tok_emb, ids), pos);
    for (auto& blk : blocks) x = blk(x, keep);
    TextFeatures<S> out;
    out.values = ln_final(x);
    out.ids = ids;
    out.keep = keep;
    return out;
  }
};

// Upsampling decoder with one skip per stage; the final stage sees the raw
// image, which carries the sharp boundaries at full resolution.
template <typename S>
struct MaskDecoder {
  Tensor<S> w1, b1, w2, b2, w3, b3, w4, b4;
  ModelDims dims;

  static MaskDecoder create(ParamStore<S>& ps, const ModelDims& dm) {
    MaskDecoder d;
    d.dims = dm;
    size_t in1 = dm.d + dm.c2, in2 = dm.c2 + dm.c1, in3 = dm.c1 + 1;
    d.w1 = ps.uniform("dec.s1.w", {dm.c2, in1, 3, 3}, in1 * 9);
    d.b1 = ps.uniform("dec.s1.b", {dm.c2}, in1 * 9);
    d.w2 = ps.uniform("dec.s2.w", {dm.c1, in2, 3, 3}, in2 * 9);
    d.b2 = ps.uniform("dec.s2.b", {dm.c1}, in2 * 9);
    d.w3 = ps.uniform("dec.s3.w", {dm.c1 / 2, in3, 3, 3}, in3 * 9);
    d.b3 = ps.uniform("dec.s3.b", {dm.c1 / 2}, in3 * 9);
    d.w4 = ps.uniform("dec.out.w", {1, dm.c1 / 2, 1, 1}, dm.c1 / 2);
    d.b4 = ps.uniform("dec.out.b", {1}, dm.c1 / 2);
    return d;
  }

  Tensor<S> operator()(const Tensor<S>& fused_rows, size_t hp, size_t wp,
                       const std::vector<Tensor<S>>& skips) const {
    if (skips.size() != 3)
      throw ConfigError("decode_mask: expected 3 skip maps, got " + std::to_string(skips.size()));
    auto x = rows_to_chw(fused_rows, hp, wp);                              // [d, H/8, H/8]
    auto u1 = relu(conv2d(concat0<S>({upsample_nearest2x(x), skips[2]}), w1, b1, 1, 1));
    auto u2 = relu(conv2d(concat0<S>({upsample_nearest2x(u1), skips[1]}), w2, b2, 1, 1));
    auto u3 = relu(conv2d(concat0<S>({upsample_nearest2x(u2), skips[0]}), w3, b3, 1, 1));
    return conv2d(u3, w4, b4, 1, 0);                                       // [1, H, W] logits
  }
};

}  // namespace textseg
