// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "textseg/ops.hpp"

namespace textseg {

// Image tensors are [C,H,W]. Convolution is lowered to im2col + the shared
// matmul kernel; the column buffer is rebuilt in backward instead of being
// stored on the tape (it is the largest intermediate by far).

namespace kern {

template <typename S>
void im2col(const S* x, size_t C, size_t H, size_t W, size_t kh, size_t kw, size_t stride,
            size_t pad, size_t OH, size_t OW, S* col) {
  // col[(c*kh*kw + ky*kw + kx) * (OH*OW) + (oy*OW + ox)]
  size_t P = OH * OW;
  for (size_t c = 0; c < C; ++c) {
    for (size_t ky = 0; ky < kh; ++ky) {
      for (size_t kx = 0; kx < kw; ++kx) {
        S* dst = col + ((c * kh + ky) * kw + kx) * P;
        for (size_t oy = 0; oy < OH; ++oy) {
          long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
          if (iy < 0 || iy >= static_cast<long>(H)) {
            std::fill(dst + oy * OW, dst + (oy + 1) * OW, S(0));
            continue;
          }
          const S* src = x + (c * H + iy) * W;
          for (size_t ox = 0; ox < OW; ++ox) {
            long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
            dst[oy * OW + ox] = (ix < 0 || ix >= static_cast<long>(W)) ? S(0) : src[ix];
          }
        }
      }
    }
  }
}

template <typename S>
void col2im_acc(const S* col, size_t C, size_t H, size_t W, size_t kh, size_t kw, size_t stride,
                size_t pad, size_t OH, size_t OW, S* gx) {
  size_t P = OH * OW;
  for (size_t c = 0; c < C; ++c) {
    for (size_t ky = 0; ky < kh; ++ky) {
      for (size_t kx = 0; kx < kw; ++kx) {
        const S* src = col + ((c * kh + ky) * kw + kx) * P;
        for (size_t oy = 0; oy < OH; ++oy) {
          long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
          if (iy < 0 || iy >= static_cast<long>(H)) continue;
          S* dst = gx + (c * H + iy) * W;
          for (size_t ox = 0; ox < OW; ++ox) {
            long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
            if (ix >= 0 && ix < static_cast<long>(W)) dst[ix] += src[oy * OW + ox];
          }
        }
      }
    }
  }
}

}  // namespace kern

// x[Cin,H,W] * w[Cout,Cin,kh,kw] + b[Cout] -> [Cout,OH,OW]
template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b, size_t stride,
                 size_t pad) {
  require_shape(x.ndim() == 3, "conv2d: input must be [C,H,W], got " + shape_str(x.shape()));
  require_shape(w.ndim() == 4, "conv2d: weight must be [Cout,Cin,kh,kw], got " + shape_str(w.shape()));
  size_t Cin = x.dim(0), H = x.dim(1), W = x.dim(2);
  size_t Cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  require_shape(w.dim(1) == Cin, "conv2d: weight expects " + std::to_string(w.dim(1)) +
                                     " input channels, image has " + std::to_string(Cin));
  require_shape(b.ndim() == 1 && b.dim(0) == Cout,
                "conv2d: bias must be [" + std::to_string(Cout) + "], got " + shape_str(b.shape()));
  require_shape(H + 2 * pad >= kh && W + 2 * pad >= kw, "conv2d: kernel larger than padded input");
  size_t OH = (H + 2 * pad - kh) / stride + 1;
  size_t OW = (W + 2 * pad - kw) / stride + 1;
  size_t P = OH * OW, CK = Cin * kh * kw;

  std::vector<S> col(CK * P);
  kern::im2col(x.data().data(), Cin, H, W, kh, kw, stride, pad, OH, OW, col.data());
  std::vector<S> out(Cout * P, S(0));
  kern::mm_acc(w.data().data(), col.data(), out.data(), Cout, CK, P);
  const auto& bv = b.data();
  for (size_t o = 0; o < Cout; ++o) {
    S bo = bv[o];
    for (size_t p = 0; p < P; ++p) out[o * P + p] += bo;
  }

  auto geom = [Cin, H, W, kh, kw, stride, pad, OH, OW, Cout, P, CK](Node<S>& n) {
    auto& px = *n.parents[0];
    auto& pw = *n.parents[1];
    auto& pb = *n.parents[2];
    if (pb.requires_grad) {
      for (size_t o = 0; o < Cout; ++o) {
        S s = S(0);
        for (size_t p = 0; p < P; ++p) s += n.grad[o * P + p];
        pb.grad[o] += s;
      }
    }
    if (pw.requires_grad) {
      std::vector<S> col(CK * P);
      kern::im2col(px.value.data(), Cin, H, W, kh, kw, stride, pad, OH, OW, col.data());
      kern::mm_acc_bt(n.grad.data(), col.data(), pw.grad.data(), Cout, P, CK);
    }
    if (px.requires_grad) {
      std::vector<S> dcol(CK * P, S(0));
      kern::mm_acc_at(pw.value.data(), n.grad.data(), dcol.data(), CK, Cout, P);
      kern::col2im_acc(dcol.data(), Cin, H, W, kh, kw, stride, pad, OH, OW, px.grad.data());
    }
  };
  return make_op_node<S>("conv2d", {Cout, OH, OW}, std::move(out), {x, w, b}, geom);
}

template <typename S>
Tensor<S> upsample_nearest2x(const Tensor<S>& x) {
  require_shape(x.ndim() == 3, "upsample: input must be [C,H,W], got " + shape_str(x.shape()));
  size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  std::vector<S> out(C * 4 * H * W);
  const auto& xv = x.data();
  for (size_t c = 0; c < C; ++c)
    for (size_t y = 0; y < H; ++y)
      for (size_t xx = 0; xx < W; ++xx) {
        S v = xv[(c * H + y) * W + xx];
        size_t base = (c * 2 * H + 2 * y) * 2 * W + 2 * xx;
        out[base] = v;
        out[base + 1] = v;
        out[base + 2 * W] = v;
        out[base + 2 * W + 1] = v;
      }
  return make_op_node<S>(
      "upsample2x", {C, 2 * H, 2 * W}, std::move(out), {x}, [C, H, W](Node<S>& n) {
        auto& p = *n.parents[0];
        if (!p.requires_grad) return;
        for (size_t c = 0; c < C; ++c)
          for (size_t y = 0; y < H; ++y)
            for (size_t xx = 0; xx < W; ++xx) {
              size_t base = (c * 2 * H + 2 * y) * 2 * W + 2 * xx;
              p.grad[(c * H + y) * W + xx] +=
                  n.grad[base] + n.grad[base + 1] + n.grad[base + 2 * W] + n.grad[base + 2 * W + 1];
            }
      });
}

// [C,H,W] -> [H*W, C]: one row per spatial site, so attention can treat
// sites as tokens
template <typename S>
Tensor<S> chw_to_rows(const Tensor<S>& x) {
  require_shape(x.ndim() == 3, "chw_to_rows: input must be [C,H,W], got " + shape_str(x.shape()));
  size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  size_t P = H * W;
  std::vector<S> out(P * C);
  const auto& xv = x.data();
  for (size_t c = 0; c < C; ++c)
    for (size_t p = 0; p < P; ++p) out[p * C + c] = xv[c * P + p];
  return make_op_node<S>(
      "chw_to_rows", {P, C}, std::move(out), {x}, [C, P](Node<S>& n) {
        auto& pn = *n.parents[0];
        if (!pn.requires_grad) return;
        for (size_t c = 0; c < C; ++c)
          for (size_t p = 0; p < P; ++p) pn.grad[c * P + p] += n.grad[p * C + c];
      });
}

template <typename S>
Tensor<S> rows_to_chw(const Tensor<S>& x, size_t H, size_t W) {
  require_shape(x.ndim() == 2, "rows_to_chw: input must be 2-d, got " + shape_str(x.shape()));
  require_shape(x.dim(0) == H * W, "rows_to_chw: " + std::to_string(x.dim(0)) + " rows cannot fill " +
                                       std::to_string(H) + "x" + std::to_string(W));
  size_t C = x.dim(1), P = H * W;
  std::vector<S> out(C * P);
  const auto& xv = x.data();
  for (size_t p = 0; p < P; ++p)
    for (size_t c = 0; c < C; ++c) out[c * P + p] = xv[p * C + c];
  return make_op_node<S>(
      "rows_to_chw", {C, H, W}, std::move(out), {x}, [C, P](Node<S>& n) {
        auto& pn = *n.parents[0];
        if (!pn.requires_grad) return;
        for (size_t p = 0; p < P; ++p)
          for (size_t c = 0; c < C; ++c) pn.grad[p * C + c] += n.grad[c * P + p];
      });
}

}  // namespace textseg
