#pragma once

// 2D convolution (cross-correlation convention) over BxCxHxW tensors, with
// zero or reflect padding and full backward rules. The dense variant runs
// as pad -> im2col -> gemm per sample; the depthwise variant (one kxk kernel
// plus bias per channel) uses direct loops.

#include <cstdint>
#include <string>
#include <vector>

#include "edgefilter/errors.hpp"
#include "edgefilter/padding.hpp"
#include "edgefilter/tensor.hpp"

namespace edgefilter {

namespace detail {

struct ConvDims {
  int b, cin, h, w;      // input
  int cout, kh, kw;      // kernel
  int stride, pad;
  int hp, wp;            // padded input
  int ho, wo;            // output
};

inline ConvDims conv_dims(const Shape& x, const Shape& k, int stride,
                          const PaddingMode& pad) {
  if (x.size() != 4)
    throw ShapeError("conv2d input must be BxCxHxW, got " + shape_str(x));
  if (k.size() != 4)
    throw ShapeError("conv2d kernel must be CoutxCinxKhxKw, got " +
                     shape_str(k));
  ConvDims d;
  d.b = x[0];
  d.cin = x[1];
  d.h = x[2];
  d.w = x[3];
  d.cout = k[0];
  d.kh = k[2];
  d.kw = k[3];
  d.stride = stride;
  d.pad = pad.width;
  if (k[1] != d.cin)
    throw ShapeError("conv2d channel mismatch: input " + shape_str(x) +
                     " vs kernel " + shape_str(k));
  if (d.kh % 2 == 0 || d.kw % 2 == 0)
    throw ConfigError("conv2d kernel sizes must be odd, got " +
                      std::to_string(d.kh) + "x" + std::to_string(d.kw));
  if (stride < 1) throw ConfigError("conv2d stride must be >= 1");
  d.hp = d.h + 2 * d.pad;
  d.wp = d.w + 2 * d.pad;
  if (d.kh > d.hp || d.kw > d.wp)
    throw ShapeError("conv2d kernel " + std::to_string(d.kh) + "x" +
                     std::to_string(d.kw) + " exceeds padded input " +
                     std::to_string(d.hp) + "x" + std::to_string(d.wp));
  d.ho = (d.hp - d.kh) / stride + 1;
  d.wo = (d.wp - d.kw) / stride + 1;
  if (d.ho < 1 || d.wo < 1)
    throw ShapeError("conv2d output would be empty for input " +
                     shape_str(x));
  return d;
}

// Writes one sample's patch matrix into a batched column buffer whose rows
// span every sample: cols_all is (cin*kh*kw) x (B*ho*wo), and this sample
// occupies the n-wide column block at col_offset. Batching the samples into
// one wide gemm keeps the vector lanes full even on 4x4 feature maps.
inline void im2col(const float* padded, const ConvDims& d, float* cols_all,
                   std::int64_t row_stride, std::int64_t col_offset) {
  const int n = d.ho * d.wo;
  for (int c = 0; c < d.cin; ++c) {
    const float* plane = padded + static_cast<std::int64_t>(c) * d.hp * d.wp;
    for (int ki = 0; ki < d.kh; ++ki)
      for (int kj = 0; kj < d.kw; ++kj) {
        float* row = cols_all +
                     static_cast<std::int64_t>((c * d.kh + ki) * d.kw + kj) *
                         row_stride +
                     col_offset;
        for (int ho = 0; ho < d.ho; ++ho) {
          const float* src =
              plane + static_cast<std::int64_t>(ho * d.stride + ki) * d.wp +
              kj;
          float* dst = row + static_cast<std::int64_t>(ho) * d.wo;
          for (int wo = 0; wo < d.wo; ++wo) dst[wo] = src[wo * d.stride];
        }
      }
  }
  (void)n;
}

inline void col2im_acc(const float* cols_all, const ConvDims& d,
                       std::int64_t row_stride, std::int64_t col_offset,
                       float* padded) {
  for (int c = 0; c < d.cin; ++c) {
    float* plane = padded + static_cast<std::int64_t>(c) * d.hp * d.wp;
    for (int ki = 0; ki < d.kh; ++ki)
      for (int kj = 0; kj < d.kw; ++kj) {
        const float* row = cols_all +
                           static_cast<std::int64_t>((c * d.kh + ki) * d.kw +
                                                     kj) *
                               row_stride +
                           col_offset;
        for (int ho = 0; ho < d.ho; ++ho) {
          float* dst =
              plane + static_cast<std::int64_t>(ho * d.stride + ki) * d.wp +
              kj;
          const float* src = row + static_cast<std::int64_t>(ho) * d.wo;
          for (int wo = 0; wo < d.wo; ++wo) dst[wo * d.stride] += src[wo];
        }
      }
  }
}

// Builds the full (cin*kh*kw) x (B*ho*wo) patch matrix.
inline void im2col_batched(const float* x, const ConvDims& d,
                           const PaddingMode& pad, float* cols_all) {
  const std::int64_t in_plane = static_cast<std::int64_t>(d.cin) * d.h * d.w;
  const std::int64_t bn = static_cast<std::int64_t>(d.b) * d.ho * d.wo;
  std::vector<float> padded(static_cast<std::size_t>(d.cin) * d.hp * d.wp);
  for (int b = 0; b < d.b; ++b) {
    pad_chw(x + static_cast<std::int64_t>(b) * in_plane, d.cin, d.h, d.w, pad,
            padded.data());
    im2col(padded.data(), d, cols_all, bn,
           static_cast<std::int64_t>(b) * d.ho * d.wo);
  }
}

}  // namespace detail

inline Tensor conv2d(const Tensor& x, const Tensor& kernel, int stride,
                     const PaddingMode& pad) {
  const detail::ConvDims d =
      detail::conv_dims(x.shape(), kernel.shape(), stride, pad);
  if (pad.kind == PaddingMode::Kind::reflect) {
    check_reflect_width(pad.width, d.h);
    check_reflect_width(pad.width, d.w);
  }
  auto xi = x.impl();
  auto ki = kernel.impl();
  const std::int64_t in_plane = static_cast<std::int64_t>(d.cin) * d.h * d.w;
  const std::int64_t out_plane =
      static_cast<std::int64_t>(d.cout) * d.ho * d.wo;
  const int kdim = d.cin * d.kh * d.kw;
  const int n = d.ho * d.wo;
  const std::int64_t bn = static_cast<std::int64_t>(d.b) * n;
  // Narrow outputs starve the vector lanes per sample; batch them into one
  // wide gemm. Wide outputs stay per-sample so the patch matrix is L2-hot.
  const bool batched = n < 64;

  Tensor out = detail::make_output(
      {d.b, d.cout, d.ho, d.wo}, {xi, ki},
      [xi, ki, d, pad, in_plane, out_plane, kdim, n, bn,
       batched](detail::TensorImpl& o) {
        const float* g = o.grad.data();
        float* dk = ki->requires_grad ? ki->grad_buf() : nullptr;
        float* dx = xi->requires_grad ? xi->grad_buf() : nullptr;
        std::vector<float> wt;
        if (dx) {
          wt.resize(static_cast<std::size_t>(kdim) * d.cout);
          const float* w = ki->data->data();
          for (int co = 0; co < d.cout; ++co)
            for (int p = 0; p < kdim; ++p)
              wt[static_cast<std::size_t>(p) * d.cout + co] =
                  w[static_cast<std::int64_t>(co) * kdim + p];
        }
        std::vector<float> gpad(static_cast<std::size_t>(d.cin) * d.hp *
                                d.wp);
        if (batched) {
          // gather the output gradient into [cout x B*n] layout
          std::vector<float> gmat(static_cast<std::size_t>(d.cout) * bn);
          for (int b = 0; b < d.b; ++b)
            for (int co = 0; co < d.cout; ++co)
              std::copy_n(
                  g + (static_cast<std::int64_t>(b) * d.cout + co) * n, n,
                  gmat.begin() + co * bn + static_cast<std::int64_t>(b) * n);
          if (dk) {
            std::vector<float> cols(static_cast<std::size_t>(kdim) * bn);
            detail::im2col_batched(xi->data->data(), d, pad, cols.data());
            detail::gemm_bt_acc(gmat.data(), cols.data(), dk, d.cout,
                                static_cast<int>(bn), kdim);
          }
          if (dx) {
            std::vector<float> dcols(static_cast<std::size_t>(kdim) * bn);
            detail::gemm(wt.data(), gmat.data(), dcols.data(), kdim, d.cout,
                         static_cast<int>(bn));
            for (int b = 0; b < d.b; ++b) {
              std::fill(gpad.begin(), gpad.end(), 0.0f);
              detail::col2im_acc(dcols.data(), d, bn,
                                 static_cast<std::int64_t>(b) * n,
                                 gpad.data());
              unpad_chw_acc(gpad.data(), d.cin, d.h, d.w, pad,
                            dx + static_cast<std::int64_t>(b) * in_plane);
            }
          }
          return;
        }
        std::vector<float> padded(static_cast<std::size_t>(d.cin) * d.hp *
                                  d.wp);
        std::vector<float> cols(static_cast<std::size_t>(kdim) * n);
        for (int b = 0; b < d.b; ++b) {
          const float* gb = g + static_cast<std::int64_t>(b) * out_plane;
          if (dk) {
            pad_chw(xi->data->data() + static_cast<std::int64_t>(b) * in_plane,
                    d.cin, d.h, d.w, pad, padded.data());
            detail::im2col(padded.data(), d, cols.data(), n, 0);
            detail::gemm_bt_acc(gb, cols.data(), dk, d.cout, n, kdim);
          }
          if (dx) {
            detail::gemm(wt.data(), gb, cols.data(), kdim, d.cout, n);
            std::fill(gpad.begin(), gpad.end(), 0.0f);
            detail::col2im_acc(cols.data(), d, n, 0, gpad.data());
            unpad_chw_acc(gpad.data(), d.cin, d.h, d.w, pad,
                          dx + static_cast<std::int64_t>(b) * in_plane);
          }
        }
      });

  float* ov = out.data().data();
  if (batched) {
    std::vector<float> cols(static_cast<std::size_t>(kdim) * bn);
    detail::im2col_batched(xi->data->data(), d, pad, cols.data());
    std::vector<float> omat(static_cast<std::size_t>(d.cout) * bn);
    detail::gemm(ki->data->data(), cols.data(), omat.data(), d.cout, kdim,
                 static_cast<int>(bn));
    for (int b = 0; b < d.b; ++b)
      for (int co = 0; co < d.cout; ++co)
        std::copy_n(omat.begin() + co * bn + static_cast<std::int64_t>(b) * n,
                    n,
                    ov + (static_cast<std::int64_t>(b) * d.cout + co) * n);
  } else {
    std::vector<float> padded(static_cast<std::size_t>(d.cin) * d.hp * d.wp);
    std::vector<float> cols(static_cast<std::size_t>(kdim) * n);
    const float* xv = xi->data->data();
    for (int b = 0; b < d.b; ++b) {
      pad_chw(xv + static_cast<std::int64_t>(b) * in_plane, d.cin, d.h, d.w,
              pad, padded.data());
      detail::im2col(padded.data(), d, cols.data(), n, 0);
      detail::gemm(ki->data->data(), cols.data(),
                   ov + static_cast<std::int64_t>(b) * out_plane, d.cout,
                   kdim, n);
    }
  }
  return out;
}

// Depthwise conv: one kxk kernel and one bias per channel, stride 1, reflect
// padding, so shapes are preserved. Used by the trainable-conv control.
inline Tensor conv2d_depthwise(const Tensor& x, const Tensor& kernel,
                               const Tensor& bias) {
  if (x.ndim() != 4)
    throw ShapeError("depthwise conv input must be BxCxHxW, got " +
                     shape_str(x.shape()));
  if (kernel.ndim() != 3 || kernel.dim(0) != x.dim(1))
    throw ShapeError("depthwise kernel must be CxKxK matching input " +
                     shape_str(x.shape()) + ", got " +
                     shape_str(kernel.shape()));
  if (bias.numel() != x.dim(1))
    throw ShapeError("depthwise bias length must equal channel count");
  const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int kh = kernel.dim(1), kw = kernel.dim(2);
  if (kh % 2 == 0 || kw % 2 == 0)
    throw ConfigError("depthwise kernel sizes must be odd");
  const int p = (kh - 1) / 2;
  check_reflect_width(p, h);
  check_reflect_width(p, w);

  auto xi = x.impl();
  auto ki = kernel.impl();
  auto bi = bias.impl();
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;

  Tensor out = detail::make_output(
      {b, c, h, w}, {xi, ki, bi},
      [xi, ki, bi, b, c, h, w, kh, kw, p, plane](detail::TensorImpl& o) {
        const float* g = o.grad.data();
        const float* xv = xi->data->data();
        const float* kv = ki->data->data();
        float* dx = xi->requires_grad ? xi->grad_buf() : nullptr;
        float* dk = ki->requires_grad ? ki->grad_buf() : nullptr;
        float* db = bi->requires_grad ? bi->grad_buf() : nullptr;
        const int hp = h + 2 * p, wp = w + 2 * p;
        std::vector<float> xpad(static_cast<std::size_t>(hp) * wp);
        std::vector<float> gpad(static_cast<std::size_t>(hp) * wp);
        for (int bb = 0; bb < b; ++bb)
          for (int cc = 0; cc < c; ++cc) {
            const std::int64_t off =
                (static_cast<std::int64_t>(bb) * c + cc) * plane;
            const float* gp = g + off;
            pad_chw(xv + off, 1, h, w, PaddingMode::reflect(p), xpad.data());
            const float* kc =
                kv + static_cast<std::int64_t>(cc) * kh * kw;
            if (db) {
              float acc = 0.0f;
              for (std::int64_t i = 0; i < plane; ++i) acc += gp[i];
              db[cc] += acc;
            }
            if (dk) {
              float* dkc = dk + static_cast<std::int64_t>(cc) * kh * kw;
              for (int ki2 = 0; ki2 < kh; ++ki2)
                for (int kj = 0; kj < kw; ++kj) {
                  float acc = 0.0f;
                  for (int i = 0; i < h; ++i)
                    for (int j = 0; j < w; ++j)
                      acc += gp[static_cast<std::int64_t>(i) * w + j] *
                             xpad[static_cast<std::int64_t>(i + ki2) * wp + j +
                                  kj];
                  dkc[ki2 * kw + kj] += acc;
                }
            }
            if (dx) {
              std::fill(gpad.begin(), gpad.end(), 0.0f);
              for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j) {
                  const float gv = gp[static_cast<std::int64_t>(i) * w + j];
                  for (int ki2 = 0; ki2 < kh; ++ki2)
                    for (int kj = 0; kj < kw; ++kj)
                      gpad[static_cast<std::int64_t>(i + ki2) * wp + j + kj] +=
                          gv * kc[ki2 * kw + kj];
                }
              unpad_chw_acc(gpad.data(), 1, h, w, PaddingMode::reflect(p),
                            dx + off);
            }
          }
      });

  const float* xv = xi->data->data();
  const float* kv = ki->data->data();
  const float* bv = bi->data->data();
  float* ov = out.data().data();
  const int hp = h + 2 * p, wp = w + 2 * p;
  std::vector<float> xpad(static_cast<std::size_t>(hp) * wp);
  for (int bb = 0; bb < b; ++bb)
    for (int cc = 0; cc < c; ++cc) {
      const std::int64_t off = (static_cast<std::int64_t>(bb) * c + cc) * plane;
      pad_chw(xv + off, 1, h, w, PaddingMode::reflect(p), xpad.data());
      const float* kc = kv + static_cast<std::int64_t>(cc) * kh * kw;
      float* op = ov + off;
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
          float acc = bv[cc];
          for (int ki2 = 0; ki2 < kh; ++ki2) {
            const float* xrow =
                xpad.data() + static_cast<std::int64_t>(i + ki2) * wp + j;
            const float* krow = kc + ki2 * kw;
            for (int kj = 0; kj < kw; ++kj) acc += xrow[kj] * krow[kj];
          }
          op[static_cast<std::int64_t>(i) * w + j] = acc;
        }
    }
  return out;
}

}  // namespace edgefilter
