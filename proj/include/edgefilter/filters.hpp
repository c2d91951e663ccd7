#pragma once

// The Deep Edge Filter and its low-pass building blocks.
//
// edge_filter(h) = h - lpf(h), where the low-pass branch is a channel-wise
// sliding-window mean, median, or Gaussian smoother under edge-exclusive
// reflect padding. The low-pass output is always detached, so the filter is
// an identity for gradients flowing downstream-to-upstream.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "edgefilter/errors.hpp"
#include "edgefilter/padding.hpp"
#include "edgefilter/tensor.hpp"

namespace edgefilter {

enum class LpfKind { mean, median, gaussian };
enum class FilterDim { one_d, two_d };

inline const char* to_string(LpfKind k) {
  switch (k) {
    case LpfKind::mean: return "mean";
    case LpfKind::median: return "median";
    case LpfKind::gaussian: return "gaussian";
  }
  return "?";
}

struct FilterSpec {
  LpfKind kind = LpfKind::mean;
  FilterDim dims = FilterDim::two_d;
  int kernel_size = 3;
  float sigma = 1.0f;  // gaussian only
  int position = 0;    // insertion index into the host model's block list

  void validate() const {
    if (kernel_size < 1 || kernel_size % 2 == 0)
      throw ConfigError("filter kernel_size must be an odd integer >= 1, got " +
                        std::to_string(kernel_size));
    if (kind == LpfKind::gaussian && sigma <= 0.0f)
      throw ConfigError("gaussian filter sigma must be positive, got " +
                        std::to_string(sigma));
  }
};

// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
inline std::vector<float> gaussian_kernel(int k, float sigma) {
  if (k < 1 || k % 2 == 0)
    throw ConfigError("gaussian_kernel size must be odd and >= 1, got " +
                      std::to_string(k));
  if (sigma <= 0.0f)
    throw ConfigError("gaussian_kernel sigma must be positive, got " +
                      std::to_string(sigma));
  std::vector<float> w(static_cast<std::size_t>(k));
  const float c = static_cast<float>(k - 1) / 2.0f;
  double total = 0.0;
  for (int i = 0; i < k; ++i) {
    const float d = static_cast<float>(i) - c;
    w[static_cast<std::size_t>(i)] =
        std::exp(-(d * d) / (2.0f * sigma * sigma));
    total += w[static_cast<std::size_t>(i)];
  }
  for (auto& v : w) v = static_cast<float>(v / total);
  return w;
}

// Edge-exclusive reflect padding of a contiguous 1-D slice.
inline std::vector<float> reflect_pad_1d(const std::vector<float>& x,
                                         int width) {
  const int n = static_cast<int>(x.size());
  check_reflect_width(width, n);
  std::vector<float> out(static_cast<std::size_t>(n + 2 * width));
  for (int i = -width; i < n + width; ++i)
    out[static_cast<std::size_t>(i + width)] =
        x[static_cast<std::size_t>(reflect_index(i, n))];
  return out;
}

inline std::vector<float> reflect_pad_2d(const std::vector<float>& x, int h,
                                         int w, int width) {
  check_reflect_width(width, h);
  check_reflect_width(width, w);
  const int hp = h + 2 * width, wp = w + 2 * width;
  std::vector<float> out(static_cast<std::size_t>(hp) * wp);
  pad_chw(x.data(), 1, h, w, PaddingMode::reflect(width), out.data());
  return out;
}

namespace detail {

// One k x k (or k) sliding window pass over a single padded plane.
struct WindowReducer {
  LpfKind kind;
  const std::vector<float>* weights;  // gaussian taps, flat window order
  mutable std::vector<float> scratch;

  float operator()(const float* vals, int count) const {
    switch (kind) {
      case LpfKind::mean: {
        float acc = 0.0f;
        for (int i = 0; i < count; ++i) acc += vals[i];
        return acc / static_cast<float>(count);
      }
      case LpfKind::gaussian: {
        float acc = 0.0f;
        const float* w = weights->data();
        for (int i = 0; i < count; ++i) acc += vals[i] * w[i];
        return acc;
      }
      case LpfKind::median: {
        scratch.assign(vals, vals + count);
        // k is odd everywhere, so this is the true median; for an even
        // count it would be the lower-middle order statistic.
        auto mid = scratch.begin() + (count - 1) / 2;
        std::nth_element(scratch.begin(), mid, scratch.end());
        return *mid;
      }
    }
    return 0.0f;
  }
};

inline void lpf_plane_2d(const float* src, int h, int w, int k,
                         const WindowReducer& reduce, float* dst) {
  const int p = (k - 1) / 2;
  const int hp = h + 2 * p, wp = w + 2 * p;
  std::vector<float> padded(static_cast<std::size_t>(hp) * wp);
  pad_chw(src, 1, h, w, PaddingMode::reflect(p), padded.data());
  std::vector<float> window(static_cast<std::size_t>(k) * k);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      int idx = 0;
      for (int ki = 0; ki < k; ++ki) {
        const float* row =
            padded.data() + static_cast<std::int64_t>(i + ki) * wp + j;
        for (int kj = 0; kj < k; ++kj) window[static_cast<std::size_t>(idx++)] = row[kj];
      }
      dst[static_cast<std::int64_t>(i) * w + j] =
          reduce(window.data(), k * k);
    }
}

// 1-D pass along a strided axis (sequence dimension of BxNxC features).
inline void lpf_line_1d(const float* src, int n, std::int64_t stride, int k,
                        const WindowReducer& reduce, float* dst) {
  const int p = (k - 1) / 2;
  std::vector<float> line(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    line[static_cast<std::size_t>(i)] = src[static_cast<std::int64_t>(i) * stride];
  std::vector<float> padded = reflect_pad_1d(line, p);
  std::vector<float> window(static_cast<std::size_t>(k));
  for (int i = 0; i < n; ++i) {
    for (int ki = 0; ki < k; ++ki)
      window[static_cast<std::size_t>(ki)] =
          padded[static_cast<std::size_t>(i + ki)];
    dst[static_cast<std::int64_t>(i) * stride] = reduce(window.data(), k);
  }
}

}  // namespace detail

// Channel-wise low-pass filter. Layout is BxCxHxW for two_d specs and BxNxC
// for one_d specs. The result never carries gradient history.
inline Tensor apply_lpf(const Tensor& h, const FilterSpec& spec) {
  spec.validate();
  const int k = spec.kernel_size;
  std::vector<float> weights1d, weights2d;
  if (spec.kind == LpfKind::gaussian) {
    weights1d = gaussian_kernel(k, spec.sigma);
    weights2d.resize(static_cast<std::size_t>(k) * k);
    double total = 0.0;
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) {
        const float v = weights1d[static_cast<std::size_t>(i)] *
                        weights1d[static_cast<std::size_t>(j)];
        weights2d[static_cast<std::size_t>(i * k + j)] = v;
        total += v;
      }
    for (auto& v : weights2d) v = static_cast<float>(v / total);
  }

  Tensor out(h.shape());
  const float* src = h.data().data();
  float* dst = out.data().data();

  if (spec.dims == FilterDim::two_d) {
    if (h.ndim() != 4)
      throw ShapeError("2-D filter expects BxCxHxW features, got " +
                       shape_str(h.shape()));
    const int b = h.dim(0), c = h.dim(1), hh = h.dim(2), ww = h.dim(3);
    check_reflect_width((k - 1) / 2, hh);
    check_reflect_width((k - 1) / 2, ww);
    detail::WindowReducer reduce{spec.kind, &weights2d, {}};
    const std::int64_t plane = static_cast<std::int64_t>(hh) * ww;
    for (std::int64_t bc = 0; bc < static_cast<std::int64_t>(b) * c; ++bc)
      detail::lpf_plane_2d(src + bc * plane, hh, ww, k, reduce,
                           dst + bc * plane);
  } else {
    if (h.ndim() != 3)
      throw ShapeError("1-D filter expects BxNxC features, got " +
                       shape_str(h.shape()));
    const int b = h.dim(0), n = h.dim(1), c = h.dim(2);
    check_reflect_width((k - 1) / 2, n);
    detail::WindowReducer reduce{spec.kind, &weights1d, {}};
    for (int bb = 0; bb < b; ++bb)
      for (int cc = 0; cc < c; ++cc)
        detail::lpf_line_1d(
            src + static_cast<std::int64_t>(bb) * n * c + cc, n, c, k, reduce,
            dst + static_cast<std::int64_t>(bb) * n * c + cc);
  }
  return out;  // plain tensor: no node, no requires_grad
}

// h - detach(lpf(h)). Upstream gradients pass through unchanged because the
// low-pass branch never joins the graph.
inline Tensor edge_filter(const Tensor& h, const FilterSpec& spec) {
  return sub(h, apply_lpf(h, spec));
}

}  // namespace edgefilter
