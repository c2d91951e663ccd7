#pragma once

// Batch normalization over BxCxHxW and a per-token standardization for
// BxNxC sequence features. Three forward modes:
//   train       - batch statistics, running buffers updated
//   eval        - running statistics, nothing mutated
//   batch_stats - batch statistics, running buffers untouched
// The last one is what turns plain evaluation into the NORM adaptation.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "edgefilter/errors.hpp"
#include "edgefilter/tensor.hpp"

namespace edgefilter {

enum class Mode { train, eval, batch_stats };

struct BNState {
  Tensor gamma;  // [C], learnable
  Tensor beta;   // [C], learnable
  std::vector<float> running_mean;
  std::vector<float> running_var;
  float eps = 1e-5f;
  float momentum = 0.1f;

  explicit BNState(int channels = 0)
      : gamma(Tensor::full({channels}, 1.0f)),
        beta(Tensor({channels})),
        running_mean(static_cast<std::size_t>(channels), 0.0f),
        running_var(static_cast<std::size_t>(channels), 1.0f) {
    gamma.set_requires_grad(true);
    beta.set_requires_grad(true);
  }

  int channels() const { return static_cast<int>(running_mean.size()); }
};

inline Tensor batchnorm2d(const Tensor& x, BNState& state, Mode mode) {
  if (x.ndim() != 4)
    throw ShapeError("batchnorm2d expects BxCxHxW, got " +
                     shape_str(x.shape()));
  const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (c != state.channels())
    throw ShapeError("batchnorm2d channel mismatch: input has " +
                     std::to_string(c) + " channels, state has " +
                     std::to_string(state.channels()));
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  const std::int64_t count = static_cast<std::int64_t>(b) * plane;
  const float eps = state.eps;

  auto xi = x.impl();
  auto gi = state.gamma.impl();
  auto bi = state.beta.impl();
  const float* xv = xi->data->data();

  // Per-channel statistics for this forward pass.
  std::vector<float> mean(static_cast<std::size_t>(c));
  std::vector<float> var(static_cast<std::size_t>(c));
  const bool use_batch = mode != Mode::eval;
  if (use_batch) {
    if (count == 1)
      emit_warning("batchnorm2d: single-element batch statistics are "
                   "degenerate; variance is eps-guarded");
    for (int cc = 0; cc < c; ++cc) {
      float m = 0.0f;
      for (int bb = 0; bb < b; ++bb) {
        const float* src =
            xv + (static_cast<std::int64_t>(bb) * c + cc) * plane;
        for (std::int64_t i = 0; i < plane; ++i) m += src[i];
      }
      m /= static_cast<float>(count);
      float v = 0.0f;
      for (int bb = 0; bb < b; ++bb) {
        const float* src =
            xv + (static_cast<std::int64_t>(bb) * c + cc) * plane;
        for (std::int64_t i = 0; i < plane; ++i) {
          const float d = src[i] - m;
          v += d * d;
        }
      }
      v /= static_cast<float>(count);
      mean[static_cast<std::size_t>(cc)] = m;
      var[static_cast<std::size_t>(cc)] = v;
    }
    if (mode == Mode::train) {
      const float mom = state.momentum;
      const float unbias =
          count > 1 ? static_cast<float>(count) / static_cast<float>(count - 1)
                    : 1.0f;
      for (int cc = 0; cc < c; ++cc) {
        auto s = static_cast<std::size_t>(cc);
        state.running_mean[s] = (1.0f - mom) * state.running_mean[s] +
                                mom * mean[s];
        state.running_var[s] =
            (1.0f - mom) * state.running_var[s] + mom * var[s] * unbias;
      }
    }
  } else {
    mean = state.running_mean;
    var = state.running_var;
  }

  std::vector<float> inv_std(static_cast<std::size_t>(c));
  for (int cc = 0; cc < c; ++cc)
    inv_std[static_cast<std::size_t>(cc)] =
        1.0f / std::sqrt(var[static_cast<std::size_t>(cc)] + eps);

  Tensor out = detail::make_output(
      x.shape(), {xi, gi, bi},
      [xi, gi, bi, b, c, plane, count, mean, inv_std,
       use_batch](detail::TensorImpl& o) {
        const float* g = o.grad.data();
        const float* xv2 = xi->data->data();
        const float* gam = gi->data->data();
        float* dgam = gi->requires_grad ? gi->grad_buf() : nullptr;
        float* dbet = bi->requires_grad ? bi->grad_buf() : nullptr;
        float* dx = xi->requires_grad ? xi->grad_buf() : nullptr;
        for (int cc = 0; cc < c; ++cc) {
          const auto s = static_cast<std::size_t>(cc);
          const float m = mean[s], istd = inv_std[s];
          float sum_g = 0.0f, sum_gx = 0.0f;
          for (int bb = 0; bb < b; ++bb) {
            const std::int64_t off =
                (static_cast<std::int64_t>(bb) * c + cc) * plane;
            const float* gp = g + off;
            const float* xp = xv2 + off;
            for (std::int64_t i = 0; i < plane; ++i) {
              sum_g += gp[i];
              sum_gx += gp[i] * (xp[i] - m) * istd;
            }
          }
          if (dbet) dbet[cc] += sum_g;
          if (dgam) dgam[cc] += sum_gx;
          if (!dx) continue;
          const float gms = gam[cc] * istd;
          if (use_batch) {
            const float inv_n = 1.0f / static_cast<float>(count);
            for (int bb = 0; bb < b; ++bb) {
              const std::int64_t off =
                  (static_cast<std::int64_t>(bb) * c + cc) * plane;
              const float* gp = g + off;
              const float* xp = xv2 + off;
              float* dp = dx + off;
              for (std::int64_t i = 0; i < plane; ++i) {
                const float xhat = (xp[i] - m) * istd;
                dp[i] +=
                    gms * (gp[i] - inv_n * (sum_g + xhat * sum_gx));
              }
            }
          } else {
            for (int bb = 0; bb < b; ++bb) {
              const std::int64_t off =
                  (static_cast<std::int64_t>(bb) * c + cc) * plane;
              const float* gp = g + off;
              float* dp = dx + off;
              for (std::int64_t i = 0; i < plane; ++i) dp[i] += gms * gp[i];
            }
          }
        }
      });

  const float* gam = gi->data->data();
  const float* bet = bi->data->data();
  float* ov = out.data().data();
  for (int bb = 0; bb < b; ++bb)
    for (int cc = 0; cc < c; ++cc) {
      const auto s = static_cast<std::size_t>(cc);
      const std::int64_t off = (static_cast<std::int64_t>(bb) * c + cc) * plane;
      const float m = mean[s], istd = inv_std[s];
      const float gv = gam[cc], bv = bet[cc];
      const float* xp = xv + off;
      float* op = ov + off;
      for (std::int64_t i = 0; i < plane; ++i)
        op[i] = gv * (xp[i] - m) * istd + bv;
    }
  return out;
}

// Per-token standardization with a per-channel affine, for BxNxC features.
// Statistics are always taken over the channel axis of each token, so every
// mode behaves identically and there are no running buffers.
inline Tensor token_standardize(const Tensor& x, const Tensor& gamma,
                                const Tensor& beta, float eps = 1e-5f) {
  if (x.ndim() != 3)
    throw ShapeError("token_standardize expects BxNxC, got " +
                     shape_str(x.shape()));
  const int b = x.dim(0), n = x.dim(1), c = x.dim(2);
  if (gamma.numel() != c || beta.numel() != c)
    throw ShapeError("token_standardize affine size must equal channels");

  auto xi = x.impl();
  auto gi = gamma.impl();
  auto bi = beta.impl();
  const float* xv = xi->data->data();
  const std::int64_t tokens = static_cast<std::int64_t>(b) * n;

  std::vector<float> mean(static_cast<std::size_t>(tokens));
  std::vector<float> inv_std(static_cast<std::size_t>(tokens));
  for (std::int64_t t = 0; t < tokens; ++t) {
    const float* xp = xv + t * c;
    float m = 0.0f;
    for (int i = 0; i < c; ++i) m += xp[i];
    m /= static_cast<float>(c);
    float v = 0.0f;
    for (int i = 0; i < c; ++i) {
      const float d = xp[i] - m;
      v += d * d;
    }
    v /= static_cast<float>(c);
    mean[static_cast<std::size_t>(t)] = m;
    inv_std[static_cast<std::size_t>(t)] = 1.0f / std::sqrt(v + eps);
  }

  Tensor out = detail::make_output(
      x.shape(), {xi, gi, bi},
      [xi, gi, bi, tokens, c, mean, inv_std](detail::TensorImpl& o) {
        const float* g = o.grad.data();
        const float* xv2 = xi->data->data();
        const float* gam = gi->data->data();
        float* dgam = gi->requires_grad ? gi->grad_buf() : nullptr;
        float* dbet = bi->requires_grad ? bi->grad_buf() : nullptr;
        float* dx = xi->requires_grad ? xi->grad_buf() : nullptr;
        const float inv_c = 1.0f / static_cast<float>(c);
        for (std::int64_t t = 0; t < tokens; ++t) {
          const auto s = static_cast<std::size_t>(t);
          const float m = mean[s], istd = inv_std[s];
          const float* gp = g + t * c;
          const float* xp = xv2 + t * c;
          float sum_gg = 0.0f, sum_ggx = 0.0f;
          for (int i = 0; i < c; ++i) {
            const float xhat = (xp[i] - m) * istd;
            const float gg = gp[i] * gam[i];
            sum_gg += gg;
            sum_ggx += gg * xhat;
            if (dgam) dgam[i] += gp[i] * xhat;
            if (dbet) dbet[i] += gp[i];
          }
          if (!dx) continue;
          float* dp = dx + t * c;
          for (int i = 0; i < c; ++i) {
            const float xhat = (xp[i] - m) * istd;
            const float gg = gp[i] * gam[i];
            dp[i] += istd * (gg - inv_c * (sum_gg + xhat * sum_ggx));
          }
        }
      });

  const float* gam = gi->data->data();
  const float* bet = bi->data->data();
  float* ov = out.data().data();
  for (std::int64_t t = 0; t < tokens; ++t) {
    const auto s = static_cast<std::size_t>(t);
    const float m = mean[s], istd = inv_std[s];
    const float* xp = xv + t * c;
    float* op = ov + t * c;
    for (int i = 0; i < c; ++i) op[i] = gam[i] * (xp[i] - m) * istd + bet[i];
  }
  return out;
}

}  // namespace edgefilter
