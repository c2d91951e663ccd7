#pragma once

#include <string>
#include <vector>

#include "edgefilter/errors.hpp"

namespace edgefilter {

// Edge-exclusive mirror: [1,2,3,4] padded by 1 -> [2,1,2,3,4,3]. A length-1
// axis reflects onto its only element for any width.
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  if (i < 0) return -i;
  if (i >= n) return 2 * n - 2 - i;
  return i;
}

inline void check_reflect_width(int width, int n) {
  if (n != 1 && width >= n)
    throw ShapeError("reflect pad width " + std::to_string(width) +
                     " must be smaller than the axis size " +
                     std::to_string(n));
}

struct PaddingMode {
  enum class Kind { zero, reflect };
  Kind kind = Kind::zero;
  int width = 0;

  static PaddingMode zero(int w) { return {Kind::zero, w}; }
  static PaddingMode reflect(int w) { return {Kind::reflect, w}; }
};

// Pads one CxHxW plane stack into a preallocated Cx(H+2p)x(W+2p) buffer.
inline void pad_chw(const float* src, int c, int h, int w,
                    const PaddingMode& pad, float* dst) {
  const int p = pad.width;
  const int hp = h + 2 * p, wp = w + 2 * p;
  if (pad.kind == PaddingMode::Kind::reflect) {
    check_reflect_width(p, h);
    check_reflect_width(p, w);
  }
  for (int ci = 0; ci < c; ++ci) {
    const float* s = src + static_cast<long>(ci) * h * w;
    float* d = dst + static_cast<long>(ci) * hp * wp;
    for (int i = 0; i < hp; ++i) {
      const int si = i - p;
      for (int j = 0; j < wp; ++j) {
        const int sj = j - p;
        float v = 0.0f;
        if (pad.kind == PaddingMode::Kind::zero) {
          if (si >= 0 && si < h && sj >= 0 && sj < w)
            v = s[static_cast<long>(si) * w + sj];
        } else {
          v = s[static_cast<long>(reflect_index(si, h)) * w +
                reflect_index(sj, w)];
        }
        d[static_cast<long>(i) * wp + j] = v;
      }
    }
  }
}

// Scatter-adds gradients from a padded CxHpxWp buffer back onto CxHxW.
inline void unpad_chw_acc(const float* gpad, int c, int h, int w,
                          const PaddingMode& pad, float* gdst) {
  const int p = pad.width;
  const int hp = h + 2 * p, wp = w + 2 * p;
  for (int ci = 0; ci < c; ++ci) {
    const float* gp = gpad + static_cast<long>(ci) * hp * wp;
    float* gd = gdst + static_cast<long>(ci) * h * w;
    for (int i = 0; i < hp; ++i) {
      const int si = i - p;
      for (int j = 0; j < wp; ++j) {
        const int sj = j - p;
        if (pad.kind == PaddingMode::Kind::zero) {
          if (si >= 0 && si < h && sj >= 0 && sj < w)
            gd[static_cast<long>(si) * w + sj] +=
                gp[static_cast<long>(i) * wp + j];
        } else {
          gd[static_cast<long>(reflect_index(si, h)) * w +
             reflect_index(sj, w)] += gp[static_cast<long>(i) * wp + j];
        }
      }
    }
  }
}

}  // namespace edgefilter
