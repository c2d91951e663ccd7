#pragma once

// Measurement instruments: activation density, naive DFT amplitude spectra
// of the filter's input/output, and multi-seed statistics.

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "edgefilter/data.hpp"
#include "edgefilter/errors.hpp"
#include "edgefilter/nn.hpp"

namespace edgefilter {

// Fraction of entries strictly above tau.
inline double density(const std::vector<float>& x, float tau = 1e-6f) {
  if (x.empty()) return 0.0;
  std::size_t hits = 0;
  for (float v : x)
    if (v > tau) ++hits;
  return static_cast<double>(hits) / static_cast<double>(x.size());
}

inline double density(const Tensor& x, float tau = 1e-6f) {
  return density(x.data(), tau);
}

// |DFT2(x)| with the zero-frequency bin shifted to (h/2, w/2), floor
// convention. Direct O((HW)^2) evaluation in double precision; feature maps
// here are small enough that an FFT would buy nothing but radix headaches.
inline std::vector<double> dft2_amplitude(const float* x, int h, int w) {
  std::vector<double> out(static_cast<std::size_t>(h) * w);
  const double two_pi = 2.0 * M_PI;
  for (int fi = 0; fi < h; ++fi)
    for (int fj = 0; fj < w; ++fj) {
      double re = 0.0, im = 0.0;
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
          const double phase =
              two_pi * (static_cast<double>(fi) * i / h +
                        static_cast<double>(fj) * j / w);
          const double v = x[static_cast<std::size_t>(i) * w + j];
          re += v * std::cos(phase);
          im -= v * std::sin(phase);
        }
      const int ci = (fi + h / 2) % h;
      const int cj = (fj + w / 2) % w;
      out[static_cast<std::size_t>(ci) * w + cj] = std::hypot(re, im);
    }
  return out;
}

inline std::vector<double> dft2_amplitude(const std::vector<float>& x, int h,
                                          int w) {
  return dft2_amplitude(x.data(), h, w);
}

// 1-D analog over a strided line (sequence axis of BxNxC features).
inline std::vector<double> dft1_amplitude(const float* x, int n,
                                          std::int64_t stride = 1) {
  std::vector<double> out(static_cast<std::size_t>(n));
  const double two_pi = 2.0 * M_PI;
  for (int f = 0; f < n; ++f) {
    double re = 0.0, im = 0.0;
    for (int i = 0; i < n; ++i) {
      const double phase = two_pi * static_cast<double>(f) * i / n;
      const double v = x[static_cast<std::int64_t>(i) * stride];
      re += v * std::cos(phase);
      im -= v * std::sin(phase);
    }
    out[static_cast<std::size_t>((f + n / 2) % n)] = std::hypot(re, im);
  }
  return out;
}

struct SpectrumProfile {
  std::vector<double> input_amp;   // centered, DC at dc_index
  std::vector<double> output_amp;
  int dc_index = 0;
};

// Mean DFT amplitude of the filter input and output over a validation set,
// averaged per channel first, then the center row extracted.
inline SpectrumProfile spectrum_profile(Model& model, const FloatDataset& val,
                                        int batch_size = 128) {
  const auto& cfg = model.config();
  if (!cfg.filter)
    throw ConfigError("spectrum_profile requires a model with a filter");
  if (cfg.filter->dims != FilterDim::two_d)
    throw ConfigError("spectrum_profile requires a 2-D filter; use "
                      "spectrum_profile_1d for sequence models");

  std::vector<double> in_sum, out_sum;
  int h = 0, w = 0;
  std::size_t planes = 0;
  for (std::size_t start = 0; start < val.size();
       start += static_cast<std::size_t>(batch_size)) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start;
         i < std::min(val.size(), start + static_cast<std::size_t>(batch_size));
         ++i)
      idx.push_back(i);
    Tensor x = make_batch(val, idx);
    Capture cap;
    cap.want_filter_io = true;
    model.forward(x, Mode::eval, &cap);
    const Tensor& fin = cap.filter_input;
    const Tensor& fout = cap.filter_output;
    const int b = fin.dim(0), c = fin.dim(1);
    h = fin.dim(2);
    w = fin.dim(3);
    if (in_sum.empty()) {
      in_sum.assign(static_cast<std::size_t>(h) * w, 0.0);
      out_sum.assign(static_cast<std::size_t>(h) * w, 0.0);
    }
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    for (int bb = 0; bb < b; ++bb)
      for (int cc = 0; cc < c; ++cc) {
        const std::int64_t off =
            (static_cast<std::int64_t>(bb) * c + cc) * plane;
        auto ia = dft2_amplitude(fin.data().data() + off, h, w);
        auto oa = dft2_amplitude(fout.data().data() + off, h, w);
        for (std::size_t i = 0; i < ia.size(); ++i) {
          in_sum[i] += ia[i];
          out_sum[i] += oa[i];
        }
        ++planes;
      }
  }
  if (planes == 0) throw DataError("spectrum_profile: empty validation set");

  SpectrumProfile prof;
  prof.dc_index = w / 2;
  prof.input_amp.resize(static_cast<std::size_t>(w));
  prof.output_amp.resize(static_cast<std::size_t>(w));
  const int center_row = h / 2;
  for (int j = 0; j < w; ++j) {
    prof.input_amp[static_cast<std::size_t>(j)] =
        in_sum[static_cast<std::size_t>(center_row) * w + j] /
        static_cast<double>(planes);
    prof.output_amp[static_cast<std::size_t>(j)] =
        out_sum[static_cast<std::size_t>(center_row) * w + j] /
        static_cast<double>(planes);
  }
  return prof;
}

inline SpectrumProfile spectrum_profile_1d(Model& model,
                                           const FloatDataset& val,
                                           int batch_size = 128) {
  const auto& cfg = model.config();
  if (!cfg.filter || cfg.filter->dims != FilterDim::one_d)
    throw ConfigError("spectrum_profile_1d requires a model with a 1-D "
                      "filter");
  std::vector<double> in_sum, out_sum;
  int n = 0;
  std::size_t lines = 0;
  for (std::size_t start = 0; start < val.size();
       start += static_cast<std::size_t>(batch_size)) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start;
         i < std::min(val.size(), start + static_cast<std::size_t>(batch_size));
         ++i)
      idx.push_back(i);
    Tensor x = make_batch(val, idx);
    Capture cap;
    cap.want_filter_io = true;
    model.forward(x, Mode::eval, &cap);
    const Tensor& fin = cap.filter_input;   // B x N x C
    const Tensor& fout = cap.filter_output;
    const int b = fin.dim(0), c = fin.dim(2);
    n = fin.dim(1);
    if (in_sum.empty()) {
      in_sum.assign(static_cast<std::size_t>(n), 0.0);
      out_sum.assign(static_cast<std::size_t>(n), 0.0);
    }
    for (int bb = 0; bb < b; ++bb)
      for (int cc = 0; cc < c; ++cc) {
        const float* ip =
            fin.data().data() + static_cast<std::int64_t>(bb) * n * c + cc;
        const float* op =
            fout.data().data() + static_cast<std::int64_t>(bb) * n * c + cc;
        auto ia = dft1_amplitude(ip, n, c);
        auto oa = dft1_amplitude(op, n, c);
        for (std::size_t i = 0; i < ia.size(); ++i) {
          in_sum[i] += ia[i];
          out_sum[i] += oa[i];
        }
        ++lines;
      }
  }
  if (lines == 0) throw DataError("spectrum_profile_1d: empty validation set");
  SpectrumProfile prof;
  prof.dc_index = n / 2;
  prof.input_amp.resize(static_cast<std::size_t>(n));
  prof.output_amp.resize(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    prof.input_amp[static_cast<std::size_t>(j)] =
        in_sum[static_cast<std::size_t>(j)] / static_cast<double>(lines);
    prof.output_amp[static_cast<std::size_t>(j)] =
        out_sum[static_cast<std::size_t>(j)] / static_cast<double>(lines);
  }
  return prof;
}

// --- multi-seed statistics ------------------------------------------------------

struct SeedStats {
  double mean = 0.0;
  double sd = 0.0;  // unbiased, n-1 denominator
  int n = 0;
};

inline SeedStats seed_stats(const std::vector<double>& values) {
  if (values.size() < 2)
    throw DataError("seed_stats needs at least 2 seeds, got " +
                    std::to_string(values.size()));
  SeedStats s;
  s.n = static_cast<int>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) /
           static_cast<double>(s.n);
  double acc = 0.0;
  for (double v : values) acc += (v - s.mean) * (v - s.mean);
  s.sd = std::sqrt(acc / static_cast<double>(s.n - 1));
  return s;
}

// Performance gain expressed in baseline standard deviations.
inline double sigma_gain(double filter_mean, const SeedStats& baseline) {
  if (baseline.sd == 0.0)
    throw DegenerateSD("baseline standard deviation is zero; sigma gain is "
                       "undefined");
  return (filter_mean - baseline.mean) / baseline.sd;
}

}  // namespace edgefilter
