#pragma once

// Dataset ingestion (IDX and CIFAR-10 binary), deterministic stratified
// subsetting, normalization, synthetic corruption generation, and the
// procedural shape/glyph datasets used by the desk-scale recipes.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "edgefilter/errors.hpp"
#include "edgefilter/padding.hpp"
#include "edgefilter/tensor.hpp"

namespace edgefilter {

struct Dataset {
  int channels = 1;
  int height = 28;
  int width = 28;
  std::vector<std::uint8_t> pixels;  // size() * channels * height * width
  std::vector<std::uint16_t> labels;
  std::string name;
  std::string split;

  std::size_t size() const { return labels.size(); }
  std::size_t image_bytes() const {
    return static_cast<std::size_t>(channels) * height * width;
  }
  const std::uint8_t* image(std::size_t i) const {
    return pixels.data() + i * image_bytes();
  }
};

// Float view ready for training: normalized pixels, int labels.
struct FloatDataset {
  int channels = 1;
  int height = 28;
  int width = 28;
  std::vector<float> pixels;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t image_floats() const {
    return static_cast<std::size_t>(channels) * height * width;
  }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ splitmix64(b));
}

inline std::uint32_t read_be_u32(std::istream& in, const std::string& path,
                                 std::size_t& offset) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (in.gcount() != 4)
    throw FormatError(path + ": truncated at byte offset " +
                      std::to_string(offset));
  offset += 4;
  return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
         (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

inline void write_be_u32(std::ostream& out, std::uint32_t v) {
  unsigned char buf[4] = {static_cast<unsigned char>(v >> 24),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<char*>(buf), 4);
}

}  // namespace detail

// --- IDX format ----------------------------------------------------------------

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

struct IdxImages {
  int count = 0, height = 0, width = 0;
  std::vector<std::uint8_t> pixels;
};

inline IdxImages load_idx_images(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path + ": cannot open");
  std::size_t offset = 0;
  const std::uint32_t magic = detail::read_be_u32(in, path, offset);
  if (magic != kIdxImagesMagic)
    throw FormatError(path + ": bad IDX image magic " + std::to_string(magic));
  IdxImages out;
  out.count = static_cast<int>(detail::read_be_u32(in, path, offset));
  out.height = static_cast<int>(detail::read_be_u32(in, path, offset));
  out.width = static_cast<int>(detail::read_be_u32(in, path, offset));
  const std::size_t want = static_cast<std::size_t>(out.count) * out.height *
                           out.width;
  out.pixels.resize(want);
  in.read(reinterpret_cast<char*>(out.pixels.data()),
          static_cast<std::streamsize>(want));
  if (static_cast<std::size_t>(in.gcount()) != want)
    throw FormatError(path + ": truncated at byte offset " +
                      std::to_string(offset + static_cast<std::size_t>(
                                                  std::max<std::streamsize>(
                                                      in.gcount(), 0))));
  return out;
}

inline std::vector<std::uint8_t> load_idx_labels(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path + ": cannot open");
  std::size_t offset = 0;
  const std::uint32_t magic = detail::read_be_u32(in, path, offset);
  if (magic != kIdxLabelsMagic)
    throw FormatError(path + ": bad IDX label magic " + std::to_string(magic));
  const std::uint32_t count = detail::read_be_u32(in, path, offset);
  std::vector<std::uint8_t> labels(count);
  in.read(reinterpret_cast<char*>(labels.data()), count);
  if (static_cast<std::size_t>(in.gcount()) != count)
    throw FormatError(path + ": truncated at byte offset " +
                      std::to_string(offset + static_cast<std::size_t>(
                                                  std::max<std::streamsize>(
                                                      in.gcount(), 0))));
  return labels;
}

inline void write_idx_images(const std::string& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(path + ": cannot open for writing");
  detail::write_be_u32(out, kIdxImagesMagic);
  detail::write_be_u32(out, static_cast<std::uint32_t>(ds.size()));
  detail::write_be_u32(out, static_cast<std::uint32_t>(ds.height));
  detail::write_be_u32(out, static_cast<std::uint32_t>(ds.width));
  out.write(reinterpret_cast<const char*>(ds.pixels.data()),
            static_cast<std::streamsize>(ds.pixels.size()));
}

inline void write_idx_labels(const std::string& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(path + ": cannot open for writing");
  detail::write_be_u32(out, kIdxLabelsMagic);
  detail::write_be_u32(out, static_cast<std::uint32_t>(ds.size()));
  for (std::uint16_t l : ds.labels) {
    const char b = static_cast<char>(l);
    out.write(&b, 1);
  }
}

// IDX images are single-channel HxW grids.
inline Dataset load_idx_dataset(const std::string& images_path,
                                const std::string& labels_path,
                                const std::string& name = "idx") {
  IdxImages img = load_idx_images(images_path);
  auto labels = load_idx_labels(labels_path);
  if (static_cast<int>(labels.size()) != img.count)
    throw DataError(images_path + ": image count " +
                    std::to_string(img.count) + " != label count " +
                    std::to_string(labels.size()));
  Dataset ds;
  ds.channels = 1;
  ds.height = img.height;
  ds.width = img.width;
  ds.pixels = std::move(img.pixels);
  ds.labels.assign(labels.begin(), labels.end());
  ds.name = name;
  return ds;
}

// --- CIFAR-10 binary -------------------------------------------------------------

// 3073-byte records: one label byte then 3x32x32 plane-ordered pixels.
inline Dataset load_cifar10_bin(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path + ": cannot open");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  constexpr std::size_t kRecord = 3073;
  if (bytes.size() % kRecord != 0)
    throw FormatError(path + ": size " + std::to_string(bytes.size()) +
                      " is not a multiple of 3073");
  Dataset ds;
  ds.channels = 3;
  ds.height = 32;
  ds.width = 32;
  ds.name = "cifar10";
  const std::size_t n = bytes.size() / kRecord;
  ds.pixels.resize(n * 3072);
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto label = static_cast<std::uint8_t>(bytes[i * kRecord]);
    if (label >= 10)
      throw DataError(path + ": record " + std::to_string(i) + " label " +
                      std::to_string(label) + " is not a CIFAR-10 class");
    ds.labels[i] = label;
    std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(i * kRecord + 1),
                3072, ds.pixels.begin() + static_cast<std::ptrdiff_t>(i * 3072));
  }
  return ds;
}

// --- corruption ------------------------------------------------------------------

enum class CorruptionKind {
  gaussian_noise,
  impulse_noise,
  box_blur,
  contrast,
  brightness
};

inline const char* to_string(CorruptionKind k) {
  switch (k) {
    case CorruptionKind::gaussian_noise: return "gaussian_noise";
    case CorruptionKind::impulse_noise: return "impulse_noise";
    case CorruptionKind::box_blur: return "box_blur";
    case CorruptionKind::contrast: return "contrast";
    case CorruptionKind::brightness: return "brightness";
  }
  return "?";
}

inline CorruptionKind corruption_kind_from_string(const std::string& s) {
  if (s == "gaussian_noise") return CorruptionKind::gaussian_noise;
  if (s == "impulse_noise") return CorruptionKind::impulse_noise;
  if (s == "box_blur") return CorruptionKind::box_blur;
  if (s == "contrast") return CorruptionKind::contrast;
  if (s == "brightness") return CorruptionKind::brightness;
  throw ConfigError("unknown corruption kind '" + s + "'");
}

constexpr std::array<CorruptionKind, 5> kAllCorruptions = {
    CorruptionKind::gaussian_noise, CorruptionKind::impulse_noise,
    CorruptionKind::box_blur, CorruptionKind::contrast,
    CorruptionKind::brightness};

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::gaussian_noise;
  int severity = 5;

  void validate() const {
    if (severity < 1 || severity > 5)
      throw ConfigError("corruption severity must lie in [1,5], got " +
                        std::to_string(severity));
  }
};

namespace detail {

// Severity tables, index 0 <-> severity 1.
constexpr float kGaussianSigma[5] = {8.0f / 255.0f, 16.0f / 255.0f,
                                     24.0f / 255.0f, 32.0f / 255.0f,
                                     40.0f / 255.0f};
constexpr float kImpulseProb[5] = {0.02f, 0.04f, 0.07f, 0.10f, 0.15f};
constexpr int kBlurKernel[5] = {3, 3, 5, 5, 7};
constexpr int kBlurPasses[5] = {1, 2, 1, 2, 2};
constexpr float kContrastFactor[5] = {0.75f, 0.6f, 0.45f, 0.3f, 0.2f};
constexpr float kBrightnessShift[5] = {0.05f, 0.1f, 0.15f, 0.2f, 0.3f};

inline std::uint8_t clamp_u8(float v) {
  return static_cast<std::uint8_t>(std::clamp(v, 0.0f, 255.0f) + 0.5f);
}

}  // namespace detail

inline std::vector<std::uint8_t> corrupt_image(const std::uint8_t* img, int c,
                                               int h, int w,
                                               const CorruptionSpec& spec,
                                               std::uint64_t seed) {
  spec.validate();
  const int sev = spec.severity - 1;
  const std::size_t n = static_cast<std::size_t>(c) * h * w;
  std::vector<std::uint8_t> out(n);
  std::mt19937_64 rng(seed);
  switch (spec.kind) {
    case CorruptionKind::gaussian_noise: {
      std::normal_distribution<float> noise(0.0f, detail::kGaussianSigma[sev]);
      for (std::size_t i = 0; i < n; ++i)
        out[i] = detail::clamp_u8(static_cast<float>(img[i]) +
                                  255.0f * noise(rng));
      break;
    }
    case CorruptionKind::impulse_noise: {
      // salt and pepper with equal probability, applied per pixel location
      std::copy_n(img, n, out.begin());
      std::uniform_real_distribution<float> u(0.0f, 1.0f);
      const float p = detail::kImpulseProb[sev];
      for (int i = 0; i < h * w; ++i) {
        const float r = u(rng);
        if (r < p) {
          const std::uint8_t v = r < p * 0.5f ? 255 : 0;
          for (int cc = 0; cc < c; ++cc)
            out[static_cast<std::size_t>(cc) * h * w + i] = v;
        }
      }
      break;
    }
    case CorruptionKind::box_blur: {
      const int k = detail::kBlurKernel[sev];
      const int passes = detail::kBlurPasses[sev];
      const int p = (k - 1) / 2;
      std::vector<float> cur(n), next(n);
      for (std::size_t i = 0; i < n; ++i)
        cur[i] = static_cast<float>(img[i]) / 255.0f;
      const int hp = h + 2 * p, wp = w + 2 * p;
      std::vector<float> padded(static_cast<std::size_t>(hp) * wp);
      for (int pass = 0; pass < passes; ++pass) {
        for (int cc = 0; cc < c; ++cc) {
          pad_chw(cur.data() + static_cast<std::size_t>(cc) * h * w, 1, h, w,
                  PaddingMode::reflect(p), padded.data());
          for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) {
              float acc = 0.0f;
              for (int ki = 0; ki < k; ++ki)
                for (int kj = 0; kj < k; ++kj)
                  acc += padded[static_cast<std::size_t>(i + ki) * wp + j + kj];
              next[static_cast<std::size_t>(cc) * h * w + i * w + j] =
                  acc / static_cast<float>(k * k);
            }
        }
        std::swap(cur, next);
      }
      for (std::size_t i = 0; i < n; ++i)
        out[i] = detail::clamp_u8(cur[i] * 255.0f);
      break;
    }
    case CorruptionKind::contrast: {
      const float f = detail::kContrastFactor[sev];
      for (std::size_t i = 0; i < n; ++i)
        out[i] = detail::clamp_u8(128.0f +
                                  f * (static_cast<float>(img[i]) - 128.0f));
      break;
    }
    case CorruptionKind::brightness: {
      const float shift = 255.0f * detail::kBrightnessShift[sev];
      for (std::size_t i = 0; i < n; ++i)
        out[i] = detail::clamp_u8(static_cast<float>(img[i]) + shift);
      break;
    }
  }
  return out;
}

inline Dataset corrupt_dataset(const Dataset& ds, const CorruptionSpec& spec,
                               std::uint64_t seed) {
  spec.validate();
  Dataset out = ds;
  out.name = ds.name + "-" + to_string(spec.kind) + "-s" +
             std::to_string(spec.severity);
  const std::size_t stride = ds.image_bytes();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const std::uint64_t iseed = detail::mix_seed(
        detail::mix_seed(seed, static_cast<std::uint64_t>(spec.kind) * 8 +
                                   static_cast<std::uint64_t>(spec.severity)),
        i);
    auto img = corrupt_image(ds.image(i), ds.channels, ds.height, ds.width,
                             spec, iseed);
    std::copy(img.begin(), img.end(),
              out.pixels.begin() + static_cast<std::ptrdiff_t>(i * stride));
  }
  return out;
}

// Cache filename contract: {dataset}-{kind}-s{severity}.idx
inline std::string corrupted_cache_name(const std::string& dataset,
                                        const CorruptionSpec& spec) {
  return dataset + "-" + to_string(spec.kind) + "-s" +
         std::to_string(spec.severity) + ".idx";
}

// --- subset / normalize -------------------------------------------------------

// Class-stratified deterministic sample; per-class counts differ by at most
// one while classes remain available. The returned order is shuffled.
inline Dataset subset(const Dataset& ds, std::size_t n, std::uint64_t seed) {
  if (n > ds.size())
    throw DataError("subset size " + std::to_string(n) +
                    " exceeds dataset size " + std::to_string(ds.size()));
  int max_label = 0;
  for (auto l : ds.labels) max_label = std::max(max_label, static_cast<int>(l));
  std::vector<std::vector<std::size_t>> per_class(
      static_cast<std::size_t>(max_label) + 1);
  for (std::size_t i = 0; i < ds.size(); ++i)
    per_class[ds.labels[i]].push_back(i);
  std::mt19937_64 rng(detail::mix_seed(seed, 0xDA7A));
  for (auto& cls : per_class) std::shuffle(cls.begin(), cls.end(), rng);

  std::vector<std::size_t> chosen;
  chosen.reserve(n);
  std::size_t round = 0;
  while (chosen.size() < n) {
    bool any = false;
    for (auto& cls : per_class) {
      if (round < cls.size()) {
        any = true;
        chosen.push_back(cls[round]);
        if (chosen.size() == n) break;
      }
    }
    if (!any) break;
    ++round;
  }
  std::shuffle(chosen.begin(), chosen.end(), rng);

  Dataset out;
  out.channels = ds.channels;
  out.height = ds.height;
  out.width = ds.width;
  out.name = ds.name;
  out.split = ds.split;
  const std::size_t stride = ds.image_bytes();
  out.pixels.resize(chosen.size() * stride);
  out.labels.resize(chosen.size());
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    std::copy_n(ds.image(chosen[i]), stride,
                out.pixels.begin() + static_cast<std::ptrdiff_t>(i * stride));
    out.labels[i] = ds.labels[chosen[i]];
  }
  return out;
}

// Per-channel (x/255 - mean) / std.
inline FloatDataset normalize(const Dataset& ds, float mean, float std_dev) {
  FloatDataset out;
  out.channels = ds.channels;
  out.height = ds.height;
  out.width = ds.width;
  out.pixels.resize(ds.pixels.size());
  out.labels.assign(ds.labels.begin(), ds.labels.end());
  const float inv = 1.0f / std_dev;
  for (std::size_t i = 0; i < ds.pixels.size(); ++i)
    out.pixels[i] =
        (static_cast<float>(ds.pixels[i]) / 255.0f - mean) * inv;
  return out;
}

// Builds the normalized batch x[b] = dataset image indices[b].
inline Tensor make_batch(const FloatDataset& ds,
                         const std::vector<std::size_t>& indices,
                         std::vector<int>* labels_out = nullptr) {
  const std::size_t stride = ds.image_floats();
  Tensor x({static_cast<int>(indices.size()), ds.channels, ds.height,
            ds.width});
  if (labels_out) labels_out->resize(indices.size());
  for (std::size_t b = 0; b < indices.size(); ++b) {
    std::copy_n(ds.pixels.begin() +
                    static_cast<std::ptrdiff_t>(indices[b] * stride),
                stride, x.data().begin() + static_cast<std::ptrdiff_t>(b * stride));
    if (labels_out) (*labels_out)[b] = ds.labels[indices[b]];
  }
  return x;
}

// --- procedural datasets --------------------------------------------------------

enum class SyntheticFamily { shapes, glyphs };

struct SyntheticSpec {
  SyntheticFamily family = SyntheticFamily::shapes;
  int count = 1000;
  std::uint64_t seed = 1;
  int height = 28;
  int width = 28;
};

namespace detail {

// Paints one class-conditional binary mask in shape-local coordinates.
inline bool shape_mask(SyntheticFamily family, int label, float dx, float dy,
                       float s, int px, int py, int stripe_period) {
  const float ax = std::fabs(dx), ay = std::fabs(dy);
  const float r = std::sqrt(dx * dx + dy * dy);
  const bool inside_box = ax <= 0.8f * s && ay <= 0.8f * s;
  if (family == SyntheticFamily::shapes) {
    switch (label) {
      case 0: return r <= 0.62f * s;                                   // disk
      case 1: return r >= 0.40f * s && r <= 0.68f * s;                 // ring
      case 2: return ax <= 0.55f * s && ay <= 0.55f * s;               // square
      case 3: {                                                        // frame
        const float m = std::max(ax, ay);
        return m >= 0.36f * s && m <= 0.62f * s;
      }
      case 4:                                                          // triangle
        return dy >= -0.55f * s && dy <= 0.55f * s &&
               ax <= 0.6f * (dy + 0.55f * s);
      case 5:                                                          // plus
        return (ax <= 0.18f * s && ay <= 0.72f * s) ||
               (ay <= 0.18f * s && ax <= 0.72f * s);
      case 6: return inside_box && (py % stripe_period) * 2 < stripe_period;
      case 7: return inside_box && (px % stripe_period) * 2 < stripe_period;
      case 8:
        return inside_box &&
               ((px + py) % stripe_period) * 2 < stripe_period;
      case 9:
        return inside_box &&
               (((px / (stripe_period / 2 + 1)) ^ (py / (stripe_period / 2 + 1))) & 1) == 0;
      default: return false;
    }
  }
  // glyphs: stroke-based characters on the same canvas
  const float t = 0.16f * s;  // stroke half-thickness
  switch (label) {
    case 0: return std::fabs(ax - ay) <= t && r <= 0.75f * s;          // X
    case 1: return (ax <= t && dy >= -0.7f * s && dy <= 0.7f * s) ||   // L
                   (ay >= 0.7f * s - 2 * t && ay <= 0.7f * s && dx >= 0 &&
                    dx <= 0.6f * s && dy > 0);
    case 2: return (dy <= -0.7f * s + 2 * t && dy >= -0.7f * s &&      // T
                    ax <= 0.6f * s) ||
                   (ax <= t && dy >= -0.7f * s);
    case 3: return ((ax >= 0.5f * s - t && ax <= 0.5f * s + t) &&      // H
                    ay <= 0.7f * s) ||
                   (ay <= t && ax <= 0.5f * s);
    case 4: return ((ax >= 0.5f * s - t && ax <= 0.5f * s + t) &&      // U
                    dy <= 0.55f * s) ||
                   (dy >= 0.55f * s - 2 * t && dy <= 0.55f * s &&
                    ax <= 0.5f * s);
    case 5: return std::fabs(ax + ay - 0.6f * s) <= t;                 // diamond
    case 6: return std::min(std::hypot(dx - 0.35f * s, dy),            // dots
                            std::hypot(dx + 0.35f * s, dy)) <= 0.22f * s;
    case 7: return (ay <= t) || (ay >= 0.45f * s - t && ay <= 0.45f * s + t);
    case 8: return (std::fabs(dy - dx * 0.0f) <= t && ax <= 0.6f * s &&  // Z
                    false) ||
                   ((dy <= -0.6f * s + 2 * t && dy >= -0.6f * s) ||
                    (dy >= 0.6f * s - 2 * t && dy <= 0.6f * s)) &&
                       ax <= 0.6f * s ||
                   (std::fabs(dx + dy) <= t && ax <= 0.6f * s &&
                    ay <= 0.6f * s);
    case 9: return (ax <= t && ay <= 0.7f * s) ||                       // +dot
                   (r <= 0.25f * s);
    default: return false;
  }
}

}  // namespace detail

// Deterministic procedural image classification set. Each sample composes a
// smooth background gradient (nuisance), one of ten class-defining masks
// with jittered placement and intensity, and mild pixel noise.
inline Dataset make_synthetic(const SyntheticSpec& spec) {
  Dataset ds;
  ds.channels = 1;
  ds.height = spec.height;
  ds.width = spec.width;
  ds.name = spec.family == SyntheticFamily::shapes ? "shapes" : "glyphs";
  ds.pixels.resize(static_cast<std::size_t>(spec.count) * spec.height *
                   spec.width);
  ds.labels.resize(static_cast<std::size_t>(spec.count));
  const int h = spec.height, w = spec.width;
  for (int i = 0; i < spec.count; ++i) {
    const int label = i % 10;
    ds.labels[static_cast<std::size_t>(i)] = static_cast<std::uint16_t>(label);
    std::mt19937_64 rng(detail::mix_seed(spec.seed, static_cast<std::uint64_t>(i)));
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    const float b0 = 0.25f + 0.35f * u(rng);
    const float gx = (u(rng) - 0.5f) * 0.5f;
    const float gy = (u(rng) - 0.5f) * 0.5f;
    const float amp = 0.35f + 0.35f * u(rng);
    const float cx = w / 2.0f + (u(rng) - 0.5f) * 6.0f;
    const float cy = h / 2.0f + (u(rng) - 0.5f) * 6.0f;
    const float s = 0.22f * h + 0.12f * h * u(rng);
    const int stripe_period = 3 + static_cast<int>(u(rng) * 2.0f);
    std::normal_distribution<float> noise(0.0f, 0.03f);
    std::uint8_t* img =
        ds.pixels.data() + static_cast<std::size_t>(i) * h * w;
    for (int py = 0; py < h; ++py)
      for (int px = 0; px < w; ++px) {
        float v = b0 + gx * (static_cast<float>(px) / w - 0.5f) +
                  gy * (static_cast<float>(py) / h - 0.5f);
        if (detail::shape_mask(spec.family, label, static_cast<float>(px) - cx,
                               static_cast<float>(py) - cy, s, px, py,
                               stripe_period))
          v += amp;
        v += noise(rng);
        img[py * w + px] = detail::clamp_u8(v * 255.0f);
      }
  }
  return ds;
}

}  // namespace edgefilter
