#include "edgefilter/data.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

using namespace edgefilter;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::path(::testing::TempDir()) / name).string();
}

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& b) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(b.data()),
            static_cast<std::streamsize>(b.size()));
}

std::vector<std::uint8_t> be32(std::uint32_t v) {
  return {static_cast<std::uint8_t>(v >> 24), static_cast<std::uint8_t>(v >> 16),
          static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v)};
}

void append(std::vector<std::uint8_t>& dst, const std::vector<std::uint8_t>& s) {
  dst.insert(dst.end(), s.begin(), s.end());
}

}  // namespace

TEST(Idx, HandcraftedFixtureParsesExactly) {
  // two 2x2 images with known bytes
  std::vector<std::uint8_t> img_bytes;
  append(img_bytes, be32(0x00000803));
  append(img_bytes, be32(2));
  append(img_bytes, be32(2));
  append(img_bytes, be32(2));
  append(img_bytes, {10, 20, 30, 40, 50, 60, 70, 80});
  const std::string ipath = temp_path("fixture-images.idx");
  write_bytes(ipath, img_bytes);

  std::vector<std::uint8_t> lbl_bytes;
  append(lbl_bytes, be32(0x00000801));
  append(lbl_bytes, be32(2));
  append(lbl_bytes, {3, 7});
  const std::string lpath = temp_path("fixture-labels.idx");
  write_bytes(lpath, lbl_bytes);

  Dataset ds = load_idx_dataset(ipath, lpath);
  EXPECT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.height, 2);
  EXPECT_EQ(ds.width, 2);
  EXPECT_EQ(ds.pixels,
            (std::vector<std::uint8_t>{10, 20, 30, 40, 50, 60, 70, 80}));
  EXPECT_EQ(ds.labels, (std::vector<std::uint16_t>{3, 7}));
}

TEST(Idx, EmptyFileIsFormatError) {
  const std::string path = temp_path("empty.idx");
  write_bytes(path, {});
  EXPECT_THROW(load_idx_images(path), FormatError);
}

TEST(Idx, BadMagicIsFormatError) {
  std::vector<std::uint8_t> bytes;
  append(bytes, be32(0x00000999));
  append(bytes, be32(0));
  append(bytes, be32(2));
  append(bytes, be32(2));
  const std::string path = temp_path("badmagic.idx");
  write_bytes(path, bytes);
  EXPECT_THROW(load_idx_images(path), FormatError);
}

TEST(Idx, TruncatedPayloadReportsOffset) {
  std::vector<std::uint8_t> bytes;
  append(bytes, be32(0x00000803));
  append(bytes, be32(1));
  append(bytes, be32(2));
  append(bytes, be32(2));
  append(bytes, {1, 2});  // 2 of 4 pixels
  const std::string path = temp_path("truncated.idx");
  write_bytes(path, bytes);
  try {
    load_idx_images(path);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("byte offset"), std::string::npos);
  }
}

TEST(Idx, CountMismatchIsDataError) {
  std::vector<std::uint8_t> img_bytes;
  append(img_bytes, be32(0x00000803));
  append(img_bytes, be32(1));
  append(img_bytes, be32(2));
  append(img_bytes, be32(2));
  append(img_bytes, {1, 2, 3, 4});
  const std::string ipath = temp_path("mismatch-images.idx");
  write_bytes(ipath, img_bytes);

  std::vector<std::uint8_t> lbl_bytes;
  append(lbl_bytes, be32(0x00000801));
  append(lbl_bytes, be32(2));
  append(lbl_bytes, {0, 1});
  const std::string lpath = temp_path("mismatch-labels.idx");
  write_bytes(lpath, lbl_bytes);

  EXPECT_THROW(load_idx_dataset(ipath, lpath), DataError);
}

TEST(Idx, WriteThenReadRoundTripsByteExactly) {
  SyntheticSpec spec;
  spec.count = 20;
  spec.seed = 5;
  Dataset ds = make_synthetic(spec);
  const std::string ipath = temp_path("rt-images.idx");
  const std::string lpath = temp_path("rt-labels.idx");
  write_idx_images(ipath, ds);
  write_idx_labels(lpath, ds);
  Dataset back = load_idx_dataset(ipath, lpath, ds.name);
  EXPECT_EQ(back.pixels, ds.pixels);
  EXPECT_EQ(back.labels, ds.labels);
}

TEST(Cifar, SingleRecordRoundTrip) {
  std::vector<std::uint8_t> bytes(3073);
  bytes[0] = 4;
  for (std::size_t i = 1; i < bytes.size(); ++i)
    bytes[i] = static_cast<std::uint8_t>((i * 7) % 256);
  const std::string path = temp_path("one.cifar.bin");
  write_bytes(path, bytes);
  Dataset ds = load_cifar10_bin(path);
  EXPECT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds.channels, 3);
  EXPECT_EQ(ds.labels[0], 4);
  for (int i = 0; i < 3072; ++i)
    EXPECT_EQ(ds.pixels[static_cast<std::size_t>(i)],
              bytes[static_cast<std::size_t>(i) + 1]);
}

TEST(Cifar, LabelOutOfRangeIsDataError) {
  std::vector<std::uint8_t> bytes(3073);
  bytes[0] = 255;
  const std::string path = temp_path("badlabel.cifar.bin");
  write_bytes(path, bytes);
  EXPECT_THROW(load_cifar10_bin(path), DataError);
}

TEST(Cifar, EmptyFileGivesEmptyDataset) {
  const std::string path = temp_path("empty.cifar.bin");
  write_bytes(path, {});
  EXPECT_EQ(load_cifar10_bin(path).size(), 0u);
}

TEST(Cifar, IndivisibleLengthIsFormatError) {
  const std::string path = temp_path("odd.cifar.bin");
  write_bytes(path, std::vector<std::uint8_t>(3072));
  EXPECT_THROW(load_cifar10_bin(path), FormatError);
}

TEST(Corrupt, SeverityTableIsTotal) {
  SyntheticSpec sspec;
  sspec.count = 1;
  Dataset ds = make_synthetic(sspec);
  for (auto kind : kAllCorruptions)
    for (int sev = 1; sev <= 5; ++sev) {
      CorruptionSpec spec{kind, sev};
      auto img = corrupt_image(ds.image(0), 1, 28, 28, spec, 11);
      EXPECT_EQ(img.size(), 28u * 28u);
    }
}

TEST(Corrupt, DeterministicGivenSeed) {
  SyntheticSpec sspec;
  sspec.count = 1;
  Dataset ds = make_synthetic(sspec);
  CorruptionSpec spec{CorruptionKind::gaussian_noise, 5};
  auto a = corrupt_image(ds.image(0), 1, 28, 28, spec, 77);
  auto b = corrupt_image(ds.image(0), 1, 28, 28, spec, 77);
  EXPECT_EQ(a, b);
  auto c = corrupt_image(ds.image(0), 1, 28, 28, spec, 78);
  EXPECT_NE(a, c);
}

TEST(Corrupt, ContrastScalesAroundMidGray) {
  std::vector<std::uint8_t> img(28 * 28, 128);
  CorruptionSpec spec{CorruptionKind::contrast, 5};
  auto out = corrupt_image(img.data(), 1, 28, 28, spec, 1);
  EXPECT_EQ(out, img);

  // formula oracle on arbitrary pixels
  std::vector<std::uint8_t> rnd(28 * 28);
  for (std::size_t i = 0; i < rnd.size(); ++i)
    rnd[i] = static_cast<std::uint8_t>((i * 13) % 256);
  auto got = corrupt_image(rnd.data(), 1, 28, 28, spec, 1);
  for (std::size_t i = 0; i < rnd.size(); ++i) {
    const float want = 128.0f + 0.2f * (static_cast<float>(rnd[i]) - 128.0f);
    EXPECT_NEAR(static_cast<float>(got[i]), want, 1.0f);
  }
}

TEST(Corrupt, SeverityIsMonotoneInDistortion) {
  SyntheticSpec sspec;
  sspec.count = 100;
  sspec.seed = 3;
  Dataset ds = make_synthetic(sspec);
  for (auto kind : kAllCorruptions) {
    double prev = -1.0;
    for (int sev = 1; sev <= 5; ++sev) {
      CorruptionSpec spec{kind, sev};
      Dataset cds = corrupt_dataset(ds, spec, 9);
      double delta = 0;
      for (std::size_t i = 0; i < ds.pixels.size(); ++i)
        delta += std::abs(static_cast<int>(cds.pixels[i]) -
                          static_cast<int>(ds.pixels[i]));
      delta /= static_cast<double>(ds.pixels.size());
      EXPECT_GE(delta, prev - 1e-9) << to_string(kind) << " severity " << sev;
      prev = delta;
    }
  }
}

TEST(Subset, FullSizeIsPermutation) {
  SyntheticSpec sspec;
  sspec.count = 50;
  Dataset ds = make_synthetic(sspec);
  Dataset sub = subset(ds, 50, 4);
  auto a = ds.labels;
  auto b = sub.labels;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  EXPECT_EQ(a, b);
}

TEST(Subset, StratifiedCountsDifferByAtMostOne) {
  SyntheticSpec sspec;
  sspec.count = 100;
  Dataset ds = make_synthetic(sspec);
  Dataset sub = subset(ds, 37, 4);
  std::vector<int> counts(10, 0);
  for (auto l : sub.labels) counts[l]++;
  const auto [mn, mx] = std::minmax_element(counts.begin(), counts.end());
  EXPECT_LE(*mx - *mn, 1);
}

TEST(Subset, DeterministicAndBoundsChecked) {
  SyntheticSpec sspec;
  sspec.count = 40;
  Dataset ds = make_synthetic(sspec);
  Dataset a = subset(ds, 20, 8);
  Dataset b = subset(ds, 20, 8);
  EXPECT_EQ(a.pixels, b.pixels);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_THROW(subset(ds, 41, 8), DataError);
}

TEST(Normalize, AppliesAffineTransform) {
  Dataset ds;
  ds.channels = 1;
  ds.height = 1;
  ds.width = 2;
  ds.pixels = {0, 255};
  ds.labels = {1};
  FloatDataset f = normalize(ds, 0.5f, 0.25f);
  EXPECT_NEAR(f.pixels[0], -2.0f, 1e-6f);
  EXPECT_NEAR(f.pixels[1], 2.0f, 1e-6f);
  EXPECT_EQ(f.labels[0], 1);
}

TEST(Synthetic, DeterministicBalancedAndDistinctFamilies) {
  SyntheticSpec spec;
  spec.count = 60;
  spec.seed = 12;
  Dataset a = make_synthetic(spec);
  Dataset b = make_synthetic(spec);
  EXPECT_EQ(a.pixels, b.pixels);

  std::vector<int> counts(10, 0);
  for (auto l : a.labels) counts[l]++;
  for (int c : counts) EXPECT_EQ(c, 6);

  spec.family = SyntheticFamily::glyphs;
  Dataset g = make_synthetic(spec);
  EXPECT_NE(g.pixels, a.pixels);
  EXPECT_EQ(g.name, "glyphs");
}
