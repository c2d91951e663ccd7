#include "edgefilter/train.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "edgefilter/checkpoint.hpp"
#include "test_util.hpp"

using namespace edgefilter;
using testutil::make_rng;
using testutil::rand_tensor;

namespace {

ModelConfig tiny_cfg(std::uint64_t seed = 1) {
  ModelConfig cfg;
  cfg.arch = Arch::small_cnn;
  cfg.widths = {8, 12, 16};
  cfg.num_classes = 10;
  cfg.norm = NormKind::batchnorm;
  cfg.seed = seed;
  cfg.input = {1, 16, 16};
  return cfg;
}

FloatDataset synth_ds(int n, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.count = n;
  spec.seed = seed;
  spec.height = 16;
  spec.width = 16;
  return normalize(make_synthetic(spec), 0.5f, 0.25f);
}

// Two linearly separable classes: bright left half vs bright right half.
FloatDataset separable_ds(int n, std::uint64_t seed) {
  FloatDataset ds;
  ds.channels = 1;
  ds.height = 16;
  ds.width = 16;
  ds.pixels.resize(static_cast<std::size_t>(n) * 256);
  ds.labels.resize(static_cast<std::size_t>(n));
  auto rng = make_rng(seed);
  std::normal_distribution<float> noise(0.0f, 0.1f);
  for (int i = 0; i < n; ++i) {
    const int label = i % 2;
    ds.labels[static_cast<std::size_t>(i)] = label;
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) {
        const bool bright = label == 0 ? x < 8 : x >= 8;
        ds.pixels[static_cast<std::size_t>(i) * 256 + y * 16 + x] =
            (bright ? 1.0f : -1.0f) + noise(rng);
      }
  }
  return ds;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::path(::testing::TempDir()) / name).string();
}

}  // namespace

TEST(Train, ZeroLearningRateLeavesWeightsUnchanged) {
  auto model = build_model(tiny_cfg());
  const auto before = serialize_model(*model);
  FloatDataset ds = synth_ds(64, 2);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 16;
  cfg.optimizer = OptimKind::sgd;
  cfg.lr = 0.0f;
  cfg.capture_density = false;
  // BN running stats do move in train mode; compare parameters only.
  train(*model, ds, FloatDataset{}, cfg, "t0", nullptr);
  auto after_params = model->params();
  auto fresh = deserialize_model(before, "<memory>");
  auto fresh_params = fresh->params();
  for (std::size_t i = 0; i < after_params.size(); ++i)
    EXPECT_EQ(after_params[i].tensor.data(), fresh_params[i].tensor.data())
        << after_params[i].name;
}

TEST(Train, SameSeedGivesIdenticalCheckpoints) {
  FloatDataset train_ds = synth_ds(96, 3);
  FloatDataset val_ds = synth_ds(32, 4);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 16;
  cfg.seed = 11;

  std::vector<MetricsRecord> rec_a, rec_b;
  auto ma = build_model(tiny_cfg(5));
  train(*ma, train_ds, val_ds, cfg, "a",
        [&](const MetricsRecord& r) { rec_a.push_back(r); });
  auto mb = build_model(tiny_cfg(5));
  train(*mb, train_ds, val_ds, cfg, "a",
        [&](const MetricsRecord& r) { rec_b.push_back(r); });

  EXPECT_EQ(serialize_model(*ma), serialize_model(*mb));
  ASSERT_EQ(rec_a.size(), rec_b.size());
  for (std::size_t i = 0; i < rec_a.size(); ++i)
    EXPECT_EQ(rec_a[i].value, rec_b[i].value);
}

TEST(Train, LearnsSeparableToyProblem) {
  auto model = build_model(tiny_cfg(7));
  FloatDataset ds = separable_ds(64, 9);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.batch_size = 16;
  cfg.seed = 1;
  cfg.capture_density = false;
  train(*model, ds, FloatDataset{}, cfg, "sep", nullptr);
  EXPECT_GE(evaluate_accuracy(*model, ds, 32), 0.95);
}

TEST(Train, DivergenceRaises) {
  ModelConfig mc = tiny_cfg(8);
  mc.norm = NormKind::none;  // nothing to renormalize the blow-up away
  auto model = build_model(mc);
  FloatDataset ds = synth_ds(64, 5);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 16;
  cfg.optimizer = OptimKind::sgd;
  cfg.lr = 1e12f;
  cfg.capture_density = false;
  EXPECT_THROW(train(*model, ds, FloatDataset{}, cfg, "boom", nullptr),
               TrainingDiverged);
}

TEST(Train, DensityRecordsAreEmittedAndBounded) {
  auto model = build_model(tiny_cfg(9));
  FloatDataset ds = synth_ds(48, 6);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 16;
  cfg.capture_density = true;
  cfg.density_every = 1;
  std::vector<MetricsRecord> recs;
  train(*model, ds, FloatDataset{}, cfg, "d",
        [&](const MetricsRecord& r) { recs.push_back(r); });
  int density_rows = 0;
  for (const auto& r : recs)
    if (r.scope == "block-density") {
      ++density_rows;
      EXPECT_GE(r.value, 0.0);
      EXPECT_LE(r.value, 1.0);
    }
  EXPECT_EQ(density_rows, 2 * 3);  // 2 epochs x {stem, block1, block2}
}

TEST(Optimizers, ZeroGradientBehaviour) {
  Tensor w({4}, {1.0f, -2.0f, 3.0f, -4.0f}, true);
  w.grad_buffer();  // zero gradient buffer

  Sgd sgd({w}, 0.1f, 0.9f, 0.0f);
  sgd.step();
  EXPECT_EQ(w.data(), (std::vector<float>{1.0f, -2.0f, 3.0f, -4.0f}));

  Adam adam_plain({w}, 0.1f, 0.9f, 0.999f, 1e-8f, 0.0f);
  adam_plain.step();
  EXPECT_EQ(w.data(), (std::vector<float>{1.0f, -2.0f, 3.0f, -4.0f}));

  Adam adam_wd({w}, 0.1f, 0.9f, 0.999f, 1e-8f, 0.01f);
  adam_wd.step();
  EXPECT_NE(w.data(), (std::vector<float>{1.0f, -2.0f, 3.0f, -4.0f}));
}

TEST(Checkpoint, RoundTripLogitsBitwise) {
  auto model = build_model(tiny_cfg(10));
  FloatDataset ds = synth_ds(32, 7);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 16;
  cfg.capture_density = false;
  train(*model, ds, FloatDataset{}, cfg, "ck", nullptr);

  const std::string path = temp_path("model.defc");
  save_checkpoint(*model, path);
  auto loaded = load_checkpoint(path);

  auto rng = make_rng(11);
  Tensor x = rand_tensor({4, 1, 16, 16}, rng);
  Tensor a = model->forward(x, Mode::eval, nullptr);
  Tensor b = loaded->forward(x, Mode::eval, nullptr);
  EXPECT_EQ(a.data(), b.data());
}

TEST(Checkpoint, TruncationAndVersionAndShapeErrors) {
  auto model = build_model(tiny_cfg(12));
  auto bytes = serialize_model(*model);

  // truncated payload
  std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + 64);
  try {
    deserialize_model(cut, "<cut>");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("byte offset"), std::string::npos);
  }

  // version bump
  auto bad_version = bytes;
  bad_version[4] = 9;
  EXPECT_THROW(deserialize_model(bad_version, "<v9>"), FormatError);

  // edited tensor header: widen the first dimension of stem.conv.weight
  auto bad_dims = bytes;
  // layout: magic(4) version(4) count(4) name_len(4) name(16) ndim(4) dim0(4)
  const std::size_t dim0_off = 4 + 4 + 4 + 4 + 16 + 4;
  bad_dims[dim0_off] = 200;
  try {
    deserialize_model(bad_dims, "<dims>");
    FAIL() << "expected an error naming the tensor";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("stem.conv.weight"),
              std::string::npos);
  } catch (const FormatError&) {
    // also acceptable: the inflated dim may run past the payload first
  }
}

TEST(Checkpoint, CloneIsIndependent) {
  auto model = build_model(tiny_cfg(13));
  auto clone = clone_model(*model);
  EXPECT_EQ(serialize_model(*model), serialize_model(*clone));
  clone->params()[0].tensor.data()[0] += 1.0f;
  EXPECT_NE(serialize_model(*model), serialize_model(*clone));
}

TEST(LinearProbe, FreezesExtractorAndReportsBothSplits) {
  auto model = build_model(tiny_cfg(14));
  FloatDataset ptrain = synth_ds(100, 21);
  FloatDataset pval = synth_ds(40, 22);
  const auto before = serialize_model(*model);
  ProbeConfig pc;
  pc.epochs = 3;
  pc.seed = 2;
  ProbeResult r =
      linear_probe(*model, ptrain, pval, pc, ProbeVariant::none, 10);
  EXPECT_EQ(serialize_model(*model), before);
  EXPECT_GE(r.train_accuracy, 0.0);
  EXPECT_LE(r.train_accuracy, 1.0);
  for (auto& p : model->params()) EXPECT_FALSE(p.tensor.has_grad()) << p.name;
}

TEST(LinearProbe, ConstantFeaturesGiveChanceAccuracy) {
  auto model = build_model(tiny_cfg(15));
  // constant images -> identical features for every sample
  FloatDataset ptrain = synth_ds(100, 23);
  std::fill(ptrain.pixels.begin(), ptrain.pixels.end(), 0.3f);
  FloatDataset pval = ptrain;
  ProbeConfig pc;
  pc.epochs = 3;
  for (auto variant : {ProbeVariant::none, ProbeVariant::edge}) {
    ProbeResult r = linear_probe(*model, ptrain, pval, pc, variant, 10);
    EXPECT_LE(r.val_accuracy, 0.1 + 0.05) << to_string(variant);
  }
}
