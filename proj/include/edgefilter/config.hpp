#pragma once

// Experiment configuration: a JSON file with model / train / tta / data /
// ablate / probe sections. Key names and defaults are normative; parsing
// errors always carry the offending field path. Every command validates the
// whole config before touching the filesystem.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "edgefilter/data.hpp"
#include "edgefilter/errors.hpp"
#include "edgefilter/nn.hpp"
#include "edgefilter/train.hpp"
#include "edgefilter/tta.hpp"

namespace edgefilter {

struct DataConfig {
  std::string name = "shapes";  // shapes | glyphs | fashion_mnist | cifar10
  std::string data_dir;         // falls back to EDGEFILTER_DATA_DIR
  int train_size = 4000;
  int val_size = 1000;
  int height = 28;  // synthetic families only; file datasets keep their own
  int width = 28;
  float normalize_mean = 0.5f;
  float normalize_std = 0.25f;
  std::uint64_t seed = 100;
  bool cache_corruptions = false;

  void validate() const {
    static const std::set<std::string> known{"shapes", "glyphs",
                                             "fashion_mnist", "cifar10"};
    if (!known.count(name))
      throw ConfigError("data.name must be one of shapes|glyphs|"
                        "fashion_mnist|cifar10, got '" + name + "'");
    if (train_size < 1) throw ConfigError("data.train_size must be >= 1");
    if (val_size < 1) throw ConfigError("data.val_size must be >= 1");
    if (height < 8 || width < 8)
      throw ConfigError("data.height/width must be >= 8");
    if (normalize_std <= 0.0f)
      throw ConfigError("data.normalize_std must be positive");
  }
};

struct TTASuiteConfig {
  std::vector<TTAMethod> methods{TTAMethod::direct, TTAMethod::norm,
                                 TTAMethod::tent};
  std::vector<CorruptionKind> kinds{
      CorruptionKind::gaussian_noise, CorruptionKind::impulse_noise,
      CorruptionKind::box_blur, CorruptionKind::contrast,
      CorruptionKind::brightness};
  std::vector<int> severities{5};
  TTAConfig tta;
  std::uint64_t corruption_seed = 1234;

  void validate() const {
    if (methods.empty()) throw ConfigError("tta.methods must not be empty");
    if (kinds.empty()) throw ConfigError("tta.corruptions must not be empty");
    if (severities.empty())
      throw ConfigError("tta.severities must not be empty");
    for (int s : severities)
      CorruptionSpec{CorruptionKind::gaussian_noise, s}.validate();
    tta.validate();
  }
};

struct AblateConfig {
  std::vector<int> positions{0, 1, 2, 3};
  std::vector<int> kernel_sizes{3, 5, 7, 9, 11};

  void validate() const {
    if (positions.empty() || kernel_sizes.empty())
      throw ConfigError("ablate grid must not be empty");
    for (int k : kernel_sizes)
      if (k < 1 || k % 2 == 0)
        throw ConfigError("ablate.kernel_sizes must be odd, got " +
                          std::to_string(k));
  }
};

struct ProbeSection {
  ProbeConfig probe;
  DataConfig data;  // transfer dataset; defaults to the glyph family

  ProbeSection() {
    data.name = "glyphs";
    data.train_size = 2000;
    data.val_size = 500;
    data.seed = 900;
  }
};

struct ExperimentConfig {
  std::string name = "exp";
  ModelConfig model;
  TrainConfig train;
  TTASuiteConfig tta;
  DataConfig data;
  AblateConfig ablate;
  ProbeSection probe;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::string output_dir = "runs";

  void validate() const {
    if (name.empty()) throw ConfigError("name must not be empty");
    model.validate();
    train.validate();
    tta.validate();
    data.validate();
    ablate.validate();
    probe.data.validate();
    if (seeds.empty()) throw ConfigError("seeds must not be empty");
    std::set<std::uint64_t> uniq(seeds.begin(), seeds.end());
    if (uniq.size() != seeds.size())
      throw ConfigError("seeds must be distinct");
    if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  }
};

namespace detail {

// Pulls a typed value, rethrowing with the dotted field path.
template <typename T>
T field(const nlohmann::json& j, const std::string& path, const T& fallback) {
  if (!j.contains(path) || j[path].is_null()) return fallback;
  try {
    return j[path].get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("field '" + path + "' has the wrong type");
  }
}

inline ModelConfig parse_model(const nlohmann::json& j) {
  try {
    return model_config_from_json(j);
  } catch (const ConfigError&) {
    throw;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
}

inline TrainConfig parse_train(const nlohmann::json& j) {
  TrainConfig t;
  t.epochs = field(j, "epochs", t.epochs);
  t.batch_size = field(j, "batch_size", t.batch_size);
  const std::string opt = field<std::string>(j, "optimizer", "adam");
  if (opt == "sgd") t.optimizer = OptimKind::sgd;
  else if (opt == "adam") t.optimizer = OptimKind::adam;
  else throw ConfigError("train.optimizer must be sgd|adam, got '" + opt + "'");
  t.lr = field(j, "lr", t.lr);
  t.momentum = field(j, "momentum", t.momentum);
  t.weight_decay = field(j, "weight_decay", t.weight_decay);
  t.beta1 = field(j, "beta1", t.beta1);
  t.beta2 = field(j, "beta2", t.beta2);
  t.eps = field(j, "eps", t.eps);
  t.capture_density = field(j, "capture_density", t.capture_density);
  t.density_every = field(j, "density_every", t.density_every);
  return t;
}

inline TTASuiteConfig parse_tta(const nlohmann::json& j) {
  TTASuiteConfig s;
  if (j.contains("methods")) {
    s.methods.clear();
    for (const auto& m : j["methods"])
      s.methods.push_back(tta_method_from_string(m.get<std::string>()));
  }
  if (j.contains("corruptions")) {
    s.kinds.clear();
    for (const auto& c : j["corruptions"])
      s.kinds.push_back(corruption_kind_from_string(c.get<std::string>()));
  }
  if (j.contains("severities"))
    s.severities = j["severities"].get<std::vector<int>>();
  s.tta.batch_size = field(j, "batch_size", s.tta.batch_size);
  s.tta.tent_lr = field(j, "tent_lr", s.tta.tent_lr);
  s.tta.tent_steps_per_batch =
      field(j, "tent_steps_per_batch", s.tta.tent_steps_per_batch);
  s.tta.episodic = field(j, "episodic", s.tta.episodic);
  s.corruption_seed = field(j, "corruption_seed", s.corruption_seed);
  return s;
}

inline DataConfig parse_data(const nlohmann::json& j,
                             const DataConfig& defaults) {
  DataConfig d = defaults;
  d.name = field<std::string>(j, "name", d.name);
  d.data_dir = field<std::string>(j, "data_dir", d.data_dir);
  d.train_size = field(j, "train_size", d.train_size);
  d.val_size = field(j, "val_size", d.val_size);
  d.height = field(j, "height", d.height);
  d.width = field(j, "width", d.width);
  d.normalize_mean = field(j, "normalize_mean", d.normalize_mean);
  d.normalize_std = field(j, "normalize_std", d.normalize_std);
  d.seed = field(j, "seed", d.seed);
  d.cache_corruptions = field(j, "cache_corruptions", d.cache_corruptions);
  return d;
}

}  // namespace detail

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  cfg.name = detail::field<std::string>(j, "name", cfg.name);
  if (j.contains("model")) cfg.model = detail::parse_model(j["model"]);
  if (j.contains("train")) cfg.train = detail::parse_train(j["train"]);
  if (j.contains("tta")) cfg.tta = detail::parse_tta(j["tta"]);
  if (j.contains("data")) cfg.data = detail::parse_data(j["data"], cfg.data);
  if (j.contains("ablate")) {
    if (j["ablate"].contains("positions"))
      cfg.ablate.positions = j["ablate"]["positions"].get<std::vector<int>>();
    if (j["ablate"].contains("kernel_sizes"))
      cfg.ablate.kernel_sizes =
          j["ablate"]["kernel_sizes"].get<std::vector<int>>();
  }
  if (j.contains("probe")) {
    const auto& p = j["probe"];
    cfg.probe.probe.epochs = detail::field(p, "epochs", cfg.probe.probe.epochs);
    cfg.probe.probe.batch_size =
        detail::field(p, "batch_size", cfg.probe.probe.batch_size);
    cfg.probe.probe.lr = detail::field(p, "lr", cfg.probe.probe.lr);
    if (p.contains("data"))
      cfg.probe.data = detail::parse_data(p["data"], cfg.probe.data);
  }
  if (j.contains("seeds"))
    cfg.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  cfg.output_dir = detail::field<std::string>(j, "output_dir", cfg.output_dir);
  cfg.validate();
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": invalid JSON: " + e.what());
  }
  return experiment_config_from_json(j);
}

// --- dataset materialization ----------------------------------------------------

struct LoadedData {
  Dataset train_raw;
  Dataset val_raw;
  FloatDataset train;
  FloatDataset val;
};

inline std::string resolve_data_dir(const DataConfig& cfg) {
  if (!cfg.data_dir.empty()) return cfg.data_dir;
  if (const char* env = std::getenv("EDGEFILTER_DATA_DIR")) return env;
  return "";
}

inline LoadedData load_data(const DataConfig& cfg) {
  cfg.validate();
  LoadedData out;
  if (cfg.name == "shapes" || cfg.name == "glyphs") {
    SyntheticSpec spec;
    spec.family = cfg.name == "shapes" ? SyntheticFamily::shapes
                                       : SyntheticFamily::glyphs;
    spec.height = cfg.height;
    spec.width = cfg.width;
    spec.count = cfg.train_size;
    spec.seed = cfg.seed;
    out.train_raw = make_synthetic(spec);
    out.train_raw.split = "train";
    spec.count = cfg.val_size;
    spec.seed = detail::mix_seed(cfg.seed, 0x7A1ull);
    out.val_raw = make_synthetic(spec);
    out.val_raw.split = "val";
  } else if (cfg.name == "fashion_mnist") {
    const std::string dir = resolve_data_dir(cfg);
    if (dir.empty())
      throw ConfigError("data.data_dir (or EDGEFILTER_DATA_DIR) is required "
                        "for fashion_mnist");
    namespace fs = std::filesystem;
    out.train_raw = load_idx_dataset(
        (fs::path(dir) / "train-images-idx3-ubyte").string(),
        (fs::path(dir) / "train-labels-idx1-ubyte").string(), "fashion_mnist");
    out.val_raw = load_idx_dataset(
        (fs::path(dir) / "t10k-images-idx3-ubyte").string(),
        (fs::path(dir) / "t10k-labels-idx1-ubyte").string(), "fashion_mnist");
    out.train_raw = subset(out.train_raw, cfg.train_size, cfg.seed);
    out.val_raw = subset(out.val_raw, cfg.val_size,
                         detail::mix_seed(cfg.seed, 0x7A1ull));
  } else {  // cifar10
    const std::string dir = resolve_data_dir(cfg);
    if (dir.empty())
      throw ConfigError("data.data_dir (or EDGEFILTER_DATA_DIR) is required "
                        "for cifar10");
    namespace fs = std::filesystem;
    Dataset all;
    for (int i = 1; i <= 5; ++i) {
      Dataset part = load_cifar10_bin(
          (fs::path(dir) / ("data_batch_" + std::to_string(i) + ".bin"))
              .string());
      if (i == 1) {
        all = std::move(part);
      } else {
        all.pixels.insert(all.pixels.end(), part.pixels.begin(),
                          part.pixels.end());
        all.labels.insert(all.labels.end(), part.labels.begin(),
                          part.labels.end());
      }
    }
    out.train_raw = subset(all, cfg.train_size, cfg.seed);
    Dataset test = load_cifar10_bin((fs::path(dir) / "test_batch.bin").string());
    out.val_raw = subset(test, cfg.val_size,
                         detail::mix_seed(cfg.seed, 0x7A1ull));
  }
  out.train_raw.split = "train";
  out.val_raw.split = "val";
  out.train = normalize(out.train_raw, cfg.normalize_mean, cfg.normalize_std);
  out.val = normalize(out.val_raw, cfg.normalize_mean, cfg.normalize_std);
  return out;
}

// Short human-readable variant tag used in run ids and result CSVs.
inline std::string variant_label(const ModelConfig& m) {
  if (m.conv_replacement)
    return "conv-k" + std::to_string(m.conv_replacement->kernel_size) + "-p" +
           std::to_string(m.conv_replacement->position);
  if (!m.filter) return "baseline";
  const std::string head = m.lpf_direct ? "lpf" : "edge";
  return head + "-" + to_string(m.filter->kind) + "-k" +
         std::to_string(m.filter->kernel_size) + "-p" +
         std::to_string(m.filter->position);
}

}  // namespace edgefilter
