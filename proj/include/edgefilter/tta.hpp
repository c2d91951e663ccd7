#pragma once

// Test-time adaptation over corrupted evaluation sets.
//   direct - the pretrained model as-is
//   norm   - batch normalization driven by current test-batch statistics
//   tent   - online entropy minimization updating only norm affine params
// direct/norm never mutate the model; tent mutates exactly the affine set.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "edgefilter/checkpoint.hpp"
#include "edgefilter/data.hpp"
#include "edgefilter/errors.hpp"
#include "edgefilter/nn.hpp"
#include "edgefilter/train.hpp"

namespace edgefilter {

enum class TTAMethod { source, direct, norm, tent };

inline const char* to_string(TTAMethod m) {
  switch (m) {
    case TTAMethod::source: return "source";
    case TTAMethod::direct: return "direct";
    case TTAMethod::norm: return "norm";
    case TTAMethod::tent: return "tent";
  }
  return "?";
}

inline TTAMethod tta_method_from_string(const std::string& s) {
  if (s == "source") return TTAMethod::source;
  if (s == "direct") return TTAMethod::direct;
  if (s == "norm") return TTAMethod::norm;
  if (s == "tent") return TTAMethod::tent;
  throw ConfigError("unknown TTA method '" + s + "'");
}

struct TTAConfig {
  int batch_size = 128;
  float tent_lr = 1e-3f;
  int tent_steps_per_batch = 1;
  bool episodic = false;

  void validate() const {
    if (batch_size < 1) throw ConfigError("tta.batch_size must be >= 1");
    // tent_lr == 0 is the degenerate case that must reproduce NORM exactly
    if (tent_lr < 0.0f) throw ConfigError("tta.tent_lr must be >= 0");
    if (tent_steps_per_batch < 1)
      throw ConfigError("tta.tent_steps_per_batch must be >= 1");
  }
};

inline double evaluate_direct(Model& model, const FloatDataset& ds,
                              int batch_size = 128) {
  return evaluate_accuracy(model, ds, batch_size, Mode::eval);
}

namespace detail {

inline void require_batch_stats_capable(Model& model) {
  if (model.buffers().empty())
    throw ConfigError("NORM needs BatchNorm running statistics; this model "
                      "has none");
}

inline std::size_t argmax_correct(const Tensor& logits,
                                  const std::vector<int>& labels) {
  const int k = logits.dim(1);
  std::size_t correct = 0;
  for (int b = 0; b < logits.dim(0); ++b) {
    const float* row =
        logits.data().data() + static_cast<std::size_t>(b) * k;
    int arg = 0;
    for (int j = 1; j < k; ++j)
      if (row[j] > row[arg]) arg = j;
    if (arg == labels[static_cast<std::size_t>(b)]) ++correct;
  }
  return correct;
}

}  // namespace detail

// Forward with current-batch statistics; weights and running stats are left
// bitwise untouched.
inline double evaluate_norm(Model& model, const FloatDataset& ds,
                            const TTAConfig& cfg) {
  cfg.validate();
  detail::require_batch_stats_capable(model);
  if (cfg.batch_size == 1)
    emit_warning("NORM with batch size 1 runs on degenerate batch "
                 "statistics");
  std::size_t correct = 0;
  for (std::size_t start = 0; start < ds.size();
       start += static_cast<std::size_t>(cfg.batch_size)) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start;
         i < std::min(ds.size(), start + static_cast<std::size_t>(cfg.batch_size));
         ++i)
      idx.push_back(i);
    std::vector<int> labels;
    Tensor x = make_batch(ds, idx, &labels);
    Tensor logits = model.forward(x, Mode::batch_stats, nullptr);
    correct += detail::argmax_correct(logits, labels);
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

// Online TENT. Mutates only normalization affine parameters; predictions
// come from each batch's pre-step forward. Optionally reports the mean
// prediction entropy of that adaptation stream.
inline double evaluate_tent(Model& model, const FloatDataset& ds,
                            const TTAConfig& cfg,
                            double* stream_entropy = nullptr) {
  cfg.validate();
  detail::require_batch_stats_capable(model);
  std::vector<Tensor> affine;
  for (auto& p : model.params())
    if (p.norm_affine) affine.push_back(p.tensor);
  if (affine.empty())
    throw ConfigError("TENT needs normalization affine parameters");

  model.set_trainable_norm_affine_only();
  Sgd opt(affine, cfg.tent_lr, 0.9f, 0.0f);

  std::vector<std::vector<float>> initial;
  if (cfg.episodic)
    for (auto& t : affine) initial.push_back(t.data());

  std::size_t correct = 0;
  double entropy_sum = 0.0;
  std::size_t seen = 0;
  for (std::size_t start = 0; start < ds.size();
       start += static_cast<std::size_t>(cfg.batch_size)) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start;
         i < std::min(ds.size(), start + static_cast<std::size_t>(cfg.batch_size));
         ++i)
      idx.push_back(i);
    std::vector<int> labels;
    Tensor x = make_batch(ds, idx, &labels);
    for (int step = 0; step < cfg.tent_steps_per_batch; ++step) {
      opt.zero_grad();
      Tensor logits = model.forward(x, Mode::batch_stats, nullptr);
      Tensor h = mean_entropy(logits);
      if (step == 0) {
        correct += detail::argmax_correct(logits, labels);
        entropy_sum += static_cast<double>(h.item()) *
                       static_cast<double>(idx.size());
        seen += idx.size();
      }
      backward(h);
      opt.step();
    }
    if (cfg.episodic)
      for (std::size_t i = 0; i < affine.size(); ++i)
        affine[i].data() = initial[i];
  }
  model.set_trainable_all(true);
  if (stream_entropy)
    *stream_entropy = entropy_sum / static_cast<double>(seen);
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

// --- suite ---------------------------------------------------------------------

struct TTARecord {
  std::string method;
  std::string corruption;  // "clean" for the uncorrupted source evaluation
  int severity = 0;
  double accuracy = 0.0;
};

// Evaluates every requested method on the clean validation split and on
// each (kind, severity) corruption. TENT cells run on a fresh clone so the
// incoming model is never mutated.
inline std::vector<TTARecord> run_tta_suite(
    Model& model, const Dataset& raw_val, float norm_mean, float norm_std,
    const std::vector<CorruptionKind>& kinds,
    const std::vector<int>& severities,
    const std::vector<TTAMethod>& methods, const TTAConfig& cfg,
    std::uint64_t seed) {
  cfg.validate();
  std::vector<TTARecord> records;
  const FloatDataset clean = normalize(raw_val, norm_mean, norm_std);

  auto eval_with = [&](TTAMethod m, const FloatDataset& ds) -> double {
    switch (m) {
      case TTAMethod::source:
      case TTAMethod::direct:
        return evaluate_direct(model, ds, cfg.batch_size);
      case TTAMethod::norm:
        return evaluate_norm(model, ds, cfg);
      case TTAMethod::tent: {
        auto clone = clone_model(model);
        return evaluate_tent(*clone, ds, cfg);
      }
    }
    return 0.0;
  };

  for (TTAMethod m : methods) {
    records.push_back({to_string(m), "clean", 0, eval_with(m, clean)});
    if (m == TTAMethod::source) continue;  // source is clean-only
    for (CorruptionKind kind : kinds)
      for (int sev : severities) {
        CorruptionSpec spec{kind, sev};
        const Dataset corrupted = corrupt_dataset(raw_val, spec, seed);
        const FloatDataset ds = normalize(corrupted, norm_mean, norm_std);
        records.push_back(
            {to_string(m), to_string(kind), sev, eval_with(m, ds)});
      }
  }
  return records;
}

}  // namespace edgefilter
