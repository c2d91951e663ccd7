#pragma once

// Deterministic training loop (SGD / Adam), evaluation, per-epoch density
// capture, and the frozen-extractor linear probing protocol.

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "edgefilter/analysis.hpp"
#include "edgefilter/csv.hpp"
#include "edgefilter/data.hpp"
#include "edgefilter/errors.hpp"
#include "edgefilter/nn.hpp"

namespace edgefilter {

enum class OptimKind { sgd, adam };

struct TrainConfig {
  int epochs = 15;
  int batch_size = 64;
  OptimKind optimizer = OptimKind::adam;
  float lr = 1e-3f;
  float momentum = 0.9f;  // sgd
  float weight_decay = 0.0f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  std::uint64_t seed = 1;
  bool capture_density = true;
  int density_every = 1;

  void validate() const {
    if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    // lr == 0 is the degenerate no-op run used by determinism checks
    if (lr < 0.0f) throw ConfigError("train.lr must be >= 0");
    if (density_every < 1)
      throw ConfigError("train.density_every must be >= 1");
  }
};

// --- optimizers -----------------------------------------------------------------

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step() = 0;
  void zero_grad() {
    for (auto& t : params_) t.zero_grad();
  }

 protected:
  explicit Optimizer(std::vector<Tensor> params) : params_(std::move(params)) {}
  std::vector<Tensor> params_;
};

class Sgd final : public Optimizer {
 public:
  Sgd(std::vector<Tensor> params, float lr, float momentum,
      float weight_decay)
      : Optimizer(std::move(params)),
        lr_(lr),
        momentum_(momentum),
        weight_decay_(weight_decay) {
    velocity_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i)
      velocity_[i].assign(static_cast<std::size_t>(params_[i].numel()), 0.0f);
  }

  void step() override {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& t = params_[i];
      if (!t.has_grad()) continue;
      auto& w = t.data();
      const auto& g = t.grad();
      auto& v = velocity_[i];
      for (std::size_t j = 0; j < w.size(); ++j) {
        const float grad = g[j] + weight_decay_ * w[j];
        v[j] = momentum_ * v[j] + grad;
        w[j] -= lr_ * v[j];
      }
    }
  }

 private:
  float lr_, momentum_, weight_decay_;
  std::vector<std::vector<float>> velocity_;
};

class Adam final : public Optimizer {
 public:
  Adam(std::vector<Tensor> params, float lr, float beta1, float beta2,
       float eps, float weight_decay)
      : Optimizer(std::move(params)),
        lr_(lr),
        beta1_(beta1),
        beta2_(beta2),
        eps_(eps),
        weight_decay_(weight_decay) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(static_cast<std::size_t>(params_[i].numel()), 0.0f);
      v_[i].assign(static_cast<std::size_t>(params_[i].numel()), 0.0f);
    }
  }

  void step() override {
    ++t_;
    const float bc1 = 1.0f - std::pow(beta1_, static_cast<float>(t_));
    const float bc2 = 1.0f - std::pow(beta2_, static_cast<float>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& t = params_[i];
      if (!t.has_grad()) continue;
      auto& w = t.data();
      const auto& g = t.grad();
      for (std::size_t j = 0; j < w.size(); ++j) {
        const float grad = g[j] + weight_decay_ * w[j];
        m_[i][j] = beta1_ * m_[i][j] + (1.0f - beta1_) * grad;
        v_[i][j] = beta2_ * v_[i][j] + (1.0f - beta2_) * grad * grad;
        w[j] -= lr_ * (m_[i][j] / bc1) /
                (std::sqrt(v_[i][j] / bc2) + eps_);
      }
    }
  }

 private:
  float lr_, beta1_, beta2_, eps_, weight_decay_;
  int t_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

inline std::unique_ptr<Optimizer> make_optimizer(const TrainConfig& cfg,
                                                 std::vector<Tensor> params) {
  if (cfg.optimizer == OptimKind::sgd)
    return std::make_unique<Sgd>(std::move(params), cfg.lr, cfg.momentum,
                                 cfg.weight_decay);
  return std::make_unique<Adam>(std::move(params), cfg.lr, cfg.beta1,
                                cfg.beta2, cfg.eps, cfg.weight_decay);
}

// --- evaluation -----------------------------------------------------------------

inline double evaluate_accuracy(Model& model, const FloatDataset& ds,
                                int batch_size = 128,
                                Mode mode = Mode::eval) {
  if (ds.size() == 0) throw DataError("evaluate_accuracy: empty dataset");
  std::size_t correct = 0;
  for (std::size_t start = 0; start < ds.size();
       start += static_cast<std::size_t>(batch_size)) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start;
         i < std::min(ds.size(), start + static_cast<std::size_t>(batch_size));
         ++i)
      idx.push_back(i);
    std::vector<int> labels;
    Tensor x = make_batch(ds, idx, &labels);
    Tensor logits = model.forward(x, mode, nullptr);
    const int k = logits.dim(1);
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const float* row = logits.data().data() + b * static_cast<std::size_t>(k);
      int arg = 0;
      for (int j = 1; j < k; ++j)
        if (row[j] > row[arg]) arg = j;
      if (arg == labels[b]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

// --- training loop --------------------------------------------------------------

using MetricsSink = std::function<void(const MetricsRecord&)>;

// Trains in place. Emits per-epoch train loss, val accuracy, and (when
// enabled) per-stage densities accumulated from the training passes
// themselves, so they cover the entire training set for that epoch.
inline void train(Model& model, const FloatDataset& train_ds,
                  const FloatDataset& val_ds, const TrainConfig& cfg,
                  const std::string& run_id, const MetricsSink& sink) {
  cfg.validate();
  if (train_ds.size() == 0) throw DataError("train: empty training set");
  model.set_trainable_all(true);
  std::vector<Tensor> tensors;
  for (auto& p : model.params()) tensors.push_back(p.tensor);
  auto opt = make_optimizer(cfg, tensors);

  std::mt19937_64 shuffle_rng(detail::mix_seed(cfg.seed, 0x5AFF1Eull));
  std::vector<std::size_t> order(train_ds.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const bool density_epoch =
        cfg.capture_density && sink &&
        ((epoch + 1) % cfg.density_every == 0 || epoch == cfg.epochs - 1);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    std::vector<std::string> stage_names;
    std::vector<double> stage_hits, stage_totals;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      std::vector<std::size_t> idx(
          order.begin() + static_cast<std::ptrdiff_t>(start),
          order.begin() +
              static_cast<std::ptrdiff_t>(std::min(
                  order.size(), start + static_cast<std::size_t>(cfg.batch_size))));
      std::vector<int> labels;
      Tensor x = make_batch(train_ds, idx, &labels);
      opt->zero_grad();
      Capture cap;
      cap.want_stages = density_epoch;
      Tensor logits =
          model.forward(x, Mode::train, density_epoch ? &cap : nullptr);
      Tensor loss = cross_entropy(logits, labels);
      const float lv = loss.item();
      if (!std::isfinite(lv))
        throw TrainingDiverged("loss is not finite at epoch " +
                               std::to_string(epoch) + " (lr " +
                               std::to_string(cfg.lr) + ")");
      loss_sum += lv;
      ++batches;
      if (density_epoch) {
        if (stage_names.empty()) {
          for (auto& [name, t] : cap.stages) {
            stage_names.push_back(name);
            (void)t;
          }
          stage_hits.assign(stage_names.size(), 0.0);
          stage_totals.assign(stage_names.size(), 0.0);
        }
        for (std::size_t s = 0; s < cap.stages.size(); ++s) {
          const auto& t = cap.stages[s].second;
          for (float v : t.data())
            if (v > 1e-6f) stage_hits[s] += 1.0;
          stage_totals[s] += static_cast<double>(t.numel());
        }
      }
      backward(loss);
      opt->step();
    }
    if (sink)
      sink({run_id, cfg.seed, epoch, "train", "loss",
            loss_sum / static_cast<double>(batches)});
    if (val_ds.size() > 0 && sink) {
      const double acc = evaluate_accuracy(model, val_ds, cfg.batch_size);
      sink({run_id, cfg.seed, epoch, "val", "accuracy", acc});
    }
    if (density_epoch)
      for (std::size_t s = 0; s < stage_names.size(); ++s)
        sink({run_id, cfg.seed, epoch, "block-density", stage_names[s],
              stage_totals[s] > 0 ? stage_hits[s] / stage_totals[s] : 0.0});
  }
}

// --- linear probing -------------------------------------------------------------

enum class ProbeVariant { none, lpf, edge };

inline const char* to_string(ProbeVariant v) {
  switch (v) {
    case ProbeVariant::none: return "none";
    case ProbeVariant::lpf: return "lpf";
    case ProbeVariant::edge: return "edge";
  }
  return "?";
}

struct ProbeConfig {
  int epochs = 10;
  int batch_size = 128;
  float lr = 0.01f;
  std::uint64_t seed = 1;
};

struct ProbeResult {
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
};

namespace detail {

// Final-stage features, filtered per probe variant, pooled to one vector
// per sample. Pure data: the extractor never joins a graph here.
inline std::vector<std::vector<float>> probe_features(
    Model& model, const FloatDataset& ds, ProbeVariant variant,
    int batch_size) {
  std::vector<std::vector<float>> feats;
  feats.reserve(ds.size());
  FilterSpec lpf_spec;
  lpf_spec.kind = LpfKind::mean;
  lpf_spec.kernel_size = 3;
  for (std::size_t start = 0; start < ds.size();
       start += static_cast<std::size_t>(batch_size)) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start;
         i < std::min(ds.size(), start + static_cast<std::size_t>(batch_size));
         ++i)
      idx.push_back(i);
    Tensor x = make_batch(ds, idx);
    Capture cap;
    cap.want_stages = true;
    model.forward(x, Mode::eval, &cap);
    Tensor f = cap.stages.back().second;
    const bool two_d = f.ndim() == 4;
    lpf_spec.dims = two_d ? FilterDim::two_d : FilterDim::one_d;
    if (variant == ProbeVariant::lpf)
      f = apply_lpf(f, lpf_spec);
    else if (variant == ProbeVariant::edge)
      f = sub(f, apply_lpf(f, lpf_spec));
    Tensor pooled = two_d ? global_avg_pool(f) : mean_tokens(f);
    const int c = pooled.dim(1);
    for (std::size_t b = 0; b < idx.size(); ++b)
      feats.emplace_back(
          pooled.data().begin() + static_cast<std::ptrdiff_t>(b * c),
          pooled.data().begin() + static_cast<std::ptrdiff_t>((b + 1) * c));
  }
  return feats;
}

inline double probe_accuracy(const Tensor& w, const Tensor& bias,
                             const std::vector<std::vector<float>>& feats,
                             const std::vector<int>& labels) {
  std::size_t correct = 0;
  const int c = w.dim(0), k = w.dim(1);
  for (std::size_t i = 0; i < feats.size(); ++i) {
    int arg = 0;
    float best = 0.0f;
    for (int j = 0; j < k; ++j) {
      float acc = bias.data()[static_cast<std::size_t>(j)];
      for (int f = 0; f < c; ++f)
        acc += feats[i][static_cast<std::size_t>(f)] *
               w.data()[static_cast<std::size_t>(f) * k + j];
      if (j == 0 || acc > best) {
        best = acc;
        arg = j;
      }
    }
    if (arg == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(feats.size());
}

}  // namespace detail

// Trains only a linear classifier on frozen features. Throws ContractError
// if the extractor ends up with any gradient.
inline ProbeResult linear_probe(Model& model, const FloatDataset& probe_train,
                                const FloatDataset& probe_val,
                                const ProbeConfig& cfg, ProbeVariant variant,
                                int num_classes) {
  for (auto& p : model.params()) p.tensor.zero_grad();
  auto train_feats =
      detail::probe_features(model, probe_train, variant, cfg.batch_size);
  auto val_feats =
      detail::probe_features(model, probe_val, variant, cfg.batch_size);
  const int c = static_cast<int>(train_feats.front().size());

  std::mt19937_64 rng(detail::mix_seed(cfg.seed, 0x9B0BE));
  Tensor w({c, num_classes}, true);
  detail::kaiming_uniform(w, c, rng);
  Tensor bias({num_classes}, true);

  std::vector<std::size_t> order(train_feats.size());
  std::iota(order.begin(), order.end(), 0);
  Sgd opt({w, bias}, cfg.lr, 0.9f, 0.0f);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(
          order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      Tensor xb({static_cast<int>(stop - start), c});
      std::vector<int> yb(stop - start);
      for (std::size_t i = start; i < stop; ++i) {
        std::copy(train_feats[order[i]].begin(), train_feats[order[i]].end(),
                  xb.data().begin() +
                      static_cast<std::ptrdiff_t>((i - start) * c));
        yb[i - start] = probe_train.labels[order[i]];
      }
      opt.zero_grad();
      Tensor loss = cross_entropy(add(matmul(xb, w), bias), yb);
      backward(loss);
      opt.step();
    }
  }

  for (auto& p : model.params())
    if (p.tensor.has_grad())
      throw ContractError("linear_probe: extractor parameter '" + p.name +
                          "' received a gradient; the extractor must stay "
                          "frozen");

  ProbeResult res;
  std::vector<int> train_labels(probe_train.labels.begin(),
                                probe_train.labels.end());
  std::vector<int> val_labels(probe_val.labels.begin(),
                              probe_val.labels.end());
  res.train_accuracy =
      detail::probe_accuracy(w, bias, train_feats, train_labels);
  res.val_accuracy = detail::probe_accuracy(w, bias, val_feats, val_labels);
  return res;
}

}  // namespace edgefilter
