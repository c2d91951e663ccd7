#pragma once

// Model zoo: a small residual CNN for 2-D features and a patch-token MLP
// for 1-D sequence features, each with at most one edge-filter (or one
// trainable depthwise-conv control) insertion point between stages.
//
// Stage indexing follows the block list: position 0 sits after the stem,
// position i after block i. Stage outputs always end in the stage's ReLU,
// which is what the density instrumentation measures.

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "edgefilter/batchnorm.hpp"
#include "edgefilter/conv.hpp"
#include "edgefilter/errors.hpp"
#include "edgefilter/filters.hpp"
#include "edgefilter/tensor.hpp"

namespace edgefilter {

enum class Arch { small_cnn, seq_mlp };
enum class NormKind { batchnorm, layernorm_lite, none };

// Trainable depthwise conv standing in for the edge filter in the
// equal-compute control. Kernel starts as identity plus small noise.
struct ConvReplacement {
  int kernel_size = 3;
  int position = 0;
};

struct InputShape {
  int channels = 1;
  int height = 28;
  int width = 28;
};

struct ModelConfig {
  Arch arch = Arch::small_cnn;
  std::vector<int> widths = {16, 32, 64, 128};  // small_cnn: stem + blocks
  int num_classes = 10;
  NormKind norm = NormKind::batchnorm;
  std::optional<FilterSpec> filter;
  // Apply the low-pass branch directly (still detached) instead of the
  // high-pass residual. This is the degradation control, not a tuning knob.
  bool lpf_direct = false;
  std::optional<ConvReplacement> conv_replacement;
  std::uint64_t seed = 1;
  InputShape input;

  int num_blocks() const {
    return arch == Arch::small_cnn ? static_cast<int>(widths.size()) - 1
                                   : static_cast<int>(widths.size());
  }

  void validate() const {
    if (widths.empty())
      throw ConfigError("model.widths must not be empty");
    if (arch == Arch::small_cnn && widths.size() < 2)
      throw ConfigError("model.widths needs a stem width plus at least one "
                        "block width for small_cnn");
    if (num_classes < 2)
      throw ConfigError("model.num_classes must be >= 2");
    if (filter && conv_replacement)
      throw ConfigError("model.filter and model.conv_replacement are "
                        "mutually exclusive: a model carries a single filter "
                        "or its trainable control, never both");
    if (filter) {
      filter->validate();
      if (filter->position < 0 || filter->position > num_blocks())
        throw ConfigError("model.filter.position must lie in [0, " +
                          std::to_string(num_blocks()) + "], got " +
                          std::to_string(filter->position));
      if (arch == Arch::small_cnn && filter->dims != FilterDim::two_d)
        throw ConfigError("small_cnn features are 2-D; model.filter.dims "
                          "must be two_d");
      if (arch == Arch::seq_mlp && filter->dims != FilterDim::one_d)
        throw ConfigError("seq_mlp features are 1-D; model.filter.dims must "
                          "be one_d");
    }
    if (conv_replacement) {
      if (arch != Arch::small_cnn)
        throw ConfigError("model.conv_replacement is only defined for "
                          "small_cnn");
      if (conv_replacement->kernel_size < 1 ||
          conv_replacement->kernel_size % 2 == 0)
        throw ConfigError("model.conv_replacement.kernel_size must be odd");
      if (conv_replacement->position < 0 ||
          conv_replacement->position > num_blocks())
        throw ConfigError("model.conv_replacement.position out of range");
    }
    if (arch == Arch::small_cnn && norm == NormKind::layernorm_lite)
      throw ConfigError("model.norm layernorm_lite is a seq_mlp norm");
    if (arch == Arch::seq_mlp && norm == NormKind::batchnorm)
      throw ConfigError("seq_mlp has no BatchNorm; model.norm must be "
                        "layernorm_lite or none");
  }
};

// --- config (de)serialization ------------------------------------------------

inline nlohmann::json to_json(const FilterSpec& f) {
  return {{"kind", to_string(f.kind)},
          {"dims", f.dims == FilterDim::two_d ? "two_d" : "one_d"},
          {"kernel_size", f.kernel_size},
          {"sigma", f.sigma},
          {"position", f.position}};
}

inline FilterSpec filter_spec_from_json(const nlohmann::json& j) {
  FilterSpec f;
  const std::string kind = j.value("kind", "mean");
  if (kind == "mean") f.kind = LpfKind::mean;
  else if (kind == "median") f.kind = LpfKind::median;
  else if (kind == "gaussian") f.kind = LpfKind::gaussian;
  else throw ConfigError("filter.kind must be mean|median|gaussian, got '" + kind + "'");
  const std::string dims = j.value("dims", "two_d");
  if (dims == "two_d") f.dims = FilterDim::two_d;
  else if (dims == "one_d") f.dims = FilterDim::one_d;
  else throw ConfigError("filter.dims must be one_d|two_d, got '" + dims + "'");
  f.kernel_size = j.value("kernel_size", 3);
  f.sigma = j.value("sigma", 1.0f);
  f.position = j.value("position", 0);
  return f;
}

inline nlohmann::json to_json(const ModelConfig& m) {
  nlohmann::json j{
      {"arch", m.arch == Arch::small_cnn ? "small_cnn" : "seq_mlp"},
      {"widths", m.widths},
      {"num_classes", m.num_classes},
      {"norm", m.norm == NormKind::batchnorm
                   ? "batchnorm"
                   : (m.norm == NormKind::layernorm_lite ? "layernorm_lite"
                                                         : "none")},
      {"seed", m.seed},
      {"input", {{"channels", m.input.channels},
                 {"height", m.input.height},
                 {"width", m.input.width}}}};
  if (m.filter) {
    j["filter"] = to_json(*m.filter);
    j["lpf_direct"] = m.lpf_direct;
  }
  if (m.conv_replacement)
    j["conv_replacement"] = {{"kernel_size", m.conv_replacement->kernel_size},
                             {"position", m.conv_replacement->position}};
  return j;
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig m;
  const std::string arch = j.value("arch", "small_cnn");
  if (arch == "small_cnn") m.arch = Arch::small_cnn;
  else if (arch == "seq_mlp") m.arch = Arch::seq_mlp;
  else throw ConfigError("model.arch must be small_cnn|seq_mlp, got '" + arch + "'");
  if (j.contains("widths")) m.widths = j["widths"].get<std::vector<int>>();
  else if (m.arch == Arch::seq_mlp) m.widths = {64, 64, 64, 64};
  m.num_classes = j.value("num_classes", 10);
  const std::string norm =
      j.value("norm", m.arch == Arch::small_cnn ? "batchnorm" : "layernorm_lite");
  if (norm == "batchnorm") m.norm = NormKind::batchnorm;
  else if (norm == "layernorm_lite") m.norm = NormKind::layernorm_lite;
  else if (norm == "none") m.norm = NormKind::none;
  else throw ConfigError("model.norm must be batchnorm|layernorm_lite|none, got '" + norm + "'");
  m.seed = j.value("seed", std::uint64_t{1});
  if (j.contains("input")) {
    m.input.channels = j["input"].value("channels", 1);
    m.input.height = j["input"].value("height", 28);
    m.input.width = j["input"].value("width", 28);
  }
  if (j.contains("filter") && !j["filter"].is_null()) {
    m.filter = filter_spec_from_json(j["filter"]);
    m.lpf_direct = j.value("lpf_direct", false);
  }
  if (j.contains("conv_replacement") && !j["conv_replacement"].is_null()) {
    ConvReplacement cr;
    cr.kernel_size = j["conv_replacement"].value("kernel_size", 3);
    cr.position = j["conv_replacement"].value("position", 0);
    m.conv_replacement = cr;
  }
  m.validate();
  return m;
}

// --- parameter bookkeeping ----------------------------------------------------

struct Param {
  std::string name;
  Tensor tensor;
  bool norm_affine = false;  // the TENT-updatable set
};

struct BufferRef {
  std::string name;
  std::vector<float>* data;
};

struct Capture {
  bool want_stages = false;
  bool want_filter_io = false;
  // (stage name, detached post-activation output)
  std::vector<std::pair<std::string, Tensor>> stages;
  Tensor filter_input;
  Tensor filter_output;
};

// --- init helpers -------------------------------------------------------------

namespace detail {

inline void kaiming_uniform(Tensor& t, int fan_in, std::mt19937_64& rng) {
  const float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
  std::uniform_real_distribution<float> dist(-bound, bound);
  for (auto& v : t.data()) v = dist(rng);
}

}  // namespace detail

// --- losses -------------------------------------------------------------------

// Mean over the batch of -log softmax(logits)[label], max-stabilized.
inline Tensor cross_entropy(const Tensor& logits,
                            const std::vector<int>& labels) {
  if (logits.ndim() != 2)
    throw ShapeError("cross_entropy expects BxK logits, got " +
                     shape_str(logits.shape()));
  const int b = logits.dim(0), k = logits.dim(1);
  if (static_cast<int>(labels.size()) != b)
    throw DataError("cross_entropy label count " +
                    std::to_string(labels.size()) + " != batch size " +
                    std::to_string(b));
  for (int label : labels)
    if (label < 0 || label >= k)
      throw DataError("cross_entropy label " + std::to_string(label) +
                      " out of range [0, " + std::to_string(k) + ")");
  auto li = logits.impl();
  const float* lv = li->data->data();

  // softmax probabilities, kept for the backward rule
  auto probs = std::make_shared<std::vector<float>>(
      static_cast<std::size_t>(b) * k);
  double loss = 0.0;
  for (int i = 0; i < b; ++i) {
    const float* row = lv + static_cast<std::int64_t>(i) * k;
    float m = row[0];
    for (int j = 1; j < k; ++j) m = std::max(m, row[j]);
    double z = 0.0;
    for (int j = 0; j < k; ++j) z += std::exp(static_cast<double>(row[j] - m));
    const double logz = std::log(z) + m;
    for (int j = 0; j < k; ++j)
      (*probs)[static_cast<std::size_t>(i) * k + j] =
          static_cast<float>(std::exp(row[j] - logz));
    loss += logz - row[labels[static_cast<std::size_t>(i)]];
  }
  loss /= b;

  Tensor out = detail::make_output(
      {1}, {li}, [li, probs, labels, b, k](detail::TensorImpl& o) {
        if (!li->requires_grad) return;
        float* dl = li->grad_buf();
        const float g = o.grad[0] / static_cast<float>(b);
        for (int i = 0; i < b; ++i)
          for (int j = 0; j < k; ++j) {
            float p = (*probs)[static_cast<std::size_t>(i) * k + j];
            if (j == labels[static_cast<std::size_t>(i)]) p -= 1.0f;
            dl[static_cast<std::int64_t>(i) * k + j] += g * p;
          }
      });
  out.data()[0] = static_cast<float>(loss);
  return out;
}

// Mean over the batch of the softmax prediction entropy.
inline Tensor mean_entropy(const Tensor& logits) {
  if (logits.ndim() != 2)
    throw ShapeError("mean_entropy expects BxK logits, got " +
                     shape_str(logits.shape()));
  const int b = logits.dim(0), k = logits.dim(1);
  auto li = logits.impl();
  const float* lv = li->data->data();
  auto probs = std::make_shared<std::vector<float>>(
      static_cast<std::size_t>(b) * k);
  auto row_h = std::make_shared<std::vector<float>>(static_cast<std::size_t>(b));
  double total = 0.0;
  for (int i = 0; i < b; ++i) {
    const float* row = lv + static_cast<std::int64_t>(i) * k;
    float m = row[0];
    for (int j = 1; j < k; ++j) m = std::max(m, row[j]);
    double z = 0.0;
    for (int j = 0; j < k; ++j) z += std::exp(static_cast<double>(row[j] - m));
    const double logz = std::log(z) + m;
    double h = 0.0;
    for (int j = 0; j < k; ++j) {
      const double logp = row[j] - logz;
      const double p = std::exp(logp);
      (*probs)[static_cast<std::size_t>(i) * k + j] = static_cast<float>(p);
      h -= p * logp;
    }
    (*row_h)[static_cast<std::size_t>(i)] = static_cast<float>(h);
    total += h;
  }
  total /= b;

  Tensor out = detail::make_output(
      {1}, {li}, [li, probs, row_h, b, k](detail::TensorImpl& o) {
        if (!li->requires_grad) return;
        float* dl = li->grad_buf();
        const float g = o.grad[0] / static_cast<float>(b);
        for (int i = 0; i < b; ++i) {
          const float h = (*row_h)[static_cast<std::size_t>(i)];
          for (int j = 0; j < k; ++j) {
            const float p = (*probs)[static_cast<std::size_t>(i) * k + j];
            // dH/dl_j = -p_j (log p_j + H); p log p -> 0 as p -> 0
            const float logp =
                p > 0.0f ? std::log(p) : -100.0f;
            dl[static_cast<std::int64_t>(i) * k + j] +=
                g * (-p * (logp + h));
          }
        }
      });
  out.data()[0] = static_cast<float>(total);
  return out;
}

// --- layers -------------------------------------------------------------------

namespace detail {

struct ConvLayer {
  Tensor weight;  // [cout, cin, k, k]
  int stride = 1;
  PaddingMode pad;

  void init(int cout, int cin, int k, int stride_, PaddingMode pad_,
            std::mt19937_64& rng) {
    weight = Tensor({cout, cin, k, k}, true);
    kaiming_uniform(weight, cin * k * k, rng);
    stride = stride_;
    pad = pad_;
  }
  Tensor forward(const Tensor& x) const {
    return conv2d(x, weight, stride, pad);
  }
};

struct LinearLayer {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  void init(int in, int out, std::mt19937_64& rng) {
    weight = Tensor({in, out}, true);
    kaiming_uniform(weight, in, rng);
    bias = Tensor({out}, true);
  }
  Tensor forward(const Tensor& x) const {
    return add(matmul(x, weight), bias);
  }
};

struct NormLayer {  // batchnorm wrapper that degrades to identity
  bool enabled = false;
  BNState state;

  void init(int channels, bool on) {
    enabled = on;
    if (on) state = BNState(channels);
  }
  Tensor forward(const Tensor& x, Mode mode) {
    return enabled ? batchnorm2d(x, state, mode) : x;
  }
};

}  // namespace detail

// --- models -------------------------------------------------------------------

class Model {
 public:
  virtual ~Model() = default;
  virtual Tensor forward(const Tensor& x, Mode mode,
                         Capture* capture = nullptr) = 0;
  virtual std::vector<Param> params() = 0;
  virtual std::vector<BufferRef> buffers() = 0;
  virtual const ModelConfig& config() const = 0;

  std::int64_t param_count() {
    std::int64_t n = 0;
    for (auto& p : params()) n += p.tensor.numel();
    return n;
  }
  // Restrict training to the normalization affine set (TENT) or reopen all.
  void set_trainable_all(bool on) {
    for (auto& p : params()) p.tensor.set_requires_grad(on);
  }
  void set_trainable_norm_affine_only() {
    for (auto& p : params()) p.tensor.set_requires_grad(p.norm_affine);
  }
};

class SmallCnn final : public Model {
 public:
  explicit SmallCnn(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    std::mt19937_64 rng(cfg_.seed);
    const bool bn = cfg_.norm == NormKind::batchnorm;
    const int stem_w = cfg_.widths[0];
    stem_conv_.init(stem_w, cfg_.input.channels, 3, 1, PaddingMode::reflect(1),
                    rng);
    stem_norm_.init(stem_w, bn);
    const int nblocks = cfg_.num_blocks();
    blocks_.resize(static_cast<std::size_t>(nblocks));
    for (int i = 0; i < nblocks; ++i) {
      auto& blk = blocks_[static_cast<std::size_t>(i)];
      const int cin = cfg_.widths[static_cast<std::size_t>(i)];
      const int cout = cfg_.widths[static_cast<std::size_t>(i) + 1];
      blk.conv1.init(cout, cin, 3, 2, PaddingMode::reflect(1), rng);
      blk.norm1.init(cout, bn);
      blk.conv2.init(cout, cout, 3, 1, PaddingMode::reflect(1), rng);
      blk.norm2.init(cout, bn);
      blk.proj.init(cout, cin, 1, 2, PaddingMode::zero(0), rng);
      blk.normp.init(cout, bn);
    }
    fc_.init(cfg_.widths.back(), cfg_.num_classes, rng);
    if (cfg_.conv_replacement) {
      const int pos = cfg_.conv_replacement->position;
      const int ch = cfg_.widths[static_cast<std::size_t>(pos)];
      const int k = cfg_.conv_replacement->kernel_size;
      ctrl_weight_ = Tensor({ch, k, k}, true);
      ctrl_bias_ = Tensor({ch}, true);
      std::normal_distribution<float> noise(0.0f, 0.1f);  // variance 0.01
      for (int c = 0; c < ch; ++c) {
        for (int i = 0; i < k * k; ++i)
          ctrl_weight_.data()[static_cast<std::size_t>(c) * k * k + i] =
              noise(rng);
        ctrl_weight_.data()[static_cast<std::size_t>(c) * k * k +
                            (k * k) / 2] = 1.0f;
      }
    }
  }

  Tensor forward(const Tensor& x, Mode mode, Capture* capture) override {
    if (x.ndim() != 4 || x.dim(1) != cfg_.input.channels ||
        x.dim(2) != cfg_.input.height || x.dim(3) != cfg_.input.width)
      throw ShapeError("small_cnn expects Bx" +
                       std::to_string(cfg_.input.channels) + "x" +
                       std::to_string(cfg_.input.height) + "x" +
                       std::to_string(cfg_.input.width) + " input, got " +
                       shape_str(x.shape()));
    Tensor h = relu(stem_norm_.forward(stem_conv_.forward(x), mode));
    h = after_stage(h, 0, capture, "stem");
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      auto& blk = blocks_[i];
      Tensor a = relu(blk.norm1.forward(blk.conv1.forward(h), mode));
      Tensor b = blk.norm2.forward(blk.conv2.forward(a), mode);
      Tensor s = blk.normp.forward(blk.proj.forward(h), mode);
      h = relu(add(b, s));
      h = after_stage(h, static_cast<int>(i) + 1, capture,
                      "block" + std::to_string(i + 1));
    }
    return fc_.forward(global_avg_pool(h));
  }

  std::vector<Param> params() override {
    std::vector<Param> out;
    out.push_back({"stem.conv.weight", stem_conv_.weight, false});
    append_norm(out, "stem.bn", stem_norm_);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const std::string p = "block" + std::to_string(i + 1);
      auto& blk = blocks_[i];
      out.push_back({p + ".conv1.weight", blk.conv1.weight, false});
      append_norm(out, p + ".bn1", blk.norm1);
      out.push_back({p + ".conv2.weight", blk.conv2.weight, false});
      append_norm(out, p + ".bn2", blk.norm2);
      out.push_back({p + ".proj.weight", blk.proj.weight, false});
      append_norm(out, p + ".bnp", blk.normp);
    }
    out.push_back({"fc.weight", fc_.weight, false});
    out.push_back({"fc.bias", fc_.bias, false});
    if (cfg_.conv_replacement) {
      out.push_back({"ctrl.weight", ctrl_weight_, false});
      out.push_back({"ctrl.bias", ctrl_bias_, false});
    }
    return out;
  }

  std::vector<BufferRef> buffers() override {
    std::vector<BufferRef> out;
    append_buffers(out, "stem.bn", stem_norm_);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const std::string p = "block" + std::to_string(i + 1);
      append_buffers(out, p + ".bn1", blocks_[i].norm1);
      append_buffers(out, p + ".bn2", blocks_[i].norm2);
      append_buffers(out, p + ".bnp", blocks_[i].normp);
    }
    return out;
  }

  const ModelConfig& config() const override { return cfg_; }

 private:
  struct Block {
    detail::ConvLayer conv1, conv2, proj;
    detail::NormLayer norm1, norm2, normp;
  };

  Tensor after_stage(Tensor h, int stage, Capture* capture,
                     const std::string& name) {
    if (capture && capture->want_stages)
      capture->stages.emplace_back(name, detach(h));
    if (cfg_.filter && cfg_.filter->position == stage) {
      if (capture && capture->want_filter_io) capture->filter_input = detach(h);
      h = cfg_.lpf_direct ? apply_lpf(h, *cfg_.filter)
                          : edge_filter(h, *cfg_.filter);
      if (capture && capture->want_filter_io)
        capture->filter_output = detach(h);
    } else if (cfg_.conv_replacement &&
               cfg_.conv_replacement->position == stage) {
      h = conv2d_depthwise(h, ctrl_weight_, ctrl_bias_);
    }
    return h;
  }

  static void append_norm(std::vector<Param>& out, const std::string& prefix,
                          detail::NormLayer& n) {
    if (!n.enabled) return;
    out.push_back({prefix + ".gamma", n.state.gamma, true});
    out.push_back({prefix + ".beta", n.state.beta, true});
  }
  static void append_buffers(std::vector<BufferRef>& out,
                             const std::string& prefix, detail::NormLayer& n) {
    if (!n.enabled) return;
    out.push_back({prefix + ".running_mean", &n.state.running_mean});
    out.push_back({prefix + ".running_var", &n.state.running_var});
  }

  ModelConfig cfg_;
  detail::ConvLayer stem_conv_;
  detail::NormLayer stem_norm_;
  std::vector<Block> blocks_;
  detail::LinearLayer fc_;
  Tensor ctrl_weight_, ctrl_bias_;
};

// Patch-token MLP: images are zero-padded to a multiple of the patch size,
// cut into non-overlapping patches, embedded, and processed per token. The
// 1-D edge filter runs along the token axis.
class SeqMlp final : public Model {
 public:
  static constexpr int kPatch = 4;
  static constexpr int kPaddedSide = 32;

  explicit SeqMlp(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    if (cfg_.input.height > kPaddedSide || cfg_.input.width > kPaddedSide)
      throw ConfigError("seq_mlp supports inputs up to 32x32");
    std::mt19937_64 rng(cfg_.seed);
    const int pdim = cfg_.input.channels * kPatch * kPatch;
    embed_.init(pdim, cfg_.widths[0], rng);
    const int nblocks = cfg_.num_blocks();
    blocks_.resize(static_cast<std::size_t>(nblocks));
    int prev = cfg_.widths[0];
    for (int i = 0; i < nblocks; ++i) {
      auto& blk = blocks_[static_cast<std::size_t>(i)];
      const int w = cfg_.widths[static_cast<std::size_t>(i)];
      blk.fc.init(prev, w, rng);
      if (cfg_.norm == NormKind::layernorm_lite) {
        blk.gamma = Tensor::full({w}, 1.0f);
        blk.gamma.set_requires_grad(true);
        blk.beta = Tensor({w}, true);
        blk.has_norm = true;
      }
      prev = w;
    }
    fc_.init(prev, cfg_.num_classes, rng);
  }

  int num_tokens() const {
    return (kPaddedSide / kPatch) * (kPaddedSide / kPatch);
  }

  Tensor forward(const Tensor& x, Mode mode, Capture* capture) override {
    (void)mode;  // no batch statistics anywhere in this architecture
    Tensor tokens = patchify(x);
    Tensor h = relu(per_token(tokens, embed_));
    h = after_stage(h, 0, capture, "stem");
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      auto& blk = blocks_[i];
      Tensor a = relu(per_token(h, blk.fc));
      h = blk.has_norm ? token_standardize(a, blk.gamma, blk.beta) : a;
      h = after_stage(h, static_cast<int>(i) + 1, capture,
                      "block" + std::to_string(i + 1));
    }
    return fc_.forward(mean_tokens(h));
  }

  std::vector<Param> params() override {
    std::vector<Param> out;
    out.push_back({"embed.weight", embed_.weight, false});
    out.push_back({"embed.bias", embed_.bias, false});
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const std::string p = "block" + std::to_string(i + 1);
      auto& blk = blocks_[i];
      out.push_back({p + ".fc.weight", blk.fc.weight, false});
      out.push_back({p + ".fc.bias", blk.fc.bias, false});
      if (blk.has_norm) {
        out.push_back({p + ".norm.gamma", blk.gamma, true});
        out.push_back({p + ".norm.beta", blk.beta, true});
      }
    }
    out.push_back({"fc.weight", fc_.weight, false});
    out.push_back({"fc.bias", fc_.bias, false});
    return out;
  }

  std::vector<BufferRef> buffers() override { return {}; }
  const ModelConfig& config() const override { return cfg_; }

 private:
  struct Block {
    detail::LinearLayer fc;
    Tensor gamma, beta;
    bool has_norm = false;
  };

  Tensor patchify(const Tensor& x) const {
    if (x.ndim() != 4 || x.dim(1) != cfg_.input.channels ||
        x.dim(2) != cfg_.input.height || x.dim(3) != cfg_.input.width)
      throw ShapeError("seq_mlp expects Bx" +
                       std::to_string(cfg_.input.channels) + "x" +
                       std::to_string(cfg_.input.height) + "x" +
                       std::to_string(cfg_.input.width) + " input, got " +
                       shape_str(x.shape()));
    const int b = x.dim(0), c = cfg_.input.channels;
    const int h = cfg_.input.height, w = cfg_.input.width;
    const int grid = kPaddedSide / kPatch;
    const int n = grid * grid;
    const int pdim = c * kPatch * kPatch;
    Tensor tokens({b, n, pdim});
    const float* xv = x.data().data();
    float* tv = tokens.data().data();
    for (int bb = 0; bb < b; ++bb)
      for (int gi = 0; gi < grid; ++gi)
        for (int gj = 0; gj < grid; ++gj) {
          float* dst = tv + ((static_cast<std::int64_t>(bb) * n +
                              gi * grid + gj)) * pdim;
          int idx = 0;
          for (int cc = 0; cc < c; ++cc)
            for (int pi = 0; pi < kPatch; ++pi)
              for (int pj = 0; pj < kPatch; ++pj) {
                const int si = gi * kPatch + pi, sj = gj * kPatch + pj;
                dst[idx++] =
                    (si < h && sj < w)
                        ? xv[((static_cast<std::int64_t>(bb) * c + cc) * h +
                              si) * w +
                             sj]
                        : 0.0f;
              }
        }
    return tokens;
  }

  static Tensor per_token(const Tensor& h, const detail::LinearLayer& fc) {
    const int b = h.dim(0), n = h.dim(1), c = h.dim(2);
    Tensor flat = reshape(h, {b * n, c});
    Tensor y = fc.forward(flat);
    return reshape(y, {b, n, y.dim(1)});
  }

  Tensor after_stage(Tensor h, int stage, Capture* capture,
                     const std::string& name) {
    if (capture && capture->want_stages)
      capture->stages.emplace_back(name, detach(h));
    if (cfg_.filter && cfg_.filter->position == stage) {
      if (capture && capture->want_filter_io) capture->filter_input = detach(h);
      h = cfg_.lpf_direct ? apply_lpf(h, *cfg_.filter)
                          : edge_filter(h, *cfg_.filter);
      if (capture && capture->want_filter_io)
        capture->filter_output = detach(h);
    }
    return h;
  }

  ModelConfig cfg_;
  detail::LinearLayer embed_;
  std::vector<Block> blocks_;
  detail::LinearLayer fc_;
};

inline std::unique_ptr<Model> build_model(const ModelConfig& cfg) {
  cfg.validate();
  if (cfg.arch == Arch::small_cnn) return std::make_unique<SmallCnn>(cfg);
  return std::make_unique<SeqMlp>(cfg);
}

}  // namespace edgefilter
