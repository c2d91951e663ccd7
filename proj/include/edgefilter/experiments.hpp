#pragma once

// Experiment recipes behind the CLI verbs: multi-seed training, the TTA
// suite, the position/kernel and filter-type ablations, the trainable-conv
// control, linear probing, and analysis CSV regeneration.
//
// Every command validates its whole configuration and loads its datasets
// before creating any output, so a bad config never leaves partial
// directories behind. Seed cells are independent tasks; aggregation is a
// single-threaded final pass in fixed order.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "edgefilter/analysis.hpp"
#include "edgefilter/checkpoint.hpp"
#include "edgefilter/config.hpp"
#include "edgefilter/csv.hpp"
#include "edgefilter/data.hpp"
#include "edgefilter/errors.hpp"
#include "edgefilter/nn.hpp"
#include "edgefilter/train.hpp"
#include "edgefilter/tta.hpp"

namespace edgefilter {

namespace detail {

inline void parallel_tasks(int jobs, int n, const std::function<void(int)>& fn) {
  jobs = std::max(1, std::min(jobs, n));
  if (jobs <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(jobs));
  for (int t = 0; t < jobs; ++t)
    workers.emplace_back([&] {
      while (true) {
        const int i = next.fetch_add(1);
        if (i >= n) break;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  for (auto& w : workers) w.join();
  if (err) std::rethrow_exception(err);
}

inline nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["name"] = cfg.name;
  j["model"] = to_json(cfg.model);
  j["train"] = {{"epochs", cfg.train.epochs},
                {"batch_size", cfg.train.batch_size},
                {"optimizer",
                 cfg.train.optimizer == OptimKind::sgd ? "sgd" : "adam"},
                {"lr", cfg.train.lr},
                {"momentum", cfg.train.momentum},
                {"weight_decay", cfg.train.weight_decay},
                {"capture_density", cfg.train.capture_density},
                {"density_every", cfg.train.density_every}};
  nlohmann::json methods = nlohmann::json::array();
  for (auto m : cfg.tta.methods) methods.push_back(to_string(m));
  nlohmann::json kinds = nlohmann::json::array();
  for (auto k : cfg.tta.kinds) kinds.push_back(to_string(k));
  j["tta"] = {{"methods", methods},
              {"corruptions", kinds},
              {"severities", cfg.tta.severities},
              {"batch_size", cfg.tta.tta.batch_size},
              {"tent_lr", cfg.tta.tta.tent_lr},
              {"tent_steps_per_batch", cfg.tta.tta.tent_steps_per_batch},
              {"episodic", cfg.tta.tta.episodic},
              {"corruption_seed", cfg.tta.corruption_seed}};
  j["data"] = {{"name", cfg.data.name},
               {"data_dir", cfg.data.data_dir},
               {"train_size", cfg.data.train_size},
               {"val_size", cfg.data.val_size},
               {"height", cfg.data.height},
               {"width", cfg.data.width},
               {"normalize_mean", cfg.data.normalize_mean},
               {"normalize_std", cfg.data.normalize_std},
               {"seed", cfg.data.seed},
               {"cache_corruptions", cfg.data.cache_corruptions}};
  j["ablate"] = {{"positions", cfg.ablate.positions},
                 {"kernel_sizes", cfg.ablate.kernel_sizes}};
  j["probe"] = {{"epochs", cfg.probe.probe.epochs},
                {"batch_size", cfg.probe.probe.batch_size},
                {"lr", cfg.probe.probe.lr},
                {"data",
                 {{"name", cfg.probe.data.name},
                  {"train_size", cfg.probe.data.train_size},
                  {"val_size", cfg.probe.data.val_size},
                  {"height", cfg.probe.data.height},
                  {"width", cfg.probe.data.width},
                  {"normalize_mean", cfg.probe.data.normalize_mean},
                  {"normalize_std", cfg.probe.data.normalize_std},
                  {"seed", cfg.probe.data.seed}}}};
  j["seeds"] = cfg.seeds;
  j["output_dir"] = cfg.output_dir;
  return j;
}

// Trains one seed cell in memory and returns the model plus its metrics.
inline std::unique_ptr<Model> train_cell(const ExperimentConfig& cfg,
                                         ModelConfig mc, std::uint64_t seed,
                                         const LoadedData& data,
                                         const std::string& run_id,
                                         std::vector<MetricsRecord>* records) {
  mc.seed = seed;
  mc.input = {data.train.channels, data.train.height, data.train.width};
  mc.validate();
  auto model = build_model(mc);
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  MetricsSink sink;
  if (records)
    sink = [records](const MetricsRecord& r) { records->push_back(r); };
  train(*model, data.train, data.val, tc, run_id, sink);
  return model;
}

// Mean direct accuracy over all configured corruptions at the configured
// severities (the "Direct" column of the desk-scale tables).
inline double mean_corrupted_accuracy(Model& model, const Dataset& raw_val,
                                      const ExperimentConfig& cfg,
                                      TTAMethod method) {
  double sum = 0.0;
  int cells = 0;
  for (auto kind : cfg.tta.kinds)
    for (int sev : cfg.tta.severities) {
      CorruptionSpec spec{kind, sev};
      Dataset corrupted =
          corrupt_dataset(raw_val, spec, cfg.tta.corruption_seed);
      FloatDataset ds = normalize(corrupted, cfg.data.normalize_mean,
                                  cfg.data.normalize_std);
      switch (method) {
        case TTAMethod::source:
        case TTAMethod::direct:
          sum += evaluate_direct(model, ds, cfg.tta.tta.batch_size);
          break;
        case TTAMethod::norm:
          sum += evaluate_norm(model, ds, cfg.tta.tta);
          break;
        case TTAMethod::tent: {
          auto clone = clone_model(model);
          sum += evaluate_tent(*clone, ds, cfg.tta.tta);
          break;
        }
      }
      ++cells;
    }
  return sum / static_cast<double>(cells);
}

// Stage output spatial side length of the small CNN at a given position.
inline int stage_side(int input_side, int position) {
  int side = input_side;
  for (int i = 0; i < position; ++i) side = (side - 1) / 2 + 1;
  return side;
}

inline std::vector<std::string> find_checkpoints(const ExperimentConfig& cfg,
                                                 const std::string& pattern) {
  namespace fs = std::filesystem;
  std::vector<std::string> found;
  if (!pattern.empty()) {
    // explicit list or prefix glob of run directories
    const fs::path p(pattern);
    if (fs::exists(p) && fs::is_regular_file(p)) {
      found.push_back(p.string());
      return found;
    }
  }
  const fs::path root(cfg.output_dir);
  if (fs::exists(root))
    for (const auto& entry : fs::directory_iterator(root)) {
      if (!entry.is_directory()) continue;
      const fs::path ckpt = entry.path() / "checkpoint.defc";
      const std::string dirname = entry.path().filename().string();
      if (!pattern.empty() && dirname.rfind(cfg.name + "-s", 0) != 0 &&
          dirname.rfind(pattern, 0) != 0)
        continue;
      if (pattern.empty() && dirname.rfind(cfg.name + "-s", 0) != 0) continue;
      if (fs::exists(ckpt)) found.push_back(ckpt.string());
    }
  std::sort(found.begin(), found.end());
  if (found.empty())
    throw FormatError("no checkpoints found under '" + cfg.output_dir +
                      "' (pattern '" + pattern + "')");
  return found;
}

struct ParsedMetrics {
  std::vector<MetricsRecord> records;
};

inline ParsedMetrics read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path + ": cannot open");
  ParsedMetrics out;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    MetricsRecord r;
    std::getline(ss, r.run_id, ',');
    std::getline(ss, cell, ',');
    r.seed = std::stoull(cell);
    std::getline(ss, cell, ',');
    r.epoch = std::stoi(cell);
    std::getline(ss, r.scope, ',');
    std::getline(ss, r.key, ',');
    std::getline(ss, cell, ',');
    r.value = std::stod(cell);
    out.records.push_back(std::move(r));
  }
  return out;
}

inline void write_density_csv(const std::string& path,
                              const std::vector<MetricsRecord>& records) {
  std::ofstream trunc(path, std::ios::trunc);
  trunc.close();
  CsvFile csv(path, "run_id,epoch,block,density");
  for (const auto& r : records)
    if (r.scope == "block-density")
      csv.row({r.run_id, std::to_string(r.epoch), r.key, fmt_float(r.value)});
}

}  // namespace detail

// --- train ----------------------------------------------------------------------

inline void cmd_train(const ExperimentConfig& cfg, int jobs = 1) {
  cfg.validate();
  const LoadedData data = load_data(cfg.data);
  namespace fs = std::filesystem;
  fs::create_directories(cfg.output_dir);

  detail::parallel_tasks(jobs, static_cast<int>(cfg.seeds.size()), [&](int i) {
    const std::uint64_t seed = cfg.seeds[static_cast<std::size_t>(i)];
    const std::string run_id = cfg.name + "-s" + std::to_string(seed);
    const fs::path dir = fs::path(cfg.output_dir) / run_id;
    fs::create_directories(dir);

    std::vector<MetricsRecord> records;
    auto model = detail::train_cell(cfg, cfg.model, seed, data, run_id,
                                    &records);
    save_checkpoint(*model, (dir / "checkpoint.defc").string());
    {
      std::ofstream trunc((dir / "metrics.csv").string(), std::ios::trunc);
    }
    write_metrics_csv((dir / "metrics.csv").string(), records);
    detail::write_density_csv((dir / "density.csv").string(), records);
    std::ofstream cj((dir / "config.json").string(), std::ios::trunc);
    nlohmann::json j = detail::experiment_config_to_json(cfg);
    j["run"] = {{"run_id", run_id}, {"seed", seed}};
    cj << j.dump(2) << "\n";
  });
}

// --- tta ------------------------------------------------------------------------

inline void cmd_tta(const ExperimentConfig& cfg,
                    const std::string& checkpoint_pattern = "",
                    int jobs = 1) {
  cfg.validate();
  const bool needs_bn =
      std::any_of(cfg.tta.methods.begin(), cfg.tta.methods.end(),
                  [](TTAMethod m) {
                    return m == TTAMethod::norm || m == TTAMethod::tent;
                  });
  const auto checkpoints = detail::find_checkpoints(cfg, checkpoint_pattern);
  const LoadedData data = load_data(cfg.data);

  // fail fast before any evaluation output
  std::vector<std::unique_ptr<Model>> models(checkpoints.size());
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    models[i] = load_checkpoint(checkpoints[i]);
    if (needs_bn && models[i]->buffers().empty())
      throw ConfigError(checkpoints[i] +
                        ": NORM/TENT require BatchNorm statistics, and this "
                        "model has none");
  }

  if (cfg.data.cache_corruptions) {
    const std::string dir = resolve_data_dir(cfg.data);
    if (!dir.empty()) {
      for (auto kind : cfg.tta.kinds)
        for (int sev : cfg.tta.severities) {
          CorruptionSpec spec{kind, sev};
          Dataset corrupted = corrupt_dataset(data.val_raw, spec,
                                              cfg.tta.corruption_seed);
          namespace fs = std::filesystem;
          write_idx_images(
              (fs::path(dir) / corrupted_cache_name(data.val_raw.name, spec))
                  .string(),
              corrupted);
        }
    }
  }

  std::vector<std::vector<TTARecord>> results(checkpoints.size());
  detail::parallel_tasks(
      jobs, static_cast<int>(checkpoints.size()), [&](int i) {
        results[static_cast<std::size_t>(i)] = run_tta_suite(
            *models[static_cast<std::size_t>(i)], data.val_raw,
            cfg.data.normalize_mean, cfg.data.normalize_std, cfg.tta.kinds,
            cfg.tta.severities, cfg.tta.methods, cfg.tta.tta,
            cfg.tta.corruption_seed);
      });

  namespace fs = std::filesystem;
  fs::create_directories(cfg.output_dir);
  CsvFile csv((fs::path(cfg.output_dir) / "tta_results.csv").string(),
              "run_id,seed,model_variant,method,corruption,severity,accuracy");
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    const std::string run_id =
        fs::path(checkpoints[i]).parent_path().filename().string();
    const auto& mc = models[i]->config();
    for (const auto& r : results[i])
      csv.row({run_id, std::to_string(mc.seed), variant_label(mc), r.method,
               r.corruption, std::to_string(r.severity),
               fmt_float(r.accuracy)});
  }
}

// --- ablate ---------------------------------------------------------------------

inline void cmd_ablate(const ExperimentConfig& cfg, int jobs = 1) {
  cfg.validate();
  if (cfg.model.arch != Arch::small_cnn)
    throw ConfigError("ablate sweeps 2-D filters over small_cnn models");
  const LoadedData data = load_data(cfg.data);

  // baseline pool, one run per seed, shared across every grid cell
  const int n_seeds = static_cast<int>(cfg.seeds.size());
  std::vector<double> baseline_acc(static_cast<std::size_t>(n_seeds));
  detail::parallel_tasks(jobs, n_seeds, [&](int i) {
    ModelConfig mc = cfg.model;
    mc.filter.reset();
    mc.conv_replacement.reset();
    auto model = detail::train_cell(cfg, mc, cfg.seeds[static_cast<std::size_t>(i)],
                                    data, "ablate-baseline", nullptr);
    baseline_acc[static_cast<std::size_t>(i)] =
        detail::mean_corrupted_accuracy(*model, data.val_raw, cfg,
                                        TTAMethod::direct);
  });
  const SeedStats base =
      n_seeds >= 2 ? seed_stats(baseline_acc)
                   : SeedStats{baseline_acc[0], 0.0, 1};

  struct Cell {
    int position;
    int kernel;
  };
  std::vector<Cell> cells;
  const int min_side = std::min(data.train.height, data.train.width);
  for (int pos : cfg.ablate.positions)
    for (int k : cfg.ablate.kernel_sizes) {
      const int side = detail::stage_side(min_side, pos);
      if (side > 1 && (k - 1) / 2 >= side) {
        emit_warning("ablate: skipping position " + std::to_string(pos) +
                     " kernel " + std::to_string(k) + ": window exceeds the " +
                     std::to_string(side) + "-pixel feature map");
        continue;
      }
      cells.push_back({pos, k});
    }
  if (cells.empty()) throw ConfigError("ablate grid has no feasible cells");

  std::vector<std::vector<double>> cell_acc(
      cells.size(), std::vector<double>(static_cast<std::size_t>(n_seeds)));
  detail::parallel_tasks(
      jobs, static_cast<int>(cells.size()) * n_seeds, [&](int t) {
        const int ci = t / n_seeds;
        const int si = t % n_seeds;
        ModelConfig mc = cfg.model;
        FilterSpec f = cfg.model.filter ? *cfg.model.filter : FilterSpec{};
        f.dims = FilterDim::two_d;
        f.position = cells[static_cast<std::size_t>(ci)].position;
        f.kernel_size = cells[static_cast<std::size_t>(ci)].kernel;
        mc.filter = f;
        mc.lpf_direct = false;
        mc.conv_replacement.reset();
        auto model = detail::train_cell(
            cfg, mc, cfg.seeds[static_cast<std::size_t>(si)], data,
            "ablate-cell", nullptr);
        cell_acc[static_cast<std::size_t>(ci)][static_cast<std::size_t>(si)] =
            detail::mean_corrupted_accuracy(*model, data.val_raw, cfg,
                                            TTAMethod::direct);
      });

  namespace fs = std::filesystem;
  fs::create_directories(cfg.output_dir);
  const std::string path =
      (fs::path(cfg.output_dir) / "heatmap.csv").string();
  std::ofstream trunc(path, std::ios::trunc);
  trunc.close();
  CsvFile csv(path,
              "position,kernel_size,n_seeds,baseline_mean,baseline_sd,"
              "filter_mean,filter_sd,gain,sigma_gain");
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    const auto& acc = cell_acc[ci];
    const SeedStats st = n_seeds >= 2 ? seed_stats(acc)
                                      : SeedStats{acc[0], 0.0, 1};
    const double gain = st.mean - base.mean;
    std::string sigma;
    if (base.sd > 0.0) sigma = fmt_float(sigma_gain(st.mean, base));
    csv.row({std::to_string(cells[ci].position),
             std::to_string(cells[ci].kernel), std::to_string(n_seeds),
             fmt_float(base.mean), fmt_float(base.sd), fmt_float(st.mean),
             fmt_float(st.sd), fmt_float(gain), sigma});
  }
}

// --- filter-type ablation ---------------------------------------------------------

inline void cmd_filter_type_ablation(const ExperimentConfig& cfg,
                                     int jobs = 1) {
  cfg.validate();
  if (!cfg.model.filter)
    throw ConfigError("type-ablation needs model.filter as the template for "
                      "kernel size and position");
  const LoadedData data = load_data(cfg.data);

  struct Variant {
    std::string label;
    std::optional<LpfKind> kind;  // nullopt -> baseline
    bool lpf_direct = false;
  };
  const std::vector<Variant> variants{
      {"baseline", std::nullopt, false},
      {"edge-mean", LpfKind::mean, false},
      {"edge-median", LpfKind::median, false},
      {"edge-gaussian", LpfKind::gaussian, false},
      {"lpf-mean", LpfKind::mean, true},
  };

  const int n_seeds = static_cast<int>(cfg.seeds.size());
  std::vector<std::vector<double>> acc(
      variants.size(), std::vector<double>(static_cast<std::size_t>(n_seeds)));
  detail::parallel_tasks(
      jobs, static_cast<int>(variants.size()) * n_seeds, [&](int t) {
        const int vi = t / n_seeds;
        const int si = t % n_seeds;
        ModelConfig mc = cfg.model;
        mc.conv_replacement.reset();
        const auto& v = variants[static_cast<std::size_t>(vi)];
        if (!v.kind) {
          mc.filter.reset();
          mc.lpf_direct = false;
        } else {
          FilterSpec f = *cfg.model.filter;
          f.kind = *v.kind;
          mc.filter = f;
          mc.lpf_direct = v.lpf_direct;
        }
        auto model = detail::train_cell(
            cfg, mc, cfg.seeds[static_cast<std::size_t>(si)], data,
            "type-ablation", nullptr);
        acc[static_cast<std::size_t>(vi)][static_cast<std::size_t>(si)] =
            detail::mean_corrupted_accuracy(*model, data.val_raw, cfg,
                                            TTAMethod::direct);
      });

  namespace fs = std::filesystem;
  fs::create_directories(cfg.output_dir);
  const std::string path =
      (fs::path(cfg.output_dir) / "type_ablation.csv").string();
  std::ofstream trunc(path, std::ios::trunc);
  trunc.close();
  CsvFile csv(path, "run_id,seed,variant,accuracy");
  for (std::size_t vi = 0; vi < variants.size(); ++vi)
    for (int si = 0; si < n_seeds; ++si) {
      const std::uint64_t seed = cfg.seeds[static_cast<std::size_t>(si)];
      csv.row({cfg.name + "-" + variants[vi].label + "-s" +
                   std::to_string(seed),
               std::to_string(seed), variants[vi].label,
               fmt_float(acc[vi][static_cast<std::size_t>(si)])});
    }
}

// --- trainable-conv control --------------------------------------------------------

inline void cmd_control_conv(const ExperimentConfig& cfg, int jobs = 1) {
  cfg.validate();
  if (!cfg.model.filter)
    throw ConfigError("control-conv needs model.filter as the template for "
                      "kernel size and position");
  if (cfg.model.conv_replacement)
    throw ConfigError("control-conv builds its own conv variant; leave "
                      "model.conv_replacement unset");
  const LoadedData data = load_data(cfg.data);

  struct Variant {
    std::string label;
    enum class Kind { none, conv, edge } kind;
  };
  const std::vector<Variant> variants{{"no-filter", Variant::Kind::none},
                                      {"conv-layer", Variant::Kind::conv},
                                      {"edge-filter", Variant::Kind::edge}};
  struct CellResult {
    double source = 0, direct = 0, norm = 0, tent = 0;
    std::int64_t param_count = 0;
  };
  const int n_seeds = static_cast<int>(cfg.seeds.size());
  std::vector<std::vector<CellResult>> results(
      variants.size(), std::vector<CellResult>(static_cast<std::size_t>(n_seeds)));

  detail::parallel_tasks(
      jobs, static_cast<int>(variants.size()) * n_seeds, [&](int t) {
        const int vi = t / n_seeds;
        const int si = t % n_seeds;
        ModelConfig mc = cfg.model;
        switch (variants[static_cast<std::size_t>(vi)].kind) {
          case Variant::Kind::none:
            mc.filter.reset();
            break;
          case Variant::Kind::conv: {
            ConvReplacement cr;
            cr.kernel_size = cfg.model.filter->kernel_size;
            cr.position = cfg.model.filter->position;
            mc.filter.reset();
            mc.conv_replacement = cr;
            break;
          }
          case Variant::Kind::edge:
            break;  // as configured
        }
        auto model = detail::train_cell(
            cfg, mc, cfg.seeds[static_cast<std::size_t>(si)], data,
            "control", nullptr);
        CellResult r;
        r.param_count = model->param_count();
        r.source = evaluate_direct(*model, data.val, cfg.tta.tta.batch_size);
        r.direct = detail::mean_corrupted_accuracy(*model, data.val_raw, cfg,
                                                   TTAMethod::direct);
        r.norm = detail::mean_corrupted_accuracy(*model, data.val_raw, cfg,
                                                 TTAMethod::norm);
        r.tent = detail::mean_corrupted_accuracy(*model, data.val_raw, cfg,
                                                 TTAMethod::tent);
        results[static_cast<std::size_t>(vi)][static_cast<std::size_t>(si)] = r;
      });

  namespace fs = std::filesystem;
  fs::create_directories(cfg.output_dir);
  const std::string path = (fs::path(cfg.output_dir) / "control.csv").string();
  std::ofstream trunc(path, std::ios::trunc);
  trunc.close();
  CsvFile csv(path,
              "run_id,seed,variant,param_count,source,direct,norm,tent");
  for (std::size_t vi = 0; vi < variants.size(); ++vi)
    for (int si = 0; si < n_seeds; ++si) {
      const auto& r = results[vi][static_cast<std::size_t>(si)];
      const std::uint64_t seed = cfg.seeds[static_cast<std::size_t>(si)];
      csv.row({cfg.name + "-" + variants[vi].label + "-s" +
                   std::to_string(seed),
               std::to_string(seed), variants[vi].label,
               std::to_string(r.param_count), fmt_float(r.source),
               fmt_float(r.direct), fmt_float(r.norm), fmt_float(r.tent)});
    }
}

// --- probe ---------------------------------------------------------------------

inline void cmd_probe(const ExperimentConfig& cfg,
                      const std::string& checkpoint_pattern = "",
                      int jobs = 1) {
  cfg.validate();
  if (cfg.probe.data.name == cfg.data.name)
    throw ConfigError("probe.data.name must differ from data.name: linear "
                      "probing is a transfer protocol");
  const auto checkpoints = detail::find_checkpoints(cfg, checkpoint_pattern);
  const LoadedData pdata = load_data(cfg.probe.data);

  struct Row {
    std::string run_id;
    std::uint64_t seed;
    std::string variant;
    ProbeResult result;
  };
  std::vector<std::vector<Row>> rows(checkpoints.size());
  detail::parallel_tasks(
      jobs, static_cast<int>(checkpoints.size()), [&](int i) {
        auto model = load_checkpoint(checkpoints[static_cast<std::size_t>(i)]);
        const std::string run_id =
            std::filesystem::path(checkpoints[static_cast<std::size_t>(i)])
                .parent_path()
                .filename()
                .string();
        for (auto variant :
             {ProbeVariant::none, ProbeVariant::lpf, ProbeVariant::edge}) {
          ProbeConfig pc = cfg.probe.probe;
          pc.seed = model->config().seed;
          ProbeResult res =
              linear_probe(*model, pdata.train, pdata.val, pc, variant, 10);
          rows[static_cast<std::size_t>(i)].push_back(
              {run_id, model->config().seed, to_string(variant), res});
        }
      });

  namespace fs = std::filesystem;
  fs::create_directories(cfg.output_dir);
  const std::string path = (fs::path(cfg.output_dir) / "probe.csv").string();
  std::ofstream trunc(path, std::ios::trunc);
  trunc.close();
  CsvFile csv(path, "run_id,seed,variant,train_accuracy,val_accuracy");
  for (const auto& per_ckpt : rows)
    for (const auto& r : per_ckpt)
      csv.row({r.run_id, std::to_string(r.seed), r.variant,
               fmt_float(r.result.train_accuracy),
               fmt_float(r.result.val_accuracy)});
}

// --- analyze --------------------------------------------------------------------

// Regenerates density.csv / spectrum.csv per run and stats.csv across runs.
// Pure function of the run artifacts: rerunning produces byte-identical
// files.
inline void cmd_analyze(const std::string& run_root) {
  namespace fs = std::filesystem;
  if (!fs::exists(run_root))
    throw DataError(run_root + ": no such run directory");

  std::vector<fs::path> run_dirs;
  if (fs::exists(fs::path(run_root) / "checkpoint.defc")) {
    run_dirs.push_back(run_root);
  } else {
    for (const auto& entry : fs::directory_iterator(run_root))
      if (entry.is_directory() &&
          fs::exists(entry.path() / "checkpoint.defc"))
        run_dirs.push_back(entry.path());
    std::sort(run_dirs.begin(), run_dirs.end());
  }
  if (run_dirs.empty())
    throw DataError(run_root + ": contains no runs with checkpoints");

  struct RunSummary {
    std::string variant;
    double final_val_accuracy = 0.0;
  };
  std::vector<RunSummary> summaries;

  for (const auto& dir : run_dirs) {
    const auto metrics =
        detail::read_metrics_csv((dir / "metrics.csv").string());
    bool has_density = false;
    for (const auto& r : metrics.records)
      if (r.scope == "block-density") has_density = true;
    if (!has_density)
      throw DataError(dir.string() +
                      ": metrics hold no density records; re-run training "
                      "with train.capture_density=true");
    detail::write_density_csv((dir / "density.csv").string(),
                              metrics.records);

    auto model = load_checkpoint((dir / "checkpoint.defc").string());
    RunSummary s;
    s.variant = variant_label(model->config());
    int best_epoch = -1;
    for (const auto& r : metrics.records)
      if (r.scope == "val" && r.key == "accuracy" && r.epoch > best_epoch) {
        best_epoch = r.epoch;
        s.final_val_accuracy = r.value;
      }
    summaries.push_back(s);

    if (model->config().filter) {
      const std::string cfg_path = (dir / "config.json").string();
      std::ifstream cin(cfg_path);
      if (!cin) throw DataError(cfg_path + ": missing run config");
      nlohmann::json j;
      cin >> j;
      DataConfig dc = detail::parse_data(j.at("data"), DataConfig{});
      LoadedData data = load_data(dc);
      SpectrumProfile prof =
          model->config().filter->dims == FilterDim::two_d
              ? spectrum_profile(*model, data.val)
              : spectrum_profile_1d(*model, data.val);
      const std::string spath = (dir / "spectrum.csv").string();
      std::ofstream trunc(spath, std::ios::trunc);
      trunc.close();
      CsvFile csv(spath, "freq_index,input_amp,output_amp");
      for (std::size_t f = 0; f < prof.input_amp.size(); ++f)
        csv.row({std::to_string(f), fmt_float(prof.input_amp[f]),
                 fmt_float(prof.output_amp[f])});
    }
  }

  // cross-run statistics per variant
  std::map<std::string, std::vector<double>> groups;
  for (const auto& s : summaries)
    groups[s.variant].push_back(s.final_val_accuracy);
  const fs::path stats_path = fs::path(run_root) / "stats.csv";
  std::ofstream trunc(stats_path.string(), std::ios::trunc);
  trunc.close();
  CsvFile csv(stats_path.string(), "config_key,metric,mean,sd,n");
  for (const auto& [variant, values] : groups) {
    if (values.size() < 2) continue;
    const SeedStats st = seed_stats(values);
    csv.row({variant, "val_accuracy", fmt_float(st.mean), fmt_float(st.sd),
             std::to_string(st.n)});
  }
}

}  // namespace edgefilter
