// Command-line front end for the edge-filter experiment harness.
//
// Exit codes: 0 success, 2 configuration error, 3 data/format error,
// 4 training diverged, 1 anything else.

#include <exception>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "edgefilter/experiments.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  int seeds_n = 0;
  std::string seed_list;
  int jobs = 1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "experiment config JSON")
      ->required();
  cmd->add_option("--out", args.out_dir, "override output_dir");
  cmd->add_option("--seeds", args.seeds_n, "override seeds with 1..N");
  cmd->add_option("--seed-list", args.seed_list,
                  "override seeds with a comma-separated list");
  cmd->add_option("--jobs", args.jobs, "parallel seed/checkpoint tasks")
      ->check(CLI::PositiveNumber);
}

edgefilter::ExperimentConfig resolve(const CommonArgs& args) {
  auto cfg = edgefilter::load_experiment_config(args.config_path);
  if (!args.out_dir.empty()) cfg.output_dir = args.out_dir;
  if (args.seeds_n > 0) {
    cfg.seeds.clear();
    for (int i = 1; i <= args.seeds_n; ++i)
      cfg.seeds.push_back(static_cast<std::uint64_t>(i));
  }
  if (!args.seed_list.empty()) {
    cfg.seeds.clear();
    std::stringstream ss(args.seed_list);
    std::string cell;
    while (std::getline(ss, cell, ','))
      cfg.seeds.push_back(std::stoull(cell));
  }
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep edge-filter training and adaptation harness"};
  app.require_subcommand(1);

  CommonArgs train_args, tta_args, ablate_args, type_args, control_args,
      probe_args;
  std::string tta_checkpoints, probe_checkpoint, analyze_dir;

  auto* train_cmd = app.add_subcommand("train", "train one model per seed");
  add_common(train_cmd, train_args);

  auto* tta_cmd =
      app.add_subcommand("tta", "run the TTA suite over checkpoints");
  add_common(tta_cmd, tta_args);
  tta_cmd->add_option("--checkpoints", tta_checkpoints,
                      "checkpoint file or run-dir prefix");

  auto* ablate_cmd =
      app.add_subcommand("ablate", "position x kernel-size heatmap sweep");
  add_common(ablate_cmd, ablate_args);

  auto* type_cmd = app.add_subcommand(
      "type-ablation", "mean/median/gaussian edge filters plus the "
                       "direct-LPF degradation control");
  add_common(type_cmd, type_args);

  auto* control_cmd = app.add_subcommand(
      "control-conv", "edge filter vs equal-compute trainable conv");
  add_common(control_cmd, control_args);

  auto* probe_cmd = app.add_subcommand(
      "probe", "linear probing on frozen features, transfer dataset");
  add_common(probe_cmd, probe_args);
  probe_cmd->add_option("--checkpoint", probe_checkpoint,
                        "checkpoint file or run-dir prefix");

  auto* analyze_cmd = app.add_subcommand(
      "analyze", "regenerate density/spectrum/stats CSVs from a run dir");
  analyze_cmd->add_option("run_dir", analyze_dir, "run directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed())
      edgefilter::cmd_train(resolve(train_args), train_args.jobs);
    else if (tta_cmd->parsed())
      edgefilter::cmd_tta(resolve(tta_args), tta_checkpoints, tta_args.jobs);
    else if (ablate_cmd->parsed())
      edgefilter::cmd_ablate(resolve(ablate_args), ablate_args.jobs);
    else if (type_cmd->parsed())
      edgefilter::cmd_filter_type_ablation(resolve(type_args),
                                           type_args.jobs);
    else if (control_cmd->parsed())
      edgefilter::cmd_control_conv(resolve(control_args), control_args.jobs);
    else if (probe_cmd->parsed())
      edgefilter::cmd_probe(resolve(probe_args), probe_checkpoint,
                            probe_args.jobs);
    else if (analyze_cmd->parsed())
      edgefilter::cmd_analyze(analyze_dir);
  } catch (const edgefilter::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const edgefilter::FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 3;
  } catch (const edgefilter::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const edgefilter::TrainingDiverged& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
