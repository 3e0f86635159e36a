// SPDX-License-Identifier: Apache-2.0
// vidprism: generate data, train, inspect and run ablations from a config.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "vidprism/checkpoint.hpp"
#include "vidprism/config.hpp"
#include "vidprism/errors.hpp"
#include "vidprism/file_io.hpp"
#include "vidprism/trainer.hpp"

namespace fs = std::filesystem;
using namespace vidprism;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitDiverged = 3;

struct CommonArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

RunConfig resolve(const CommonArgs& args) {
  RunConfig cfg = args.config.empty() ? parse_run_config("") : load_run_config(args.config);
  if (!args.out.empty()) cfg.out_dir = args.out;
  if (args.seed) cfg.apply_seed(*args.seed);
  return cfg;
}

ModelConfig model_for(const RunConfig& cfg, const Dataset& ds) {
  ModelConfig m = cfg.model;
  m.dim = ds.dim;
  m.num_classes = ds.num_classes;
  return m;
}

void write_text(const fs::path& path, const std::string& text) { write_file_atomic(path, text); }

int cmd_gen(const CommonArgs& args) {
  RunConfig cfg = resolve(args);
  if (cfg.source != DataSource::synthetic) throw ConfigError("gen needs data.source = \"synthetic\"");
  Dataset ds = generate_synthetic(cfg.synthetic);
  fs::create_directories(cfg.out_dir);
  const fs::path path = cfg.out_dir / "dataset.vpf";
  write_vpf(ds, path);
  std::cout << path.string() << ": " << ds.size() << " clips, " << ds.num_classes << " classes, D=" << ds.dim << "\n";
  return kExitOk;
}

int cmd_train(const CommonArgs& args) {
  RunConfig cfg = resolve(args);
  Dataset ds = load_dataset(cfg);
  Model model(model_for(cfg, ds), cfg.seed);
  fs::create_directories(cfg.out_dir);
  std::ostringstream log;
  TrainIo io{&log, cfg.out_dir / "checkpoint.vpck"};
  RunReport report;
  try {
    report = train(model, ds, cfg.train, io);
  } catch (const DivergenceError&) {
    write_text(cfg.out_dir / "train_log.jsonl", log.str());
    throw;
  }
  report.config = {{"run", to_json(cfg)}, {"model", to_json(model.config())}};
  write_text(cfg.out_dir / "train_log.jsonl", log.str());
  write_text(cfg.out_dir / "run_report.json", report.to_json().dump(2) + "\n");
  write_text(cfg.out_dir / "expert_usage.csv", report.usage.to_csv());
  write_text(cfg.out_dir / "timing.json", nlohmann::json{{"wall_clock_seconds", report.wall_clock_seconds}}.dump() + "\n");
  std::printf("trained %zu epochs (%zu steps): train acc %.4f, eval acc %.4f -> %s\n", report.epochs.size(),
              report.steps, report.final_train_accuracy, report.final_eval_accuracy, cfg.out_dir.c_str());
  return kExitOk;
}

int cmd_inspect(const CommonArgs& args, const std::string& checkpoint, long long clip_index) {
  RunConfig cfg = resolve(args);
  const fs::path ckpt = checkpoint.empty() ? cfg.out_dir / "checkpoint.vpck" : fs::path(checkpoint);
  if (!fs::exists(ckpt)) throw ConfigError("checkpoint '" + ckpt.string() + "' does not exist");
  auto model = load_checkpoint(ckpt);
  Dataset ds = load_dataset(cfg);
  if (clip_index < 0 || static_cast<std::size_t>(clip_index) >= ds.size()) {
    throw ConfigError("clip index " + std::to_string(clip_index) + " out of range [0, " + std::to_string(ds.size()) +
                      ")");
  }
  const auto& clip = ds.clips[static_cast<std::size_t>(clip_index)];
  NoGradGuard no_grad;
  ForwardResult f = model->forward(clip.frames);

  nlohmann::json traces = nlohmann::json::array();
  nlohmann::json s_mix = nlohmann::json::object();
  for (const auto& agg : f.aggregates) {
    traces.push_back(to_json(agg.trace));
    s_mix[std::to_string(agg.trace.rate)] = agg.trace.s_mix;
  }
  const auto& logits = f.logits.value().values();
  std::size_t pred = 0;
  for (std::size_t c = 1; c < logits.size(); ++c)
    if (logits[c] > logits[pred]) pred = c;
  nlohmann::json out{{"clip_index", clip_index},
                     {"clip_id", clip.clip_id},
                     {"label", clip.label},
                     {"prediction", pred},
                     {"logits", logits},
                     {"readout_weights", f.weights.value().values()},
                     {"gate_matrix", to_json(f.gates)},
                     {"merge_traces", traces},
                     {"s_mix", s_mix}};
  std::cout << out.dump(2) << "\n";
  return kExitOk;
}

int cmd_ablate(const CommonArgs& args, const std::string& axis_name) {
  const AblationAxis axis = parse_ablation_axis(axis_name);
  RunConfig cfg = resolve(args);
  Dataset ds = load_dataset(cfg);
  auto rows = run_ablation(axis, model_for(cfg, ds), cfg.train, ds);
  fs::create_directories(cfg.out_dir);
  const fs::path path = cfg.out_dir / ("ablation_" + to_string(axis) + ".csv");
  const std::string csv = ablation_csv(rows);
  write_text(path, csv);
  std::cout << csv;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-rate temporal mixture-of-experts on frame features"};
  app.require_subcommand(1);
  CommonArgs common;
  std::string checkpoint, axis;
  long long clip = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "run config file (defaults apply when omitted)");
    sub->add_option("--out", common.out, "output directory (overrides output.dir)");
    sub->add_option("--seed", common.seed, "seed (overrides the config)");
  };
  auto* gen = app.add_subcommand("gen", "write the synthetic dataset to <out>/dataset.vpf");
  auto* train_cmd = app.add_subcommand("train", "train and write report, log, usage and checkpoint");
  auto* inspect = app.add_subcommand("inspect", "print traces for one clip as JSON");
  auto* ablate = app.add_subcommand("ablate", "train every variant along one ablation axis");
  for (auto* sub : {gen, train_cmd, inspect, ablate}) add_common(sub);
  inspect->add_option("--checkpoint", checkpoint, "checkpoint (default <out>/checkpoint.vpck)");
  inspect->add_option("--clip", clip, "clip index into the dataset");
  ablate->add_option("--axis", axis, "aggregation | interaction | combination | expert_grid")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen(common);
    if (train_cmd->parsed()) return cmd_train(common);
    if (inspect->parsed()) return cmd_inspect(common, checkpoint, clip);
    if (ablate->parsed()) return cmd_ablate(common, axis);
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << " (last good checkpoint: "
              << (e.last_good_checkpoint().empty() ? "none" : e.last_good_checkpoint()) << ")\n";
    return kExitDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
