// SPDX-License-Identifier: Apache-2.0
// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset. Exit status is nonzero if any line fails.
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>

#include "oracles.hpp"
#include "vidprism/config.hpp"
#include "vidprism/dbi.hpp"
#include "vidprism/errors.hpp"
#include "vidprism/file_io.hpp"
#include "vidprism/grad_check.hpp"
#include "vidprism/ops.hpp"
#include "vidprism/synthetic.hpp"
#include "vidprism/trainer.hpp"

#ifndef VIDPRISM_CLI
#error "VIDPRISM_CLI must name the vidprism executable"
#endif
#ifndef VIDPRISM_GOLDEN_VPF
#error "VIDPRISM_GOLDEN_VPF must name the golden dataset file"
#endif

namespace fs = std::filesystem;
using namespace vidprism;
using namespace vidprism::oracle;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

SyntheticSpec small_spec(std::uint64_t seed) {
  SyntheticSpec s;
  s.num_classes = 4;
  s.content_axes = 2;
  s.motion_channels = 2;
  s.clips_per_class = 2;
  s.frames = 8;
  s.dim = 8;
  s.seed = seed;
  return s;
}

ModelConfig small_model() {
  ModelConfig m;
  m.dim = 8;
  m.num_classes = 4;
  m.heads = 2;
  m.rates = {2, 4};
  return m;
}

// ---- 1 -------------------------------------------------------------------

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  Dataset ds = generate_synthetic(small_spec(1));
  std::vector<const FeatureSequence*> batch{&ds.clips[0], &ds.clips[5]};
  const LossWeights weights{0.5, 0.3, 0.2, 1.0};

  struct Variant {
    std::string name;
    std::function<void(ModelConfig&)> edit;
  };
  std::vector<Variant> variants;
  for (auto mode : {CombinationMode::global_attention, CombinationMode::mean_pool, CombinationMode::linear,
                    CombinationMode::mlp, CombinationMode::local_attention})
    variants.push_back({to_string(mode), [mode](ModelConfig& m) { m.combination = mode; }});
  variants.push_back({"hard_sampling", [](ModelConfig& m) { m.aggregation = AggregationMode::hard_sampling; }});

  double worst = 0;
  std::size_t probes = 0;
  std::string where;
  for (const auto& v : variants) {
    ModelConfig cfg = small_model();
    cfg.dbi.threshold = 0.0;  // every gate open so the gate nets get gradient
    v.edit(cfg);
    Model model(cfg, 7);
    auto r = grad_check([&] { return batch_loss(model, batch, weights).loss.total; }, model.store().parameters());
    probes += r.probes;
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      where = v.name + ":" + r.worst_parameter;
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 120.0,
          fmt("max rel error %.3g (%s) over %zu probes, %zu model variants, %.1f s", worst, where.c_str(), probes,
              variants.size(), secs)};
}

// ---- 2 -------------------------------------------------------------------

Outcome oracle_equivalence() {
  const int seeds = 20;
  double merge = 0, expert = 0, ro = 0, f2s = 0;
  for (int seed = 0; seed < seeds; ++seed) {
    const auto s = static_cast<std::uint64_t>(seed);
    {
      ParameterStore store(s);
      auto params = RgstaParams::create(store, "rgsta", 6, 3);
      randomise(store, s);
      Tensor group = random_tensor({4, 6}, 100 + s);
      Rng rng(200 + s);
      std::vector<double> mix(4);
      for (double& v : mix) v = rng.uniform();
      RgstaConfig cfg;
      cfg.rate = 4;
      cfg.delta = rng.uniform(0.1, 1.0);
      cfg.tau = rng.uniform(0.5, 2.0);
      auto got = soft_merge_group(Var(group), mix, params, cfg).merged.value().values();
      auto want = naive_merge(group, mix, params.metric_weight.value(), params.metric_bias.value(), cfg.tau, cfg.delta);
      merge = std::max(merge, max_abs_diff(got, want));
    }
    {
      ParameterStore store(s);
      auto e = ExpertLayer::create(store, "expert.0", 8);
      randomise(store, s + 1);
      Tensor f = random_tensor({5, 8}, 300 + s);
      auto got = expert_forward(Var(f), e, 2).out.value();
      auto want = naive_expert(to_mat(f), e, 2);
      for (std::size_t i = 0; i < 5; ++i) expert = std::max(expert, max_abs_diff(to_mat(got)[i], want[i]));
    }
    {
      ParameterStore store(s);
      auto r = Readout::create(store, "readout", CombinationMode::global_attention, 8, 3, 5, 4);
      randomise(store, s + 2);
      std::vector<Tensor> outs{random_tensor({4, 8}, 400 + s), random_tensor({2, 8}, 500 + s),
                               random_tensor({1, 8}, 600 + s)};
      std::vector<Var> vars(outs.begin(), outs.end());
      auto got = readout(vars, r);
      auto want = naive_readout(outs, r, 4);
      ro = std::max({ro, max_abs_diff(got.weights.value().values(), want.weights),
                     max_abs_diff(got.fused.value().values(), want.fused),
                     max_abs_diff(got.logits.value().values(), want.logits)});
    }
    {
      ParameterStore store(s);
      auto fusion = FusionParams::create(store, "dbi", 2, 6, 3);
      randomise(store, s + 3);
      const auto& map = fusion.get(0, 1);
      const std::size_t stride = 1 + s % 4;
      Tensor fast = random_tensor({4 * stride, 6}, 700 + s), slow = random_tensor({4, 6}, 800 + s);
      const double score = Rng(900 + s).uniform();
      auto got = fast_to_slow(Var(fast), Var(slow), Var(Tensor({1, 1}, score)), map).value();
      auto want = naive_fast_to_slow(fast, slow, score, map.weight.value(), map.bias.value());
      f2s = std::max(f2s, max_abs_diff(got.values(), want.values()));
    }
  }
  const double worst = std::max({merge, expert, ro, f2s});
  return {worst <= 1e-10, fmt("%d seeds; max abs diff soft_merge %.2g, expert %.2g, readout %.2g, fast_to_slow %.2g",
                              seeds, merge, expert, ro, f2s)};
}

// ---- 3 -------------------------------------------------------------------

Outcome shape_law() {
  Outcome o;
  std::size_t checked = 0, rejected = 0;
  for (std::size_t frames : {8u, 32u}) {
    for (const std::vector<std::size_t>& rates : {std::vector<std::size_t>{2, 4, 8}, {2, 4, 8, 16}}) {
      ModelConfig cfg = small_model();
      cfg.rates = rates;
      Model model(cfg, 1);
      Tensor x = random_tensor({frames, 8}, frames + rates.size());
      const bool divisible = std::all_of(rates.begin(), rates.end(), [&](std::size_t r) { return frames % r == 0; });
      if (!divisible) {
        // T/r would not be a whole number of tokens.
        try {
          model.forward(x);
          o.pass = false;
        } catch (const RateError&) {
          ++rejected;
        }
        continue;
      }
      NoGradGuard ng;
      auto f = model.forward(x);
      std::size_t total = 0, expected_total = 0;
      for (std::size_t i = 0; i < rates.size(); ++i) {
        const std::size_t len = frames / rates[i];
        expected_total += len;
        total += f.expert_outputs[i].dim(0);
        o.pass &= f.aggregates[i].pathway.shape() == Shape{len, 8};
        o.pass &= f.expert_outputs[i].shape() == Shape{len, 8};
      }
      o.pass &= total == expected_total;
      o.pass &= f.weights.shape() == Shape{1, rates.size()};
      ++checked;
    }
  }
  o.detail = fmt("%zu (T, rate set) pairs checked, %zu indivisible pairs rejected with RateError", checked, rejected);
  return o;
}

// ---- 4 -------------------------------------------------------------------

Outcome loss_invariants() {
  Outcome o;
  Rng rng(4);
  double min_rank = INFINITY, self_rank = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t rates = 1 + rng.below(3), t = 2 + rng.below(12);
    std::vector<Var> pred;
    std::vector<std::vector<double>> tgt;
    for (std::size_t r = 0; r < rates; ++r) {
      Tensor p({t});
      std::vector<double> q(t);
      for (std::size_t i = 0; i < t; ++i) {
        p[i] = rng.uniform(-3, 3);
        q[i] = rng.uniform(-3, 3);
      }
      pred.emplace_back(p);
      tgt.push_back(q);
    }
    const double temp = rng.uniform(0.25, 4.0);
    min_rank = std::min(min_rank, loss_rank(pred, tgt, temp).item());
    std::vector<std::vector<double>> same;
    for (const auto& p : pred) same.push_back(p.value().values());
    self_rank = std::max(self_rank, std::abs(loss_rank(pred, same, temp).item()));
  }
  o.pass &= min_rank >= 0 && self_rank == 0;

  const std::size_t n = 4;
  Tensor uniform({3, n}, 1.0 / n), onehot({3, n}, 0.0);
  for (std::size_t b = 0; b < 3; ++b) onehot.at(b, 2) = 1.0;  // every sample on expert 2
  const double g_uniform = loss_gate(Var(uniform)).item();
  const double g_onehot = loss_gate(Var(onehot)).item();
  o.pass &= std::abs(g_uniform - 1.0) <= 1e-12;
  o.pass &= std::abs(g_onehot - double(n)) <= 1e-12;

  Tensor e = random_tensor({5, 8}, 9);
  std::vector<std::vector<Var>> identical{{Var(e), Var(e), Var(e)}, {Var(e), Var(e), Var(e)}};
  const double div = loss_div(identical).item();
  o.pass &= std::abs(div - 1.0) <= 1e-12;

  Dataset ds = generate_synthetic(small_spec(2));
  Model model(small_model(), 3);
  std::vector<const FeatureSequence*> batch{&ds.clips[0], &ds.clips[3], &ds.clips[6]};
  const LossWeights w{0.3, 0.2, 0.7, 1.5};
  auto br = batch_loss(model, batch, w).loss;
  const auto& b = br.breakdown;
  const double recomposed = b.cls + w.rank * b.rank + w.div * b.div + w.gate * b.gate;
  const double recomp_err = std::abs(recomposed - b.total) + std::abs(br.total.item() - b.total);
  o.pass &= recomp_err <= 1e-12;

  o.detail = fmt("rank min %.3g, at equality %.3g (1000 trials); gate uniform %.15g, one-hot %.15g (N=%zu); "
                 "div identical %.15g; recomposition err %.2g",
                 min_rank, self_rank, g_uniform, g_onehot, n, div, recomp_err);
  return o;
}

// ---- 5 -------------------------------------------------------------------

Outcome degeneracy_laws() {
  Outcome o;
  std::size_t hard_checked = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    ParameterStore store(seed);
    auto params = RgstaParams::create(store, "rgsta", 8, 4);
    randomise(store, seed);
    Tensor x = random_tensor({16, 8}, 50 + seed);
    for (std::size_t rate : {2u, 4u, 8u}) {
      RgstaConfig cfg;
      cfg.rate = rate;
      cfg.delta = 0.0;
      auto soft = aggregate(Var(x), params, cfg, AggregationMode::rgsta);
      cfg.delta = 0.7;
      auto hard = aggregate(Var(x), params, cfg, AggregationMode::hard_sampling);
      o.pass &= soft.pathway.value() == hard.pathway.value();
      for (std::size_t g = 0; g < 16 / rate; ++g)
        for (std::size_t j = 0; j < 8; ++j) o.pass &= hard.pathway.value().at(g, j) == x.at(hard.trace.kept[g], j);
      ++hard_checked;
    }
  }

  std::size_t dbi_checked = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ParameterStore store(seed);
    std::vector<std::size_t> rates{1, 2, 4, 8};
    auto gates = GateNet::create(store, "dbi", rates.size(), 6);
    auto fusion = FusionParams::create(store, "dbi", rates.size(), 6, 3);
    randomise(store, seed + 100);
    PathwaySet pset;
    pset.rates = rates;
    for (std::size_t r : rates) pset.pathways.emplace_back(random_tensor({16 / r, 6}, seed * 10 + r));
    DbiConfig cfg;
    cfg.threshold = 1.01;
    auto out = interact(pset, gates, fusion, cfg);
    for (std::size_t i = 0; i < rates.size(); ++i) {
      o.pass &= out.pathways.pathways[i].value() == pset.pathways[i].value();
      for (std::size_t j = 0; j < rates.size(); ++j) o.pass &= !out.gates.is_active(i, j);
    }
    ++dbi_checked;
  }

  std::size_t single_checked = 0;
  for (auto mode : {CombinationMode::global_attention, CombinationMode::mean_pool, CombinationMode::linear,
                    CombinationMode::mlp, CombinationMode::local_attention}) {
    ModelConfig cfg = small_model();
    cfg.rates = {4};
    cfg.combination = mode;
    Model model(cfg, 5);
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      auto w = model.forward(random_tensor({8, 8}, seed)).weights.value();
      o.pass &= w == Tensor({1, 1}, 1.0);
      ++single_checked;
    }
  }
  o.detail = fmt("delta=0 vs hard sampling bit-exact on %zu aggregations; theta=1.01 identity on %zu DBI calls; "
                 "W == 1 on %zu single-expert forwards",
                 hard_checked, dbi_checked, single_checked);
  return o;
}

// ---- 6 -------------------------------------------------------------------

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(VIDPRISM_CLI) + " " + args + " >" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome determinism() {
  const auto dir = fs::temp_directory_path() / "vidprism_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  // Default dataset and model; two epochs keep the double run short.
  write_file_atomic(dir / "run.toml", "seed = 11\n[train]\nepochs = 2\n");
  const std::string base = "train --config " + (dir / "run.toml").string() + " --out ";
  const int a = run_cli(base + (dir / "a").string(), dir / "a.log");
  const int b = run_cli(base + (dir / "b").string(), dir / "b.log");
  if (a != 0 || b != 0) return {false, fmt("cmd_train exit codes %d and %d", a, b)};
  const auto ra = read_file_bytes(dir / "a" / "run_report.json");
  const auto rb = read_file_bytes(dir / "b" / "run_report.json");
  const bool logs = read_file_bytes(dir / "a" / "train_log.jsonl") == read_file_bytes(dir / "b" / "train_log.jsonl");
  return {ra == rb && !ra.empty(),
          fmt("two cmd_train runs (seed 11, 2 epochs): run_report.json %zu bytes, %s; step logs %s", ra.size(),
              ra == rb ? "identical" : "DIFFERENT", logs ? "identical" : "different")};
}

// ---- 7, 8, 9 ---------------------------------------------------------------

struct TrainedRun {
  RunReport report;
  DataSplit split;
  double seconds = 0;
};

// Mirrors cmd_train with the default config, plus an optional model edit.
TrainedRun train_default(std::uint64_t seed, const std::function<void(ModelConfig&)>& edit = {}) {
  RunConfig cfg = parse_run_config("");
  cfg.apply_seed(seed);
  Dataset ds = load_dataset(cfg);
  ModelConfig m = cfg.model;
  m.dim = ds.dim;
  m.num_classes = ds.num_classes;
  if (edit) edit(m);
  Model model(m, cfg.seed);
  const auto t0 = std::chrono::steady_clock::now();
  TrainedRun run{train(model, ds, cfg.train), stratified_split(ds, cfg.train.eval_fraction, cfg.train.seed), 0};
  run.seconds = seconds_since(t0);
  return run;
}

std::optional<std::size_t> first_epoch_at(const RunReport& r, double threshold) {
  for (const auto& e : r.epochs)
    if (e.eval_accuracy && *e.eval_accuracy >= threshold) return e.epoch;
  return std::nullopt;
}

std::map<std::uint64_t, TrainedRun> full_runs;  // seed -> default-config run

const TrainedRun& full_run(std::uint64_t seed) {
  auto it = full_runs.find(seed);
  if (it == full_runs.end()) it = full_runs.emplace(seed, train_default(seed)).first;
  return it->second;
}

Outcome desk_scale_learning() {
  const auto& run = full_run(0);
  RunConfig cfg = parse_run_config("");
  Dataset ds = load_dataset(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const ProbeResult probe = linear_probe(ds, run.split, cfg.seed);
  const double total = run.seconds + seconds_since(t0);
  const auto reached = first_epoch_at(run.report, 0.9);
  const bool pass = reached.has_value() && probe.eval_accuracy <= 0.6 && total < 15 * 60;
  return {pass, fmt("full model eval %.4f at epoch 50 (first >= 0.90 at epoch %s); frame-mean probe eval %.4f "
                    "(train %.4f); %.0f s",
                    run.report.final_eval_accuracy, reached ? std::to_string(*reached).c_str() : "never",
                    probe.eval_accuracy, probe.train_accuracy, total)};
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Outcome ablation_direction() {
  const std::size_t seeds = 5;
  std::vector<double> full, hard, none, full_ep, hard_ep, none_ep;
  auto epochs_to = [](const RunReport& r) {
    auto e = first_epoch_at(r, 0.9);
    return e ? double(*e) : INFINITY;
  };
  for (std::uint64_t seed = 0; seed < seeds; ++seed) {
    const auto& f = full_run(seed);
    auto h = train_default(seed, [](ModelConfig& m) { m.aggregation = AggregationMode::hard_sampling; });
    auto n = train_default(seed, [](ModelConfig& m) { m.dbi.mode = InteractionMode::none; });
    full.push_back(f.report.final_eval_accuracy);
    hard.push_back(h.report.final_eval_accuracy);
    none.push_back(n.report.final_eval_accuracy);
    full_ep.push_back(epochs_to(f.report));
    hard_ep.push_back(epochs_to(h.report));
    none_ep.push_back(epochs_to(n.report));
    std::printf("  seed %llu: eval full %.4f, hard %.4f, no-interaction %.4f\n",
                static_cast<unsigned long long>(seed), full.back(), hard.back(), none.back());
    std::fflush(stdout);
  }
  const double mf = median(full), mh = median(hard), mn = median(none);
  return {mf >= mh && mf >= mn,
          fmt("median final eval over %zu seeds: RgSTA %.4f vs hard sampling %.4f; bidirectional %.4f vs none %.4f "
              "(median epochs to 90%%: %.0f, %.0f, %.0f)",
              seeds, mf, mh, mf, mn, median(full_ep), median(hard_ep), median(none_ep))};
}

Outcome expert_heterogeneity() {
  const auto& usage = full_run(0).report.usage;
  const auto& cohort = usage.cohorts[1];  // test_correct
  const double uniform = std::log(double(usage.experts));
  std::set<std::size_t> argmaxes;
  std::string picks;
  double entropy = 0;
  std::size_t classes = 0;
  for (std::size_t c = 0; c < usage.classes; ++c) {
    if (cohort.count[c] == 0) continue;
    const auto& row = cohort.mean[c];
    const auto top = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    argmaxes.insert(top);
    picks += std::to_string(top);
    double h = 0;
    for (double p : row)
      if (p > 0) h -= p * std::log(p);
    entropy += h;
    ++classes;
  }
  if (classes == 0) return {false, "no correctly classified eval clips"};
  entropy /= double(classes);
  const double ratio = entropy / uniform;
  return {argmaxes.size() >= 2 && ratio <= 0.95,
          fmt("test-correct cohort, %zu classes: argmax experts %s (%zu distinct); mean entropy %.4f = %.1f%% of "
              "log N = %.4f (need <= 95%%)",
              classes, picks.c_str(), argmaxes.size(), entropy, 100 * ratio, uniform)};
}

// ---- 10 ------------------------------------------------------------------

Outcome vpf_format() {
  Dataset golden;
  golden.dim = 3;
  golden.num_classes = 2;
  golden.clips.push_back({Tensor::matrix({{1.0, -2.0, 0.5}, {0.25, 3.0, -0.125}}), 0, "a"});
  golden.clips.push_back({Tensor::matrix({{0.0, 1.5, -1.0}, {2.0, 4.0, 8.0}}), 1, "bc"});
  const auto file = read_file_bytes(VIDPRISM_GOLDEN_VPF);
  bool pass = encode_vpf(golden) == file;
  const Dataset decoded = decode_vpf(file);
  pass &= decoded.size() == 2;
  for (std::size_t i = 0; pass && i < 2; ++i)
    pass &= decoded.clips[i].frames == golden.clips[i].frames && decoded.clips[i].clip_id == golden.clips[i].clip_id &&
            decoded.clips[i].label == golden.clips[i].label;
  const bool golden_ok = pass;

  std::size_t identical = 0, bytes = 0;
  const auto dir = fs::temp_directory_path() / "vidprism_acceptance_vpf";
  fs::create_directories(dir);
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    Rng rng = Rng(10).split(trial);
    Dataset ds;
    ds.dim = 1 + rng.below(16);
    ds.num_classes = 1 + rng.below(6);
    const std::size_t clips = rng.below(6);
    for (std::size_t c = 0; c < clips; ++c) {
      Tensor frames({1 + rng.below(12), ds.dim});
      for (double& v : frames.data()) v = static_cast<float>(rng.normal() * std::exp(rng.uniform(-8, 8)));
      std::string id;
      for (std::size_t k = rng.below(10); k > 0; --k) id += static_cast<char>('a' + rng.below(26));
      ds.clips.push_back({frames, static_cast<std::uint32_t>(rng.below(ds.num_classes)), id});
    }
    const auto path = dir / "trial.vpf";
    write_vpf(ds, path);
    const Dataset back = read_vpf(path);
    bool same = back.size() == ds.size() && back.dim == ds.dim && encode_vpf(back) == read_file_bytes(path);
    for (std::size_t c = 0; same && c < ds.size(); ++c)
      same = back.clips[c].frames == ds.clips[c].frames && back.clips[c].label == ds.clips[c].label &&
             back.clips[c].clip_id == ds.clips[c].clip_id;
    identical += same;
    bytes += fs::file_size(path);
  }
  return {golden_ok && identical == 100,
          fmt("golden file %s; %zu/100 random datasets round-trip identically (%zu bytes total)",
              golden_ok ? "matches" : "MISMATCH", identical, bytes)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
      {1, gradient_suite},      {2, oracle_equivalence},   {3, shape_law},       {4, loss_invariants},
      {5, degeneracy_laws},     {6, determinism},          {7, desk_scale_learning}, {8, ablation_direction},
      {9, expert_heterogeneity}, {10, vpf_format}};
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& [id, check] : criteria) {
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %d: %s  %s\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
