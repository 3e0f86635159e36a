// SPDX-License-Identifier: Apache-2.0
#include "vidprism/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "vidprism/checkpoint.hpp"
#include "vidprism/errors.hpp"
#include "vidprism/ops.hpp"
#include "vidprism/random.hpp"

namespace vidprism {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::size_t argmax_row(const Tensor& t, std::size_t row) {
  const std::size_t c = t.dim(1);
  std::size_t best = 0;
  for (std::size_t j = 1; j < c; ++j)
    if (t.at(row, j) > t.at(row, best)) best = j;
  return best;
}

void check_compatible(const Model& model, const Dataset& ds) {
  ds.validate();
  const auto& cfg = model.config();
  if (ds.dim != cfg.dim) {
    throw InconsistencyError("dataset D=" + std::to_string(ds.dim) + " but model D=" + std::to_string(cfg.dim));
  }
  if (ds.num_classes > cfg.num_classes) {
    throw InconsistencyError("dataset has " + std::to_string(ds.num_classes) + " classes, model " +
                             std::to_string(cfg.num_classes));
  }
  for (const auto& clip : ds.clips) cfg.check_frames(clip.length());
}

LossBreakdown& operator+=(LossBreakdown& a, const LossBreakdown& b) {
  a.cls += b.cls;
  a.rank += b.rank;
  a.div += b.div;
  a.gate += b.gate;
  a.total += b.total;
  return a;
}

LossBreakdown scaled(LossBreakdown a, double f) {
  a.cls *= f;
  a.rank *= f;
  a.div *= f;
  a.gate *= f;
  a.total *= f;
  return a;
}

}  // namespace

Adam::Adam(std::span<Parameter> params, AdamConfig cfg) : params_(params), cfg_(cfg) {
  for (const auto& p : params_) {
    m_.emplace_back(p.var.shape(), 0.0);
    v_.emplace_back(p.var.shape(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& value = params_[k].var.mutable_value();
    const Tensor& grad = params_[k].var.grad();
    const bool has_grad = !grad.empty();
    auto m = m_[k].data();
    auto v = v_[k].data();
    auto w = value.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = (has_grad ? grad[i] : 0.0) + cfg_.weight_decay * w[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      w[i] -= cfg_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
    }
  }
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
  if (!(adam.learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("train: moment decays must lie in [0, 1)");
  }
  if (!(adam.eps > 0.0)) throw ConfigError("train: eps must be > 0");
  if (!(adam.weight_decay >= 0.0)) throw ConfigError("train: weight_decay must be >= 0");
  if (eval_every == 0) throw ConfigError("train: eval_every must be >= 1");
  if (!(eval_fraction > 0.0 && eval_fraction < 1.0)) throw ConfigError("train: eval_fraction must lie in (0, 1)");
  loss.validate();
}

nlohmann::json to_json(const TrainConfig& cfg) {
  return {{"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},
          {"learning_rate", cfg.adam.learning_rate},
          {"beta1", cfg.adam.beta1},
          {"beta2", cfg.adam.beta2},
          {"eps", cfg.adam.eps},
          {"weight_decay", cfg.adam.weight_decay},
          {"seed", cfg.seed},
          {"lambda_rank", cfg.loss.rank},
          {"lambda_div", cfg.loss.div},
          {"lambda_gate", cfg.loss.gate},
          {"rank_temperature", cfg.loss.temperature},
          {"eval_every", cfg.eval_every},
          {"eval_fraction", cfg.eval_fraction}};
}

DataSplit stratified_split(const Dataset& ds, double eval_fraction, std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
  for (std::size_t i = 0; i < ds.size(); ++i) by_class.at(ds.clips[i].label).push_back(i);
  const Rng root = Rng(seed).split("split");
  DataSplit split;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto idx = by_class[c];
    Rng rng = root.split(c);
    rng.shuffle(idx);
    const std::size_t n = idx.size();
    auto n_eval = static_cast<std::size_t>(std::llround(eval_fraction * static_cast<double>(n)));
    if (n >= 2) n_eval = std::clamp<std::size_t>(n_eval, 1, n - 1);
    else n_eval = 0;
    split.eval.insert(split.eval.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_eval));
    split.train.insert(split.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_eval), idx.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.eval.begin(), split.eval.end());
  return split;
}

BatchOutput batch_loss(const Model& model, std::span<const FeatureSequence* const> clips, const LossWeights& w) {
  if (clips.empty()) throw ContractError("batch_loss: empty batch");
  std::vector<Var> logits, weights, s_pred;
  std::vector<std::vector<double>> s_tgt;
  std::vector<std::vector<Var>> experts;
  std::vector<std::uint32_t> labels;
  for (const FeatureSequence* clip : clips) {
    ForwardResult f = model.forward(clip->frames);
    logits.push_back(f.logits);
    weights.push_back(f.weights);
    for (auto& agg : f.aggregates) {
      if (!agg.s_pred.defined()) continue;
      s_pred.push_back(agg.s_pred);
      s_tgt.push_back(std::move(agg.trace.s_tgt));
    }
    experts.push_back(std::move(f.expert_outputs));
    labels.push_back(clip->label);
  }
  Var all_logits = logits.size() == 1 ? logits[0] : concat(logits, 0);
  Var all_weights = weights.size() == 1 ? weights[0] : concat(weights, 0);
  LossTerms terms{loss_cls(all_logits, labels), loss_rank(s_pred, s_tgt, w.temperature), loss_div(experts),
                  loss_gate(all_weights)};
  BatchOutput out{loss_total(terms, w), {}, all_weights.value()};
  for (std::size_t b = 0; b < clips.size(); ++b) out.predictions.push_back(argmax_row(all_logits.value(), b));
  return out;
}

EvalResult evaluate(const Model& model, const Dataset& ds, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ContractError("evaluate: no clips");
  NoGradGuard no_grad;
  EvalResult r;
  std::size_t correct = 0;
  for (std::size_t i : indices) {
    const auto& clip = ds.clips.at(i);
    ForwardResult f = model.forward(clip.frames);
    const std::size_t pred = argmax_row(f.logits.value(), 0);
    r.predictions.push_back(pred);
    r.weights.push_back(f.weights.value().values());
    if (pred == clip.label) ++correct;
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(indices.size());
  return r;
}

ExpertUsage expert_usage(const Dataset& ds, std::size_t experts, std::span<const std::size_t> train_idx,
                         const EvalResult& train_eval, std::span<const std::size_t> eval_idx,
                         const EvalResult& eval_eval) {
  ExpertUsage u;
  u.classes = ds.num_classes;
  u.experts = experts;
  for (auto& c : u.cohorts) {
    c.mean.assign(u.classes, std::vector<double>(experts, 0.0));
    c.count.assign(u.classes, 0);
  }
  auto add = [&](ExpertUsage::Cohort& c, std::size_t label, const std::vector<double>& w) {
    for (std::size_t e = 0; e < experts; ++e) c.mean[label][e] += w[e];
    ++c.count[label];
  };
  for (std::size_t k = 0; k < train_idx.size(); ++k) add(u.cohorts[0], ds.clips[train_idx[k]].label, train_eval.weights[k]);
  for (std::size_t k = 0; k < eval_idx.size(); ++k) {
    const std::size_t label = ds.clips[eval_idx[k]].label;
    add(u.cohorts[eval_eval.predictions[k] == label ? 1 : 2], label, eval_eval.weights[k]);
  }
  for (auto& c : u.cohorts)
    for (std::size_t cls = 0; cls < u.classes; ++cls)
      if (c.count[cls] > 0)
        for (double& v : c.mean[cls]) v /= static_cast<double>(c.count[cls]);
  return u;
}

std::string ExpertUsage::to_csv() const {
  std::ostringstream os;
  os << "class";
  for (std::size_t e = 0; e < experts; ++e) os << ",expert_" << e;
  os << ",cohort\r\n";
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t c = 0; c < classes; ++c) {
      if (cohorts[k].count[c] == 0) continue;
      os << c;
      for (double v : cohorts[k].mean[c]) os << ',' << fmt(v);
      os << ',' << kCohorts[k] << "\r\n";
    }
  return os.str();
}

nlohmann::json ExpertUsage::to_json() const {
  nlohmann::json j{{"classes", classes}, {"experts", experts}};
  for (std::size_t k = 0; k < 3; ++k) j[kCohorts[k]] = {{"mean", cohorts[k].mean}, {"count", cohorts[k].count}};
  return j;
}

nlohmann::json RunReport::to_json() const {
  nlohmann::json eps = nlohmann::json::array();
  for (const auto& e : epochs) {
    eps.push_back({{"epoch", e.epoch},
                   {"train_accuracy", e.train_accuracy},
                   {"eval_accuracy", e.eval_accuracy ? nlohmann::json(*e.eval_accuracy) : nlohmann::json()},
                   {"loss", vidprism::to_json(e.loss)}});
  }
  return {{"config", config},
          {"train_clips", train_clips},
          {"eval_clips", eval_clips},
          {"steps", steps},
          {"initial_eval_accuracy", initial_eval_accuracy},
          {"epochs", eps},
          {"final_train_accuracy", final_train_accuracy},
          {"final_eval_accuracy", final_eval_accuracy},
          {"expert_usage", usage.to_json()}};
}

RunReport train(Model& model, const Dataset& ds, const TrainConfig& cfg, const TrainIo& io) {
  const auto started = std::chrono::steady_clock::now();
  cfg.validate();
  check_compatible(model, ds);
  const DataSplit split = stratified_split(ds, cfg.eval_fraction, cfg.seed);
  if (split.train.empty() || split.eval.empty()) throw ContractError("train: need at least two clips per class");

  RunReport report;
  report.config = {{"model", to_json(model.config())}, {"train", to_json(cfg)}};
  report.train_clips = split.train.size();
  report.eval_clips = split.eval.size();
  report.initial_eval_accuracy = evaluate(model, ds, split.eval).accuracy;

  std::filesystem::path last_good;
  if (!io.checkpoint.empty()) {
    save_checkpoint(model, io.checkpoint);
    last_good = io.checkpoint;
  }
  Adam adam(model.store().parameters(), cfg.adam);
  const Rng shuffle_root = Rng(cfg.seed).split("shuffle");
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = split.train;
    Rng rng = shuffle_root.split(epoch);
    rng.shuffle(order);
    EpochRecord rec;
    rec.epoch = epoch;
    std::size_t correct = 0, batches = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      std::vector<const FeatureSequence*> batch;
      for (std::size_t k = b; k < std::min(order.size(), b + cfg.batch_size); ++k) batch.push_back(&ds.clips[order[k]]);
      model.store().zero_grad();
      BatchOutput out = batch_loss(model, batch, cfg.loss);
      ++step;
      const LossBreakdown& lb = out.loss.breakdown;
      if (!std::isfinite(lb.total)) {
        throw DivergenceError("non-finite loss at step " + std::to_string(step), last_good.string());
      }
      backward(out.loss.total);
      adam.step();
      if (io.step_log) {
        nlohmann::json line{{"step", step}, {"cls", lb.cls},   {"rank", lb.rank},
                            {"div", lb.div},  {"gate", lb.gate}, {"total", lb.total}};
        *io.step_log << line.dump() << '\n';
      }
      rec.loss += lb;
      ++batches;
      for (std::size_t k = 0; k < batch.size(); ++k)
        if (out.predictions[k] == batch[k]->label) ++correct;
    }
    rec.loss = scaled(rec.loss, 1.0 / static_cast<double>(batches));
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
    if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) rec.eval_accuracy = evaluate(model, ds, split.eval).accuracy;
    report.epochs.push_back(rec);
    if (!io.checkpoint.empty()) save_checkpoint(model, io.checkpoint);
  }
  model.store().zero_grad();
  report.steps = step;

  const EvalResult train_eval = evaluate(model, ds, split.train);
  const EvalResult eval_eval = evaluate(model, ds, split.eval);
  report.final_train_accuracy = train_eval.accuracy;
  report.final_eval_accuracy = eval_eval.accuracy;
  report.usage = expert_usage(ds, model.num_experts(), split.train, train_eval, split.eval, eval_eval);
  report.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

ProbeResult linear_probe(const Dataset& ds, const DataSplit& split, std::uint64_t seed, std::size_t steps,
                         double weight_decay) {
  ds.validate();
  const std::size_t d = ds.dim, c = ds.num_classes;
  auto features = [&](std::span<const std::size_t> idx) {
    Tensor x({idx.size(), d}, 0.0);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const Tensor& f = ds.clips[idx[k]].frames;
      for (std::size_t t = 0; t < f.dim(0); ++t)
        for (std::size_t j = 0; j < d; ++j) x.at(k, j) += f.at(t, j) / static_cast<double>(f.dim(0));
    }
    return x;
  };
  auto labels = [&](std::span<const std::size_t> idx) {
    std::vector<std::uint32_t> y;
    for (std::size_t i : idx) y.push_back(ds.clips[i].label);
    return y;
  };
  const Tensor x_train = features(split.train), x_eval = features(split.eval);
  const auto y_train = labels(split.train), y_eval = labels(split.eval);

  ParameterStore store(seed);
  Var w = store.uniform("probe.weight", {d, c}, d, c);
  Var b = store.zeros("probe.bias", {c});
  AdamConfig ac;
  ac.learning_rate = 1e-2;
  ac.weight_decay = weight_decay;
  Adam adam(store.parameters(), ac);
  for (std::size_t s = 0; s < steps; ++s) {
    store.zero_grad();
    backward(loss_cls(linear(constant(x_train), w, b), y_train));
    adam.step();
  }
  NoGradGuard no_grad;
  auto accuracy = [&](const Tensor& x, const std::vector<std::uint32_t>& y) {
    Tensor logits = linear(constant(x), w, b).value();
    std::size_t correct = 0;
    for (std::size_t k = 0; k < y.size(); ++k)
      if (argmax_row(logits, k) == y[k]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(y.size());
  };
  return {accuracy(x_train, y_train), accuracy(x_eval, y_eval)};
}

std::string to_string(AblationAxis axis) {
  switch (axis) {
    case AblationAxis::aggregation: return "aggregation";
    case AblationAxis::interaction: return "interaction";
    case AblationAxis::combination: return "combination";
    case AblationAxis::expert_grid: return "expert_grid";
  }
  return "?";
}

AblationAxis parse_ablation_axis(const std::string& name) {
  for (auto a : {AblationAxis::aggregation, AblationAxis::interaction, AblationAxis::combination,
                 AblationAxis::expert_grid}) {
    if (to_string(a) == name) return a;
  }
  throw ConfigError("unknown ablation axis '" + name + "' (valid: aggregation, interaction, combination, expert_grid)");
}

std::vector<AblationVariant> ablation_variants(AblationAxis axis, const ModelConfig& base) {
  std::vector<AblationVariant> out;
  switch (axis) {
    case AblationAxis::aggregation:
      for (auto m : {AggregationMode::hard_sampling, AggregationMode::mean_pool, AggregationMode::max_pool,
                     AggregationMode::rgsta}) {
        ModelConfig cfg = base;
        cfg.aggregation = m;
        out.push_back({to_string(m), cfg});
      }
      break;
    case AblationAxis::interaction:
      for (auto m : {InteractionMode::none, InteractionMode::slow_to_fast, InteractionMode::fast_to_slow,
                     InteractionMode::bidirectional}) {
        ModelConfig cfg = base;
        cfg.dbi.mode = m;
        out.push_back({to_string(m), cfg});
      }
      break;
    case AblationAxis::combination:
      for (auto m : {CombinationMode::mean_pool, CombinationMode::linear, CombinationMode::mlp,
                     CombinationMode::local_attention, CombinationMode::global_attention}) {
        ModelConfig cfg = base;
        cfg.combination = m;
        out.push_back({to_string(m), cfg});
      }
      break;
    case AblationAxis::expert_grid: {
      const std::vector<std::vector<std::size_t>> grid = {
          {2}, {4}, {8}, {16}, {2, 4}, {4, 8}, {8, 16}, {2, 8}, {4, 16}, {2, 16},
          {2, 4, 8}, {4, 8, 16}, {2, 4, 16}, {2, 4, 8, 16}};
      for (const auto& rates : grid) {
        ModelConfig cfg = base;
        cfg.rates = rates;
        std::string name;
        for (std::size_t r : rates) name += (name.empty() ? "" : "-") + std::to_string(r);
        out.push_back({name, cfg});
      }
      break;
    }
  }
  return out;
}

std::vector<AblationRow> run_ablation(AblationAxis axis, const ModelConfig& base, const TrainConfig& cfg,
                                      const Dataset& ds) {
  std::vector<AblationRow> rows;
  for (const auto& v : ablation_variants(axis, base)) {
    Model model(v.model, cfg.seed);
    RunReport report = train(model, ds, cfg);
    AblationRow row;
    row.variant = v.name;
    row.train_accuracy = report.final_train_accuracy;
    row.eval_accuracy = report.final_eval_accuracy;
    if (!report.epochs.empty()) row.loss = report.epochs.back().loss;
    rows.push_back(row);
  }
  return rows;
}

std::string ablation_csv(std::span<const AblationRow> rows) {
  std::ostringstream os;
  os << "variant,train_accuracy,eval_accuracy,cls,rank,div,gate,total\r\n";
  for (const auto& r : rows) {
    os << r.variant << ',' << fmt(r.train_accuracy) << ',' << fmt(r.eval_accuracy) << ',' << fmt(r.loss.cls) << ','
       << fmt(r.loss.rank) << ',' << fmt(r.loss.div) << ',' << fmt(r.loss.gate) << ',' << fmt(r.loss.total) << "\r\n";
  }
  return os.str();
}

}  // namespace vidprism
