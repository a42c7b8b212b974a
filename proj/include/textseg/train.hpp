// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>

#include "textseg/checkpoint.hpp"
#include "textseg/data.hpp"
#include "textseg/metrics.hpp"

namespace textseg {

// lr(0) = base exactly; the final step is pinned to zero, which lands well
// under the 1e-9*base endpoint bound
inline double cosine_lr(double base, uint64_t step, uint64_t total_steps) {
  if (total_steps <= 1) return base;
  if (step + 1 >= total_steps) return 0.0;
  double t = static_cast<double>(step) / static_cast<double>(total_steps - 1);
  return base * 0.5 * (1.0 + std::cos(t * 3.14159265358979323846));
}

template <typename S>
struct Adam {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  uint64_t step = 0;
  std::vector<S> m, v;  // flat, parameter-store order

  explicit Adam(size_t total) : m(total, S(0)), v(total, S(0)) {}

  void apply(ParamStore<S>& ps, double lr) {
    ++step;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    size_t off = 0;
    for (auto& [name, t] : ps.items()) {
      Tensor<S> p = t;
      auto& val = p.mutable_data();
      const auto& g = p.grad();  // empty when the loss never reached this parameter
      for (size_t i = 0; i < val.size(); ++i, ++off) {
        double gi = g.empty() ? 0.0 : static_cast<double>(g[i]);
        double mi = beta1 * static_cast<double>(m[off]) + (1.0 - beta1) * gi;
        double vi = beta2 * static_cast<double>(v[off]) + (1.0 - beta2) * gi * gi;
        m[off] = static_cast<S>(mi);
        v[off] = static_cast<S>(vi);
        val[i] -= static_cast<S>(lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps));
      }
    }
    if (off != m.size()) throw InternalError("optimizer state out of sync with parameters");
  }
};

template <typename S>
MetricReport evaluate_model(const Model<S>& model, const std::vector<Sample<S>>& samples) {
  NoGradGuard ng;
  std::vector<SampleMetrics> rows;
  rows.reserve(samples.size());
  for (const auto& s : samples) {
    auto f = model.forward_seg(s.image, s.ids, s.keep);
    const auto& lg = f.logits.data();
    const auto& tg = s.target.data();
    std::vector<uint8_t> pred(lg.size()), target(tg.size());
    for (size_t i = 0; i < lg.size(); ++i) pred[i] = lg[i] > S(0) ? 1 : 0;
    for (size_t i = 0; i < tg.size(); ++i) target[i] = tg[i] > S(0.5) ? 1 : 0;
    rows.push_back(mask_metrics(pred, target, s.id));
  }
  return aggregate(std::move(rows));
}

struct TrainOptions {
  ModelDims dims = ModelDims::desk();
  size_t train_limit = 0, val_limit = 0;  // 0 = whole split
  bool quiet = false;
};

struct TrainResult {
  std::filesystem::path best_checkpoint, last_checkpoint, log_path;
  double best_val_miou = -1.0;
  size_t best_epoch = 0;
  std::vector<std::string> loss_trace;  // the CSV rows, header excluded
  bool diverged = false;
  std::string divergence_note;
};

// Deterministic given (config, dataset, dims): per-epoch shuffles and
// per-sample mask draws are all keyed off master_seed, so two runs produce
// identical loss traces and bit-identical checkpoints.
inline TrainResult train_model(const RunConfig& cfg, const std::filesystem::path& data_root,
                               const std::filesystem::path& out_dir,
                               const TrainOptions& opts = {}) {
  cfg.validate();
  auto vocab = Vocabulary::load_tsv((data_root / "vocab.tsv").string());
  auto train_set = load_split<float>(data_root, "train", vocab, opts.dims.l_max, opts.train_limit);
  auto val_set = load_split<float>(data_root, "val", vocab, opts.dims.l_max, opts.val_limit);
  if (train_set.empty()) throw ConfigError("training split is empty");
  std::filesystem::create_directories(out_dir);

  Model<float> model(opts.dims, cfg, vocab.size());
  Adam<float> adam(model.params().total_size());

  size_t n = train_set.size();
  size_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  uint64_t total_steps = static_cast<uint64_t>(cfg.epochs) * steps_per_epoch;

  TrainResult res;
  res.log_path = out_dir / "train_log.csv";
  std::ofstream log(res.log_path);
  if (!log) throw IoError("cannot write " + res.log_path.string());
  log << "epoch,lr,total,l_v2t,l_t2v,l_ccl,l_dice,l_ce,val_dice,val_miou\n";
  log.flush();

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  uint64_t gstep = 0;
  auto t0 = std::chrono::steady_clock::now();

  for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(cfg.master_seed, 101, epoch));
    for (size_t i = n - 1; i > 0; --i) std::swap(order[i], order[shuffle_rng.uniform_int(i + 1)]);

    double lr0 = 0.0;
    double ep[6] = {0, 0, 0, 0, 0, 0};  // total, v2t, t2v, ccl, dice, ce
    for (size_t step = 0; step < steps_per_epoch; ++step) {
      std::vector<Sample<float>> batch;
      for (size_t k = step * cfg.batch_size; k < std::min((step + 1) * cfg.batch_size, n); ++k)
        batch.push_back(train_set[order[k]]);
      double lr = cosine_lr(cfg.learning_rate, gstep, total_steps);
      if (step == 0) lr0 = lr;
      TrainStepOutput<float> outp;
      try {
        outp = model.forward_train(batch, mix_seed(cfg.master_seed, 137, epoch, step));
      } catch (const NumericError& e) {
        res.diverged = true;
        res.divergence_note = "epoch " + std::to_string(epoch) + " step " + std::to_string(step) +
                              ": " + e.what();
        break;
      }
      double total = static_cast<double>(outp.total.item());
      if (!std::isfinite(total)) {
        res.diverged = true;
        res.divergence_note = "epoch " + std::to_string(epoch) + " step " + std::to_string(step) +
                              ": loss is not finite";
        break;
      }
      backward(outp.total);
      adam.apply(model.params(), lr);
      ++gstep;
      ep[0] += total;
      ep[1] += static_cast<double>(outp.l_v2t.item());
      ep[2] += static_cast<double>(outp.l_t2v.item());
      ep[3] += static_cast<double>(outp.l_ccl.item());
      ep[4] += static_cast<double>(outp.l_dice.item());
      ep[5] += static_cast<double>(outp.l_ce.item());
    }
    if (res.diverged) {
      std::cerr << "training diverged at " << res.divergence_note << "\n";
      if (!res.last_checkpoint.empty())
        std::cerr << "last good checkpoint: " << res.last_checkpoint.string() << "\n";
      else
        std::cerr << "no completed epoch to fall back to\n";
      break;
    }
    for (double& x : ep) x /= static_cast<double>(steps_per_epoch);

    auto rep = evaluate_model(model, val_set);
    char row[320];
    std::snprintf(row, sizeof row, "%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g", epoch, lr0,
                  ep[0], ep[1], ep[2], ep[3], ep[4], ep[5], rep.dice, rep.miou);
    res.loss_trace.emplace_back(row);
    log << row << "\n";
    log.flush();

    OptimizerSnapshot snap{adam.step, adam.m, adam.v};
    res.last_checkpoint = out_dir / "last.ckpt.json";
    save_checkpoint(res.last_checkpoint, model, vocab.tokens(), epoch, snap);
    if (rep.miou > res.best_val_miou) {
      res.best_val_miou = rep.miou;
      res.best_epoch = epoch;
      res.best_checkpoint = out_dir / "best.ckpt.json";
      save_checkpoint(res.best_checkpoint, model, vocab.tokens(), epoch, snap);
    }
    if (!opts.quiet) {
      auto dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::fprintf(stderr, "epoch %zu/%zu  loss %.4f  val_miou %.4f  (%.1fs)\n", epoch + 1,
                   cfg.epochs, ep[0], rep.miou, dt);
    }
  }
  return res;
}

struct AblationOptions {
  ModelDims dims = ModelDims::desk();
  size_t train_limit = 0, val_limit = 0, test_limit = 0;
  size_t epochs_override = 0;
  size_t seeds = 3;
  bool quiet = false;
};

struct AblationAxis {
  std::string name;
  std::vector<std::pair<std::string, std::function<void(RunConfig&)>>> values;
};

inline std::vector<AblationAxis> ablation_axis_catalog() {
  using C = RunConfig;
  return {
      {"cvr", {{"on", [](C& c) { c.use_cvr = true; }}, {"off", [](C& c) { c.use_cvr = false; }}}},
      {"clr", {{"on", [](C& c) { c.use_clr = true; }}, {"off", [](C& c) { c.use_clr = false; }}}},
      {"conditions",
       {{"on",
         [](C& c) { c.use_cvr_condition = c.use_clr_condition = c.use_ccl_condition = true; }},
        {"off",
         [](C& c) { c.use_cvr_condition = c.use_clr_condition = c.use_ccl_condition = false; }}}},
      {"mask",
       {{"weighted", [](C& c) { c.mask_strategy = MaskStrategy::weighted; }},
        {"random", [](C& c) { c.mask_strategy = MaskStrategy::random; }}}},
      {"attention",
       {{"cross", [](C& c) { c.attention = FusionAttention::cross; }},
        {"self", [](C& c) { c.attention = FusionAttention::self; }}}},
  };
}

// Cartesian product over the requested axes, seeds nested innermost. Each
// cell trains from scratch and reports metrics of its best-val checkpoint.
// CSV columns: variant,seed,val_miou,val_dice,test_miou,test_dice.
inline void run_ablation_grid(const RunConfig& base, const std::vector<std::string>& axes,
                              const std::filesystem::path& data_root,
                              const std::filesystem::path& out_csv,
                              const AblationOptions& opts = {}) {
  auto catalog = ablation_axis_catalog();
  std::vector<AblationAxis> active;
  for (const auto& name : axes) {
    bool found = false;
    for (const auto& axis : catalog)
      if (axis.name == name) {
        active.push_back(axis);
        found = true;
      }
    if (!found) throw ConfigError("unknown ablation axis '" + name + "'");
  }
  if (active.empty()) throw ConfigError("ablation needs at least one axis");

  auto vocab = Vocabulary::load_tsv((data_root / "vocab.tsv").string());
  auto test_set = load_split<float>(data_root, "test", vocab, opts.dims.l_max, opts.test_limit);
  auto val_set = load_split<float>(data_root, "val", vocab, opts.dims.l_max, opts.val_limit);

  std::filesystem::create_directories(out_csv.parent_path().empty() ? "."
                                                                    : out_csv.parent_path());
  std::ofstream csv(out_csv);
  if (!csv) throw IoError("cannot write " + out_csv.string());
  csv << "variant,seed,val_miou,val_dice,test_miou,test_dice\n";

  std::vector<size_t> idx(active.size(), 0);
  bool done = false;
  while (!done) {
    std::string label;
    RunConfig cell = base;
    for (size_t a = 0; a < active.size(); ++a) {
      const auto& [vname, apply] = active[a].values[idx[a]];
      apply(cell);
      if (!label.empty()) label += ";";
      label += active[a].name + "=" + vname;
    }
    for (size_t s = 0; s < opts.seeds; ++s) {
      RunConfig cfg = cell;
      cfg.master_seed = base.master_seed + s;
      if (opts.epochs_override) cfg.epochs = opts.epochs_override;
      std::string dir_name = label + "_s" + std::to_string(cfg.master_seed);
      for (char& c : dir_name)
        if (c == ';' || c == '=') c = '_';
      auto cell_dir = out_csv.parent_path() / "cells" / dir_name;
      TrainOptions topt;
      topt.dims = opts.dims;
      topt.train_limit = opts.train_limit;
      topt.val_limit = opts.val_limit;
      topt.quiet = opts.quiet;
      auto res = train_model(cfg, data_root, cell_dir, topt);
      auto ckpt_path = res.best_checkpoint.empty() ? res.last_checkpoint : res.best_checkpoint;
      if (ckpt_path.empty()) throw InternalError("ablation cell " + label + " left no checkpoint");
      auto model = model_from_checkpoint(read_checkpoint(ckpt_path));
      auto val_rep = evaluate_model(model, val_set);
      auto test_rep = evaluate_model(model, test_set);
      char row[256];
      std::snprintf(row, sizeof row, "%s,%llu,%.6f,%.6f,%.6f,%.6f", label.c_str(),
                    static_cast<unsigned long long>(cfg.master_seed), val_rep.miou, val_rep.dice,
                    test_rep.miou, test_rep.dice);
      csv << row << "\n";
      csv.flush();
      if (!opts.quiet)
        std::fprintf(stderr, "[ablate] %s seed %llu: val %.4f test %.4f\n", label.c_str(),
                     static_cast<unsigned long long>(cfg.master_seed), val_rep.miou,
                     test_rep.miou);
    }
    size_t a = 0;
    for (; a < active.size(); ++a) {
      if (++idx[a] < active[a].values.size()) break;
      idx[a] = 0;
    }
    done = a == active.size();
  }
}

}  // namespace textseg
