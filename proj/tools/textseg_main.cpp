// SPDX-License-Identifier: Apache-2.0
//
// textseg <subcommand>: dataset generation, training, evaluation, inference,
// gradient self-check, ablation grids.

#include <CLI11.hpp>
#include <cstdio>

#include "textseg/selfcheck.hpp"
#include "textseg/train.hpp"

using namespace textseg;
namespace fs = std::filesystem;

namespace {

int cmd_gen_data(size_t count, uint64_t seed, const std::string& out) {
  auto sum = generate_dataset(out, count, {0.8, 0.1, 0.1}, seed);
  std::printf("wrote %zu train / %zu val / %zu test samples to %s\n", sum.train, sum.val, sum.test,
              sum.root.string().c_str());
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data, const std::string& out) {
  RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
  auto res = train_model(cfg, data, out);
  if (res.diverged) {
    std::fprintf(stderr, "training diverged (%s)\n", res.divergence_note.c_str());
    if (!res.last_checkpoint.empty())
      std::fprintf(stderr, "last checkpoint: %s\n", res.last_checkpoint.string().c_str());
    return 1;
  }
  std::printf("best epoch %zu, val miou %.4f\n", res.best_epoch, res.best_val_miou);
  std::printf("best checkpoint: %s\n", res.best_checkpoint.string().c_str());
  std::printf("log: %s\n", res.log_path.string().c_str());
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& split, const std::string& data,
             const std::string& out_csv) {
  auto ck = read_checkpoint(ckpt);
  auto model = model_from_checkpoint(ck);
  Vocabulary vocab(ck.vocab_tokens);
  auto samples = load_split<float>(data, split, vocab, model.dims().l_max);
  if (samples.empty()) throw ConfigError("split '" + split + "' is empty under " + data);
  auto rep = evaluate_model(model, samples);
  std::printf("%s: %zu samples\n", split.c_str(), samples.size());
  std::printf("dice      %.6f\nmiou      %.6f\n", rep.dice, rep.miou);
  std::printf("dice_fg   %.6f\nmiou_fg   %.6f\n", rep.dice_fg, rep.miou_fg);
  if (!out_csv.empty()) {
    write_metric_csv(rep, out_csv);
    std::printf("per-sample metrics: %s\n", out_csv.c_str());
  }
  return 0;
}

int cmd_infer(const std::string& ckpt, const std::string& image_path, const std::string& prompt,
              const std::string& out_dir, bool emit_heatmaps) {
  auto ck = read_checkpoint(ckpt);
  auto model = model_from_checkpoint(ck);
  Vocabulary vocab(ck.vocab_tokens);
  size_t l_max = model.dims().l_max;

  auto tok = tokenize(prompt, vocab, l_max);
  if (tok.empty_input) throw ConfigError("prompt is empty");
  if (tok.unk_fraction > 0.5)
    std::fprintf(stderr, "warning: %.0f%% of the prompt tokens are unknown to the vocabulary\n",
                 100.0 * tok.unk_fraction);

  size_t w = 0, h = 0;
  auto px = read_png_gray8(image_path, w, h);
  size_t side = model.dims().image;
  if (w != side || h != side)
    throw ShapeError("image is " + std::to_string(w) + "x" + std::to_string(h) + ", model wants " +
                     std::to_string(side) + "x" + std::to_string(side));
  std::vector<float> iv(px.size());
  for (size_t i = 0; i < px.size(); ++i) iv[i] = static_cast<float>(px[i] / 255.0);
  auto image = Tensor<float>::constant({1, h, w}, std::move(iv));

  NoGradGuard ng;
  auto f = model.forward_seg(image, tok.ids, tok.keep);
  auto pred = binarize_logits(f.logits.data());
  std::vector<uint8_t> mask_px(pred.size());
  for (size_t i = 0; i < pred.size(); ++i) mask_px[i] = pred[i] ? 255 : 0;

  fs::create_directories(out_dir);
  auto mask_path = fs::path(out_dir) / "pred_mask.png";
  write_png_gray8(mask_path.string(), mask_px, w, h);
  std::printf("mask: %s\n", mask_path.string().c_str());

  if (emit_heatmaps) {
    auto [wp, ww] = model.interest_maps(f);
    double sp = 0;
    for (auto v : wp.data()) sp += static_cast<double>(v);
    if (std::fabs(sp - 1.0) > 1e-6)
      throw InternalError("patch interest weights sum to " + std::to_string(sp));

    size_t g = model.dims().grid();
    float top = *std::max_element(wp.data().begin(), wp.data().end());
    std::vector<uint8_t> heat(wp.size());
    for (size_t i = 0; i < wp.size(); ++i)
      heat[i] = static_cast<uint8_t>(std::lround(255.0 * wp.data()[i] / top));
    auto poi_path = fs::path(out_dir) / "poi_heatmap.png";
    write_png_gray8(poi_path.string(), heat, g, g);

    auto csv_path = fs::path(out_dir) / "woi_weights.csv";
    std::ofstream csv(csv_path);
    if (!csv) throw IoError("cannot write " + csv_path.string());
    csv << "token,weight\n";
    for (size_t i = 0; i < ww.size(); ++i)
      csv << vocab.token_of(tok.ids[i]) << "," << ww.data()[i] << "\n";

    float wtop = *std::max_element(ww.data().begin(), ww.data().end());
    std::vector<uint8_t> wheat(ww.size());
    for (size_t i = 0; i < ww.size(); ++i)
      wheat[i] = static_cast<uint8_t>(std::lround(255.0 * ww.data()[i] / wtop));
    auto woi_path = fs::path(out_dir) / "woi_heatmap.png";
    write_png_gray8(woi_path.string(), wheat, ww.size(), 1);

    std::printf("patch interest: %s\n", poi_path.string().c_str());
    std::printf("token interest: %s, %s\n", woi_path.string().c_str(), csv_path.string().c_str());
  }
  return 0;
}

int cmd_gradcheck() {
  bool ok = true;
  for (size_t b : {size_t{1}, size_t{2}}) {
    auto r = objective_gradcheck(b);
    std::printf("batch %zu: checked %zu components, max_rel %.3e, max_abs %.3e\n", b, r.checked,
                r.max_rel, r.max_abs);
    std::printf("  worst %s[%zu] analytic %.9e numeric %.9e\n", r.worst_name.c_str(),
                r.worst_index, r.worst_analytic, r.worst_numeric);
    ok = ok && r.within(kGradcheckTol);
  }
  std::printf("%s (tolerance %.1e)\n", ok ? "PASS" : "FAIL", kGradcheckTol);
  return ok ? 0 : 1;
}

int cmd_ablate(const std::string& config_path, const std::string& axes_arg,
               const std::string& data, const std::string& out_csv, size_t seeds, size_t epochs,
               size_t train_limit, size_t val_limit, size_t test_limit) {
  RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
  std::vector<std::string> axes;
  std::stringstream ss(axes_arg);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) axes.push_back(item);
  AblationOptions opts;
  opts.seeds = seeds;
  opts.epochs_override = epochs;
  opts.train_limit = train_limit;
  opts.val_limit = val_limit;
  opts.test_limit = test_limit;
  run_ablation_grid(cfg, axes, data, out_csv, opts);
  std::printf("grid results: %s\n", out_csv.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"language-guided shape segmentation"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic scene dataset");
  size_t gen_count = 2000;
  uint64_t gen_seed = 42;
  std::string gen_out = "data";
  gen->add_option("--count", gen_count, "total samples");
  gen->add_option("--seed", gen_seed, "master seed");
  gen->add_option("--out", gen_out, "dataset root");

  auto* train = app.add_subcommand("train", "train from a config");
  std::string tr_config, tr_data = "data", tr_out = "run";
  train->add_option("--config", tr_config, "json config (defaults when omitted)");
  train->add_option("--data", tr_data, "dataset root");
  train->add_option("--out", tr_out, "output directory");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  std::string ev_ckpt, ev_split = "test", ev_data = "data", ev_csv;
  ev->add_option("--ckpt", ev_ckpt, "checkpoint manifest (.json)")->required();
  ev->add_option("--split", ev_split, "train, val or test");
  ev->add_option("--data", ev_data, "dataset root");
  ev->add_option("--out", ev_csv, "optional per-sample csv");

  auto* inf = app.add_subcommand("infer", "segment one image from a prompt");
  std::string in_ckpt, in_image, in_prompt, in_out = ".";
  bool in_heat = false;
  inf->add_option("--ckpt", in_ckpt, "checkpoint manifest (.json)")->required();
  inf->add_option("--image", in_image, "grayscale png")->required();
  inf->add_option("--prompt", in_prompt, "text prompt")->required();
  inf->add_option("--out", in_out, "output directory");
  inf->add_flag("--emit-heatmaps", in_heat, "also write interest-weight maps");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the full objective");

  auto* ab = app.add_subcommand("ablate", "train a grid of component ablations");
  std::string ab_config, ab_axes, ab_data = "data", ab_out = "ablation.csv";
  size_t ab_seeds = 3, ab_epochs = 0, ab_tl = 0, ab_vl = 0, ab_xl = 0;
  ab->add_option("--config", ab_config, "json config (defaults when omitted)");
  ab->add_option("--axes", ab_axes, "comma list: cvr,clr,conditions,mask,attention")->required();
  ab->add_option("--data", ab_data, "dataset root");
  ab->add_option("--out", ab_out, "results csv");
  ab->add_option("--seeds", ab_seeds, "seeds per cell");
  ab->add_option("--epochs", ab_epochs, "override epochs (0 keeps the config value)");
  ab->add_option("--train-limit", ab_tl, "cap the train split (0 = all)");
  ab->add_option("--val-limit", ab_vl, "cap the val split (0 = all)");
  ab->add_option("--test-limit", ab_xl, "cap the test split (0 = all)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(gen_count, gen_seed, gen_out);
    if (train->parsed()) return cmd_train(tr_config, tr_data, tr_out);
    if (ev->parsed()) return cmd_eval(ev_ckpt, ev_split, ev_data, ev_csv);
    if (inf->parsed()) return cmd_infer(in_ckpt, in_image, in_prompt, in_out, in_heat);
    if (gc->parsed()) return cmd_gradcheck();
    if (ab->parsed())
      return cmd_ablate(ab_config, ab_axes, ab_data, ab_out, ab_seeds, ab_epochs, ab_tl, ab_vl,
                        ab_xl);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
