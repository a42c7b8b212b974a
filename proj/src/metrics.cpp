// SPDX-License-Identifier: Apache-2.0
#include "textseg/metrics.hpp"

#include <fstream>

#include "textseg/common.hpp"

namespace textseg {

std::vector<uint8_t> binarize_logits(const std::vector<float>& logits) {
  std::vector<uint8_t> out(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] > 0.0f ? 1 : 0;
  return out;
}

namespace {
// dice/iou for one category given integer counts
void category_scores(uint64_t inter, uint64_t pred, uint64_t targ, double& dice, double& iou) {
  if (pred + targ == 0) {
    dice = 1.0;
    iou = 1.0;
    return;
  }
  dice = 2.0 * static_cast<double>(inter) / static_cast<double>(pred + targ);
  uint64_t uni = pred + targ - inter;
  iou = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}
}  // namespace

SampleMetrics mask_metrics(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& target,
                           const std::string& id) {
  if (pred.size() != target.size())
    throw ShapeError("metrics: mask sizes differ, " + std::to_string(pred.size()) + " vs " +
                     std::to_string(target.size()));
  uint64_t inter_fg = 0, pred_fg = 0, targ_fg = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    bool p = pred[i] != 0, t = target[i] != 0;
    inter_fg += (p && t) ? 1 : 0;
    pred_fg += p ? 1 : 0;
    targ_fg += t ? 1 : 0;
  }
  uint64_t n = pred.size();
  uint64_t inter_bg = n - pred_fg - targ_fg + inter_fg;
  uint64_t pred_bg = n - pred_fg, targ_bg = n - targ_fg;

  double dice_fg, iou_fg, dice_bg, iou_bg;
  category_scores(inter_fg, pred_fg, targ_fg, dice_fg, iou_fg);
  category_scores(inter_bg, pred_bg, targ_bg, dice_bg, iou_bg);

  SampleMetrics m;
  m.id = id;
  m.dice_fg = dice_fg;
  m.iou_fg = iou_fg;
  m.dice = 0.5 * (dice_fg + dice_bg);
  m.miou = 0.5 * (iou_fg + iou_bg);
  return m;
}

MetricReport aggregate(std::vector<SampleMetrics> rows) {
  MetricReport r;
  r.per_sample = std::move(rows);
  if (r.per_sample.empty()) return r;
  for (auto& s : r.per_sample) {
    r.dice += s.dice;
    r.miou += s.miou;
    r.dice_fg += s.dice_fg;
    r.miou_fg += s.iou_fg;
  }
  double n = static_cast<double>(r.per_sample.size());
  r.dice /= n;
  r.miou /= n;
  r.dice_fg /= n;
  r.miou_fg /= n;
  return r;
}

void write_metric_csv(const MetricReport& report, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << "sample_id,dice,miou\n";
  for (auto& s : report.per_sample) f << s.id << "," << s.dice << "," << s.miou << "\n";
  if (!f) throw IoError("short write to " + path);
}

double iou(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b) {
  if (a.size() != b.size())
    throw ShapeError("iou: mask sizes differ, " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  uint64_t inter = 0, uni = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    bool p = a[i] != 0, t = b[i] != 0;
    inter += (p && t) ? 1 : 0;
    uni += (p || t) ? 1 : 0;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace textseg
