// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace textseg {

// Pixel-count metrics over binarized masks. Counting is integer arithmetic;
// the category average covers {foreground, background}, and foreground-only
// variants are reported alongside since it is ambiguous which convention the
// usual tables use. Empty-vs-empty categories score 1.

struct SampleMetrics {
  std::string id;
  double dice = 0.0;     // category-averaged
  double miou = 0.0;     // category-averaged
  double dice_fg = 0.0;
  double iou_fg = 0.0;
};

struct MetricReport {
  double dice = 0.0;
  double miou = 0.0;
  double dice_fg = 0.0;
  double miou_fg = 0.0;
  std::vector<SampleMetrics> per_sample;
};

// pred = sigmoid(logit) > 0.5, i.e. logit > 0
std::vector<uint8_t> binarize_logits(const std::vector<float>& logits);

SampleMetrics mask_metrics(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& target,
                           const std::string& id);

MetricReport aggregate(std::vector<SampleMetrics> rows);

// CSV: sample_id, dice, miou (header row included)
void write_metric_csv(const MetricReport& report, const std::string& path);

// plain intersection-over-union of two binary masks (foreground only)
double iou(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b);

}  // namespace textseg
