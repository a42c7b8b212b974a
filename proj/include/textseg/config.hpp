// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

namespace textseg {

enum class MaskStrategy { weighted, random };
enum class FusionAttention { cross, self };

struct RunConfig {
  double learning_rate = 3e-4;
  std::string schedule = "cosine";  // annealed to 0 over total steps
  size_t batch_size = 16;
  size_t epochs = 30;
  double alpha_v = 0.5;
  double alpha_t = 0.3;
  double tau = 0.07;
  double lambda1 = 1.0;   // text reconstruction (L_V2T)
  double lambda2 = 1.0;   // vision reconstruction (L_T2V)
  double lambda3 = 0.2;   // contrastive (L_CCL)
  double lambda4 = 5.0;   // segmentation (dice + ce)
  size_t recon_layers = 3;
  bool use_ccl_condition = true;  // interest-weighted pair similarity vs uniform
  bool use_cvr = true;
  bool use_clr = true;
  bool use_cvr_condition = true;
  bool use_clr_condition = true;
  MaskStrategy mask_strategy = MaskStrategy::weighted;
  FusionAttention attention = FusionAttention::cross;
  uint64_t master_seed = 42;

  void validate() const;
};

// strict UTF-8 JSON: unknown keys rejected, wrong types rejected; keys not
// present keep their defaults
RunConfig load_config(const std::string& path);
RunConfig parse_config_json(const std::string& text);
std::string config_to_json(const RunConfig& c);

std::string to_string(MaskStrategy s);
std::string to_string(FusionAttention a);

}  // namespace textseg
