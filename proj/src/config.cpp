// SPDX-License-Identifier: Apache-2.0
#include "textseg/config.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "textseg/common.hpp"

namespace textseg {

using nlohmann::json;

void RunConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v))
      throw ConfigError(std::string(name) + " must be positive and finite");
  };
  positive(learning_rate, "learning_rate");
  positive(tau, "tau");
  if (schedule != "cosine") throw ConfigError("schedule must be \"cosine\", got \"" + schedule + "\"");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  auto ratio = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0))
      throw ConfigError(std::string(name) + " must lie in [0,1]");
  };
  ratio(alpha_v, "alpha_v");
  ratio(alpha_t, "alpha_t");
  auto weight = [](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v))
      throw ConfigError(std::string(name) + " must be nonnegative and finite");
  };
  weight(lambda1, "lambda1");
  weight(lambda2, "lambda2");
  weight(lambda3, "lambda3");
  weight(lambda4, "lambda4");
  if (recon_layers < 1) throw ConfigError("recon_layers must be >= 1");
}

RunConfig parse_config_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");

  static const std::set<std::string> known = {
      "learning_rate", "schedule", "batch_size", "epochs", "alpha_v", "alpha_t", "tau",
      "lambda1", "lambda2", "lambda3", "lambda4", "recon_layers", "use_ccl_condition",
      "use_cvr", "use_clr", "use_cvr_condition", "use_clr_condition", "mask_strategy",
      "attention", "master_seed"};
  for (auto& [key, val] : j.items())
    if (!known.count(key)) throw ConfigError("unknown config key \"" + key + "\"");

  RunConfig c;
  auto num = [&](const char* key, double& out) {
    if (!j.contains(key)) return;
    if (!j[key].is_number()) throw ConfigError(std::string(key) + " must be a number");
    out = j[key].get<double>();
  };
  auto uns = [&](const char* key, size_t& out) {
    if (!j.contains(key)) return;
    if (!j[key].is_number_unsigned()) throw ConfigError(std::string(key) + " must be a nonnegative integer");
    out = j[key].get<size_t>();
  };
  auto flag = [&](const char* key, bool& out) {
    if (!j.contains(key)) return;
    if (!j[key].is_boolean()) throw ConfigError(std::string(key) + " must be a boolean");
    out = j[key].get<bool>();
  };
  num("learning_rate", c.learning_rate);
  if (j.contains("schedule")) {
    if (!j["schedule"].is_string()) throw ConfigError("schedule must be a string");
    c.schedule = j["schedule"].get<std::string>();
  }
  uns("batch_size", c.batch_size);
  uns("epochs", c.epochs);
  num("alpha_v", c.alpha_v);
  num("alpha_t", c.alpha_t);
  num("tau", c.tau);
  num("lambda1", c.lambda1);
  num("lambda2", c.lambda2);
  num("lambda3", c.lambda3);
  num("lambda4", c.lambda4);
  uns("recon_layers", c.recon_layers);
  flag("use_ccl_condition", c.use_ccl_condition);
  flag("use_cvr", c.use_cvr);
  flag("use_clr", c.use_clr);
  flag("use_cvr_condition", c.use_cvr_condition);
  flag("use_clr_condition", c.use_clr_condition);
  if (j.contains("mask_strategy")) {
    std::string s = j["mask_strategy"].is_string() ? j["mask_strategy"].get<std::string>() : "";
    if (s == "weighted")
      c.mask_strategy = MaskStrategy::weighted;
    else if (s == "random")
      c.mask_strategy = MaskStrategy::random;
    else
      throw ConfigError("mask_strategy must be \"weighted\" or \"random\"");
  }
  if (j.contains("attention")) {
    std::string s = j["attention"].is_string() ? j["attention"].get<std::string>() : "";
    if (s == "cross")
      c.attention = FusionAttention::cross;
    else if (s == "self")
      c.attention = FusionAttention::self;
    else
      throw ConfigError("attention must be \"cross\" or \"self\"");
  }
  if (j.contains("master_seed")) {
    if (!j["master_seed"].is_number_unsigned())
      throw ConfigError("master_seed must be a nonnegative integer");
    c.master_seed = j["master_seed"].get<uint64_t>();
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open config " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_json(ss.str());
}

std::string to_string(MaskStrategy s) { return s == MaskStrategy::weighted ? "weighted" : "random"; }
std::string to_string(FusionAttention a) { return a == FusionAttention::cross ? "cross" : "self"; }

std::string config_to_json(const RunConfig& c) {
  json j;
  j["learning_rate"] = c.learning_rate;
  j["schedule"] = c.schedule;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["alpha_v"] = c.alpha_v;
  j["alpha_t"] = c.alpha_t;
  j["tau"] = c.tau;
  j["lambda1"] = c.lambda1;
  j["lambda2"] = c.lambda2;
  j["lambda3"] = c.lambda3;
  j["lambda4"] = c.lambda4;
  j["recon_layers"] = c.recon_layers;
  j["use_ccl_condition"] = c.use_ccl_condition;
  j["use_cvr"] = c.use_cvr;
  j["use_clr"] = c.use_clr;
  j["use_cvr_condition"] = c.use_cvr_condition;
  j["use_clr_condition"] = c.use_clr_condition;
  j["mask_strategy"] = to_string(c.mask_strategy);
  j["attention"] = to_string(c.attention);
  j["master_seed"] = c.master_seed;
  return j.dump(2);
}

}  // namespace textseg
