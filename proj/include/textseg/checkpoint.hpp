// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "textseg/model.hpp"

namespace textseg {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is little-endian float32");

// Two files per checkpoint: <name>.json carries the manifest (format tag,
// epoch, run config, model dims, vocabulary, parameter layout, optimizer
// offsets); <name>.bin carries the flat float32 payload laid out as
// [params | adam m | adam v] in parameter-store order. Round-trips are
// bit-exact: floats are written and read raw.

struct OptimizerSnapshot {
  uint64_t step = 0;
  std::vector<float> m, v;
};

struct LoadedCheckpoint {
  RunConfig config;
  ModelDims dims;
  std::vector<std::string> vocab_tokens;
  size_t epoch = 0;
  OptimizerSnapshot opt;
  std::vector<float> flat;  // params section
  std::vector<std::pair<std::string, Shape>> layout;
};

namespace detail {

inline void write_atomic(const std::filesystem::path& path, const char* bytes, size_t n) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(bytes, static_cast<std::streamsize>(n));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline nlohmann::json dims_to_json(const ModelDims& d) {
  return {{"image", d.image}, {"d", d.d},       {"l_max", d.l_max},
          {"c1", d.c1},       {"c2", d.c2},     {"text_layers", d.text_layers},
          {"heads", d.heads}, {"ff", d.ff}};
}

inline ModelDims dims_from_json(const nlohmann::json& j) {
  ModelDims d;
  d.image = j.at("image").get<size_t>();
  d.d = j.at("d").get<size_t>();
  d.l_max = j.at("l_max").get<size_t>();
  d.c1 = j.at("c1").get<size_t>();
  d.c2 = j.at("c2").get<size_t>();
  d.text_layers = j.at("text_layers").get<size_t>();
  d.heads = j.at("heads").get<size_t>();
  d.ff = j.at("ff").get<size_t>();
  return d;
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& manifest_path, const Model<float>& model,
                            const std::vector<std::string>& vocab_tokens, size_t epoch,
                            const OptimizerSnapshot& opt) {
  size_t total = model.params().total_size();
  if (opt.m.size() != total || opt.v.size() != total)
    throw InternalError("optimizer state size does not match parameter count");

  auto payload_path = manifest_path;
  payload_path.replace_extension(".bin");

  nlohmann::json manifest;
  manifest["format"] = "textseg-ckpt-1";
  manifest["epoch"] = epoch;
  manifest["config"] = nlohmann::json::parse(config_to_json(model.config()));
  manifest["dims"] = detail::dims_to_json(model.dims());
  manifest["vocab"] = vocab_tokens;
  manifest["payload"] = payload_path.filename().string();

  std::vector<float> flat;
  flat.reserve(3 * total);
  nlohmann::json params = nlohmann::json::array();
  size_t offset = 0;
  for (const auto& [name, t] : model.params().items()) {
    params.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset * sizeof(float)}});
    const auto& v = t.data();
    flat.insert(flat.end(), v.begin(), v.end());
    offset += t.size();
  }
  manifest["params"] = std::move(params);
  manifest["optimizer"] = {{"step", opt.step},
                           {"m_offset", total * sizeof(float)},
                           {"v_offset", 2 * total * sizeof(float)}};
  flat.insert(flat.end(), opt.m.begin(), opt.m.end());
  flat.insert(flat.end(), opt.v.begin(), opt.v.end());

  std::string text = manifest.dump(2);
  text += "\n";
  detail::write_atomic(manifest_path, text.data(), text.size());
  detail::write_atomic(payload_path, reinterpret_cast<const char*>(flat.data()),
                       flat.size() * sizeof(float));
}

inline LoadedCheckpoint read_checkpoint(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot read " + manifest_path.string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("checkpoint manifest " + manifest_path.string() + ": " + e.what());
  }
  if (manifest.value("format", "") != "textseg-ckpt-1")
    throw IoError("unrecognized checkpoint format in " + manifest_path.string());

  LoadedCheckpoint ck;
  ck.epoch = manifest.at("epoch").get<size_t>();
  ck.config = parse_config_json(manifest.at("config").dump());
  ck.dims = detail::dims_from_json(manifest.at("dims"));
  ck.vocab_tokens = manifest.at("vocab").get<std::vector<std::string>>();

  size_t total = 0;
  for (const auto& p : manifest.at("params")) {
    auto name = p.at("name").get<std::string>();
    auto shape = p.at("shape").get<Shape>();
    if (p.at("offset").get<size_t>() != total * sizeof(float))
      throw IoError("checkpoint parameter " + name + " has inconsistent offset");
    ck.layout.emplace_back(std::move(name), std::move(shape));
    total += numel(ck.layout.back().second);
  }
  ck.opt.step = manifest.at("optimizer").at("step").get<uint64_t>();
  if (manifest.at("optimizer").at("m_offset").get<size_t>() != total * sizeof(float) ||
      manifest.at("optimizer").at("v_offset").get<size_t>() != 2 * total * sizeof(float))
    throw IoError("checkpoint optimizer offsets are inconsistent");

  auto payload_path = manifest_path.parent_path() / manifest.at("payload").get<std::string>();
  std::ifstream bin(payload_path, std::ios::binary | std::ios::ate);
  if (!bin) throw IoError("cannot read " + payload_path.string());
  auto bytes = static_cast<size_t>(bin.tellg());
  if (bytes != 3 * total * sizeof(float))
    throw IoError("checkpoint payload " + payload_path.string() + " holds " +
                  std::to_string(bytes) + " bytes, expected " +
                  std::to_string(3 * total * sizeof(float)));
  bin.seekg(0);
  std::vector<float> all(3 * total);
  bin.read(reinterpret_cast<char*>(all.data()), static_cast<std::streamsize>(bytes));
  if (!bin) throw IoError("short read from " + payload_path.string());

  ck.flat.assign(all.begin(), all.begin() + static_cast<ptrdiff_t>(total));
  ck.opt.m.assign(all.begin() + static_cast<ptrdiff_t>(total),
                  all.begin() + static_cast<ptrdiff_t>(2 * total));
  ck.opt.v.assign(all.begin() + static_cast<ptrdiff_t>(2 * total), all.end());
  return ck;
}

// overwrite a freshly built model's parameters; layout must match exactly
inline void install_params(Model<float>& model, const LoadedCheckpoint& ck) {
  const auto& items = model.params().items();
  if (items.size() != ck.layout.size())
    throw IoError("checkpoint holds " + std::to_string(ck.layout.size()) +
                  " parameters, model has " + std::to_string(items.size()));
  size_t offset = 0;
  for (size_t i = 0; i < items.size(); ++i) {
    auto [name, t] = items[i];
    if (name != ck.layout[i].first || t.shape() != ck.layout[i].second)
      throw IoError("checkpoint layout mismatch at " + name);
    auto& dst = t.mutable_data();
    std::copy(ck.flat.begin() + static_cast<ptrdiff_t>(offset),
              ck.flat.begin() + static_cast<ptrdiff_t>(offset + t.size()), dst.begin());
    offset += t.size();
  }
}

inline Model<float> model_from_checkpoint(const LoadedCheckpoint& ck) {
  Model<float> model(ck.dims, ck.config, ck.vocab_tokens.size());
  install_params(model, ck);
  return model;
}

}  // namespace textseg
