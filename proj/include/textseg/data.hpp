// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <filesystem>

#include "textseg/model.hpp"
#include "textseg/png_io.hpp"
#include "textseg/vocab.hpp"

namespace textseg {

// Scenes are 64x64 grayscale canvases holding one to three bright shapes on a
// dark noisy background, each shape alone in its quadrant. The prompt picks a
// subset of the shapes; the ground-truth mask is exactly that subset's pixels.

enum class ShapeKind { circle, square, bar };

struct ShapeSpec {
  ShapeKind kind = ShapeKind::circle;
  int quadrant = 0;  // 0 upper-left, 1 upper-right, 2 lower-left, 3 lower-right
  // circle: (x,y) center, w = h = radius; square/bar: (x,y) top-left corner
  int x = 0, y = 0, w = 0, h = 0;
  int intensity = 0;
};

struct SceneSpec {
  size_t canvas = 64;
  std::vector<ShapeSpec> shapes;
  std::vector<size_t> target;  // indices into shapes
  std::string prompt;
  uint64_t rng_seed = 0;
};

struct RenderedScene {
  size_t canvas = 0;
  std::vector<uint8_t> image;
  std::vector<uint8_t> mask;  // 0 or 255, union of the target shapes
};

struct CounterfactualPair {
  std::string prompt_a, prompt_b;
  std::vector<uint8_t> mask_a, mask_b;  // 0/255
};

bool shape_covers(const ShapeSpec& s, int px, int py);
size_t shape_pixels(const ShapeSpec& s);
std::vector<uint8_t> shape_mask(const SceneSpec& scene, size_t idx);

// one random scene with a prompt from the grammar; deterministic per seed
SceneSpec draw_scene(uint64_t seed);

// two shapes in distinct quadrants, each large enough to be a target on its
// own; used for the prompt-swap probes
SceneSpec draw_two_shape_scene(uint64_t seed);

RenderedScene render_scene(const SceneSpec& scene);

// two prompts over one image referring to different shapes, with exact masks
CounterfactualPair counterfactual_pair(const SceneSpec& scene);

struct ManifestEntry {
  std::string id, split, image, mask, prompt;
  uint64_t seed = 0;
};

struct DatasetSummary {
  size_t train = 0, val = 0, test = 0;
  std::filesystem::path root;
};

// layout: root/{train,val,test}/{images,masks}/<id>.png, root/manifest.jsonl,
// root/vocab.tsv. Byte-identical for identical (count, ratios, seed).
DatasetSummary generate_dataset(const std::filesystem::path& root, size_t count,
                                const std::array<double, 3>& ratios, uint64_t master_seed);

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& root);

template <typename S>
Sample<S> load_sample(const std::filesystem::path& root, const ManifestEntry& e,
                      const Vocabulary& vocab, size_t l_max) {
  size_t iw = 0, ih = 0, mw = 0, mh = 0;
  auto img = read_png_gray8((root / e.image).string(), iw, ih);
  auto msk = read_png_gray8((root / e.mask).string(), mw, mh);
  if (iw != mw || ih != mh) throw IoError("sample " + e.id + ": image and mask sizes differ");
  std::vector<S> iv(img.size()), mv(msk.size());
  for (size_t i = 0; i < iv.size(); ++i) iv[i] = static_cast<S>(img[i] / 255.0);
  for (size_t i = 0; i < mv.size(); ++i) mv[i] = msk[i] > 127 ? S(1) : S(0);
  Sample<S> s;
  s.image = Tensor<S>::constant({1, ih, iw}, std::move(iv));
  s.target = Tensor<S>::constant({1, mh, mw}, std::move(mv));
  auto tok = tokenize(e.prompt, vocab, l_max);
  s.ids = tok.ids;
  s.keep = tok.keep;
  s.id = e.id;
  return s;
}

// manifest order; limit = 0 loads the whole split
template <typename S>
std::vector<Sample<S>> load_split(const std::filesystem::path& root, const std::string& split,
                                  const Vocabulary& vocab, size_t l_max, size_t limit = 0) {
  std::vector<Sample<S>> out;
  for (const auto& e : read_manifest(root)) {
    if (e.split != split) continue;
    out.push_back(load_sample<S>(root, e, vocab, l_max));
    if (limit && out.size() == limit) break;
  }
  return out;
}

}  // namespace textseg
