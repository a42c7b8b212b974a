// SPDX-License-Identifier: Apache-2.0
#include "textseg/data.hpp"

#include <fstream>

#include "json.hpp"

namespace textseg {

namespace {

constexpr size_t kCanvas = 64;
constexpr size_t kQuadrant = kCanvas / 2;
// foreground budget: 2% to 20% of the canvas
constexpr size_t kMinTargetPx = 82;
constexpr size_t kMaxTargetPx = 819;

const char* kind_word(ShapeKind k) {
  switch (k) {
    case ShapeKind::circle: return "circle";
    case ShapeKind::square: return "square";
    default: return "bar";
  }
}

const char* kind_word_plural(ShapeKind k) {
  switch (k) {
    case ShapeKind::circle: return "circles";
    case ShapeKind::square: return "squares";
    default: return "bars";
  }
}

const char* row_word(int quadrant) { return quadrant < 2 ? "upper" : "lower"; }
const char* col_word(int quadrant) { return quadrant % 2 == 0 ? "left" : "right"; }

std::string core_phrase(const ShapeSpec& s) {
  return std::string(row_word(s.quadrant)) + " " + col_word(s.quadrant) + " " + kind_word(s.kind);
}

// one shape inside its quadrant with a 1px margin on every side
ShapeSpec draw_shape(Rng& rng, int quadrant) {
  ShapeSpec s;
  s.quadrant = quadrant;
  s.kind = static_cast<ShapeKind>(rng.uniform_int(3));
  s.intensity = 100 + static_cast<int>(rng.uniform_int(141));
  int qx = (quadrant % 2) * static_cast<int>(kQuadrant);
  int qy = (quadrant / 2) * static_cast<int>(kQuadrant);
  int q = static_cast<int>(kQuadrant);
  switch (s.kind) {
    case ShapeKind::circle: {
      int r = 6 + static_cast<int>(rng.uniform_int(9));  // 6..14
      s.w = s.h = r;
      s.x = qx + r + 1 + static_cast<int>(rng.uniform_int(size_t(q - 2 * r - 1)));
      s.y = qy + r + 1 + static_cast<int>(rng.uniform_int(size_t(q - 2 * r - 1)));
      break;
    }
    case ShapeKind::square: {
      int a = 10 + static_cast<int>(rng.uniform_int(15));  // 10..24
      s.w = s.h = a;
      s.x = qx + 1 + static_cast<int>(rng.uniform_int(size_t(q - a - 1)));
      s.y = qy + 1 + static_cast<int>(rng.uniform_int(size_t(q - a - 1)));
      break;
    }
    default: {
      int len = 18 + static_cast<int>(rng.uniform_int(11));   // 18..28
      int thick = 4 + static_cast<int>(rng.uniform_int(5));   // 4..8
      bool horizontal = rng.uniform() < 0.5;
      s.w = horizontal ? len : thick;
      s.h = horizontal ? thick : len;
      s.x = qx + 1 + static_cast<int>(rng.uniform_int(size_t(q - s.w - 1)));
      s.y = qy + 1 + static_cast<int>(rng.uniform_int(size_t(q - s.h - 1)));
      break;
    }
  }
  return s;
}

std::vector<int> draw_quadrants(Rng& rng, size_t n) {
  std::vector<int> qs = {0, 1, 2, 3};
  for (size_t i = 3; i > 0; --i) std::swap(qs[i], qs[rng.uniform_int(i + 1)]);
  qs.resize(n);
  return qs;
}

size_t target_pixels(const SceneSpec& scene) {
  size_t total = 0;
  for (size_t idx : scene.target) total += shape_pixels(scene.shapes[idx]);
  return total;
}

// optional filler words around the core clause; roughly half the prompts stay
// bare so position words dominate the token stream
std::string dress_prompt(Rng& rng, const std::string& core, bool plural_core, bool single,
                         const ShapeSpec* shape) {
  static const char* kVerbs[] = {"segment", "show",    "find",    "highlight",
                                 "select",  "mask",    "outline", "trace"};
  static const char* kNouns[] = {"image", "picture", "scene"};
  if (rng.uniform() < 0.5) return core;
  std::string verb = kVerbs[rng.uniform_int(8)];
  std::string noun = kNouns[rng.uniform_int(3)];
  std::string art = plural_core ? "" : "the ";
  size_t n_patterns = single ? 4 : 3;
  switch (rng.uniform_int(n_patterns)) {
    case 0: return verb + " " + art + core;
    case 1: return "please " + verb + " " + art + core + " in this " + noun;
    case 2: return art + core + " in the " + noun;
    default:
      return "the " + std::string(kind_word(shape->kind)) + " located at " +
             row_word(shape->quadrant) + " " + col_word(shape->quadrant);
  }
}

SceneSpec try_scene(Rng& rng, uint64_t seed) {
  SceneSpec scene;
  scene.canvas = kCanvas;
  scene.rng_seed = seed;
  double family = rng.uniform();
  if (family < 0.6) {
    // one referred shape among one to three
    size_t n = 1 + rng.uniform_int(3);
    auto qs = draw_quadrants(rng, n);
    for (int q : qs) scene.shapes.push_back(draw_shape(rng, q));
    size_t t = rng.uniform_int(n);
    scene.target = {t};
    scene.prompt = dress_prompt(rng, core_phrase(scene.shapes[t]), false, true, &scene.shapes[t]);
  } else if (family < 0.8) {
    // two shapes of one kind share a row or column: "both lower squares"
    size_t n = 2 + rng.uniform_int(2);
    bool by_row = rng.uniform() < 0.5;
    int which = static_cast<int>(rng.uniform_int(2));
    int qa = by_row ? which * 2 : which;          // row: {0,1} or {2,3}; col: {0,2} or {1,3}
    int qb = by_row ? which * 2 + 1 : which + 2;
    ShapeKind kind = static_cast<ShapeKind>(rng.uniform_int(3));
    auto a = draw_shape(rng, qa);
    auto b = draw_shape(rng, qb);
    while (a.kind != kind) a = draw_shape(rng, qa);
    while (b.kind != kind) b = draw_shape(rng, qb);
    scene.shapes = {a, b};
    if (n == 3) {
      int qc = by_row ? (1 - which) * 2 + static_cast<int>(rng.uniform_int(2))
                      : (1 - which) + 2 * static_cast<int>(rng.uniform_int(2));
      scene.shapes.push_back(draw_shape(rng, qc));
    }
    scene.target = {0, 1};
    std::string shared = by_row ? row_word(qa) : col_word(qa);
    std::string core = "both " + shared + " " + kind_word_plural(kind);
    scene.prompt = dress_prompt(rng, core, true, false, nullptr);
  } else {
    // every shape the same kind, all of them referred
    size_t n = 2 + rng.uniform_int(2);
    ShapeKind kind = static_cast<ShapeKind>(rng.uniform_int(3));
    auto qs = draw_quadrants(rng, n);
    for (int q : qs) {
      auto s = draw_shape(rng, q);
      while (s.kind != kind) s = draw_shape(rng, q);
      scene.shapes.push_back(s);
      scene.target.push_back(scene.target.size());
    }
    scene.prompt = dress_prompt(rng, "all " + std::string(kind_word_plural(kind)), true, false,
                                nullptr);
  }
  return scene;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

bool shape_covers(const ShapeSpec& s, int px, int py) {
  if (s.kind == ShapeKind::circle) {
    int dx = px - s.x, dy = py - s.y;
    return dx * dx + dy * dy <= s.w * s.w;
  }
  return px >= s.x && px < s.x + s.w && py >= s.y && py < s.y + s.h;
}

size_t shape_pixels(const ShapeSpec& s) {
  if (s.kind != ShapeKind::circle) return static_cast<size_t>(s.w) * static_cast<size_t>(s.h);
  size_t n = 0;
  for (int py = s.y - s.w; py <= s.y + s.w; ++py)
    for (int px = s.x - s.w; px <= s.x + s.w; ++px) n += shape_covers(s, px, py) ? 1 : 0;
  return n;
}

std::vector<uint8_t> shape_mask(const SceneSpec& scene, size_t idx) {
  if (idx >= scene.shapes.size()) throw InternalError("shape index out of range");
  const auto& s = scene.shapes[idx];
  std::vector<uint8_t> m(scene.canvas * scene.canvas, 0);
  for (size_t py = 0; py < scene.canvas; ++py)
    for (size_t px = 0; px < scene.canvas; ++px)
      if (shape_covers(s, static_cast<int>(px), static_cast<int>(py)))
        m[py * scene.canvas + px] = 255;
  return m;
}

SceneSpec draw_scene(uint64_t seed) {
  Rng rng(seed);
  for (int attempt = 0; attempt < 200; ++attempt) {
    auto scene = try_scene(rng, seed);
    size_t px = target_pixels(scene);
    if (px >= kMinTargetPx && px <= kMaxTargetPx) return scene;
  }
  throw InternalError("scene sampling failed to satisfy the foreground budget");
}

SceneSpec draw_two_shape_scene(uint64_t seed) {
  Rng rng(seed);
  for (int attempt = 0; attempt < 200; ++attempt) {
    SceneSpec scene;
    scene.canvas = kCanvas;
    scene.rng_seed = seed;
    auto qs = draw_quadrants(rng, 2);
    for (int q : qs) scene.shapes.push_back(draw_shape(rng, q));
    scene.target = {0};
    scene.prompt = core_phrase(scene.shapes[0]);
    bool ok = true;
    for (const auto& s : scene.shapes) {
      size_t px = shape_pixels(s);
      ok = ok && px >= kMinTargetPx && px <= kMaxTargetPx;
    }
    if (ok) return scene;
  }
  throw InternalError("scene sampling failed to satisfy the foreground budget");
}

RenderedScene render_scene(const SceneSpec& scene) {
  Rng rng(mix_seed(scene.rng_seed, 0x9e77));
  RenderedScene out;
  out.canvas = scene.canvas;
  size_t c = scene.canvas;
  out.image.assign(c * c, 0);
  out.mask.assign(c * c, 0);
  for (auto& px : out.image) px = static_cast<uint8_t>(5 + rng.uniform_int(31));  // 5..35
  for (const auto& s : scene.shapes) {
    for (size_t py = 0; py < c; ++py)
      for (size_t px = 0; px < c; ++px)
        if (shape_covers(s, static_cast<int>(px), static_cast<int>(py))) {
          int v = s.intensity - 10 + static_cast<int>(rng.uniform_int(21));
          out.image[py * c + px] = static_cast<uint8_t>(std::clamp(v, 0, 255));
        }
  }
  for (size_t idx : scene.target) {
    const auto& s = scene.shapes[idx];
    for (size_t py = 0; py < c; ++py)
      for (size_t px = 0; px < c; ++px)
        if (shape_covers(s, static_cast<int>(px), static_cast<int>(py)))
          out.mask[py * c + px] = 255;
  }
  return out;
}

CounterfactualPair counterfactual_pair(const SceneSpec& scene) {
  if (scene.shapes.size() < 2)
    throw NotApplicableError("counterfactual pair needs at least two shapes");
  CounterfactualPair p;
  p.prompt_a = core_phrase(scene.shapes[0]);
  p.prompt_b = core_phrase(scene.shapes[1]);
  p.mask_a = shape_mask(scene, 0);
  p.mask_b = shape_mask(scene, 1);
  return p;
}

DatasetSummary generate_dataset(const std::filesystem::path& root, size_t count,
                                const std::array<double, 3>& ratios, uint64_t master_seed) {
  if (count < 1) throw ConfigError("dataset needs at least one sample");
  double rsum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(rsum - 1.0) > 1e-9)
    throw ConfigError("split ratios must sum to 1, got " + std::to_string(rsum));
  size_t n_train = static_cast<size_t>(std::floor(ratios[0] * static_cast<double>(count) + 0.5));
  size_t n_val = static_cast<size_t>(std::floor(ratios[1] * static_cast<double>(count) + 0.5));
  if (n_train + n_val > count) n_val = count - n_train;
  size_t n_test = count - n_train - n_val;

  std::error_code ec;
  for (const char* split : {"train", "val", "test"}) {
    std::filesystem::create_directories(root / split / "images", ec);
    std::filesystem::create_directories(root / split / "masks", ec);
    if (ec) throw IoError("cannot create " + (root / split).string() + ": " + ec.message());
  }

  auto vocab = Vocabulary::builtin();
  vocab.save_tsv((root / "vocab.tsv").string());

  std::string manifest;
  for (size_t i = 0; i < count; ++i) {
    uint64_t seed = mix_seed(master_seed, i);
    auto scene = draw_scene(seed);
    auto rendered = render_scene(scene);
    const char* split = i < n_train ? "train" : (i < n_train + n_val ? "val" : "test");
    char idbuf[32];
    std::snprintf(idbuf, sizeof idbuf, "s%05zu", i);
    std::string id(idbuf);
    std::string img_rel = std::string(split) + "/images/" + id + ".png";
    std::string msk_rel = std::string(split) + "/masks/" + id + ".png";
    write_png_gray8((root / img_rel).string(), rendered.image, scene.canvas, scene.canvas);
    write_png_gray8((root / msk_rel).string(), rendered.mask, scene.canvas, scene.canvas);
    nlohmann::json rec = {{"id", id},       {"split", split},       {"image", img_rel},
                          {"mask", msk_rel}, {"prompt", scene.prompt}, {"seed", seed}};
    manifest += rec.dump();
    manifest += "\n";
  }
  write_file_atomic(root / "manifest.jsonl", manifest);
  return {n_train, n_val, n_test, root};
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& root) {
  std::ifstream in(root / "manifest.jsonl");
  if (!in) throw IoError("cannot read " + (root / "manifest.jsonl").string());
  std::vector<ManifestEntry> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError("manifest line " + std::to_string(out.size() + 1) + ": " + e.what());
    }
    ManifestEntry e;
    e.id = rec.at("id").get<std::string>();
    e.split = rec.at("split").get<std::string>();
    e.image = rec.at("image").get<std::string>();
    e.mask = rec.at("mask").get<std::string>();
    e.prompt = rec.at("prompt").get<std::string>();
    e.seed = rec.at("seed").get<uint64_t>();
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace textseg
