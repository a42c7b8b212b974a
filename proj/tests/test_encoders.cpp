// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "textseg/encoders.hpp"
#include "textseg/gradcheck.hpp"

using namespace textseg;

namespace {

std::vector<double> rand_vec(Rng& rng, size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

void check_grads(GradcheckResult r) {
  INFO("worst ", r.worst_name, "[", r.worst_index, "] analytic=", r.worst_analytic,
       " numeric=", r.worst_numeric);
  CHECK(r.max_rel <= kGradcheckTol);
}

bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace

TEST_CASE("param store: same seed same init, keyed by name not order") {
  ParamStore<double> a(7), b(7);
  auto t1 = a.uniform("x", {4, 4}, 4);
  a.uniform("y", {2}, 2);
  // register in a different order; "x" must still get the same draw
  b.uniform("y", {2}, 2);
  auto t2 = b.uniform("x", {4, 4}, 4);
  CHECK(t1.data() == t2.data());
}

TEST_CASE("param store: duplicate names rejected") {
  ParamStore<double> ps(1);
  ps.uniform("w", {2}, 2);
  CHECK_THROWS_AS(ps.uniform("w", {2}, 2), InternalError);
}

TEST_CASE("layer norm: unit-scale rows") {
  ParamStore<double> ps(3);
  auto ln = LayerNorm<double>::create(ps, "ln", 6);
  Rng rng(9);
  auto x = Tensor<double>::constant({4, 6}, rand_vec(rng, 24, -3.0, 3.0));
  auto y = ln(x);
  for (size_t r = 0; r < 4; ++r) {
    double mu = 0, var = 0;
    for (size_t c = 0; c < 6; ++c) mu += y.data()[r * 6 + c];
    mu /= 6;
    for (size_t c = 0; c < 6; ++c) {
      double d = y.data()[r * 6 + c] - mu;
      var += d * d;
    }
    var /= 6;
    CHECK(mu == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(var == doctest::Approx(1.0).epsilon(1e-4));  // eps in the denominator biases down
  }
}

TEST_CASE("transformer block gradients") {
  ParamStore<double> ps(11);
  auto blk = TransformerBlock<double>::create(ps, "blk", 8, 2, 16);
  Rng rng(21);
  auto x = ps.add("x", {3, 8}, rand_vec(rng, 24));
  std::vector<uint8_t> keep = {1, 1, 0};
  auto w = Tensor<double>::constant({3, 8}, rand_vec(rng, 24));
  auto make = [&] { return sum_all(mul(blk(x, keep), w)); };
  check_grads(gradcheck(make, ps.items()));
}

TEST_CASE("text encoder: pad slot ids cannot influence real rows") {
  ParamStore<double> ps(5);
  auto enc = TextEncoder<double>::create(ps, ModelDims::micro(), 16);
  std::vector<uint8_t> keep = {1, 1, 0};
  auto a = enc({4, 6, 8}, keep);
  auto b = enc({4, 6, 13}, keep);
  size_t d = 8;
  for (size_t i = 0; i < 2 * d; ++i) CHECK(a.values.data()[i] == b.values.data()[i]);
}

TEST_CASE("text encoder: single real token keeps full output shape") {
  ParamStore<double> ps(5);
  ModelDims dm = ModelDims::micro();
  auto enc = TextEncoder<double>::create(ps, dm, 16);
  auto out = enc({7, kPadId, kPadId}, {1, 0, 0});
  CHECK(out.values.shape() == Shape{dm.l_max, dm.d});
  CHECK(all_finite(out.values.data()));
}

TEST_CASE("text encoder: id and length validation") {
  ParamStore<double> ps(5);
  auto enc = TextEncoder<double>::create(ps, ModelDims::micro(), 16);
  CHECK_THROWS_AS(enc({4, 6, 99}, {1, 1, 1}), VocabError);
  CHECK_THROWS_AS(enc({4, 6}, {1, 1}), ShapeError);
}

TEST_CASE("visual encoder: shapes, skips, finiteness") {
  ParamStore<double> ps(13);
  ModelDims dm = ModelDims::micro();
  auto enc = VisualEncoder<double>::create(ps, dm);
  auto vf = enc(Tensor<double>::zeros({1, dm.image, dm.image}));
  CHECK(vf.values.shape() == Shape{dm.patches(), dm.d});
  CHECK(vf.hp == dm.grid());
  CHECK(vf.wp == dm.grid());
  REQUIRE(vf.skips.size() == 3);
  CHECK(vf.skips[0].shape() == Shape{1, dm.image, dm.image});
  CHECK(vf.skips[1].shape() == Shape{dm.c1, dm.image / 2, dm.image / 2});
  CHECK(vf.skips[2].shape() == Shape{dm.c2, dm.image / 4, dm.image / 4});
  CHECK(all_finite(vf.values.data()));
}

TEST_CASE("visual encoder: sensitive to a single pixel") {
  ParamStore<double> ps(13);
  ModelDims dm = ModelDims::micro();
  auto enc = VisualEncoder<double>::create(ps, dm);
  Rng rng(31);
  auto base = rand_vec(rng, dm.image * dm.image, 0.0, 1.0);
  auto bumped = base;
  bumped[5 * dm.image + 7] += 0.25;
  auto a = enc(Tensor<double>::constant({1, dm.image, dm.image}, base));
  auto b = enc(Tensor<double>::constant({1, dm.image, dm.image}, bumped));
  CHECK(a.values.data() != b.values.data());
}

TEST_CASE("visual encoder: constant image still yields distinct patch rows") {
  // conv features are translation-equivariant; only the positional embedding
  // can separate the rows, and the position words depend on it
  ParamStore<double> ps(13);
  ModelDims dm = ModelDims::micro();
  auto enc = VisualEncoder<double>::create(ps, dm);
  auto vf = enc(Tensor<double>::full({1, dm.image, dm.image}, 0.5));
  const auto& v = vf.values.data();
  size_t d = dm.d;
  bool distinct = false;
  for (size_t c = 0; c < d && !distinct; ++c) distinct = v[0 * d + c] != v[3 * d + c];
  CHECK(distinct);
}

TEST_CASE("visual encoder: deterministic per seed") {
  ModelDims dm = ModelDims::micro();
  Rng rng(17);
  auto img = rand_vec(rng, dm.image * dm.image, 0.0, 1.0);
  ParamStore<double> p1(99), p2(99);
  auto e1 = VisualEncoder<double>::create(p1, dm);
  auto e2 = VisualEncoder<double>::create(p2, dm);
  auto a = e1(Tensor<double>::constant({1, dm.image, dm.image}, img));
  auto b = e2(Tensor<double>::constant({1, dm.image, dm.image}, img));
  CHECK(a.values.data() == b.values.data());
}

TEST_CASE("visual encoder gradients") {
  ParamStore<double> ps(41);
  ModelDims dm = ModelDims::micro();
  auto enc = VisualEncoder<double>::create(ps, dm);
  Rng rng(43);
  auto img = ps.add("img", {1, dm.image, dm.image}, rand_vec(rng, dm.image * dm.image, 0.0, 1.0));
  auto w = Tensor<double>::constant({dm.patches(), dm.d}, rand_vec(rng, dm.patches() * dm.d));
  auto make = [&] { return sum_all(mul(enc(img).values, w)); };
  check_grads(gradcheck(make, ps.items()));
}

TEST_CASE("mask decoder: logit map matches the image, probabilities stay inside (0,1)") {
  ParamStore<double> ps(19);
  ModelDims dm = ModelDims::micro();
  auto dec = MaskDecoder<double>::create(ps, dm);
  Rng rng(23);
  auto rows = Tensor<double>::constant({dm.patches(), dm.d}, rand_vec(rng, dm.patches() * dm.d));
  std::vector<Tensor<double>> skips = {
      Tensor<double>::constant({1, dm.image, dm.image}, rand_vec(rng, dm.image * dm.image, 0, 1)),
      Tensor<double>::constant({dm.c1, dm.image / 2, dm.image / 2},
                               rand_vec(rng, dm.c1 * dm.image * dm.image / 4)),
      Tensor<double>::constant({dm.c2, dm.image / 4, dm.image / 4},
                               rand_vec(rng, dm.c2 * dm.image * dm.image / 16))};
  auto logits = dec(rows, dm.grid(), dm.grid(), skips);
  CHECK(logits.shape() == Shape{1, dm.image, dm.image});
  CHECK(all_finite(logits.data()));
  auto p = sigmoid(logits);
  for (double x : p.data()) {
    CHECK(x > 0.0);
    CHECK(x < 1.0);
  }
  CHECK_THROWS_AS(dec(rows, dm.grid(), dm.grid(), {skips[0]}), ConfigError);
}

TEST_CASE("mask decoder gradients, skips included") {
  ParamStore<double> ps(29);
  ModelDims dm = ModelDims::micro();
  auto dec = MaskDecoder<double>::create(ps, dm);
  Rng rng(37);
  auto rows = ps.add("rows", {dm.patches(), dm.d}, rand_vec(rng, dm.patches() * dm.d));
  std::vector<Tensor<double>> skips = {
      ps.add("sk0", {1, dm.image, dm.image}, rand_vec(rng, dm.image * dm.image, 0, 1)),
      ps.add("sk1", {dm.c1, dm.image / 2, dm.image / 2},
             rand_vec(rng, dm.c1 * dm.image * dm.image / 4)),
      ps.add("sk2", {dm.c2, dm.image / 4, dm.image / 4},
             rand_vec(rng, dm.c2 * dm.image * dm.image / 16))};
  auto w = Tensor<double>::constant({1, dm.image, dm.image}, rand_vec(rng, dm.image * dm.image));
  auto make = [&] { return sum_all(mul(dec(rows, dm.grid(), dm.grid(), skips), w)); };
  check_grads(gradcheck(make, ps.items()));
}
