// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "textseg/fusion.hpp"
#include "textseg/gradcheck.hpp"

using namespace textseg;

namespace {

std::vector<double> rand_vec(Rng& rng, size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

void fill(Tensor<double> t, double v) {
  for (auto& x : t.mutable_data()) x = v;
}

void set_identity(Tensor<double> t, size_t d) {
  auto& v = t.mutable_data();
  std::fill(v.begin(), v.end(), 0.0);
  for (size_t i = 0; i < d; ++i) v[i * d + i] = 1.0;
}

// plain-loop single-head attention, the brute-force reference
std::vector<double> attn_oracle(const std::vector<double>& qs, size_t P,
                                const std::vector<double>& kv, size_t Q, size_t d,
                                const std::vector<double>& wq, const std::vector<double>& wk,
                                const std::vector<double>& wv, const std::vector<uint8_t>& keep) {
  auto proj = [&](const std::vector<double>& x, size_t rows, const std::vector<double>& w) {
    std::vector<double> y(rows * d, 0.0);
    for (size_t i = 0; i < rows; ++i)
      for (size_t j = 0; j < d; ++j)
        for (size_t k = 0; k < d; ++k) y[i * d + j] += x[i * d + k] * w[k * d + j];
    return y;
  };
  auto q = proj(qs, P, wq), k = proj(kv, Q, wk), v = proj(kv, Q, wv);
  std::vector<double> out(P * d, 0.0);
  for (size_t p = 0; p < P; ++p) {
    std::vector<double> lg(Q, -1e300);
    double mx = -1e300;
    for (size_t j = 0; j < Q; ++j) {
      if (!keep.empty() && !keep[j]) continue;
      double s = 0;
      for (size_t c = 0; c < d; ++c) s += q[p * d + c] * k[j * d + c];
      lg[j] = s / std::sqrt(static_cast<double>(d));
      mx = std::max(mx, lg[j]);
    }
    double z = 0;
    std::vector<double> a(Q, 0.0);
    for (size_t j = 0; j < Q; ++j) {
      if (!keep.empty() && !keep[j]) continue;
      a[j] = std::exp(lg[j] - mx);
      z += a[j];
    }
    for (size_t j = 0; j < Q; ++j)
      for (size_t c = 0; c < d; ++c) out[p * d + c] += (a[j] / z) * v[j * d + c];
  }
  return out;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double m = 0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

void check_grads(GradcheckResult r) {
  INFO("worst ", r.worst_name, "[", r.worst_index, "] analytic=", r.worst_analytic,
       " numeric=", r.worst_numeric);
  CHECK(r.max_rel <= kGradcheckTol);
}

}  // namespace

TEST_CASE("cross attention: brute-force oracle, both directions") {
  size_t d = 4;
  ParamStore<double> ps(3);
  auto p = CrossAttentionParams<double>::create(ps, "f", d);
  Rng rng(5);
  auto V = Tensor<double>::constant({2, d}, rand_vec(rng, 2 * d));
  auto E = Tensor<double>::constant({3, d}, rand_vec(rng, 3 * d));
  std::vector<uint8_t> keep = {1, 1, 0};

  auto ep = vision_to_text(E, V, p);
  auto ref_e = attn_oracle(E.data(), 3, V.data(), 2, d, p.wq.data(), p.wk.data(), p.wv.data(), {});
  CHECK(max_abs_diff(ep.data(), ref_e) < 1e-6);

  auto vp = text_to_vision(V, E, p, keep);
  auto ref_v =
      attn_oracle(V.data(), 2, E.data(), 3, d, p.wq.data(), p.wk.data(), p.wv.data(), keep);
  CHECK(max_abs_diff(vp.data(), ref_v) < 1e-6);
}

TEST_CASE("cross attention: one key means weight one") {
  size_t d = 3;
  ParamStore<double> ps(7);
  auto p = CrossAttentionParams<double>::create(ps, "f", d);
  Rng rng(11);
  auto V = Tensor<double>::constant({1, d}, rand_vec(rng, d));
  auto E = Tensor<double>::constant({4, d}, rand_vec(rng, 4 * d));
  auto ep = vision_to_text(E, V, p);
  auto pv = matmul(V, p.wv);  // the single projected value row
  for (size_t r = 0; r < 4; ++r)
    for (size_t c = 0; c < d; ++c)
      CHECK(ep.data()[r * d + c] == doctest::Approx(pv.data()[c]).epsilon(1e-12));
}

TEST_CASE("cross attention: zeroed query projection averages the projected values") {
  size_t d = 4;
  ParamStore<double> ps(13);
  auto p = CrossAttentionParams<double>::create(ps, "f", d);
  fill(p.wq, 0.0);
  Rng rng(17);
  auto V = Tensor<double>::constant({3, d}, rand_vec(rng, 3 * d));
  auto E = Tensor<double>::constant({2, d}, rand_vec(rng, 2 * d));
  auto ep = vision_to_text(E, V, p);
  auto pv = matmul(V, p.wv);
  for (size_t c = 0; c < d; ++c) {
    double mean = (pv.data()[c] + pv.data()[d + c] + pv.data()[2 * d + c]) / 3.0;
    CHECK(ep.data()[c] == doctest::Approx(mean).epsilon(1e-12));
    CHECK(ep.data()[d + c] == doctest::Approx(mean).epsilon(1e-12));
  }
}

TEST_CASE("joint attention splits into the two directions") {
  size_t d = 4, n = 3, l = 2;
  ParamStore<double> ps(19);
  auto p = CrossAttentionParams<double>::create(ps, "j", d);
  Rng rng(23);
  auto V = Tensor<double>::constant({n, d}, rand_vec(rng, n * d));
  auto E = Tensor<double>::constant({l, d}, rand_vec(rng, l * d));
  std::vector<uint8_t> keep = {1, 0};
  auto [vp, ep] = self_fusion(V, E, p, keep);
  CHECK(vp.shape() == Shape{n, d});
  CHECK(ep.shape() == Shape{l, d});

  std::vector<double> cat;
  cat.insert(cat.end(), V.data().begin(), V.data().end());
  cat.insert(cat.end(), E.data().begin(), E.data().end());
  std::vector<uint8_t> joint_keep = {1, 1, 1, 1, 0};
  auto ref = attn_oracle(cat, n + l, cat, n + l, d, p.wq.data(), p.wk.data(), p.wv.data(),
                         joint_keep);
  std::vector<double> ref_v(ref.begin(), ref.begin() + static_cast<ptrdiff_t>(n * d));
  std::vector<double> ref_e(ref.begin() + static_cast<ptrdiff_t>(n * d), ref.end());
  CHECK(max_abs_diff(vp.data(), ref_v) < 1e-6);
  CHECK(max_abs_diff(ep.data(), ref_e) < 1e-6);
}

TEST_CASE("interest weights: zeroed heads give uniform mass over valid positions") {
  size_t d = 8;
  ParamStore<double> ps(29);
  auto heads = InterestHeads<double>::create(ps, d);
  fill(heads.poi.w, 0.0);
  fill(heads.poi.b, 0.0);
  fill(heads.woi.w, 0.0);
  fill(heads.woi.b, 0.0);
  Rng rng(31);
  auto vp = Tensor<double>::constant({4, d}, rand_vec(rng, 4 * d));
  auto ep = Tensor<double>::constant({3, d}, rand_vec(rng, 3 * d));
  auto [wp, ww] = interest_weights(vp, ep, {1, 1, 0}, heads);
  for (size_t i = 0; i < 4; ++i) CHECK(wp.data()[i] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(ww.data()[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(ww.data()[1] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(ww.data()[2] == 0.0);
}

TEST_CASE("interest weights: simplex over 1000 random draws, pads carry zero mass") {
  for (uint64_t draw = 0; draw < 1000; ++draw) {
    ParamStore<double> ps(mix_seed(904, draw));
    auto heads = InterestHeads<double>::create(ps, 8);
    Rng rng(mix_seed(905, draw));
    auto vp = Tensor<double>::constant({4, 8}, rand_vec(rng, 32, -4.0, 4.0));
    auto ep = Tensor<double>::constant({3, 8}, rand_vec(rng, 24, -4.0, 4.0));
    std::vector<uint8_t> keep = {1, 1, 1};
    keep[2] = rng.uniform() < 0.5 ? 1 : 0;
    auto [wp, ww] = interest_weights(vp, ep, keep, heads);
    double sp = 0, sw = 0;
    for (double x : wp.data()) {
      REQUIRE(x >= 0.0);
      sp += x;
    }
    for (size_t j = 0; j < 3; ++j) {
      double x = ww.data()[j];
      REQUIRE(x >= 0.0);
      if (!keep[j]) REQUIRE(x == 0.0);
      sw += x;
    }
    REQUIRE(std::fabs(sp - 1.0) <= 1e-6);
    REQUIRE(std::fabs(sw - 1.0) <= 1e-6);
  }
}

TEST_CASE("interest weights: raising a logit raises that weight") {
  size_t d = 4;
  ParamStore<double> ps(37);
  auto heads = InterestHeads<double>::create(ps, d);
  Rng rng(41);
  auto base = rand_vec(rng, 3 * d);
  auto vp1 = Tensor<double>::constant({3, d}, base);
  auto [w1, u1] = interest_weights(vp1, vp1, {1, 1, 1}, heads);
  // push row 1 along the head direction: its logit grows, weight must follow
  auto bumped = base;
  for (size_t c = 0; c < d; ++c) bumped[d + c] += 0.5 * heads.poi.w.data()[c];
  auto vp2 = Tensor<double>::constant({3, d}, bumped);
  auto [w2, u2] = interest_weights(vp2, vp1, {1, 1, 1}, heads);
  CHECK(w2.data()[1] > w1.data()[1]);
}

TEST_CASE("alignment matrix: worked values") {
  auto one = alignment_matrix(Tensor<double>::constant({1, 2}, {3, 4}),
                              Tensor<double>::constant({1, 2}, {3, 4}));
  CHECK(one.data()[0] == doctest::Approx(1.0).epsilon(1e-7));
  auto orth = alignment_matrix(Tensor<double>::constant({1, 2}, {1, 0}),
                               Tensor<double>::constant({1, 2}, {0, 1}));
  CHECK(orth.data()[0] == doctest::Approx(0.0).epsilon(1e-12));
  auto mid = alignment_matrix(Tensor<double>::constant({1, 2}, {1, 2}),
                              Tensor<double>::constant({1, 2}, {2, 1}));
  CHECK(mid.data()[0] == doctest::Approx(0.8).epsilon(1e-7));  // 4/(sqrt5*sqrt5)
}

TEST_CASE("alignment matrix: entries bounded, zero rows harmless") {
  Rng rng(43);
  for (int rep = 0; rep < 50; ++rep) {
    auto V = Tensor<double>::constant({4, 6}, rand_vec(rng, 24, -9.0, 9.0));
    auto E = Tensor<double>::constant({3, 6}, rand_vec(rng, 18, -9.0, 9.0));
    auto A = alignment_matrix(V, E);
    CHECK(A.shape() == Shape{4, 3});
    for (double x : A.data()) {
      REQUIRE(x >= -1.0);
      REQUIRE(x <= 1.0);
    }
  }
  auto z = alignment_matrix(Tensor<double>::zeros({2, 3}),
                            Tensor<double>::constant({1, 3}, {1, 2, 3}));
  for (double x : z.data()) CHECK(x == 0.0);
}

TEST_CASE("pair similarity: constant and identity-like matrices") {
  auto wp = Tensor<double>::constant({2}, {0.5, 0.5});
  auto ww = Tensor<double>::constant({2}, {0.5, 0.5});
  auto ones = Tensor<double>::full({2, 2}, 1.0);
  CHECK(pair_similarity(ones, wp, ww, {1, 1}).item() == doctest::Approx(1.0).epsilon(1e-12));
  auto eye = Tensor<double>::constant({2, 2}, {1, 0, 0, 1});
  CHECK(pair_similarity(eye, wp, ww, {1, 1}).item() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("pair similarity: one-hot weights select the row max") {
  auto A = Tensor<double>::constant({2, 3}, {0.2, 0.7, -0.1, 0.9, 0.3, 0.4});
  auto wp = Tensor<double>::constant({2}, {0.0, 1.0});
  auto ww = Tensor<double>::constant({3}, {1.0, 0.0, 0.0});
  // vision term = max of row 1 = 0.9; text term = max of column 0 = 0.9
  CHECK(pair_similarity(A, wp, ww, {1, 1, 1}).item() == doctest::Approx(0.9).epsilon(1e-12));
}

TEST_CASE("pair similarity: hand oracle with a padded token") {
  auto A = Tensor<double>::constant({2, 2}, {0.3, 0.8, 0.6, -0.5});
  auto wp = Tensor<double>::constant({2}, {0.25, 0.75});
  auto ww = Tensor<double>::constant({2}, {1.0, 0.0});
  std::vector<uint8_t> keep = {1, 0};
  // row maxima over kept tokens only: [0.3, 0.6]; column 0 max: 0.6
  double expect = 0.5 * ((0.25 * 0.3 + 0.75 * 0.6) + (1.0 * 0.6));
  CHECK(pair_similarity(A, wp, ww, keep).item() == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("pair similarity: invariant to feature scale") {
  Rng rng(47);
  auto v = rand_vec(rng, 4 * 6);
  auto e = rand_vec(rng, 3 * 6);
  auto wp = Tensor<double>::constant({4}, {0.1, 0.2, 0.3, 0.4});
  auto ww = Tensor<double>::constant({3}, {0.5, 0.25, 0.25});
  auto V = Tensor<double>::constant({4, 6}, v);
  auto E = Tensor<double>::constant({3, 6}, e);
  auto vs = v;
  for (auto& x : vs) x *= 7.3;
  auto Vs = Tensor<double>::constant({4, 6}, vs);
  double s1 = pair_similarity(alignment_matrix(V, E), wp, ww, {1, 1, 1}).item();
  double s2 = pair_similarity(alignment_matrix(Vs, E), wp, ww, {1, 1, 1}).item();
  CHECK(std::fabs(s1 - s2) <= 1e-6);
}

namespace {

// the printed loss form, exp(S)/tau, evaluated with plain loops
double contrastive_printed(const std::vector<double>& s, size_t b, double tau) {
  double total = 0;
  for (size_t i = 0; i < b; ++i) {
    double row = 0, col = 0;
    for (size_t j = 0; j < b; ++j) {
      row += std::exp(s[i * b + j]) / tau;
      col += std::exp(s[j * b + i]) / tau;
    }
    double diag = std::exp(s[i * b + i]) / tau;
    total += -std::log(diag / row) - std::log(diag / col);
  }
  return total / (2.0 * static_cast<double>(b));
}

}  // namespace

TEST_CASE("contrastive: single pair scores zero") {
  auto sim = Tensor<double>::constant({1, 1}, {0.37});
  CHECK(std::fabs(contrastive_from_matrix(sim, 0.07).item()) <= 1e-7);
  CHECK(std::fabs(contrastive_printed({0.37}, 1, 0.07)) <= 1e-7);
}

TEST_CASE("contrastive: matches the printed form at tau 1, not at tau 0.07") {
  std::vector<double> s = {1, -1, -1, 1};
  auto sim = Tensor<double>::constant({2, 2}, s);
  double at_one = contrastive_from_matrix(sim, 1.0).item();
  // worked value: softplus(-2)
  CHECK(at_one == doctest::Approx(std::log(1.0 + std::exp(-2.0))).epsilon(1e-12));
  CHECK(at_one == doctest::Approx(contrastive_printed(s, 2, 1.0)).epsilon(1e-12));

  // the printed form's tau cancels; the implemented loss actually sharpens
  CHECK(contrastive_printed(s, 2, 0.07) == doctest::Approx(at_one).epsilon(1e-12));
  double at_small = contrastive_from_matrix(sim, 0.07).item();
  CHECK(std::fabs(at_small - at_one) > 1e-3);
}

TEST_CASE("contrastive: batch permutation symmetry") {
  Rng rng(53);
  auto s = rand_vec(rng, 9, -1.0, 1.0);
  auto loss = contrastive_from_matrix(Tensor<double>::constant({3, 3}, s), 0.07).item();
  // permutation (0 1 2) -> (2 0 1) applied to both rows and columns
  size_t perm[3] = {2, 0, 1};
  std::vector<double> sp(9);
  for (size_t i = 0; i < 3; ++i)
    for (size_t j = 0; j < 3; ++j) sp[i * 3 + j] = s[perm[i] * 3 + perm[j]];
  auto loss_p = contrastive_from_matrix(Tensor<double>::constant({3, 3}, sp), 0.07).item();
  CHECK(loss == doctest::Approx(loss_p).epsilon(1e-12));
}

TEST_CASE("contrastive: better-aligned diagonal lowers the loss") {
  std::vector<double> weak = {0.5, 0.4, 0.4, 0.5};
  std::vector<double> strong = {0.9, 0.4, 0.4, 0.9};
  auto lw = contrastive_from_matrix(Tensor<double>::constant({2, 2}, weak), 0.07).item();
  auto ls = contrastive_from_matrix(Tensor<double>::constant({2, 2}, strong), 0.07).item();
  CHECK(ls < lw);
}

TEST_CASE("contrastive: validation") {
  auto sim = Tensor<double>::constant({2, 2}, {1, 0, 0, 1});
  CHECK_THROWS_AS(contrastive_from_matrix(sim, 0.0), ConfigError);
  CHECK_THROWS_AS(contrastive_from_matrix(sim, -1.0), ConfigError);
  auto rect = Tensor<double>::constant({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK_THROWS_AS(contrastive_from_matrix(rect, 1.0), ShapeError);
}

TEST_CASE("contrastive gradients") {
  ParamStore<double> ps(59);
  Rng rng(61);
  auto sim = ps.add("sim", {3, 3}, rand_vec(rng, 9, -1.0, 1.0));
  auto make = [&] { return contrastive_from_matrix(sim, 0.07); };
  check_grads(gradcheck(make, ps.items()));
}

TEST_CASE("masked softmax rows: simplex over 1000 random draws") {
  Rng rng(67);
  for (int rep = 0; rep < 1000; ++rep) {
    auto x = Tensor<double>::constant({3, 5}, rand_vec(rng, 15, -30.0, 30.0));
    std::vector<uint8_t> keep(5, 1);
    keep[rng.uniform_int(5)] = 0;
    auto y = masked_softmax(x, keep);
    for (size_t r = 0; r < 3; ++r) {
      double s = 0;
      for (size_t c = 0; c < 5; ++c) {
        double w = y.data()[r * 5 + c];
        REQUIRE(w >= 0.0);
        if (!keep[c]) REQUIRE(w == 0.0);
        s += w;
      }
      REQUIRE(std::fabs(s - 1.0) <= 1e-6);
    }
  }
}
