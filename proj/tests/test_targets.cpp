#include <doctest.h>

#include <algorithm>

#include "fireset/rng.hpp"
#include "fireset/targets.hpp"

using namespace fireset;

namespace {

Entity make_entity(std::size_t H, std::size_t W, std::size_t T_h = 4, std::size_t T_p = 4) {
  Entity e;
  e.H = H;
  e.W = W;
  e.T_h = T_h;
  e.T = T_h + T_p;
  e.channels = canonical_channels();
  e.F = e.channels.size();
  e.data.assign(e.F * e.T * e.H * e.W, 0.0f);
  e.valid_box = default_valid_box(H, W);
  e.validate();
  return e;
}

void set_fire(Entity& e, std::size_t t, std::size_t y, std::size_t x, float code, float frp) {
  e.at(e.channel("active_fire"), t, y, x) = code;
  e.at(e.channel("frp"), t, y, x) = frp;
}

}  // namespace

TEST_SUITE("targets") {

TEST_CASE("union mask basics") {
  auto e = make_entity(64, 64);
  CHECK(e.valid_box == std::array<std::size_t, 4>{8, 8, 56, 56});

  auto zero = build_union_mask(e, 2);
  CHECK(std::count(zero.begin(), zero.end(), 1) == 0);

  set_fire(e, e.T_h + 3, 20, 30, 3.0f, 5.0f);
  auto one = build_union_mask(e, 2);
  CHECK(std::count(one.begin(), one.end(), 1) == 1);
  CHECK(one[20 * 64 + 30] == 1);

  // history fire does not contribute
  set_fire(e, 0, 40, 40, 3.0f, 5.0f);
  auto after = build_union_mask(e, 2);
  CHECK(std::count(after.begin(), after.end(), 1) == 1);
}

TEST_CASE("union mask respects confidence threshold") {
  auto e = make_entity(64, 64);
  set_fire(e, e.T_h, 20, 20, 1.0f, 1.0f);  // p: low confidence
  set_fire(e, e.T_h, 30, 30, 2.0f, 1.0f);  // q: nominal
  auto m = build_union_mask(e, 2);
  CHECK(m[20 * 64 + 20] == 0);
  CHECK(m[30 * 64 + 30] == 1);

  // monotone: mask(3) subset of mask(2) subset of mask(1)
  auto m1 = build_union_mask(e, 1);
  auto m3 = build_union_mask(e, 3);
  for (std::size_t p = 0; p < m.size(); ++p) {
    if (m3[p]) CHECK(m[p]);
    if (m[p]) CHECK(m1[p]);
  }
}

TEST_CASE("union mask forced to zero outside valid box") {
  auto e = make_entity(64, 64);
  set_fire(e, e.T_h, 2, 2, 3.0f, 9.0f);    // outside [8,8,56,56)
  set_fire(e, e.T_h, 8, 8, 3.0f, 9.0f);    // first inside pixel
  set_fire(e, e.T_h, 56, 56, 3.0f, 9.0f);  // just outside (half-open)
  auto m = build_union_mask(e, 2);
  CHECK(m[2 * 64 + 2] == 0);
  CHECK(m[8 * 64 + 8] == 1);
  CHECK(m[56 * 64 + 56] == 0);
  CHECK(std::count(m.begin(), m.end(), 1) == 1);
}

TEST_CASE("union mask error paths") {
  auto e = make_entity(64, 64);
  CHECK_THROWS_AS(build_union_mask(e, 0), RangeError);
  CHECK_THROWS_AS(build_union_mask(e, 4), RangeError);
  Entity bad = e;
  bad.T = bad.T_h;  // no future window
  bad.data.resize(bad.F * bad.T * bad.H * bad.W);
  CHECK_THROWS_AS(build_union_mask(bad, 2), EmptyHorizon);
}

TEST_CASE("chebyshev chain connectivity") {
  std::vector<std::uint8_t> mask(64 * 64, 0);
  mask[10 * 64 + 10] = 1;
  mask[10 * 64 + 13] = 1;  // distance 3 -> same component
  auto lm = connected_components(mask, 64, 64, 3);
  CHECK(lm.K == 1);
  CHECK(lm.labels[10 * 64 + 10] == lm.labels[10 * 64 + 13]);

  mask[10 * 64 + 13] = 0;
  mask[10 * 64 + 14] = 1;  // distance 4 -> separate
  lm = connected_components(mask, 64, 64, 3);
  CHECK(lm.K == 2);
  CHECK(lm.labels[10 * 64 + 10] != lm.labels[10 * 64 + 14]);

  // chain: 10 -> 13 -> 16 all linked stepwise
  mask.assign(64 * 64, 0);
  mask[10 * 64 + 10] = mask[10 * 64 + 13] = mask[10 * 64 + 16] = 1;
  lm = connected_components(mask, 64, 64, 3);
  CHECK(lm.K == 1);

  std::vector<std::uint8_t> empty(64 * 64, 0);
  CHECK(connected_components(empty, 64, 64, 3).K == 0);
}

TEST_CASE("labels are canonical by first row-major pixel") {
  Rng rng(7);
  std::vector<std::uint8_t> mask(48 * 48, 0);
  for (int i = 0; i < 60; ++i) mask[rng.below(48 * 48)] = 1;
  auto lm = connected_components(mask, 48, 48, 3);
  std::int32_t seen = 0;
  for (std::size_t p = 0; p < mask.size(); ++p) {
    if (!lm.labels[p]) continue;
    if (lm.labels[p] == seen + 1) ++seen;  // new labels appear in scan order
    CHECK(lm.labels[p] <= seen);
  }
  CHECK(static_cast<std::size_t>(seen) == lm.K);
}

TEST_CASE("centre values match hand computation on a 128x128 grid") {
  auto e = make_entity(128, 128, 8, 8);
  CHECK(e.valid_box == std::array<std::size_t, 4>{16, 16, 112, 112});

  SUBCASE("single pixel") {
    set_fire(e, e.T_h, 24, 24, 3.0f, 2.0f);
    auto ts = build_targets(e, 2, 10);
    REQUIRE(ts.clusters.size() == 1);
    CHECK(ts.clusters[0].cy == doctest::Approx(0.0833).epsilon(1e-3));
    CHECK(ts.clusters[0].cx == doctest::Approx((24.0 - 16.0) / 96.0).epsilon(1e-12));
  }

  SUBCASE("frp-weighted centre") {
    set_fire(e, e.T_h, 40, 40, 3.0f, 1.0f);
    set_fire(e, e.T_h, 40, 43, 3.0f, 3.0f);
    auto ts = build_targets(e, 2, 10);
    REQUIRE(ts.clusters.size() == 1);  // distance 3 joins them
    CHECK(ts.clusters[0].cx == doctest::Approx((42.25 - 16.0) / 96.0).epsilon(1e-12));
    CHECK(ts.clusters[0].cy == doctest::Approx((40.0 - 16.0) / 96.0).epsilon(1e-12));
    CHECK(ts.clusters[0].mass == doctest::Approx(4.0));
    CHECK(ts.clusters[0].size == 2);
  }

  SUBCASE("zero-frp component falls back to centroid") {
    set_fire(e, e.T_h, 50, 50, 2.0f, 0.0f);
    set_fire(e, e.T_h, 50, 52, 2.0f, 0.0f);
    auto ts = build_targets(e, 2, 10);
    REQUIRE(ts.clusters.size() == 1);
    CHECK(ts.clusters[0].cx == doctest::Approx((51.0 - 16.0) / 96.0).epsilon(1e-12));
    CHECK(ts.clusters[0].mass == doctest::Approx(0.0));
  }
}

TEST_CASE("ranking is mass desc, size desc, position asc") {
  auto e = make_entity(64, 64);
  set_fire(e, e.T_h, 20, 20, 3.0f, 1.0f);  // mass 1
  set_fire(e, e.T_h, 40, 40, 3.0f, 3.0f);  // mass 3
  auto ts = build_targets(e, 2, 10);
  REQUIRE(ts.clusters.size() == 2);
  CHECK(ts.clusters[0].mass == doctest::Approx(3.0));
  CHECK(ts.clusters[1].mass == doctest::Approx(1.0));

  // equal mass, equal size -> (y,x) lexicographic ascending
  auto e2 = make_entity(64, 64);
  set_fire(e2, e2.T_h, 40, 20, 2.0f, 1.0f);
  set_fire(e2, e2.T_h, 20, 40, 2.0f, 1.0f);
  auto ts2 = build_targets(e2, 2, 10);
  REQUIRE(ts2.clusters.size() == 2);
  CHECK(ts2.clusters[0].cy < ts2.clusters[1].cy);
}

TEST_CASE("truncation bookkeeping") {
  auto e = make_entity(128, 128, 8, 8);
  // 12 well-separated single-pixel fires
  for (int i = 0; i < 12; ++i)
    set_fire(e, e.T_h, 20 + 7 * static_cast<std::size_t>(i % 4) * 2,
             20 + 8 * static_cast<std::size_t>(i / 4) * 2, 3.0f, static_cast<float>(i + 1));
  auto full = build_targets(e, 2, 50);
  REQUIRE(full.K == 12);
  CHECK(full.truncated == 0);

  auto cut = build_targets(e, 2, 10);
  CHECK(cut.K == 12);
  CHECK(cut.clusters.size() == 10);
  CHECK(cut.truncated == 2);
  CHECK(cut.truncated + cut.clusters.size() == cut.K);

  // kept clusters are the highest-mass prefix
  CHECK(cut.clusters.front().mass == doctest::Approx(12.0));
  CHECK(cut.clusters.back().mass == doctest::Approx(3.0));

  // truncation decreases monotonically with the budget
  std::size_t t10 = build_targets(e, 2, 10).truncated;
  std::size_t t20 = build_targets(e, 2, 20).truncated;
  std::size_t t50 = build_targets(e, 2, 50).truncated;
  CHECK(t10 >= t20);
  CHECK(t20 >= t50);
  CHECK(t50 == 0);
}

TEST_CASE("centre lies inside the component bounding box") {
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    auto e = make_entity(64, 64);
    const std::size_t y0 = 10 + rng.below(20), x0 = 10 + rng.below(20);
    const std::size_t hh = 1 + rng.below(6), ww = 1 + rng.below(6);
    for (std::size_t y = y0; y < y0 + hh; ++y)
      for (std::size_t x = x0; x < x0 + ww; ++x)
        set_fire(e, e.T_h, y, x, 2.0f, static_cast<float>(rng.uniform(0.0, 4.0)));
    auto ts = build_targets(e, 2, 10);
    REQUIRE(ts.clusters.size() == 1);
    const auto [by0, bx0, by1, bx1] = e.valid_box;
    const double lo_y = (static_cast<double>(y0) - by0) / static_cast<double>(by1 - by0);
    const double hi_y = (static_cast<double>(y0 + hh - 1) - by0) / static_cast<double>(by1 - by0);
    const double lo_x = (static_cast<double>(x0) - bx0) / static_cast<double>(bx1 - bx0);
    const double hi_x = (static_cast<double>(x0 + ww - 1) - bx0) / static_cast<double>(bx1 - bx0);
    CHECK(ts.clusters[0].cy >= lo_y);
    CHECK(ts.clusters[0].cy <= hi_y);
    CHECK(ts.clusters[0].cx >= lo_x);
    CHECK(ts.clusters[0].cx <= hi_x);
  }
}

TEST_CASE("jitter moves content and fills vacated pixels") {
  auto e = make_entity(64, 64);
  set_fire(e, e.T_h, 30, 30, 3.0f, 7.0f);
  e.at(e.channel("dryness"), 0, 30, 30) = 0.5f;

  auto same = apply_jitter(e, 0, 0);
  CHECK(same.data == e.data);

  auto j = apply_jitter(e, -4, 2);  // 4 up, 2 right
  CHECK(j.at(j.channel("active_fire"), e.T_h, 26, 32) == 3.0f);
  CHECK(j.at(j.channel("frp"), e.T_h, 26, 32) == 7.0f);
  CHECK(j.at(j.channel("dryness"), 0, 26, 32) == 0.5f);
  CHECK(j.jitter_dy == -4);
  CHECK(j.jitter_dx == 2);

  // bottom rows vacated by the upward shift take per-channel fills
  CHECK(j.at(j.channel("active_fire"), 0, 63, 10) == kFireUnobserved);
  CHECK(j.at(j.channel("dryness"), 0, 63, 10) == 0.0f);
  CHECK(j.at(j.channel("frp"), 0, 63, 10) == 0.0f);

  CHECK_THROWS_AS(apply_jitter(e, 9, 0), JitterRangeError);
  CHECK_THROWS_AS(apply_jitter(e, 0, -9), JitterRangeError);
}

TEST_CASE("jitter round trip restores interior content") {
  Rng rng(5);
  auto e = make_entity(64, 64);
  for (int i = 0; i < 200; ++i) {
    const std::size_t f = rng.below(e.F), t = rng.below(e.T);
    e.at(f, t, 8 + rng.below(48), 8 + rng.below(48)) = static_cast<float>(rng.uniform(0.0, 3.0));
  }
  auto back = apply_jitter(apply_jitter(e, -4, 2), 4, -2);
  // pixels at least 8 from every edge never left the grid
  for (std::size_t f = 0; f < e.F; ++f)
    for (std::size_t t = 0; t < e.T; ++t)
      for (std::size_t y = 8; y < 56; ++y)
        for (std::size_t x = 8; x < 56; ++x)
          REQUIRE(back.at(f, t, y, x) == e.at(f, t, y, x));
}

TEST_CASE("fire jittered outside the valid box drops out of the targets") {
  auto e = make_entity(64, 64);
  set_fire(e, e.T_h, 10, 30, 3.0f, 5.0f);  // near the top of the valid box
  REQUIRE(build_targets(e, 2, 10).clusters.size() == 1);
  auto j = apply_jitter(e, -4, 0);  // content moves to y=6, outside [8,56)
  CHECK(build_targets(j, 2, 10).clusters.empty());
}

}  // TEST_SUITE
