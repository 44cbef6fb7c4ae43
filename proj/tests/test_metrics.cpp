#include <doctest.h>

#include <cmath>

#include "fireset/errors.hpp"
#include "fireset/metrics.hpp"
#include "fireset/oracles.hpp"
#include "fireset/rng.hpp"

using namespace fireset;

namespace {

constexpr std::array<std::size_t, 4> kBox{8, 8, 56, 56};  // 48x48 interior of a 64 grid

// Entity whose predictions and clusters are given directly in pixel
// coordinates; normalization is undone through the standard valid box.
EntityEval pixel_eval(const std::vector<std::array<double, 3>>& preds,   // score, py, px
                      const std::vector<std::array<double, 3>>& gts) {  // py, px, mass
  EntityEval e;
  e.H = 64;
  e.W = 64;
  e.valid_box = kBox;
  for (const auto& [s, py, px] : preds) e.preds.push_back({s, (py - 8.0) / 48.0, (px - 8.0) / 48.0});
  for (const auto& [py, px, m] : gts) {
    Cluster c;
    c.cy = (py - 8.0) / 48.0;
    c.cx = (px - 8.0) / 48.0;
    c.mass = m;
    c.size = 1;
    e.targets.clusters.push_back(c);
  }
  e.targets.K = gts.size();
  e.union_mask.assign(64 * 64, 0);
  return e;
}

std::pair<std::vector<ApPred>, std::vector<ApGt>> random_micro_split(Rng& rng) {
  std::vector<ApPred> preds;
  std::vector<ApGt> gts;
  const std::size_t entities = 1 + rng.below(4);
  for (std::size_t e = 0; e < entities; ++e) {
    const std::size_t np = rng.below(6), ng = rng.below(4);
    for (std::size_t i = 0; i < np; ++i)
      preds.push_back({e, rng.u01(), rng.uniform(0, 48), rng.uniform(0, 48)});
    for (std::size_t i = 0; i < ng; ++i) gts.push_back({e, rng.uniform(0, 48), rng.uniform(0, 48)});
  }
  return {preds, gts};
}

}  // namespace

TEST_CASE("AP is 1 for a perfect ranked set") {
  std::vector<ApPred> preds{{0, 0.9, 10, 10}, {0, 0.8, 30, 30}, {1, 0.7, 20, 20}};
  std::vector<ApGt> gts{{0, 11, 10}, {0, 31, 30}, {1, 20, 21}};
  CHECK(*event_ap(preds, gts, 7.0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("two-prediction hand example") {
  std::vector<ApGt> gts{{0, 10, 10}};
  SUBCASE("near one scored higher -> AP 1") {
    std::vector<ApPred> preds{{0, 0.9, 10, 13}, {0, 0.8, 10, 110}};
    CHECK(*event_ap(preds, gts, 7.0) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("near one scored lower -> AP 0.5") {
    std::vector<ApPred> preds{{0, 0.8, 10, 13}, {0, 0.9, 10, 110}};
    CHECK(*event_ap(preds, gts, 7.0) == doctest::Approx(0.5).epsilon(1e-12));
  }
}

TEST_CASE("AP edge cases") {
  CHECK(!event_ap({{0, 0.5, 1, 1}}, {}, 7.0).has_value());  // no ground truth -> absent
  CHECK(*event_ap({}, {{0, 1, 1}}, 7.0) == 0.0);            // no predictions -> zero area
  // a prediction cannot claim a centre in another entity
  CHECK(*event_ap({{1, 0.9, 10, 10}}, {{0, 10, 10}}, 7.0) == 0.0);
}

TEST_CASE("AP equals the exhaustive PR oracle on random micro-splits") {
  for (std::uint64_t trial = 0; trial < 250; ++trial) {
    Rng rng(mix64(404, trial));
    const auto [preds, gts] = random_micro_split(rng);
    const double r = 3.0 + rng.uniform(0, 20);
    const auto fast = event_ap(preds, gts, r);
    const auto slow = oracle::event_ap_naive(preds, gts, r);
    REQUIRE(fast.has_value() == slow.has_value());
    if (fast) CHECK(*fast == *slow);  // identical arithmetic, exact equality
  }
}

TEST_CASE("AP never decreases with radius") {
  for (std::uint64_t trial = 0; trial < 60; ++trial) {
    Rng rng(mix64(405, trial));
    const auto [preds, gts] = random_micro_split(rng);
    if (gts.empty()) continue;
    double prev = 0.0;
    for (double r : {7.0, 14.0, 21.0}) {
      const double ap = *event_ap(preds, gts, r);
      CHECK(ap >= prev - 1e-12);
      prev = ap;
    }
  }
}

TEST_CASE("coverage matching basics") {
  SUBCASE("no positives -> no pairs") {
    const auto e = pixel_eval({{0.2, 20, 20}}, {{20, 20, 1}});
    CHECK(match_for_coverage(e, 0.5).empty());
  }
  SUBCASE("one positive picks the nearer of two centres") {
    const auto e = pixel_eval({{0.9, 20, 20}}, {{40, 40, 1}, {22, 20, 2}});
    const auto pairs = match_for_coverage(e, 0.5);
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].cluster == 1);
    CHECK(pairs[0].dist_px == doctest::Approx(2.0));
  }
}

TEST_CASE("coverage matching equals the permutation oracle") {
  for (std::uint64_t trial = 0; trial < 300; ++trial) {
    Rng rng(mix64(406, trial));
    std::vector<std::array<double, 3>> preds(1 + rng.below(5)), gts(1 + rng.below(5));
    for (auto& p : preds) p = {1.0, rng.uniform(8, 56), rng.uniform(8, 56)};
    for (auto& g : gts) g = {rng.uniform(8, 56), rng.uniform(8, 56), 1.0};
    const auto e = pixel_eval(preds, gts);
    const auto pairs = match_for_coverage(e, 0.5);

    std::vector<double> cost(preds.size() * gts.size());
    for (std::size_t i = 0; i < preds.size(); ++i)
      for (std::size_t k = 0; k < gts.size(); ++k)
        cost[i * gts.size() + k] =
            std::hypot(preds[i][1] - gts[k][0], preds[i][2] - gts[k][1]);
    const auto ref = oracle::best_assignment(cost, preds.size(), gts.size());

    REQUIRE(pairs.size() == ref.pairs.size());
    double total = 0.0;
    for (const auto& p : pairs) total += p.dist_px;
    CHECK(total == doctest::Approx(ref.total).epsilon(1e-9));
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      CHECK(pairs[i].query == ref.pairs[i].first);
      CHECK(pairs[i].cluster == ref.pairs[i].second);
    }
  }
}

TEST_CASE("mass coverage hand examples") {
  EvalConfig cfg;
  SUBCASE("one positive on the heavy cluster -> full coverage") {
    const auto e = pixel_eval({{0.9, 20, 20}}, {{20, 21, 3}, {45, 45, 1}});
    const auto rep = evaluate_split({e}, cfg);
    CHECK(*rep.mass_cov[1] == doctest::Approx(1.0));  // 3 / 3
  }
  SUBCASE("one positive on the light cluster -> one third") {
    const auto e = pixel_eval({{0.9, 45, 45}}, {{20, 20, 3}, {45, 46, 1}});
    const auto rep = evaluate_split({e}, cfg);
    CHECK(*rep.mass_cov[1] == doctest::Approx(1.0 / 3.0));
  }
  SUBCASE("every cluster matched in radius -> exactly one") {
    const auto e = pixel_eval({{0.9, 20, 20}, {0.8, 45, 45}}, {{20, 21, 3}, {45, 46, 1}});
    const auto rep = evaluate_split({e}, cfg);
    CHECK(*rep.mass_cov[1] == doctest::Approx(1.0));
  }
}

TEST_CASE("hit rate hand examples") {
  EvalConfig cfg;
  // distances 5 and 20 against r = 14
  const auto e = pixel_eval({{0.9, 20, 25}, {0.8, 45, 25}}, {{20, 20, 1}, {45, 45, 1}});
  const auto rep = evaluate_split({e}, cfg);
  CHECK(*rep.hit[1] == doctest::Approx(0.5));
  CHECK(*rep.hit[2] == doctest::Approx(1.0));  // r = 21 admits both
  CHECK(*rep.hit[0] == doctest::Approx(0.5));  // r = 7 still admits the 5px pair
}

TEST_CASE("rendered union map") {
  const auto e = pixel_eval({{1.0, 20, 20}}, {});
  const auto map = render_union(e, 3.0);
  CHECK(map[20 * 64 + 20] == doctest::Approx(1.0).epsilon(1e-12));
  // one sigma out; the map holds floats, hence the tolerance
  CHECK(map[20 * 64 + 23] == doctest::Approx(std::exp(-0.5)).epsilon(1e-6));
  double peak = 0.0;
  for (float v : map) peak = std::max(peak, static_cast<double>(v));
  CHECK(peak == doctest::Approx(1.0));

  const auto zero = render_union(pixel_eval({{0.0, 20, 20}}, {}), 3.0);
  for (float v : zero) CHECK(v == 0.0f);
}

TEST_CASE("union AUROC behaviour") {
  const std::array<std::size_t, 4> box{0, 0, 8, 8};
  std::vector<std::uint8_t> mask(64, 0);
  for (std::size_t i = 20; i < 30; ++i) mask[i] = 1;

  SUBCASE("map equal to mask separates perfectly") {
    std::vector<float> map(64, 0.0f);
    for (std::size_t i = 0; i < 64; ++i) map[i] = mask[i] ? 0.9f : 0.1f;
    CHECK(*union_auroc(map, mask, box, 8) == doctest::Approx(1.0));
  }
  SUBCASE("constant map has no separability") {
    std::vector<float> map(64, 0.25f);
    CHECK(*union_auroc(map, mask, box, 8) == doctest::Approx(0.5));
  }
  SUBCASE("single-class masks give no value") {
    std::vector<float> map(64, 0.25f);
    CHECK(!union_auroc(map, std::vector<std::uint8_t>(64, 0), box, 8).has_value());
    CHECK(!union_auroc(map, std::vector<std::uint8_t>(64, 1), box, 8).has_value());
  }
}

TEST_CASE("union AUROC equals the pair-counting oracle") {
  for (std::uint64_t trial = 0; trial < 200; ++trial) {
    Rng rng(mix64(407, trial));
    const std::size_t side = 4 + rng.below(5);
    const std::array<std::size_t, 4> box{0, 0, side, side};
    std::vector<float> map(side * side);
    std::vector<std::uint8_t> mask(side * side);
    for (auto& v : map) v = static_cast<float>(rng.below(6)) / 5.0f;  // deliberate ties
    bool has_pos = false, has_neg = false;
    for (auto& m : mask) {
      m = rng.bernoulli(0.4) ? 1 : 0;
      (m ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg) continue;

    std::vector<double> pos, neg;
    for (std::size_t i = 0; i < map.size(); ++i)
      (mask[i] ? pos : neg).push_back(static_cast<double>(map[i]));
    CHECK(std::abs(*union_auroc(map, mask, box, side) - oracle::auroc_pairwise(pos, neg)) <=
          1e-9);
  }
}

TEST_CASE("query diagnostics hand examples") {
  EvalConfig cfg;
  SUBCASE("perfect positives") {
    const auto e = pixel_eval({{0.9, 20, 20}, {0.8, 40, 40}}, {{20, 20, 2}, {40, 40, 1}});
    const auto rep = evaluate_split({e}, cfg);
    CHECK(*rep.clus_prec[1] == doctest::Approx(1.0));
    CHECK(*rep.clus_rec[1] == doctest::Approx(1.0));
    CHECK(*rep.clus_f1[1] == doctest::Approx(1.0));
    CHECK(*rep.lrp[1] == doctest::Approx(0.0));
    CHECK(rep.duplicate_rate == doctest::Approx(0.0));
    CHECK(rep.cardinality_error == doctest::Approx(0.0));
    CHECK(rep.avg_pred == doctest::Approx(2.0));
  }
  SUBCASE("two positives stacked on one cluster") {
    const auto e = pixel_eval({{0.9, 20, 20}, {0.8, 21, 20}}, {{20, 20, 1}});
    const auto rep = evaluate_split({e}, cfg);
    CHECK(rep.duplicate_rate == doctest::Approx(0.5));
    CHECK(rep.cardinality_error == doctest::Approx(1.0));
  }
  SUBCASE("no positives against two clusters") {
    const auto e = pixel_eval({{0.1, 20, 20}}, {{20, 20, 1}, {40, 40, 1}});
    const auto rep = evaluate_split({e}, cfg);
    CHECK(*rep.clus_rec[1] == doctest::Approx(0.0));
    CHECK(rep.cardinality_error == doctest::Approx(2.0));
    CHECK(*rep.lrp[1] == doctest::Approx(1.0));  // pure false negatives
    CHECK(rep.avg_pred == doctest::Approx(0.0));
  }
}

TEST_CASE("top-k recall uses only the highest-ranked queries") {
  EvalConfig cfg;
  cfg.top_k = 1;
  // the weaker query is the accurate one; top-1 restriction must miss it
  const auto e = pixel_eval({{0.9, 40, 40}, {0.8, 20, 20}}, {{20, 20, 1}});
  const auto rep = evaluate_split({e}, cfg);
  CHECK(*rep.top_rec[1] == doctest::Approx(0.0));
  cfg.top_k = 2;
  const auto rep2 = evaluate_split({e}, cfg);
  CHECK(*rep2.top_rec[1] == doctest::Approx(1.0));
}

TEST_CASE("subset cover hand values") {
  SUBCASE("all clusters matched exactly") {
    const auto e = pixel_eval({{0.9, 20, 20}, {0.8, 40, 40}}, {{20, 20, 1}, {40, 40, 1}});
    CHECK(subset_cover_xy(e, 0.5) == doctest::Approx(1.0));
  }
  SUBCASE("no positives") {
    const auto e = pixel_eval({{0.1, 20, 20}}, {{20, 20, 1}});
    CHECK(subset_cover_xy(e, 0.5) == doctest::Approx(0.0));
  }
  SUBCASE("single cluster at normalized distance 0.014") {
    EntityEval e = pixel_eval({}, {});
    e.preds.push_back({0.9, 0.5, 0.5});
    Cluster c;
    c.cy = 0.5;
    c.cx = 0.514;
    c.mass = 1.0;
    e.targets.clusters.push_back(c);
    e.targets.K = 1;
    CHECK(subset_cover_xy(e, 0.5) == doctest::Approx(0.986));
  }
  SUBCASE("no clusters at all") {
    const auto e = pixel_eval({{0.9, 20, 20}}, {});
    CHECK(subset_cover_xy(e, 0.5) == doctest::Approx(1.0));
  }
}

TEST_CASE("duplicate rate is zero for one-per-cluster positives") {
  EvalConfig cfg;
  for (std::uint64_t trial = 0; trial < 40; ++trial) {
    Rng rng(mix64(408, trial));
    std::vector<std::array<double, 3>> preds, gts;
    const std::size_t k = 1 + rng.below(4);
    for (std::size_t i = 0; i < k; ++i) {
      // spacing keeps each positive nearest to its own cluster
      const double py = 10.0 + 11.0 * static_cast<double>(i), px = rng.uniform(10, 54);
      gts.push_back({py, px, 1.0});
      if (rng.bernoulli(0.7)) preds.push_back({0.9, py + rng.uniform(-2, 2), px});
    }
    const auto rep = evaluate_split({pixel_eval(preds, gts)}, cfg);
    CHECK(rep.duplicate_rate == 0.0);
  }
}

TEST_CASE("duplicate rate stays in range on crowded predictions") {
  EvalConfig cfg;
  for (std::uint64_t trial = 0; trial < 40; ++trial) {
    Rng rng(mix64(411, trial));
    std::vector<std::array<double, 3>> preds, gts;
    for (std::size_t i = 0; i < 1 + rng.below(3); ++i)
      gts.push_back({rng.uniform(15, 49), rng.uniform(15, 49), 1.0});
    for (std::size_t i = 0; i < rng.below(7); ++i)
      preds.push_back({0.9, rng.uniform(10, 54), rng.uniform(10, 54)});
    const auto rep = evaluate_split({pixel_eval(preds, gts)}, cfg);
    CHECK(rep.duplicate_rate >= 0.0);
    CHECK(rep.duplicate_rate <= 1.0);
  }
}

TEST_CASE("report invariants on random inputs") {
  EvalConfig cfg;
  Rng rng(409);
  std::vector<EntityEval> split;
  for (std::size_t e = 0; e < 6; ++e) {
    std::vector<std::array<double, 3>> preds, gts;
    for (std::size_t i = 0; i < 3 + rng.below(4); ++i)
      preds.push_back({rng.u01(), rng.uniform(8, 56), rng.uniform(8, 56)});
    for (std::size_t i = 0; i < rng.below(4); ++i)
      gts.push_back({rng.uniform(8, 56), rng.uniform(8, 56), rng.uniform(0.5, 4)});
    split.push_back(pixel_eval(preds, gts));
  }
  const auto rep = evaluate_split(split, cfg);

  for (std::size_t ri = 0; ri < 3; ++ri) {
    for (const auto& v : {rep.ap[ri], rep.mass_cov[ri], rep.hit[ri], rep.clus_prec[ri],
                          rep.clus_rec[ri], rep.clus_f1[ri], rep.top_rec[ri], rep.lrp[ri]})
      if (v) {
        CHECK(*v >= 0.0);
        CHECK(*v <= 1.0);
      }
  }
  REQUIRE(rep.map.has_value());
  CHECK(*rep.map == (*rep.ap[0] + *rep.ap[1] + *rep.ap[2]) / 3.0);
  CHECK(rep.cardinality_error >= 0.0);
  CHECK(rep.avg_pred >= 0.0);

  const auto j = metric_report_json(rep, cfg);
  CHECK(j.at("version") == 1);
  CHECK(j.at("n_entities") == 6);
  CHECK(j.at("map").get<double>() == doctest::Approx(*rep.map));
}

TEST_CASE("eval config validation") {
  EvalConfig cfg;
  cfg.validate();
  SUBCASE("radii must ascend") {
    cfg.radii = {14, 7, 21};
    CHECK_THROWS_AS(cfg.validate(), RangeError);
  }
  SUBCASE("threshold interior") {
    cfg.threshold = 1.0;
    CHECK_THROWS_AS(cfg.validate(), RangeError);
  }
}

TEST_CASE("regime rows populate the right columns") {
  EvalConfig cfg;
  auto fire = pixel_eval({{0.9, 20, 20}}, {{20, 21, 1}});
  fire.regime = Regime::continued;
  auto quiet = pixel_eval({{0.1, 30, 30}}, {});
  quiet.regime = Regime::quiescent;
  const auto rep = evaluate_split({fire, quiet}, cfg);

  REQUIRE(rep.regimes.count("continued") == 1);
  REQUIRE(rep.regimes.count("quiescent") == 1);
  const auto& cont = rep.regimes.at("continued");
  CHECK(cont.count == 1);
  CHECK(*cont.hit14 == doctest::Approx(1.0));
  CHECK(*cont.ap14 == doctest::Approx(1.0));
  const auto& q = rep.regimes.at("quiescent");
  CHECK(!q.ap14.has_value());  // no ground truth in the regime
  CHECK(q.avg_pred == doctest::Approx(0.0));
}
