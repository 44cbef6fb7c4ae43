#include <doctest.h>

#include <cmath>

#include "fireset/rng.hpp"
#include "fireset/set_loss.hpp"

using namespace fireset;

namespace {

TargetSet targets_at(std::initializer_list<std::array<double, 2>> pts) {
  TargetSet ts;
  for (auto p : pts) {
    Cluster c;
    c.cy = p[0];
    c.cx = p[1];
    c.mass = 1.0;
    c.size = 1;
    ts.clusters.push_back(c);
  }
  ts.K = ts.clusters.size();
  return ts;
}

std::vector<double> randvec(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace

TEST_SUITE("set_loss") {

TEST_CASE("classification hand values") {
  auto z = TensorD::constant({1, 2}, {0.0, 0.0});
  CHECK(classification_loss(z, {0}, 0.1).item() ==
        doctest::Approx(0.1 * std::log(2.0)).epsilon(1e-12));
  CHECK(classification_loss(z, {1}, 0.1).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // strongly correct logits drive the loss to zero
  auto sure = TensorD::constant({2, 2}, {30.0, -30.0, -30.0, 30.0});
  CHECK(classification_loss(sure, {0, 1}, 0.1).item() == doctest::Approx(0.0).epsilon(1e-9));

  // weighted-mean variant divides by the weight sum instead of Q
  auto z2 = TensorD::constant({2, 2}, {0.0, 0.0, 0.0, 0.0});
  const double lit = classification_loss(z2, {0, 1}, 0.1, false).item();
  const double wm = classification_loss(z2, {0, 1}, 0.1, true).item();
  CHECK(lit == doctest::Approx((0.1 + 1.0) * std::log(2.0) / 2.0).epsilon(1e-12));
  CHECK(wm == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("localization hand values") {
  auto ts = targets_at({{0.25, 0.75}});
  auto at_target = TensorD::constant({1, 2}, {0.25, 0.75});
  CHECK(localization_loss(at_target, ts, {{0, 0}}).item() == doctest::Approx(0.0));

  auto off = TensorD::constant({1, 2}, {0.5, 0.5});
  CHECK(localization_loss(off, ts, {{0, 0}}).item() == doctest::Approx(0.25).epsilon(1e-12));

  CHECK(localization_loss(off, ts, {}).item() == doctest::Approx(0.0));
}

TEST_CASE("total loss composes the published example") {
  LossConfig cfg;  // lambda_loc = 5, w_eos = 0.1
  auto logits = TensorD::variable({1, 2}, {0.0, 0.0}, "logits");
  auto locs = TensorD::variable({1, 2}, {0.5, 0.5}, "locs");
  auto ts = targets_at({{0.25, 0.75}});
  auto r = total_loss(logits, locs, ts, cfg);
  REQUIRE(r.assignment.pairs.size() == 1);
  CHECK(r.cls.item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(r.loc.item() == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(r.total.item() == doctest::Approx(1.9431).epsilon(1e-4));
}

TEST_CASE("empty target set reduces to classification only") {
  LossConfig cfg;
  auto logits = TensorD::variable({3, 2}, {0.2, -0.1, 0.4, 0.3, -0.5, 0.9}, "logits");
  auto locs = TensorD::variable({3, 2}, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6}, "locs");
  auto r = total_loss(logits, locs, TargetSet{}, cfg);
  CHECK(r.assignment.pairs.empty());
  CHECK(r.assignment.labels == std::vector<int>{0, 0, 0});
  CHECK(r.loc.item() == doctest::Approx(0.0));
  CHECK(r.total.item() == doctest::Approx(r.cls.item()));
  backward(r.total);
  for (double g : locs.grad()) CHECK(g == 0.0);
}

TEST_CASE("unmatched query locations receive exactly zero gradient") {
  LossConfig cfg;
  auto logits = TensorD::variable({3, 2}, {1.0, 2.0, 2.0, -1.0, 0.3, 0.1}, "logits");
  auto locs = TensorD::variable({3, 2}, {0.1, 0.1, 0.8, 0.8, 0.45, 0.55}, "locs");
  auto ts = targets_at({{0.12, 0.11}});
  auto r = total_loss(logits, locs, ts, cfg);
  REQUIRE(r.assignment.pairs.size() == 1);
  backward(r.total);
  const std::size_t matched = r.assignment.pairs[0].first;
  for (std::size_t q = 0; q < 3; ++q) {
    if (q == matched) continue;
    CHECK(locs.grad()[q * 2] == 0.0);
    CHECK(locs.grad()[q * 2 + 1] == 0.0);
  }
}

TEST_CASE("loss is non-negative and per-pair localization is bounded") {
  Rng rng(63);
  LossConfig cfg;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t Q = 1 + rng.below(6);
    auto logits = TensorD::variable({Q, 2}, randvec(rng, Q * 2, -3.0, 3.0));
    auto locs = TensorD::variable({Q, 2}, randvec(rng, Q * 2, 0.0, 1.0));
    TargetSet ts;
    const std::size_t K = rng.below(5);
    for (std::size_t k = 0; k < K; ++k) {
      Cluster c;
      c.cy = rng.u01();
      c.cx = rng.u01();
      c.mass = 1.0;
      c.size = 1;
      ts.clusters.push_back(c);
    }
    ts.K = K;
    auto r = total_loss(logits, locs, ts, cfg);
    CHECK(r.total.item() >= 0.0);
    CHECK(r.loc.item() >= 0.0);
    CHECK(r.loc.item() <= 1.0);  // normalized coordinates, per-pair bound
  }
}

TEST_CASE("moving a matched prediction toward its target lowers the loss") {
  LossConfig cfg;
  auto ts = targets_at({{0.3, 0.7}});
  double prev = 1e9;
  for (double a : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    const double y = 0.9 + a * (0.3 - 0.9), x = 0.1 + a * (0.7 - 0.1);
    auto logits = TensorD::constant({1, 2}, {0.0, 2.0});
    auto locs = TensorD::constant({1, 2}, {y, x});
    const double l = total_loss(logits, locs, ts, cfg).total.item();
    CHECK(l <= prev);
    prev = l;
  }
}

TEST_CASE("gradients match finite differences through match freeze") {
  Rng rng(17);
  LossConfig cfg;
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t Q = 2 + rng.below(3);
    // keep locs away from target coordinates so |.| stays smooth and the
    // assignment stays stable under the probe step
    auto logits = TensorD::variable({Q, 2}, randvec(rng, Q * 2, -2.0, 2.0), "logits");
    auto locs = TensorD::variable({Q, 2}, randvec(rng, Q * 2, 0.05, 0.45), "locs");
    auto ts = targets_at({{0.62, 0.71}, {0.83, 0.57}});
    std::vector<TensorD> params{logits, locs};
    auto f = [&] { return total_loss(logits, locs, ts, cfg).total; };
    CHECK(grad_check<double>(f, std::span<TensorD>(params), 1e-6) < 1e-5);
  }
}

}  // TEST_SUITE
