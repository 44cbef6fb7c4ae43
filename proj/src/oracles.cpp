#include "fireset/oracles.hpp"

#include <algorithm>
#include <limits>

#include "fireset/errors.hpp"

namespace fireset::oracle {

namespace {

struct Search {
  const std::vector<double>* cost = nullptr;
  std::size_t Q = 0, K = 0, max_skips = 0;
  std::vector<char> used;
  std::vector<std::pair<std::size_t, std::size_t>> current;
  Assignment best;
  bool found = false;

  void run(std::size_t q, std::size_t skips, double total) {
    if (q == Q) {
      if (!found || total < best.total ||
          (total == best.total && current < best.pairs)) {
        best.total = total;
        best.pairs = current;
        found = true;
      }
      return;
    }
    for (std::size_t k = 0; k < K; ++k) {
      if (used[k]) continue;
      used[k] = 1;
      current.emplace_back(q, k);
      run(q + 1, skips, total + (*cost)[q * K + k]);
      current.pop_back();
      used[k] = 0;
    }
    if (skips < max_skips) run(q + 1, skips + 1, total);
  }
};

}  // namespace

Assignment best_assignment(const std::vector<double>& cost, std::size_t Q, std::size_t K) {
  if (cost.size() != Q * K) throw ShapeError("cost matrix size mismatch");
  if (Q > 9 || K > 9) throw RangeError("oracle limited to 9x9");
  if (Q == 0 || K == 0) return {};
  Search s;
  s.cost = &cost;
  s.Q = Q;
  s.K = K;
  s.max_skips = Q > K ? Q - K : 0;
  s.used.assign(K, 0);
  s.best.total = std::numeric_limits<double>::infinity();
  s.run(0, 0, 0.0);
  return s.best;
}

std::optional<double> event_ap_naive(const std::vector<ApPred>& preds_in,
                                     const std::vector<ApGt>& gts, double r) {
  if (gts.empty()) return std::nullopt;
  std::vector<ApPred> preds = preds_in;
  std::stable_sort(preds.begin(), preds.end(),
                   [](const ApPred& a, const ApPred& b) { return a.score > b.score; });

  // true-positive count for the top `cut` predictions, claims replayed fresh
  const auto tp_at = [&](std::size_t cut) {
    std::vector<char> claimed(gts.size(), 0);
    std::size_t tp = 0;
    for (std::size_t i = 0; i < cut; ++i) {
      long best = -1;
      double best_d2 = std::numeric_limits<double>::infinity();
      for (std::size_t g = 0; g < gts.size(); ++g) {
        if (claimed[g] || gts[g].entity != preds[i].entity) continue;
        const double dy = preds[i].py - gts[g].py, dx = preds[i].px - gts[g].px;
        const double d2 = dy * dy + dx * dx;
        if (d2 <= r * r && d2 < best_d2) {
          best_d2 = d2;
          best = static_cast<long>(g);
        }
      }
      if (best >= 0) {
        claimed[static_cast<std::size_t>(best)] = 1;
        tp += 1;
      }
    }
    return tp;
  };

  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t cut = 1; cut <= preds.size(); ++cut) {
    const double tp = static_cast<double>(tp_at(cut));
    const double recall = tp / static_cast<double>(gts.size());
    const double precision = tp / static_cast<double>(cut);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

double auroc_pairwise(const std::vector<double>& pos, const std::vector<double>& neg) {
  double wins = 0.0;
  for (double p : pos)
    for (double n : neg) {
      if (p > n)
        wins += 1.0;
      else if (p == n)
        wins += 0.5;
    }
  return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

}  // namespace fireset::oracle
