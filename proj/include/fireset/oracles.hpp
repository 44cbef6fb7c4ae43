#pragma once

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "fireset/metrics.hpp"

namespace fireset {

// Brute-force reference implementations used to cross-check the fast paths.
// Kept deliberately simple; exponential enumeration, small inputs only.
namespace oracle {

struct Assignment {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  double total = 0.0;
};

// Exhaustive minimum over all one-to-one matchings of min(Q,K) pairs;
// ties resolved to the lexicographically smallest pair list.
Assignment best_assignment(const std::vector<double>& cost, std::size_t Q, std::size_t K);

// Quadratic AP reference: re-simulates the greedy claims from scratch for
// every rank cut instead of updating incrementally.
std::optional<double> event_ap_naive(const std::vector<ApPred>& preds,
                                     const std::vector<ApGt>& gts, double r);

// O(n^2) Mann-Whitney statistic by exhaustive pair counting.
double auroc_pairwise(const std::vector<double>& pos, const std::vector<double>& neg);

}  // namespace oracle
}  // namespace fireset
