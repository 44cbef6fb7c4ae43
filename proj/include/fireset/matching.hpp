#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "fireset/targets.hpp"

namespace fireset {

struct MatchWeights {
  double lambda_m_cls = 1.0;
  double lambda_m_loc = 2.0;
};

struct MatchResult {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (query, target), sorted by query
  std::vector<int> labels;                                 // per query: 1 iff matched
  double total_cost = 0.0;
};

// D[q,k] = lambda_m_cls * (-probs[q]) + lambda_m_loc * |locs[q] - centres[k]|_1
// Returned row-major (Q rows, K cols); K may be 0.
std::vector<double> cost_matrix(const std::vector<double>& probs,
                                const std::vector<std::array<double, 2>>& locs,
                                const TargetSet& targets, const MatchWeights& w);

// Exact minimum-cost one-to-one assignment of min(Q,K) pairs. Among
// equal-cost optima returns the lexicographically smallest pair list.
std::vector<std::pair<std::size_t, std::size_t>> hungarian(const std::vector<double>& cost,
                                                           std::size_t Q, std::size_t K);

MatchResult match(const std::vector<double>& probs,
                  const std::vector<std::array<double, 2>>& locs, const TargetSet& targets,
                  const MatchWeights& w);

}  // namespace fireset
