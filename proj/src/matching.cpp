#include "fireset/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fireset/errors.hpp"

namespace fireset {

std::vector<double> cost_matrix(const std::vector<double>& probs,
                                const std::vector<std::array<double, 2>>& locs,
                                const TargetSet& targets, const MatchWeights& w) {
  if (w.lambda_m_cls < 0 || w.lambda_m_loc < 0 || (w.lambda_m_cls == 0 && w.lambda_m_loc == 0))
    throw RangeError("match weights must be non-negative and not both zero");
  if (probs.size() != locs.size()) throw ShapeError("probs/locs length mismatch");
  const std::size_t Q = probs.size(), K = targets.clusters.size();
  for (double p : probs)
    if (p < 0.0 || p > 1.0) throw RangeError("fire probability outside [0,1]");
  for (const auto& l : locs)
    if (l[0] < 0.0 || l[0] > 1.0 || l[1] < 0.0 || l[1] > 1.0)
      throw RangeError("query location outside the unit square");
  std::vector<double> D(Q * K);
  for (std::size_t q = 0; q < Q; ++q)
    for (std::size_t k = 0; k < K; ++k) {
      const Cluster& g = targets.clusters[k];
      const double l1 = std::fabs(locs[q][0] - g.cy) + std::fabs(locs[q][1] - g.cx);
      D[q * K + k] = w.lambda_m_cls * (-probs[q]) + w.lambda_m_loc * l1;
    }
  return D;
}

namespace {

// Jonker-Volgenant style shortest-augmenting-path solver on a square matrix.
// Returns row->col and the final dual potentials (complementary slackness
// certificates used for canonical tie-breaking below).
struct SquareSolution {
  std::vector<std::size_t> row_to_col;
  std::vector<double> u, v;
};

SquareSolution solve_square(const std::vector<double>& a, std::size_t n) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = a[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  SquareSolution s;
  s.row_to_col.assign(n, 0);
  for (std::size_t j = 1; j <= n; ++j)
    if (p[j] != 0) s.row_to_col[p[j] - 1] = j - 1;
  s.u = std::move(u);
  s.v = std::move(v);
  return s;
}

// Kuhn augmenting-path feasibility on the zero-reduced-cost graph.
bool try_augment(std::size_t row, const std::vector<std::vector<std::size_t>>& adj,
                 std::vector<char>& visited, std::vector<std::ptrdiff_t>& col_to_row,
                 const std::vector<char>& col_blocked) {
  for (std::size_t c : adj[row]) {
    if (col_blocked[c] || visited[c]) continue;
    visited[c] = 1;
    if (col_to_row[c] < 0 ||
        try_augment(static_cast<std::size_t>(col_to_row[c]), adj, visited, col_to_row,
                    col_blocked)) {
      col_to_row[c] = static_cast<std::ptrdiff_t>(row);
      return true;
    }
  }
  return false;
}

// Can every row in `rows` be matched within the allowed graph, avoiding
// blocked columns?
bool feasible(const std::vector<std::size_t>& rows,
              const std::vector<std::vector<std::size_t>>& adj, std::size_t n,
              const std::vector<char>& col_blocked) {
  std::vector<std::ptrdiff_t> col_to_row(n, -1);
  std::vector<char> visited(n);
  for (std::size_t r : rows) {
    std::fill(visited.begin(), visited.end(), 0);
    if (!try_augment(r, adj, visited, col_to_row, col_blocked)) return false;
  }
  return true;
}

}  // namespace

std::vector<std::pair<std::size_t, std::size_t>> hungarian(const std::vector<double>& cost,
                                                           std::size_t Q, std::size_t K) {
  if (cost.size() != Q * K) throw ShapeError("cost matrix size mismatch");
  for (double c : cost)
    if (!std::isfinite(c)) throw NumericError("non-finite entry in cost matrix");
  if (Q == 0 || K == 0) return {};

  const std::size_t n = std::max(Q, K);
  double maxabs = 0.0;
  for (double c : cost) maxabs = std::max(maxabs, std::fabs(c));
  const double pad = (maxabs + 1.0) * static_cast<double>(Q + K);

  std::vector<double> sq(n * n, pad);
  for (std::size_t q = 0; q < Q; ++q)
    for (std::size_t k = 0; k < K; ++k) sq[q * n + k] = cost[q * K + k];

  const SquareSolution sol = solve_square(sq, n);

  // Every optimal assignment is supported on edges with zero reduced cost
  // under the returned duals; pick the lexicographically smallest matching
  // inside that graph, preferring real targets (ascending) over padding.
  const double eps = 1e-9 * std::max(1.0, maxabs + pad);
  std::vector<std::vector<std::size_t>> adj(n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c)
      if (sq[r * n + c] - sol.u[r + 1] - sol.v[c + 1] <= eps) adj[r].push_back(c);

  std::vector<char> col_blocked(n, 0);
  std::vector<std::size_t> remaining;
  for (std::size_t r = 1; r < n; ++r) remaining.push_back(r);

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t r = 0; r < n; ++r) {
    if (r >= Q) break;  // padding rows carry no real pairs
    // candidate columns: real ones ascending, then any padding column
    std::vector<std::size_t> cands;
    for (std::size_t c : adj[r])
      if (c < K && !col_blocked[c]) cands.push_back(c);
    std::sort(cands.begin(), cands.end());
    for (std::size_t c : adj[r])
      if (c >= K && !col_blocked[c]) cands.push_back(c);
    bool fixed = false;
    for (std::size_t c : cands) {
      col_blocked[c] = 1;
      if (feasible(remaining, adj, n, col_blocked)) {
        if (c < K) pairs.emplace_back(r, c);
        fixed = true;
        break;
      }
      col_blocked[c] = 0;
    }
    if (!fixed) throw NumericError("assignment canonicalization failed");
    if (!remaining.empty()) remaining.erase(remaining.begin());
  }
  return pairs;
}

MatchResult match(const std::vector<double>& probs,
                  const std::vector<std::array<double, 2>>& locs, const TargetSet& targets,
                  const MatchWeights& w) {
  MatchResult r;
  const std::size_t Q = probs.size(), K = targets.clusters.size();
  r.labels.assign(Q, 0);
  if (K == 0) return r;
  const auto D = cost_matrix(probs, locs, targets, w);
  r.pairs = hungarian(D, Q, K);
  for (const auto& [q, k] : r.pairs) {
    r.labels[q] = 1;
    r.total_cost += D[q * K + k];
  }
  return r;
}

}  // namespace fireset
