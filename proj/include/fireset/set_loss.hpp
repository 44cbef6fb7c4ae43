#pragma once

#include <array>
#include <vector>

#include "fireset/matching.hpp"
#include "fireset/tensor.hpp"

namespace fireset {

struct LossConfig {
  double lambda_loc = 5.0;
  double w_eos = 0.1;
  MatchWeights match_weights{};
  // Classification normalizer: weighted sum over Q divided by Q (default),
  // or by the sum of the class weights instead.
  bool cls_weighted_mean = false;
};

template <typename S>
struct LossBreakdown {
  Tensor<S> total, cls, loc;
  MatchResult assignment;
};

// (1/Q) sum_q w_{c_q} * CE(z_q, c_q) with class weights {w_eos, 1}.
template <typename S>
Tensor<S> classification_loss(const Tensor<S>& logits, const std::vector<int>& labels,
                              double w_eos, bool weighted_mean = false) {
  if (logits.shape().size() != 2 || logits.dim(1) != 2)
    throw ShapeError("classification_loss: logits must be (Q,2)");
  const std::size_t Q = logits.dim(0);
  if (labels.size() != Q) throw ShapeError("classification_loss: labels length mismatch");
  auto lsm = log_softmax(logits, 1);
  std::vector<std::size_t> picked(Q);
  std::vector<S> weights(Q);
  double weight_sum = 0;
  for (std::size_t q = 0; q < Q; ++q) {
    picked[q] = q * 2 + static_cast<std::size_t>(labels[q]);
    const double w = labels[q] == 0 ? w_eos : 1.0;
    weights[q] = static_cast<S>(w);
    weight_sum += w;
  }
  auto chosen = gather(lsm, std::move(picked), Shape{Q});
  auto weighted = mul(chosen, Tensor<S>::constant(Shape{Q}, std::move(weights)));
  const double denom = weighted_mean ? weight_sum : static_cast<double>(Q);
  return scale(sum(weighted), static_cast<S>(-1.0 / denom));
}

// (1 / (2*|pairs|)) sum over matched pairs of |y_hat - g|_1; zero when empty.
template <typename S>
Tensor<S> localization_loss(const Tensor<S>& locs, const TargetSet& targets,
                            const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  if (locs.shape().size() != 2 || locs.dim(1) != 2)
    throw ShapeError("localization_loss: locs must be (Q,2)");
  if (pairs.empty()) return Tensor<S>::scalar(S(0));
  const std::size_t M = pairs.size();
  std::vector<std::size_t> idx;
  idx.reserve(M * 2);
  std::vector<S> g;
  g.reserve(M * 2);
  for (const auto& [q, k] : pairs) {
    if (q >= locs.dim(0) || k >= targets.clusters.size())
      throw ShapeError("localization_loss: pair index out of range");
    idx.push_back(q * 2);
    idx.push_back(q * 2 + 1);
    g.push_back(static_cast<S>(targets.clusters[k].cy));
    g.push_back(static_cast<S>(targets.clusters[k].cx));
  }
  auto pred = gather(locs, std::move(idx), Shape{M, 2});
  auto diff = abs(sub(pred, Tensor<S>::constant(Shape{M, 2}, std::move(g))));
  return scale(sum(diff), static_cast<S>(1.0 / (2.0 * static_cast<double>(M))));
}

// Assignment is computed from current values and then frozen: no gradient
// flows through the matching itself.
template <typename S>
LossBreakdown<S> total_loss(const Tensor<S>& logits, const Tensor<S>& locs,
                            const TargetSet& targets, const LossConfig& cfg) {
  const std::size_t Q = logits.dim(0);
  std::vector<double> probs(Q);
  std::vector<std::array<double, 2>> points(Q);
  for (std::size_t q = 0; q < Q; ++q) {
    const double z0 = static_cast<double>(logits.at(q * 2));
    const double z1 = static_cast<double>(logits.at(q * 2 + 1));
    const double m = std::max(z0, z1);
    const double e0 = std::exp(z0 - m), e1 = std::exp(z1 - m);
    probs[q] = e1 / (e0 + e1);
    points[q] = {static_cast<double>(locs.at(q * 2)), static_cast<double>(locs.at(q * 2 + 1))};
  }
  LossBreakdown<S> out;
  out.assignment = match(probs, points, targets, cfg.match_weights);
  out.cls = classification_loss(logits, out.assignment.labels, cfg.w_eos, cfg.cls_weighted_mean);
  out.loc = localization_loss(locs, targets, out.assignment.pairs);
  out.total = add(out.cls, scale(out.loc, static_cast<S>(cfg.lambda_loc)));
  return out;
}

}  // namespace fireset
