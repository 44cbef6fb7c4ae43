#pragma once

#include <cstdint>
#include <vector>

#include "fireset/entity.hpp"

namespace fireset {

struct Cluster {
  double cy = 0, cx = 0;  // normalized (y,x) within the valid box, in [0,1]^2
  double mass = 0;        // total FRP (MW)
  std::size_t size = 0;   // pixel count
};

struct TargetSet {
  std::vector<Cluster> clusters;  // ranked: mass desc, size desc, (y,x) asc
  std::size_t K = 0;              // component count before truncation
  std::size_t truncated = 0;      // clusters dropped by the query budget
};

struct LabelMap {
  std::vector<std::int32_t> labels;  // H*W, 0 = background, components 1..K
  std::size_t K = 0;
};

// Pixel is positive iff any future frame has active_fire >= min_confidence;
// pixels outside the valid box are forced to 0.
std::vector<std::uint8_t> build_union_mask(const Entity& e, int min_confidence = 2);

// Two positive pixels share a label iff linked by a chain of positive pixels
// with consecutive Chebyshev distance <= radius. Labels are canonical:
// ordered by each component's smallest row-major pixel index.
LabelMap connected_components(const std::vector<std::uint8_t>& mask, std::size_t H,
                              std::size_t W, std::size_t radius = 3);

// Per-pixel FRP summed over the future window.
std::vector<double> future_frp_sum(const Entity& e);

TargetSet cluster_centres(const LabelMap& lm, const std::vector<double>& frp, std::size_t H,
                          std::size_t W, const std::array<std::size_t, 4>& valid_box);

TargetSet truncate_targets(TargetSet ts, std::size_t Q);

// Full pipeline: union mask -> components -> ranked centres -> truncation.
TargetSet build_targets(const Entity& e, int min_confidence, std::size_t Q);

// Shift every channel by (dy,dx): dy<0 moves content up, dx>0 moves it right.
// Vacated pixels take the channel's missing value; the valid box stays put.
Entity apply_jitter(const Entity& e, int dy, int dx, int max_abs = 8);

}  // namespace fireset
