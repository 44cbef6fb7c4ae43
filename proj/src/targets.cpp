#include "fireset/targets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

namespace fireset {

std::vector<std::uint8_t> build_union_mask(const Entity& e, int min_confidence) {
  if (e.T_p() == 0) throw EmptyHorizon("entity has no future frames");
  if (min_confidence < 1 || min_confidence > 3)
    throw RangeError("min_confidence must be in {1,2,3}");
  const std::size_t fire = e.channel("active_fire");
  const auto [y0, x0, y1, x1] = e.valid_box;
  std::vector<std::uint8_t> mask(e.H * e.W, 0);
  for (std::size_t t = e.T_h; t < e.T; ++t)
    for (std::size_t y = y0; y < y1; ++y)
      for (std::size_t x = x0; x < x1; ++x)
        if (e.at(fire, t, y, x) >= static_cast<float>(min_confidence)) mask[y * e.W + x] = 1;
  return mask;
}

LabelMap connected_components(const std::vector<std::uint8_t>& mask, std::size_t H,
                              std::size_t W, std::size_t radius) {
  if (radius < 1) throw RangeError("chebyshev radius must be >= 1");
  LabelMap lm;
  lm.labels.assign(H * W, 0);
  const int r = static_cast<int>(radius);
  std::vector<std::size_t> queue;
  for (std::size_t start = 0; start < H * W; ++start) {
    if (!mask[start] || lm.labels[start]) continue;
    const auto label = static_cast<std::int32_t>(++lm.K);
    queue.clear();
    queue.push_back(start);
    lm.labels[start] = label;
    while (!queue.empty()) {
      const std::size_t p = queue.back();
      queue.pop_back();
      const int py = static_cast<int>(p / W), px = static_cast<int>(p % W);
      for (int dy = -r; dy <= r; ++dy) {
        const int ny = py + dy;
        if (ny < 0 || ny >= static_cast<int>(H)) continue;
        for (int dx = -r; dx <= r; ++dx) {
          const int nx = px + dx;
          if (nx < 0 || nx >= static_cast<int>(W)) continue;
          const std::size_t q = static_cast<std::size_t>(ny) * W + static_cast<std::size_t>(nx);
          if (mask[q] && !lm.labels[q]) {
            lm.labels[q] = label;
            queue.push_back(q);
          }
        }
      }
    }
  }
  return lm;
}

std::vector<double> future_frp_sum(const Entity& e) {
  const std::size_t frp = e.channel("frp");
  std::vector<double> acc(e.H * e.W, 0.0);
  for (std::size_t t = e.T_h; t < e.T; ++t)
    for (std::size_t y = 0; y < e.H; ++y)
      for (std::size_t x = 0; x < e.W; ++x) acc[y * e.W + x] += e.at(frp, t, y, x);
  return acc;
}

TargetSet cluster_centres(const LabelMap& lm, const std::vector<double>& frp, std::size_t H,
                          std::size_t W, const std::array<std::size_t, 4>& valid_box) {
  struct Acc {
    double wy = 0, wx = 0, mass = 0;
    double sy = 0, sx = 0;
    std::size_t size = 0;
  };
  std::vector<Acc> acc(lm.K);
  for (std::size_t p = 0; p < H * W; ++p) {
    const std::int32_t l = lm.labels[p];
    if (!l) continue;
    Acc& a = acc[static_cast<std::size_t>(l - 1)];
    const auto y = static_cast<double>(p / W), x = static_cast<double>(p % W);
    const double m = frp[p];
    a.wy += m * y;
    a.wx += m * x;
    a.mass += m;
    a.sy += y;
    a.sx += x;
    a.size += 1;
  }
  const auto [y0, x0, y1, x1] = valid_box;
  const double hy = static_cast<double>(y1 - y0), hx = static_cast<double>(x1 - x0);
  TargetSet ts;
  ts.clusters.reserve(lm.K);
  for (const Acc& a : acc) {
    Cluster c;
    double py, px;
    if (a.mass > 0) {
      py = a.wy / a.mass;
      px = a.wx / a.mass;
    } else {
      py = a.sy / static_cast<double>(a.size);
      px = a.sx / static_cast<double>(a.size);
    }
    c.cy = (py - static_cast<double>(y0)) / hy;
    c.cx = (px - static_cast<double>(x0)) / hx;
    c.mass = a.mass;
    c.size = a.size;
    ts.clusters.push_back(c);
  }
  std::stable_sort(ts.clusters.begin(), ts.clusters.end(), [](const Cluster& a, const Cluster& b) {
    if (a.mass != b.mass) return a.mass > b.mass;
    if (a.size != b.size) return a.size > b.size;
    if (a.cy != b.cy) return a.cy < b.cy;
    return a.cx < b.cx;
  });
  ts.K = ts.clusters.size();
  ts.truncated = 0;
  return ts;
}

TargetSet truncate_targets(TargetSet ts, std::size_t Q) {
  if (Q < 1) throw RangeError("query budget must be >= 1");
  if (ts.clusters.size() > Q) {
    ts.truncated = ts.clusters.size() - Q;
    ts.clusters.resize(Q);
  } else {
    ts.truncated = 0;
  }
  return ts;
}

TargetSet build_targets(const Entity& e, int min_confidence, std::size_t Q) {
  const auto mask = build_union_mask(e, min_confidence);
  const auto lm = connected_components(mask, e.H, e.W, 3);
  const auto frp = future_frp_sum(e);
  return truncate_targets(cluster_centres(lm, frp, e.H, e.W, e.valid_box), Q);
}

Entity apply_jitter(const Entity& e, int dy, int dx, int max_abs) {
  if (std::abs(dy) > max_abs || std::abs(dx) > max_abs)
    throw JitterRangeError("jitter (" + std::to_string(dy) + "," + std::to_string(dx) +
                           ") exceeds max " + std::to_string(max_abs));
  Entity out = e;
  out.jitter_dy = dy;
  out.jitter_dx = dx;
  const int H = static_cast<int>(e.H), W = static_cast<int>(e.W);
  for (std::size_t f = 0; f < e.F; ++f) {
    const float fill = channel_fill_value(e.channels[f]);
    for (std::size_t t = 0; t < e.T; ++t)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          const int sy = y - dy, sx = x - dx;
          out.at(f, t, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) =
              (sy >= 0 && sy < H && sx >= 0 && sx < W)
                  ? e.at(f, t, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx))
                  : fill;
        }
  }
  return out;
}

}  // namespace fireset
