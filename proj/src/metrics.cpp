#include "fireset/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fireset/errors.hpp"
#include "fireset/matching.hpp"

namespace fireset {

namespace {

struct PixelPoint {
  double py = 0.0, px = 0.0;
};

PixelPoint denorm(double ny, double nx, const std::array<std::size_t, 4>& box) {
  const double hy = static_cast<double>(box[2] - box[0]);
  const double hx = static_cast<double>(box[3] - box[1]);
  return {static_cast<double>(box[0]) + ny * hy, static_cast<double>(box[1]) + nx * hx};
}

// One-to-one pixel-distance assignment of the given query indices.
std::vector<MatchedPair> match_queries(const EntityEval& e, const std::vector<std::size_t>& qidx) {
  const auto& clusters = e.targets.clusters;
  const std::size_t P = qidx.size(), K = clusters.size();
  if (P == 0 || K == 0) return {};

  std::vector<double> cost(P * K);
  std::vector<PixelPoint> qs(P), gs(K);
  for (std::size_t i = 0; i < P; ++i)
    qs[i] = denorm(e.preds[qidx[i]].ny, e.preds[qidx[i]].nx, e.valid_box);
  for (std::size_t k = 0; k < K; ++k) gs[k] = denorm(clusters[k].cy, clusters[k].cx, e.valid_box);
  for (std::size_t i = 0; i < P; ++i)
    for (std::size_t k = 0; k < K; ++k)
      cost[i * K + k] = std::hypot(qs[i].py - gs[k].py, qs[i].px - gs[k].px);

  std::vector<MatchedPair> out;
  for (const auto& [row, col] : hungarian(cost, P, K))
    out.push_back({qidx[row], col, cost[row * K + col]});
  return out;
}

std::vector<std::size_t> positive_indices(const EntityEval& e, double threshold) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < e.preds.size(); ++i)
    if (e.preds[i].score >= threshold) idx.push_back(i);
  return idx;
}

nlohmann::ordered_json jopt(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

nlohmann::ordered_json by_radius(const std::array<std::optional<double>, 3>& vals,
                                 const std::array<double, 3>& radii) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < 3; ++i)
    j[std::to_string(static_cast<int>(radii[i]))] = jopt(vals[i]);
  return j;
}

std::optional<double> ratio(double num, double den) {
  if (den <= 0.0) return std::nullopt;
  return num / den;
}

}  // namespace

void EvalConfig::validate() const {
  if (!(radii[0] > 0.0 && radii[0] < radii[1] && radii[1] < radii[2]))
    throw RangeError("radii must be positive and ascending");
  if (!(threshold > 0.0 && threshold < 1.0)) throw RangeError("threshold must be in (0,1)");
  if (render_sigma <= 0.0) throw RangeError("render sigma must be positive");
  if (top_k < 1) throw RangeError("top_k must be >= 1");
}

EntityEval make_entity_eval(const Entity& e, const std::vector<double>& probs,
                            const std::vector<std::array<double, 2>>& points,
                            int min_confidence) {
  if (probs.size() != points.size()) throw ShapeError("probs/points length mismatch");
  EntityEval ev;
  ev.preds.reserve(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i)
    ev.preds.push_back({probs[i], points[i][0], points[i][1]});
  ev.targets = build_targets(e, min_confidence, e.H * e.W);  // budget large enough to keep all
  ev.valid_box = e.valid_box;
  ev.H = e.H;
  ev.W = e.W;
  ev.union_mask = build_union_mask(e, min_confidence);
  ev.regime = regime_label(e, min_confidence);
  return ev;
}

std::optional<double> event_ap(const std::vector<ApPred>& preds_in, const std::vector<ApGt>& gts,
                               double r) {
  if (gts.empty()) return std::nullopt;
  std::map<std::size_t, std::vector<std::size_t>> gt_by_entity;
  for (std::size_t i = 0; i < gts.size(); ++i) gt_by_entity[gts[i].entity].push_back(i);

  std::vector<ApPred> preds = preds_in;
  std::stable_sort(preds.begin(), preds.end(),
                   [](const ApPred& a, const ApPred& b) { return a.score > b.score; });

  std::vector<char> claimed(gts.size(), 0);
  const double r2 = r * r;
  const double total = static_cast<double>(gts.size());
  double ap = 0.0, prev_recall = 0.0;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < preds.size(); ++k) {
    const auto it = gt_by_entity.find(preds[k].entity);
    long best = -1;
    double best_d2 = std::numeric_limits<double>::infinity();
    if (it != gt_by_entity.end())
      for (std::size_t gi : it->second) {
        if (claimed[gi]) continue;
        const double dy = preds[k].py - gts[gi].py, dx = preds[k].px - gts[gi].px;
        const double d2 = dy * dy + dx * dx;
        if (d2 <= r2 && d2 < best_d2) {
          best_d2 = d2;
          best = static_cast<long>(gi);
        }
      }
    if (best >= 0) {
      claimed[static_cast<std::size_t>(best)] = 1;
      tp += 1;
      // recall steps up; precision evaluated at this cut
      const double recall = static_cast<double>(tp) / total;
      ap += (recall - prev_recall) * (static_cast<double>(tp) / static_cast<double>(k + 1));
      prev_recall = recall;
    }
  }
  return ap;
}

std::vector<MatchedPair> match_for_coverage(const EntityEval& e, double threshold) {
  return match_queries(e, positive_indices(e, threshold));
}

std::vector<MatchedPair> match_top_k(const EntityEval& e, std::size_t k) {
  std::vector<std::size_t> idx(e.preds.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return e.preds[a].score > e.preds[b].score;
  });
  if (idx.size() > k) idx.resize(k);
  return match_queries(e, idx);
}

std::vector<float> render_union(const EntityEval& e, double sigma) {
  if (sigma <= 0.0) throw RangeError("render sigma must be positive");
  std::vector<float> map(e.H * e.W, 0.0f);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  std::vector<PixelPoint> pts(e.preds.size());
  for (std::size_t q = 0; q < e.preds.size(); ++q)
    pts[q] = denorm(e.preds[q].ny, e.preds[q].nx, e.valid_box);
  for (std::size_t y = 0; y < e.H; ++y)
    for (std::size_t x = 0; x < e.W; ++x) {
      double v = 0.0;
      for (std::size_t q = 0; q < e.preds.size(); ++q) {
        const double dy = static_cast<double>(y) - pts[q].py;
        const double dx = static_cast<double>(x) - pts[q].px;
        v = std::max(v, e.preds[q].score * std::exp(-(dy * dy + dx * dx) * inv));
      }
      map[y * e.W + x] = static_cast<float>(v);
    }
  return map;
}

std::optional<double> union_auroc(const std::vector<float>& prob_map,
                                  const std::vector<std::uint8_t>& mask,
                                  const std::array<std::size_t, 4>& valid_box, std::size_t W) {
  std::vector<std::pair<float, std::uint8_t>> rows;
  for (std::size_t y = valid_box[0]; y < valid_box[2]; ++y)
    for (std::size_t x = valid_box[1]; x < valid_box[3]; ++x)
      rows.push_back({prob_map[y * W + x], mask[y * W + x] != 0});

  std::size_t n_pos = 0;
  for (const auto& [v, l] : rows) n_pos += l;
  const std::size_t n_neg = rows.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;

  std::sort(rows.begin(), rows.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  // average ranks across ties, 1-based
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < rows.size()) {
    std::size_t j = i;
    while (j < rows.size() && rows[j].first == rows[i].first) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t k = i; k < j; ++k)
      if (rows[k].second) rank_sum_pos += avg_rank;
    i = j;
  }
  const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) *
                                      (static_cast<double>(n_pos) + 1.0);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double subset_cover_xy(const EntityEval& e, double threshold) {
  const auto& clusters = e.targets.clusters;
  if (clusters.empty()) return 1.0;
  const auto qidx = positive_indices(e, threshold);
  if (qidx.empty()) return 0.0;

  const std::size_t P = qidx.size(), K = clusters.size();
  std::vector<double> cost(P * K);
  for (std::size_t i = 0; i < P; ++i)
    for (std::size_t k = 0; k < K; ++k)
      cost[i * K + k] = std::hypot(e.preds[qidx[i]].ny - clusters[k].cy,
                                   e.preds[qidx[i]].nx - clusters[k].cx);

  std::vector<double> per_cluster(K, 1.0);
  for (const auto& [row, col] : hungarian(cost, P, K))
    per_cluster[col] = std::min(1.0, cost[row * K + col]);
  const double mean =
      std::accumulate(per_cluster.begin(), per_cluster.end(), 0.0) / static_cast<double>(K);
  return 1.0 - mean;
}

MetricReport evaluate_split(const std::vector<EntityEval>& split, const EvalConfig& cfg) {
  cfg.validate();
  MetricReport rep;
  rep.n_entities = split.size();
  if (split.empty()) return rep;

  struct RadiusAcc {
    double tp = 0, lrp_loc = 0, hit_num = 0, top_tp = 0, mass_sum = 0;
  };
  std::array<RadiusAcc, 3> acc{};
  double pos_total = 0, gt_total = 0, pairs_total = 0, mass_entities = 0;
  double dup_num = 0;
  double card_sum = 0, subset_sum = 0, prob_sum = 0, auroc_sum = 0, auroc_cnt = 0, trunc = 0;

  std::vector<ApPred> ap_preds;
  std::vector<ApGt> ap_gts;
  struct RegimeAcc {
    std::size_t count = 0;
    double pos = 0, prob = 0, pairs = 0, hit14 = 0, tp14 = 0, gt = 0;
    std::vector<ApPred> preds;
    std::vector<ApGt> gts;
  };
  std::map<Regime, RegimeAcc> regs;

  for (std::size_t ei = 0; ei < split.size(); ++ei) {
    const EntityEval& e = split[ei];
    const std::size_t K = e.targets.clusters.size();
    const auto positives = positive_indices(e, cfg.threshold);
    const auto pairs = match_for_coverage(e, cfg.threshold);
    const auto top_pairs = match_top_k(e, cfg.top_k);
    const double P = static_cast<double>(positives.size());

    std::vector<PixelPoint> gt_px(K);
    for (std::size_t k = 0; k < K; ++k) {
      gt_px[k] = denorm(e.targets.clusters[k].cy, e.targets.clusters[k].cx, e.valid_box);
      ap_gts.push_back({ei, gt_px[k].py, gt_px[k].px});
    }
    for (const auto& p : e.preds) {
      const auto pt = denorm(p.ny, p.nx, e.valid_box);
      ap_preds.push_back({ei, p.score, pt.py, pt.px});
    }

    for (std::size_t ri = 0; ri < 3; ++ri) {
      const double r = cfg.radii[ri];
      double tp = 0, loc = 0;
      for (const auto& pr : pairs)
        if (pr.dist_px <= r) {
          tp += 1;
          loc += pr.dist_px / r;
        }
      acc[ri].tp += tp;
      acc[ri].lrp_loc += loc;
      acc[ri].hit_num += tp;
      for (const auto& pr : top_pairs) acc[ri].top_tp += pr.dist_px <= r ? 1 : 0;

      if (K > 0) {
        const std::size_t cap = std::min(pairs.size(), K);
        std::vector<double> masses;
        for (const auto& c : e.targets.clusters) masses.push_back(c.mass);
        std::sort(masses.begin(), masses.end(), std::greater<>());
        double den = 0;
        for (std::size_t k = 0; k < cap; ++k) den += masses[k];
        double num = 0;
        for (const auto& pr : pairs)
          if (pr.dist_px <= r) num += e.targets.clusters[pr.cluster].mass;
        acc[ri].mass_sum += den > 0 ? num / den : 0.0;
      }
    }
    if (K > 0) mass_entities += 1;

    // duplicate accounting at the middle radius: each in-range positive is
    // attributed to its nearest centre, so covered <= within always holds
    {
      const double r = cfg.radii[1];
      double within = 0, covered = 0;
      std::vector<char> gt_has(K, 0);
      for (std::size_t qi : positives) {
        const auto pt = denorm(e.preds[qi].ny, e.preds[qi].nx, e.valid_box);
        long best = -1;
        double best_d = r;
        for (std::size_t k = 0; k < K; ++k) {
          const double d = std::hypot(pt.py - gt_px[k].py, pt.px - gt_px[k].px);
          if (d <= best_d) {
            best_d = d;
            best = static_cast<long>(k);
          }
        }
        if (best >= 0) {
          within += 1;
          gt_has[static_cast<std::size_t>(best)] = 1;
        }
      }
      for (char h : gt_has) covered += h;
      dup_num += within - covered;
    }

    pos_total += P;
    gt_total += static_cast<double>(K);
    pairs_total += static_cast<double>(pairs.size());
    card_sum += std::abs(P - static_cast<double>(K));
    subset_sum += subset_cover_xy(e, cfg.threshold);
    trunc += K > e.preds.size() ? 1 : 0;

    const auto rendered = render_union(e, cfg.render_sigma);
    double psum = 0;
    std::size_t pcnt = 0;
    for (std::size_t y = e.valid_box[0]; y < e.valid_box[2]; ++y)
      for (std::size_t x = e.valid_box[1]; x < e.valid_box[3]; ++x, ++pcnt)
        psum += rendered[y * e.W + x];
    const double mean_prob = 100.0 * psum / static_cast<double>(pcnt);
    prob_sum += mean_prob;
    if (const auto a = union_auroc(rendered, e.union_mask, e.valid_box, e.W)) {
      auroc_sum += *a;
      auroc_cnt += 1;
    }

    RegimeAcc& ra = regs[e.regime];
    ra.count += 1;
    ra.pos += P;
    ra.prob += mean_prob;
    ra.pairs += static_cast<double>(pairs.size());
    ra.gt += static_cast<double>(K);
    for (const auto& pr : pairs)
      if (pr.dist_px <= cfg.radii[1]) {
        ra.hit14 += 1;
        ra.tp14 += 1;
      }
    const std::size_t base = ap_gts.size() - K;
    for (std::size_t k = 0; k < K; ++k) ra.gts.push_back(ap_gts[base + k]);
    const std::size_t pbase = ap_preds.size() - e.preds.size();
    for (std::size_t q = 0; q < e.preds.size(); ++q) ra.preds.push_back(ap_preds[pbase + q]);
  }

  const double n = static_cast<double>(split.size());
  for (std::size_t ri = 0; ri < 3; ++ri) {
    rep.ap[ri] = event_ap(ap_preds, ap_gts, cfg.radii[ri]);
    rep.hit[ri] = ratio(acc[ri].hit_num, pairs_total);
    rep.clus_prec[ri] = ratio(acc[ri].tp, pos_total);
    rep.clus_rec[ri] = ratio(acc[ri].tp, gt_total);
    if (rep.clus_prec[ri] && rep.clus_rec[ri]) {
      const double p = *rep.clus_prec[ri], r = *rep.clus_rec[ri];
      rep.clus_f1[ri] = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
    }
    rep.top_rec[ri] = ratio(acc[ri].top_tp, gt_total);
    const double fp = pos_total - acc[ri].tp, fn = gt_total - acc[ri].tp;
    rep.lrp[ri] = ratio(acc[ri].lrp_loc + fp + fn, acc[ri].tp + fp + fn);
    rep.mass_cov[ri] = mass_entities > 0
                           ? std::optional<double>(acc[ri].mass_sum / mass_entities)
                           : std::nullopt;
  }
  if (rep.ap[0] && rep.ap[1] && rep.ap[2]) rep.map = (*rep.ap[0] + *rep.ap[1] + *rep.ap[2]) / 3.0;
  rep.auroc = auroc_cnt > 0 ? std::optional<double>(auroc_sum / auroc_cnt) : std::nullopt;
  rep.cardinality_error = card_sum / n;
  rep.avg_pred = pos_total / n;
  rep.duplicate_rate = pos_total > 0 ? dup_num / pos_total : 0.0;
  rep.mean_prob = prob_sum / n;
  rep.subset_cover = subset_sum / n;
  rep.truncation_rate = trunc / n;

  for (const auto& [regime, ra] : regs) {
    RegimeRow row;
    row.count = ra.count;
    row.avg_pred = ra.pos / static_cast<double>(ra.count);
    row.mean_prob = ra.prob / static_cast<double>(ra.count);
    row.hit14 = ratio(ra.hit14, ra.pairs);
    row.rec14 = ratio(ra.tp14, ra.gt);
    row.ap14 = event_ap(ra.preds, ra.gts, cfg.radii[1]);
    rep.regimes[regime_name(regime)] = row;
  }
  return rep;
}

nlohmann::ordered_json metric_report_json(const MetricReport& r, const EvalConfig& cfg) {
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["config"] = {{"radii", cfg.radii},
                 {"threshold", cfg.threshold},
                 {"render_sigma", cfg.render_sigma},
                 {"top_k", cfg.top_k}};
  j["n_entities"] = r.n_entities;
  j["ap"] = by_radius(r.ap, cfg.radii);
  j["map"] = jopt(r.map);
  j["mass_cov"] = by_radius(r.mass_cov, cfg.radii);
  j["hit"] = by_radius(r.hit, cfg.radii);
  j["union_auroc"] = jopt(r.auroc);
  j["clus_prec"] = by_radius(r.clus_prec, cfg.radii);
  j["clus_rec"] = by_radius(r.clus_rec, cfg.radii);
  j["clus_f1"] = by_radius(r.clus_f1, cfg.radii);
  j["top_rec"] = by_radius(r.top_rec, cfg.radii);
  j["lrp"] = by_radius(r.lrp, cfg.radii);
  j["cardinality_error"] = r.cardinality_error;
  j["avg_pred"] = r.avg_pred;
  j["duplicate_rate"] = r.duplicate_rate;
  j["mean_prob"] = r.mean_prob;
  j["subset_cover_xy"] = r.subset_cover;
  j["truncation_rate"] = r.truncation_rate;
  nlohmann::ordered_json regimes = nlohmann::ordered_json::object();
  for (const auto& [name, row] : r.regimes) {
    regimes[name] = {{"count", row.count},   {"hit14", jopt(row.hit14)},
                     {"ap14", jopt(row.ap14)}, {"rec14", jopt(row.rec14)},
                     {"avg_pred", row.avg_pred}, {"mean_prob", row.mean_prob}};
  }
  j["regimes"] = regimes;
  return j;
}

}  // namespace fireset
