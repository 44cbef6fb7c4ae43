#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fireset/entity.hpp"
#include "fireset/simulator.hpp"
#include "fireset/targets.hpp"

#include <json.hpp>

namespace fireset {

struct EvalConfig {
  std::array<double, 3> radii{7.0, 14.0, 21.0};  // pixels, ascending
  double threshold = 0.5;                        // positive-query cutoff
  double render_sigma = 3.0;                     // pixels
  std::size_t top_k = 10;
  void validate() const;
};

// One query output: score plus a normalized (y,x) location in the valid box.
struct PredPoint {
  double score = 0.0;
  double ny = 0.0, nx = 0.0;
};

// Everything the evaluation protocol needs to know about one entity.
struct EntityEval {
  std::vector<PredPoint> preds;
  TargetSet targets;  // never truncated here
  std::array<std::size_t, 4> valid_box{};
  std::size_t H = 0, W = 0;
  std::vector<std::uint8_t> union_mask;  // H*W ground-truth union
  Regime regime = Regime::quiescent;
};

EntityEval make_entity_eval(const Entity& e, const std::vector<double>& probs,
                            const std::vector<std::array<double, 2>>& points,
                            int min_confidence);

// Pixel-space rows for the ranked-detection AP core.
struct ApPred {
  std::size_t entity = 0;
  double score = 0.0;
  double py = 0.0, px = 0.0;
};
struct ApGt {
  std::size_t entity = 0;
  double py = 0.0, px = 0.0;
};

// Global score sort; each prediction claims the nearest unclaimed centre of
// its entity within r pixels. Absent when there is no ground truth at all.
std::optional<double> event_ap(const std::vector<ApPred>& preds, const std::vector<ApGt>& gts,
                               double r);

struct MatchedPair {
  std::size_t query = 0, cluster = 0;
  double dist_px = 0.0;
};

// One-to-one assignment of positive queries to cluster centres by pixel
// distance (exact, via the assignment solver).
std::vector<MatchedPair> match_for_coverage(const EntityEval& e, double threshold);

// Same, but over the k highest-scored queries regardless of threshold.
std::vector<MatchedPair> match_top_k(const EntityEval& e, std::size_t k);

// Per-pixel max of score-weighted Gaussian kernels around each query point.
std::vector<float> render_union(const EntityEval& e, double sigma);

// Rank-based (Mann-Whitney) AUROC over valid-box pixels; absent if the mask
// is single-class there.
std::optional<double> union_auroc(const std::vector<float>& prob_map,
                                  const std::vector<std::uint8_t>& mask,
                                  const std::array<std::size_t, 4>& valid_box, std::size_t W);

// 1 - mean over clusters of min(1, matched normalized distance); unmatched
// clusters count as 1. Defined as 1 when there are no clusters.
double subset_cover_xy(const EntityEval& e, double threshold);

struct RegimeRow {
  std::size_t count = 0;
  std::optional<double> hit14, ap14, rec14;
  double avg_pred = 0.0, mean_prob = 0.0;
};

struct MetricReport {
  std::size_t n_entities = 0;
  std::array<std::optional<double>, 3> ap, mass_cov, hit, clus_prec, clus_rec, clus_f1,
      top_rec, lrp;
  std::optional<double> map;
  std::optional<double> auroc;
  double cardinality_error = 0.0, avg_pred = 0.0, duplicate_rate = 0.0, mean_prob = 0.0;
  double subset_cover = 0.0, truncation_rate = 0.0;
  std::map<std::string, RegimeRow> regimes;
};

MetricReport evaluate_split(const std::vector<EntityEval>& split, const EvalConfig& cfg);

nlohmann::ordered_json metric_report_json(const MetricReport& r, const EvalConfig& cfg);

}  // namespace fireset
