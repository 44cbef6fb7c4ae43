#include "fireset/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "fireset/targets.hpp"

namespace fireset {

namespace {

nlohmann::json finite_or_text(double v) {
  if (std::isfinite(v)) return v;
  return std::to_string(v);  // "nan"/"inf"; JSON has no encoding for these
}

void append_line(std::ofstream& out, const nlohmann::ordered_json& row) {
  out << row.dump() << '\n';
}

std::vector<EntityEval> predict_evals(const Network<float>& net, const DatasetManifest& data,
                                      const std::string& split, int min_confidence) {
  std::vector<EntityEval> out;
  for (const auto& rec : data.split(split)) {
    const Entity e = read_entity(data.root / rec.file);
    const auto qs = net.predict(e);
    out.push_back(make_entity_eval(e, qs.probs, qs.points, min_confidence));
  }
  return out;
}

}  // namespace

TargetSet history_clusters(const Entity& e, int min_confidence) {
  const std::size_t HW = e.H * e.W;
  const std::size_t fire = e.channel("active_fire"), frp_c = e.channel("frp");
  const auto& box = e.valid_box;
  std::vector<std::uint8_t> mask(HW, 0);
  std::vector<double> frp(HW, 0.0);
  for (std::size_t t = 0; t < e.T_h; ++t)
    for (std::size_t y = box[0]; y < box[2]; ++y)
      for (std::size_t x = box[1]; x < box[3]; ++x) {
        if (e.at(fire, t, y, x) >= static_cast<float>(min_confidence)) mask[y * e.W + x] = 1;
        frp[y * e.W + x] += static_cast<double>(e.at(frp_c, t, y, x));
      }
  const LabelMap lm = connected_components(mask, e.H, e.W);
  return cluster_centres(lm, frp, e.H, e.W, box);
}

std::vector<EntityEval> model_split_evals(const Network<float>& net, const DatasetManifest& data,
                                          const std::string& split, int min_confidence) {
  return predict_evals(net, data, split, min_confidence);
}

std::vector<EntityEval> baseline_split_evals(const DatasetManifest& data,
                                             const std::string& split, int min_confidence) {
  std::vector<EntityEval> out;
  for (const auto& rec : data.split(split)) {
    const Entity e = read_entity(data.root / rec.file);
    const TargetSet hist = history_clusters(e, min_confidence);
    std::vector<double> probs(hist.clusters.size(), 1.0);
    std::vector<std::array<double, 2>> points;
    for (const auto& c : hist.clusters) points.push_back({c.cy, c.cx});
    out.push_back(make_entity_eval(e, probs, points, min_confidence));
  }
  return out;
}

TrainResult train(const TrainConfig& cfg, const DatasetManifest& data,
                  const std::filesystem::path& out_dir) {
  if (cfg.grad_accum < 1) throw ManifestError("grad_accum must be >= 1");
  if (cfg.max_epochs < 1) throw ManifestError("max_epochs must be >= 1");
  cfg.eval.validate();
  const auto& records = data.split("train");
  if (records.empty()) throw ManifestError("training split is empty");

  std::filesystem::create_directories(out_dir);
  std::ofstream log(out_dir / "train_log.jsonl", std::ios::trunc);
  if (!log) throw IoError("cannot open train log in " + out_dir.string());
  std::ofstream evo;
  if (cfg.evolution_every > 0) {
    evo.open(out_dir / "query_evolution.jsonl", std::ios::trunc);
    if (!evo) throw IoError("cannot open query-evolution log in " + out_dir.string());
  }
  // Fixed probe entity for the query-evolution trace: first validation
  // sample, falling back to the first training sample.
  const auto& probe_rec = data.split("val").empty() ? records.front() : data.split("val").front();
  const Entity probe = read_entity(data.root / probe_rec.file);

  Network<float> net = Network<float>::init(cfg.model);
  AdamW<float> opt(cfg.adam);
  Rng dropout_rng(mix64(cfg.seed, 0x64726f70756f7574ull));

  TrainResult result;
  result.best_val_map = -1.0;
  std::uint64_t global_step = 0;
  double last_val_map = 0.0;

  const auto export_evolution = [&](std::size_t epoch) {
    const auto qs = net.predict(probe);
    nlohmann::ordered_json row{{"epoch", epoch}, {"probs", qs.probs}};
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : qs.points) pts.push_back({p[0], p[1]});
    row["points"] = std::move(pts);
    nlohmann::json traj = nlohmann::json::array();
    for (const auto& r : qs.ref_trajectory) traj.push_back(r);
    row["ref_trajectory"] = std::move(traj);
    append_line(evo, row);
  };
  if (cfg.evolution_every > 0) export_evolution(0);

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::vector<std::size_t> order(records.size());
    std::iota(order.begin(), order.end(), 0);
    Rng order_rng(mix64(cfg.seed, 0x6f72646572ull, epoch));
    order_rng.shuffle(order);
    Rng jitter_rng(mix64(cfg.seed, 0x6a6974746572ull, epoch));

    double epoch_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.grad_accum) {
      const std::size_t group = std::min(cfg.grad_accum, order.size() - start);
      net.params.zero_grads();
      for (std::size_t g = 0; g < group; ++g) {
        const auto& rec = records[order[start + g]];
        Entity e = read_entity(data.root / rec.file);
        const int dy = static_cast<int>(jitter_rng.range(-cfg.max_jitter, cfg.max_jitter));
        const int dx = static_cast<int>(jitter_rng.range(-cfg.max_jitter, cfg.max_jitter));
        if (dy != 0 || dx != 0) e = apply_jitter(e, dy, dx);
        const TargetSet targets = build_targets(e, cfg.min_confidence, cfg.model.Q);
        const auto qs = net.predict(e, true, &dropout_rng);
        const auto lb = total_loss(qs.logits, qs.locs, targets, cfg.loss);
        const double lval = static_cast<double>(lb.total.item());
        if (!std::isfinite(lval)) {
          nlohmann::ordered_json dump{{"epoch", epoch},
                                      {"step", global_step},
                                      {"file", rec.file},
                                      {"jitter", {dy, dx}},
                                      {"loss", finite_or_text(lval)},
                                      {"cls", finite_or_text(lb.cls.item())},
                                      {"loc", finite_or_text(lb.loc.item())}};
          write_text_file(out_dir / "diverged.json", dump.dump(2) + "\n");
          throw NumericError("non-finite training loss at step " + std::to_string(global_step));
        }
        backward(scale(lb.total, static_cast<float>(1.0 / static_cast<double>(group))));

        EntityEval ev;
        ev.preds.reserve(qs.probs.size());
        for (std::size_t q = 0; q < qs.probs.size(); ++q)
          ev.preds.push_back({qs.probs[q], qs.points[q][0], qs.points[q][1]});
        ev.targets = build_targets(e, cfg.min_confidence, e.H * e.W);
        ev.valid_box = e.valid_box;
        ev.H = e.H;
        ev.W = e.W;
        append_line(log, {{"kind", "step"},
                          {"epoch", epoch},
                          {"step", global_step},
                          {"loss", lval},
                          {"cls", static_cast<double>(lb.cls.item())},
                          {"loc", static_cast<double>(lb.loc.item())},
                          {"matched", static_cast<double>(lb.assignment.pairs.size()) /
                                          static_cast<double>(cfg.model.Q)},
                          {"subset_cover", subset_cover_xy(ev, cfg.eval.threshold)}});
        epoch_sum += lval;
        ++global_step;
      }
      opt.step(net.params);
    }
    result.epoch_loss.push_back(epoch_sum / static_cast<double>(records.size()));

    const bool last_epoch = epoch == cfg.max_epochs;
    if (cfg.eval_every > 0 && (epoch % cfg.eval_every == 0 || last_epoch)) {
      const auto evals = predict_evals(net, data, "val", cfg.min_confidence);
      const MetricReport rep = evaluate_split(evals, cfg.eval);
      last_val_map = rep.map.value_or(0.0);
      append_line(log, {{"kind", "val"},
                        {"epoch", epoch},
                        {"step", global_step},
                        {"map", last_val_map},
                        {"train_loss", result.epoch_loss.back()}});
      if (last_val_map > result.best_val_map) {
        result.best_val_map = last_val_map;
        result.best_epoch = epoch;
        result.best_checkpoint = out_dir / "best.ckpt";
        write_checkpoint(result.best_checkpoint, net, {cfg.seed, global_step, last_val_map});
      }
    }
    if (cfg.evolution_every > 0 && (epoch % cfg.evolution_every == 0 || last_epoch))
      export_evolution(epoch);
  }

  result.last_checkpoint = out_dir / "last.ckpt";
  write_checkpoint(result.last_checkpoint, net, {cfg.seed, global_step, last_val_map});
  if (result.best_checkpoint.empty()) {  // no validation ran: keep the final weights
    result.best_checkpoint = result.last_checkpoint;
    result.best_val_map = last_val_map;
    result.best_epoch = cfg.max_epochs;
  }
  return result;
}

}  // namespace fireset
