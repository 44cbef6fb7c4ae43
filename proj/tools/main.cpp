#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fireset/oracles.hpp"
#include "fireset/train.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace fireset;

namespace {

fs::path default_out(const char* leaf) {
  if (const char* env = std::getenv("FIRESET_OUT_DIR")) return fs::path(env) / leaf;
  return fs::path(leaf);
}

// Machine-readable result: stdout by default, file if --out was given.
void emit(const ordered_json& j, const fs::path& out) {
  const std::string text = j.dump(2) + "\n";
  if (out.empty()) {
    std::cout << text;
  } else {
    write_text_file(out, text);
    std::cout << out.string() << "\n";
  }
}

std::map<std::string, std::size_t> regime_counts(const std::vector<EntityRecord>& recs) {
  std::map<std::string, std::size_t> counts;
  for (const auto& r : recs) ++counts[regime_name(r.regime)];
  return counts;
}

// ---- gen ---------------------------------------------------------------------

constexpr std::uint64_t kSeedUnset = ~0ull;

struct GenArgs {
  std::string out, world_json;
  std::size_t n_train = 128, n_val = 32, n_test = 32;
  std::uint64_t seed = kSeedUnset;
  std::size_t grid = 0, history = 0, future = 0;
};

int run_gen(const GenArgs& a) {
  WorldConfig wc;
  if (!a.world_json.empty())
    wc = world_config_from_json(nlohmann::json::parse(read_text_file(a.world_json)));
  if (a.seed != kSeedUnset) wc.seed = a.seed;
  if (a.grid) wc.H = wc.W = a.grid;
  if (a.history) wc.T_h = a.history;
  if (a.future) wc.T_p = a.future;

  const fs::path out = a.out.empty() ? default_out("dataset") : fs::path(a.out);
  const DatasetManifest m = generate_dataset(wc, a.n_train, a.n_val, a.n_test, out);

  ordered_json j{{"dataset", out.string()}, {"grid", wc.H}, {"seed", wc.seed}};
  for (std::size_t s = 0; s < 3; ++s) {
    const char* name = DatasetManifest::kSplitNames[s];
    j[name] = {{"count", m.splits[s].size()}, {"regimes", regime_counts(m.splits[s])}};
  }
  emit(j, "");
  return 0;
}

// ---- train -------------------------------------------------------------------

struct TrainArgs {
  std::string data, out;
  TrainConfig tc;
  std::uint64_t seed = 0;
};

int run_train(const TrainArgs& a) {
  DatasetManifest data = read_manifest(a.data);
  TrainConfig tc = a.tc;
  tc.seed = a.seed;
  tc.model.seed = a.seed;
  tc.model.H = data.world.H;  // the model grid follows the dataset
  tc.model.W = data.world.W;
  const fs::path out = a.out.empty() ? default_out("run") : fs::path(a.out);
  const TrainResult res = train(tc, data, out);

  emit(ordered_json{{"out", out.string()},
                    {"best_checkpoint", res.best_checkpoint.string()},
                    {"last_checkpoint", res.last_checkpoint.string()},
                    {"best_val_map", res.best_val_map},
                    {"best_epoch", res.best_epoch},
                    {"epochs", res.epoch_loss.size()},
                    {"first_epoch_loss", res.epoch_loss.front()},
                    {"last_epoch_loss", res.epoch_loss.back()}},
       "");
  return 0;
}

// ---- eval --------------------------------------------------------------------

struct EvalArgs {
  std::string data, split = "test", ckpt, out;
  bool baseline = false;
  int min_confidence = 2;
  EvalConfig ec;
};

int run_eval(const EvalArgs& a) {
  if (!a.baseline && a.ckpt.empty()) {
    std::cerr << "fireset eval: pass --ckpt FILE or --baseline\n";
    return 2;
  }
  const DatasetManifest data = read_manifest(a.data);
  std::vector<EntityEval> evals;
  std::string source;
  if (a.baseline) {
    evals = baseline_split_evals(data, a.split, a.min_confidence);
    source = "baseline";
  } else {
    const LoadedCheckpoint ck = read_checkpoint(a.ckpt);
    evals = model_split_evals(ck.net, data, a.split, a.min_confidence);
    source = a.ckpt;
  }
  const MetricReport rep = evaluate_split(evals, a.ec);
  ordered_json j = metric_report_json(rep, a.ec);
  j["split"] = a.split;
  j["source"] = source;
  emit(j, a.out);
  return 0;
}

// ---- render ------------------------------------------------------------------

struct RenderArgs {
  std::string data, split = "val", ckpt, prefix;
  std::size_t index = 0;
  int min_confidence = 2;
  double sigma = 3.0;
};

std::vector<std::uint8_t> to_gray(const std::vector<float>& v) {
  std::vector<std::uint8_t> px(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const float c = std::clamp(v[i], 0.0f, 1.0f);
    px[i] = static_cast<std::uint8_t>(std::lround(c * 255.0f));
  }
  return px;
}

int run_render(const RenderArgs& a) {
  const DatasetManifest data = read_manifest(a.data);
  const auto& recs = data.split(a.split);
  if (a.index >= recs.size()) throw RangeError("entity index out of range for split");
  const Entity e = read_entity(data.root / recs[a.index].file);
  const LoadedCheckpoint ck = read_checkpoint(a.ckpt);
  const auto qs = ck.net.predict(e);
  const EntityEval ev = make_entity_eval(e, qs.probs, qs.points, a.min_confidence);
  const auto& box = ev.valid_box;

  const std::vector<float> pred = render_union(ev, a.sigma);
  std::vector<float> truth(ev.union_mask.begin(), ev.union_mask.end());
  std::vector<float> hist(e.H * e.W, 0.0f);
  const std::size_t fire = e.channel("active_fire");
  for (std::size_t t = 0; t < e.T_h; ++t)
    for (std::size_t p = 0; p < hist.size(); ++p)
      if (e.at(fire, t, p / e.W, p % e.W) >= static_cast<float>(a.min_confidence)) hist[p] = 1.0f;

  // Overlay: dimmed probability field, white GT centres, black positive queries.
  std::vector<float> over(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) over[i] = 0.15f + 0.6f * pred[i];
  const auto denorm = [&](double ny, double nx) {
    const double py = double(box[0]) + ny * double(box[2] - box[0]);
    const double px = double(box[1]) + nx * double(box[3] - box[1]);
    return std::array<long, 2>{std::lround(py), std::lround(px)};
  };
  const auto paint = [&](long y, long x, float c) {
    for (long dy = -1; dy <= 1; ++dy)
      for (long dx = -1; dx <= 1; ++dx) {
        const long yy = y + dy, xx = x + dx;
        if (std::abs(dy) + std::abs(dx) <= 1 && yy >= 0 && xx >= 0 &&
            yy < long(e.H) && xx < long(e.W))
          over[std::size_t(yy) * e.W + std::size_t(xx)] = c;
      }
  };
  ordered_json points{{"preds", nlohmann::json::array()}, {"targets", nlohmann::json::array()}};
  for (const auto& c : ev.targets.clusters) {
    const auto [y, x] = denorm(c.cy, c.cx);
    paint(y, x, 1.0f);
    points["targets"].push_back({{"py", y}, {"px", x}, {"mass", c.mass}, {"size", c.size}});
  }
  for (const auto& p : ev.preds) {
    const auto [y, x] = denorm(p.ny, p.nx);
    if (p.score >= 0.5) paint(y, x, 0.0f);
    points["preds"].push_back({{"py", y}, {"px", x}, {"score", p.score}});
  }

  const fs::path prefix = a.prefix.empty() ? default_out("render") : fs::path(a.prefix);
  const std::vector<std::pair<std::string, const std::vector<float>*>> maps{
      {"pred", &pred}, {"truth", &truth}, {"history", &hist}, {"overlay", &over}};
  ordered_json files = nlohmann::json::array();
  for (const auto& [tag, v] : maps) {
    const fs::path p = prefix.string() + "_" + tag + ".pgm";
    write_pgm(p, e.W, e.H, to_gray(*v));
    files.push_back(p.string());
  }
  const fs::path pj = prefix.string() + "_points.json";
  write_text_file(pj, points.dump(2) + "\n");
  files.push_back(pj.string());
  emit(ordered_json{{"entity", recs[a.index].file},
                    {"regime", regime_name(ev.regime)},
                    {"files", files}},
       "");
  return 0;
}

// ---- report ------------------------------------------------------------------

std::string fmt_pct(const nlohmann::json& v, bool already_pct = false) {
  if (v.is_null()) return "--";
  std::ostringstream s;
  s << std::fixed << std::setprecision(1) << v.get<double>() * (already_pct ? 1.0 : 100.0);
  return s.str();
}

std::string fmt_cnt(const nlohmann::json& v) {
  if (v.is_null()) return "--";
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << v.get<double>();
  return s.str();
}

void print_table(const std::string& title, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> w(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    w[c] = header[c].size();
    for (const auto& r : rows) w[c] = std::max(w[c], r[c].size());
  }
  std::cout << title << "\n";
  const auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      std::cout << (c == 0 ? std::left : std::right) << std::setw(int(w[c])) << cells[c]
                << (c + 1 < cells.size() ? "  " : "");
    }
    std::cout << "\n";
  };
  line(header);
  std::size_t total = 0;
  for (auto x : w) total += x + 2;
  std::cout << std::string(total - 2, '-') << "\n";
  for (const auto& r : rows) line(r);
  std::cout << "\n";
}

int run_report(const std::vector<std::string>& files, std::string names_csv) {
  std::vector<std::string> names;
  for (std::size_t pos = 0; pos <= names_csv.size() && !names_csv.empty();) {
    const auto comma = names_csv.find(',', pos);
    names.push_back(names_csv.substr(pos, comma - pos));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  std::vector<std::vector<std::string>> t1, t2, t3, t4;
  std::vector<std::string> mid_keys;
  for (std::size_t i = 0; i < files.size(); ++i) {
    const auto j = nlohmann::json::parse(read_text_file(files[i]));
    const std::string name = i < names.size() ? names[i] : fs::path(files[i]).stem().string();
    const auto radii = j.at("config").at("radii");
    std::vector<std::string> rk;
    for (const auto& r : radii) rk.push_back(std::to_string(int(r.get<double>())));
    const std::string& mid = rk[1];
    if (mid_keys.empty()) mid_keys = rk;

    t1.push_back({name, fmt_pct(j.at("ap").at(rk[0])), fmt_pct(j.at("ap").at(rk[1])),
                  fmt_pct(j.at("ap").at(rk[2])), fmt_pct(j.at("map")),
                  fmt_pct(j.at("mass_cov").at(mid)), fmt_pct(j.at("hit").at(mid)),
                  fmt_pct(j.at("union_auroc"))});
    t2.push_back({name, fmt_pct(j.at("clus_prec").at(mid)), fmt_pct(j.at("clus_rec").at(mid)),
                  fmt_pct(j.at("top_rec").at(mid)), fmt_pct(j.at("lrp").at(mid)),
                  fmt_cnt(j.at("cardinality_error")), fmt_pct(j.at("duplicate_rate")),
                  fmt_cnt(j.at("avg_pred"))});
    t3.push_back({name, std::to_string(j.at("n_entities").get<std::size_t>()),
                  fmt_pct(j.at("truncation_rate")), fmt_pct(j.at("subset_cover_xy")),
                  fmt_pct(j.at("mean_prob"), true), fmt_cnt(j.at("avg_pred"))});
    const auto& reg = j.at("regimes");
    const auto cell = [&](const char* r, const char* key) -> nlohmann::json {
      if (!reg.contains(r)) return nullptr;  // regime absent from this split
      return reg.at(r).at(key);
    };
    t4.push_back({name, fmt_pct(cell("new_ignition", "hit14")),
                  fmt_pct(cell("new_ignition", "ap14")), fmt_pct(cell("new_ignition", "rec14")),
                  fmt_pct(cell("continued", "hit14")), fmt_pct(cell("continued", "ap14")),
                  fmt_pct(cell("continued", "rec14")), fmt_cnt(cell("extinguished", "avg_pred")),
                  fmt_pct(cell("extinguished", "mean_prob"), true),
                  fmt_cnt(cell("quiescent", "avg_pred")),
                  fmt_pct(cell("quiescent", "mean_prob"), true)});
  }
  const std::string m = mid_keys.empty() ? "14" : mid_keys[1];
  print_table("Detection & coverage (%)",
              {"model", "AP@" + mid_keys[0], "AP@" + m, "AP@" + mid_keys[2], "mAP",
               "MassCov@" + m, "Hit@" + m, "AUROC"},
              t1);
  print_table("Query diagnostics @" + m + " (%; Card./Avg. in queries)",
              {"model", "ClusPrec", "ClusRec", "Top10Rec", "LRP", "Card.err", "Dup.", "Avg.pred"},
              t2);
  print_table("Prediction-set behaviour",
              {"model", "n", "Trunc.%", "SubsetCover%", "Mean prob.%", "Avg.pred"}, t3);
  print_table("Regime-wise (new ignition | continued | extinguished | quiescent)",
              {"model", "NI Hit", "NI AP", "NI Rec", "CF Hit", "CF AP", "CF Rec", "EX Avg.pred",
               "EX Prob.", "QU Avg.pred", "QU Prob."},
              t4);
  return 0;
}

// ---- oracle ------------------------------------------------------------------

int run_oracle(std::uint64_t seed, std::size_t trials) {
  Rng rng(mix64(seed, 0x6f7261636c65ull));
  std::size_t assign_ok = 0, ap_ok = 0;
  double auroc_err = 0.0;

  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t Q = 1 + rng.below(7), K = 1 + rng.below(7);
    std::vector<double> cost(Q * K);
    for (auto& c : cost) c = double(rng.range(-400, 400));  // integers stay exact
    const auto fast = hungarian(cost, Q, K);
    double total = 0.0;
    for (const auto& [q, k] : fast) total += cost[q * K + k];
    const auto ref = oracle::best_assignment(cost, Q, K);
    if (fast == ref.pairs && total == ref.total) ++assign_ok;
  }

  for (std::size_t t = 0; t < trials; ++t) {
    std::vector<ApPred> preds;
    std::vector<ApGt> gts;
    const std::size_t ents = 1 + rng.below(3);
    for (std::size_t e = 0; e < ents; ++e) {
      for (std::size_t i = rng.below(6); i-- > 0;)
        preds.push_back({e, double(rng.below(100)) / 100.0, double(rng.below(40)),
                         double(rng.below(40))});
      for (std::size_t i = rng.below(4); i-- > 0;)
        gts.push_back({e, double(rng.below(40)), double(rng.below(40))});
    }
    const double r = std::array<double, 3>{3, 7, 14}[rng.below(3)];
    if (event_ap(preds, gts, r) == oracle::event_ap_naive(preds, gts, r)) ++ap_ok;
  }

  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t H = 6, W = 6;
    std::vector<float> prob(H * W);
    std::vector<std::uint8_t> mask(H * W);
    std::vector<double> pos, neg;
    for (std::size_t i = 0; i < prob.size(); ++i) {
      prob[i] = float(rng.below(8)) / 8.0f;  // coarse grid forces rank ties
      mask[i] = std::uint8_t(rng.bernoulli(0.3));
      (mask[i] ? pos : neg).push_back(double(prob[i]));
    }
    const auto fast = union_auroc(prob, mask, {0, 0, H, W}, W);
    if (!fast) continue;
    auroc_err = std::max(auroc_err,
                         std::abs(*fast - oracle::auroc_pairwise(pos, neg)));
  }

  const bool ok = assign_ok == trials && ap_ok == trials && auroc_err <= 1e-9;
  emit(ordered_json{{"trials", trials},
                    {"assignment_exact", assign_ok},
                    {"event_ap_exact", ap_ok},
                    {"auroc_max_abs_err", auroc_err},
                    {"ok", ok}},
       "");
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fireset: synthetic wildfire ignition-set prediction toolkit"};
  app.require_subcommand(1);

  GenArgs ga;
  auto* gen = app.add_subcommand("gen", "simulate a dataset of entity files");
  gen->add_option("--out", ga.out, "dataset directory (default $FIRESET_OUT_DIR/dataset)");
  gen->add_option("--n-train", ga.n_train, "training entities");
  gen->add_option("--n-val", ga.n_val, "validation entities");
  gen->add_option("--n-test", ga.n_test, "test entities");
  gen->add_option("--seed", ga.seed, "world seed");
  gen->add_option("--grid", ga.grid, "grid side (H = W)");
  gen->add_option("--history", ga.history, "history hours");
  gen->add_option("--future", ga.future, "forecast hours");
  gen->add_option("--world-json", ga.world_json, "world config JSON file");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "train a model on a dataset");
  tr->add_option("--data", ta.data, "dataset directory")->required();
  tr->add_option("--out", ta.out, "run directory (default $FIRESET_OUT_DIR/run)");
  tr->add_option("--seed", ta.seed, "training + init seed");
  tr->add_option("--epochs", ta.tc.max_epochs, "training epochs");
  tr->add_option("--queries", ta.tc.model.Q, "query budget Q");
  tr->add_option("--layers", ta.tc.model.L, "decoder layers");
  tr->add_option("--dim", ta.tc.model.d_e, "embedding width");
  tr->add_option("--heads", ta.tc.model.n_heads, "attention heads");
  tr->add_option("--stride", ta.tc.model.patch_stride, "patch stride");
  tr->add_option("--memory-steps", ta.tc.model.memory_steps, "forecast memory steps");
  tr->add_option("--dropout", ta.tc.model.dropout, "dropout probability");
  tr->add_option("--lr", ta.tc.adam.lr, "learning rate");
  tr->add_option("--weight-decay", ta.tc.adam.weight_decay, "decoupled weight decay");
  tr->add_option("--grad-accum", ta.tc.grad_accum, "entities per optimizer step");
  tr->add_option("--eval-every", ta.tc.eval_every, "validation cadence (epochs)");
  tr->add_option("--evolution-every", ta.tc.evolution_every, "query-evolution cadence");
  tr->add_option("--jitter", ta.tc.max_jitter, "augmentation shift, pixels");
  tr->add_option("--lambda-loc", ta.tc.loss.lambda_loc, "localization loss weight");
  tr->add_option("--w-eos", ta.tc.loss.w_eos, "no-fire class weight");
  tr->add_option("--match-cls", ta.tc.loss.match_weights.lambda_m_cls, "matching class weight");
  tr->add_option("--match-loc", ta.tc.loss.match_weights.lambda_m_loc, "matching distance weight");
  tr->add_option("--min-confidence", ta.tc.min_confidence, "fire code threshold");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "score a checkpoint or baseline on a split");
  ev->add_option("--data", ea.data, "dataset directory")->required();
  ev->add_option("--split", ea.split, "train/val/test");
  auto* ck = ev->add_option("--ckpt", ea.ckpt, "checkpoint file");
  auto* bl = ev->add_flag("--baseline", ea.baseline, "score the fire-history persistence baseline");
  ck->excludes(bl);
  ev->add_option("--out", ea.out, "write the JSON report here instead of stdout");
  ev->add_option("--threshold", ea.ec.threshold, "operating threshold");
  ev->add_option("--top-k", ea.ec.top_k, "top-k recall budget");
  ev->add_option("--sigma", ea.ec.render_sigma, "render kernel width, pixels");
  ev->add_option("--min-confidence", ea.min_confidence, "fire code threshold");

  RenderArgs ra;
  auto* rd = app.add_subcommand("render", "render prediction maps for one entity");
  rd->add_option("--data", ra.data, "dataset directory")->required();
  rd->add_option("--split", ra.split, "train/val/test");
  rd->add_option("--index", ra.index, "entity index within the split");
  rd->add_option("--ckpt", ra.ckpt, "checkpoint file")->required();
  rd->add_option("--out-prefix", ra.prefix, "output path prefix");
  rd->add_option("--sigma", ra.sigma, "render kernel width, pixels");
  rd->add_option("--min-confidence", ra.min_confidence, "fire code threshold");

  std::vector<std::string> report_files;
  std::string report_names;
  auto* rp = app.add_subcommand("report", "print comparison tables from eval reports");
  rp->add_option("files", report_files, "metric report JSON files")->required();
  rp->add_option("--names", report_names, "comma-separated run names");

  std::uint64_t oracle_seed = 0;
  std::size_t oracle_trials = 500;
  auto* oc = app.add_subcommand("oracle", "cross-check fast paths against brute force");
  oc->add_option("--seed", oracle_seed, "rng seed");
  oc->add_option("--trials", oracle_trials, "trials per suite");

  try {
    app.parse(argc, argv);
    if (gen->parsed()) return run_gen(ga);
    if (tr->parsed()) return run_train(ta);
    if (ev->parsed()) return run_eval(ea);
    if (rd->parsed()) return run_render(ra);
    if (rp->parsed()) return run_report(report_files, report_names);
    if (oc->parsed()) return run_oracle(oracle_seed, oracle_trials);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const IoError& e) {
    std::cerr << "fireset: " << e.what() << "\n";
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "fireset: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "fireset: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
