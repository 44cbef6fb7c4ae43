#include "fireset/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fireset/errors.hpp"
#include "fireset/io.hpp"

namespace fireset {

namespace {

constexpr float kFuelMin = 1e-3f;  // below this a cell cannot burn

// Smooth random field: a short cosine series, min-max normalized to [lo, hi].
std::vector<float> noise_field(std::size_t H, std::size_t W, double lo, double hi, Rng& rng) {
  constexpr std::size_t kWaves = 6;
  struct Wave {
    double fy, fx, phase, amp;
  };
  std::array<Wave, kWaves> waves;
  for (std::size_t k = 0; k < kWaves; ++k)
    waves[k] = {rng.uniform(0.5, 3.5), rng.uniform(0.5, 3.5),
                rng.uniform(0.0, 2.0 * std::numbers::pi), 1.0 / static_cast<double>(k + 1)};

  std::vector<float> field(H * W);
  double vmin = 1e30, vmax = -1e30;
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      double v = 0.0;
      for (const auto& w : waves)
        v += w.amp * std::cos(2.0 * std::numbers::pi *
                                  (w.fy * static_cast<double>(y) / static_cast<double>(H) +
                                   w.fx * static_cast<double>(x) / static_cast<double>(W)) +
                              w.phase);
      field[y * W + x] = static_cast<float>(v);
      vmin = std::min(vmin, v);
      vmax = std::max(vmax, v);
    }
  const double span = std::max(vmax - vmin, 1e-9);
  for (auto& v : field)
    v = static_cast<float>(lo + (hi - lo) * ((static_cast<double>(v) - vmin) / span));
  return field;
}

std::size_t split_index(const std::string& name) {
  for (std::size_t i = 0; i < DatasetManifest::kSplitNames.size(); ++i)
    if (name == DatasetManifest::kSplitNames[i]) return i;
  throw RangeError("unknown split '" + name + "'");
}

}  // namespace

std::string regime_name(Regime r) {
  switch (r) {
    case Regime::new_ignition: return "new_ignition";
    case Regime::continued: return "continued";
    case Regime::extinguished: return "extinguished";
    case Regime::quiescent: return "quiescent";
  }
  throw RangeError("bad regime value");
}

Regime regime_from_name(const std::string& name) {
  for (Regime r : kAllRegimes)
    if (regime_name(r) == name) return r;
  throw RangeError("unknown regime '" + name + "'");
}

void WorldConfig::validate() const {
  if (H < 16 || W < 16) throw RangeError("world grid too small");
  if (T_h < 1 || T_p < 1) throw RangeError("need at least one history and one future hour");
  for (double p : {p_ignite_base, p_spread_base, rain_extinguish_p, dropout_p})
    if (!(p >= 0.0 && p <= 1.0)) throw RangeError("probability out of [0,1]");
  double mix_sum = 0.0;
  for (double m : regime_mix) {
    if (m < 0.0) throw RangeError("regime mix fraction negative");
    mix_sum += m;
  }
  if (std::abs(mix_sum - 1.0) > 1e-9) throw RangeError("regime mix must sum to 1");
  if (min_confidence < 1 || min_confidence > 3) throw RangeError("min_confidence must be 1..3");
  if (burn_duration < 1 || burn_rate <= 0.0 || frp_scale <= 0.0 || max_attempts < 1)
    throw RangeError("bad combustion constants");
}

nlohmann::ordered_json world_config_json(const WorldConfig& c) {
  nlohmann::ordered_json j;
  j["H"] = c.H;
  j["W"] = c.W;
  j["T_h"] = c.T_h;
  j["T_p"] = c.T_p;
  j["p_ignite_base"] = c.p_ignite_base;
  j["p_spread_base"] = c.p_spread_base;
  j["burn_duration"] = c.burn_duration;
  j["burn_rate"] = c.burn_rate;
  j["rain_extinguish_p"] = c.rain_extinguish_p;
  j["rain_lead"] = c.rain_lead;
  j["rain_tail"] = c.rain_tail;
  j["storm_mult"] = c.storm_mult;
  j["storm_dryness"] = c.storm_dryness;
  j["dropout_p"] = c.dropout_p;
  j["frp_scale"] = c.frp_scale;
  j["min_confidence"] = c.min_confidence;
  j["regime_mix"] = c.regime_mix;
  j["max_attempts"] = c.max_attempts;
  j["seed"] = c.seed;
  return j;
}

WorldConfig world_config_from_json(const nlohmann::json& j) {
  WorldConfig c;
  c.H = j.at("H").get<std::size_t>();
  c.W = j.at("W").get<std::size_t>();
  c.T_h = j.at("T_h").get<std::size_t>();
  c.T_p = j.at("T_p").get<std::size_t>();
  c.p_ignite_base = j.at("p_ignite_base").get<double>();
  c.p_spread_base = j.at("p_spread_base").get<double>();
  c.burn_duration = j.at("burn_duration").get<std::size_t>();
  c.burn_rate = j.at("burn_rate").get<double>();
  c.rain_extinguish_p = j.at("rain_extinguish_p").get<double>();
  c.rain_lead = j.at("rain_lead").get<std::size_t>();
  c.rain_tail = j.at("rain_tail").get<std::size_t>();
  c.storm_mult = j.at("storm_mult").get<double>();
  c.storm_dryness = j.at("storm_dryness").get<double>();
  c.dropout_p = j.at("dropout_p").get<double>();
  c.frp_scale = j.at("frp_scale").get<double>();
  c.min_confidence = j.at("min_confidence").get<int>();
  c.regime_mix = j.at("regime_mix").get<std::array<double, 4>>();
  c.max_attempts = j.at("max_attempts").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

FireState step_fire(const FireState& prev, const HourConditions& hour, const WorldConfig& cfg,
                    Rng& rng) {
  const std::size_t H = prev.H, W = prev.W, n = H * W;
  FireState next = prev;
  next.intensity.assign(n, 0.0f);

  // 1. rain knocks down existing fire
  if (hour.rain) {
    for (std::size_t p = 0; p < n; ++p)
      if (next.burning[p] && rng.bernoulli(cfg.rain_extinguish_p)) {
        next.burning[p] = 0;
        next.hours_burning[p] = 0;
      }
  }

  // 2. burnout: duration reached or fuel gone
  for (std::size_t p = 0; p < n; ++p)
    if (next.burning[p] &&
        (next.hours_burning[p] >= cfg.burn_duration || next.fuel[p] <= kFuelMin)) {
      next.burning[p] = 0;
      next.hours_burning[p] = 0;
    }

  // 3. spread to 8-neighbours, wind-aligned, probabilities combined per target
  const double ws = std::hypot(hour.wind_u, hour.wind_v);
  std::vector<float> miss(n, 1.0f);  // Π(1 - p_i) per candidate
  bool any_candidate = false;
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      const std::size_t p = y * W + x;
      if (!next.burning[p]) continue;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dy == 0 && dx == 0) continue;
          const long ny = static_cast<long>(y) + dy, nx = static_cast<long>(x) + dx;
          if (ny < 0 || nx < 0 || ny >= static_cast<long>(H) || nx >= static_cast<long>(W))
            continue;
          const std::size_t q = static_cast<std::size_t>(ny) * W + static_cast<std::size_t>(nx);
          if (next.burning[q] || next.fuel[q] <= kFuelMin || hour.dryness[q] <= 0.0f) continue;
          double align = 1.0;
          if (ws > 1e-9) {
            const double norm = std::hypot(static_cast<double>(dx), static_cast<double>(dy));
            const double cos_th =
                (dx * static_cast<double>(hour.wind_u) + dy * static_cast<double>(hour.wind_v)) /
                (norm * ws);
            align = std::max(0.0, 1.0 + 0.5 * cos_th);
          }
          const double pr = std::clamp(cfg.p_spread_base * hour.dryness[q] *
                                           std::min(1.0f, next.fuel[q]) * align,
                                       0.0, 0.97);
          miss[q] *= static_cast<float>(1.0 - pr);
          any_candidate = true;
        }
    }
  std::vector<std::size_t> ignited;
  if (any_candidate)
    for (std::size_t p = 0; p < n; ++p)
      if (miss[p] < 1.0f && rng.bernoulli(1.0 - static_cast<double>(miss[p]))) ignited.push_back(p);

  // 4. spontaneous ignition
  if (hour.ignite_mult > 0.0) {
    const double base = cfg.p_ignite_base * hour.ignite_mult;
    for (std::size_t p = 0; p < n; ++p) {
      if (next.burning[p] || next.fuel[p] <= kFuelMin || hour.dryness[p] <= 0.0f) continue;
      const double pr = base * hour.dryness[p] * std::min(1.0f, next.fuel[p]);
      if (pr > 0.0 && rng.bernoulli(std::min(pr, 1.0))) ignited.push_back(p);
    }
  }

  // 5. planned ignition points (skipped when the spot cannot burn)
  for (std::size_t p : hour.seed_pixels)
    if (!next.burning[p] && next.fuel[p] > kFuelMin && hour.dryness[p] > 0.0f) ignited.push_back(p);

  for (std::size_t p : ignited) {
    next.burning[p] = 1;
    next.hours_burning[p] = 0;
  }

  // 6. burn: consume fuel, emit radiative power
  for (std::size_t p = 0; p < n; ++p) {
    if (!next.burning[p]) continue;
    const float consumed = std::min(
        next.fuel[p],
        static_cast<float>(cfg.burn_rate * (0.5 + 0.5 * static_cast<double>(hour.dryness[p]))));
    next.fuel[p] -= consumed;
    next.intensity[p] = consumed * static_cast<float>(cfg.frp_scale);
    next.hours_burning[p] += 1;
  }
  return next;
}

RegimePlan plan_for(Regime regime, const WorldConfig& cfg, Rng& rng) {
  const std::size_t T = cfg.T();
  RegimePlan plan;
  plan.regime = regime;
  plan.ignite_mult.assign(T, 1.0);
  plan.rain.assign(T, 0);
  plan.storm.assign(T, 0);
  plan.seeds.assign(T, {});

  const auto seed_pixel = [&] {
    const auto box = default_valid_box(cfg.H, cfg.W);
    const std::size_t y = box[0] + 2 + rng.below(box[2] - box[0] - 4);
    const std::size_t x = box[1] + 2 + rng.below(box[3] - box[1] - 4);
    return y * cfg.W + x;
  };
  const auto early_seeds = [&] {
    const std::size_t count = 2 + rng.below(3);
    for (std::size_t k = 0; k < count; ++k)
      plan.seeds[rng.below(std::min<std::size_t>(4, cfg.T_h))].push_back(seed_pixel());
  };
  const auto storm_block = [&](std::size_t start, std::size_t len, bool boost_ignition) {
    for (std::size_t t = start; t < std::min(start + len, T); ++t) {
      plan.storm[t] = 1;
      if (boost_ignition) plan.ignite_mult[t] = cfg.storm_mult;
    }
  };

  switch (regime) {
    case Regime::continued: {
      early_seeds();
      if (rng.bernoulli(0.2) && cfg.T_h > 6)
        storm_block(4 + rng.below(cfg.T_h - 6), 2, false);  // weather variety only
      if (rng.bernoulli(0.5) && cfg.T_p > 4)
        storm_block(cfg.T_h + 2 + rng.below(3), 2 + rng.below(2), true);
      break;
    }
    case Regime::new_ignition: {
      for (std::size_t t = 0; t < cfg.T_h; ++t) plan.ignite_mult[t] = 0.0;
      // The forecast shows fire weather, but the ignition sites themselves are
      // planted at random so their placement stays mostly unpredictable.
      const std::size_t start = cfg.T_h + 1 + rng.below(std::max<std::size_t>(1, cfg.T_p / 3));
      const std::size_t len = 2 + rng.below(2);
      storm_block(start, len, false);
      for (std::size_t t = start; t < std::min(start + len, T); ++t)
        plan.ignite_mult[t] = cfg.storm_mult * 0.06;
      const std::size_t count = 1 + rng.below(2);
      const std::size_t span = std::min(start + len + 1, T) - start;
      for (std::size_t k = 0; k < count; ++k)
        plan.seeds[start + rng.below(span)].push_back(seed_pixel());
      break;
    }
    case Regime::extinguished: {
      early_seeds();
      const std::size_t start = cfg.T_h > cfg.rain_lead ? cfg.T_h - cfg.rain_lead : 0;
      for (std::size_t t = start; t < std::min(cfg.T_h + cfg.rain_tail, T); ++t) plan.rain[t] = 1;
      for (std::size_t t = start; t < T; ++t) plan.ignite_mult[t] = 0.0;
      break;
    }
    case Regime::quiescent: {
      for (std::size_t t = 0; t < T; ++t) plan.ignite_mult[t] = 0.0;
      plan.dryness_scale = rng.uniform(0.35, 0.55);  // a visibly damp world
      if (rng.bernoulli(0.15) && cfg.T_h > 6) storm_block(2 + rng.below(cfg.T_h - 6), 2, false);
      if (rng.bernoulli(0.15) && cfg.T_h > 8) {
        const std::size_t start = 2 + rng.below(cfg.T_h - 8);
        for (std::size_t t = start; t < start + 3; ++t) plan.rain[t] = 1;
      }
      break;
    }
  }
  return plan;
}

WorldTrajectory simulate_world(const WorldConfig& cfg, const RegimePlan& plan, Rng& rng) {
  cfg.validate();
  const std::size_t H = cfg.H, W = cfg.W, n = H * W, T = cfg.T();

  WorldTrajectory traj;
  traj.H = H;
  traj.W = W;
  traj.T = T;
  traj.elevation = noise_field(H, W, 0.0, 1.0, rng);
  const std::vector<float> dryness_base = noise_field(H, W, 0.05, 0.95, rng);
  traj.initial_fuel = noise_field(H, W, 0.25, 1.4, rng);

  double wind_speed = rng.uniform(0.9, 2.0);
  double wind_dir = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double season_phase = rng.uniform(0.0, 24.0);

  FireState state;
  state.H = H;
  state.W = W;
  state.burning.assign(n, 0);
  state.hours_burning.assign(n, 0);
  state.fuel = traj.initial_fuel;
  state.intensity.assign(n, 0.0f);

  traj.dryness.resize(T);
  traj.fuel.resize(T);
  traj.frp.resize(T);
  traj.code.resize(T);
  traj.wind_u.resize(T);
  traj.wind_v.resize(T);

  bool rained = false;
  for (std::size_t t = 0; t < T; ++t) {
    wind_dir += rng.uniform(-0.25, 0.25);
    wind_speed = std::clamp(wind_speed + rng.uniform(-0.12, 0.12), 0.45, 2.6);
    const double eff_speed = plan.storm[t] ? wind_speed * 1.5 : wind_speed;

    HourConditions hour;
    hour.wind_u = static_cast<float>(eff_speed * std::cos(wind_dir));
    hour.wind_v = static_cast<float>(eff_speed * std::sin(wind_dir));
    hour.rain = plan.rain[t] != 0;
    hour.ignite_mult = plan.ignite_mult[t];
    hour.seed_pixels = plan.seeds[t];

    const double season =
        0.85 + 0.15 * std::sin(2.0 * std::numbers::pi * (static_cast<double>(t) + season_phase) /
                               24.0);
    hour.dryness.resize(n);
    for (std::size_t p = 0; p < n; ++p) {
      double d = static_cast<double>(dryness_base[p]) * season * plan.dryness_scale;
      if (plan.storm[t]) d = std::min(1.0, d + cfg.storm_dryness);
      if (plan.rain[t])
        d *= 0.02;
      else if (rained)
        d *= 0.55;  // lingering moisture after a rain block
      hour.dryness[p] = static_cast<float>(d);
    }

    state = step_fire(state, hour, cfg, rng);
    rained = rained || hour.rain;

    traj.dryness[t] = std::move(hour.dryness);
    traj.fuel[t] = state.fuel;
    traj.frp[t] = state.intensity;
    traj.wind_u[t] = hour.wind_u;
    traj.wind_v[t] = hour.wind_v;
  }

  // confidence codes: top intensity quartile -> high (3), rest -> nominal (2)
  std::vector<float> intensities;
  for (const auto& frame : traj.frp)
    for (float v : frame)
      if (v > 0.0f) intensities.push_back(v);
  float high_thr = 0.0f;
  if (!intensities.empty()) {
    std::sort(intensities.begin(), intensities.end());
    high_thr = intensities[std::min(intensities.size() - 1, (intensities.size() * 3) / 4)];
  }
  for (std::size_t t = 0; t < T; ++t) {
    traj.code[t].assign(n, 0.0f);
    for (std::size_t p = 0; p < n; ++p) {
      if (traj.frp[t][p] <= 0.0f) continue;
      if (rng.bernoulli(cfg.dropout_p)) {  // observation dropout
        traj.code[t][p] = kFireUnobserved;
        traj.frp[t][p] = 0.0f;
      } else {
        traj.code[t][p] = traj.frp[t][p] >= high_thr ? kFireHigh : kFireNominal;
      }
    }
  }
  return traj;
}

Entity emit_entity(const WorldTrajectory& traj, std::size_t t, const WorldConfig& cfg) {
  const std::size_t T = cfg.T();
  if (t + T > traj.T) throw RangeError("entity window exceeds trajectory length");

  Entity e;
  e.F = canonical_channels().size();
  e.T = T;
  e.T_h = cfg.T_h;
  e.H = traj.H;
  e.W = traj.W;
  e.channels = canonical_channels();
  e.valid_box = default_valid_box(e.H, e.W);
  e.data.assign(e.F * T * e.H * e.W, 0.0f);

  const std::size_t n = e.H * e.W;
  for (std::size_t k = 0; k < T; ++k) {
    const std::size_t src = t + k;
    const auto frame = [&](std::size_t f) { return e.data.begin() + ((f * T + k) * n); };
    std::copy(traj.dryness[src].begin(), traj.dryness[src].end(), frame(0));
    std::copy(traj.fuel[src].begin(), traj.fuel[src].end(), frame(1));
    std::fill(frame(2), frame(2) + n, traj.wind_u[src]);
    std::fill(frame(3), frame(3) + n, traj.wind_v[src]);
    std::copy(traj.elevation.begin(), traj.elevation.end(), frame(4));
    std::copy(traj.code[src].begin(), traj.code[src].end(), frame(5));
    std::copy(traj.frp[src].begin(), traj.frp[src].end(), frame(6));
  }
  e.validate();
  return e;
}

Regime regime_label(const Entity& e, int min_confidence) {
  const std::size_t fire = e.channel("active_fire");
  const auto& box = e.valid_box;
  const auto window_has_fire = [&](std::size_t t0, std::size_t t1) {
    for (std::size_t t = t0; t < t1; ++t)
      for (std::size_t y = box[0]; y < box[2]; ++y)
        for (std::size_t x = box[1]; x < box[3]; ++x)
          if (e.at(fire, t, y, x) >= static_cast<float>(min_confidence)) return true;
    return false;
  };
  const bool pf = window_has_fire(0, e.T_h);
  const bool ff = window_has_fire(e.T_h, e.T);
  if (pf) return ff ? Regime::continued : Regime::extinguished;
  return ff ? Regime::new_ignition : Regime::quiescent;
}

Entity simulate_entity(const WorldConfig& cfg, Regime target, Rng& rng) {
  const RegimePlan plan = plan_for(target, cfg, rng);
  const WorldTrajectory traj = simulate_world(cfg, plan, rng);
  return emit_entity(traj, 0, cfg);
}

const std::vector<EntityRecord>& DatasetManifest::split(const std::string& name) const {
  return splits[split_index(name)];
}

DatasetManifest generate_dataset(const WorldConfig& cfg, std::size_t n_train, std::size_t n_val,
                                 std::size_t n_test, const std::filesystem::path& out_dir) {
  cfg.validate();
  if (n_train < 1 || n_val < 1 || n_test < 1) throw RangeError("split counts must be >= 1");

  DatasetManifest manifest;
  manifest.root = out_dir;
  manifest.world = cfg;

  const std::array<std::size_t, 3> counts{n_train, n_val, n_test};
  for (std::size_t s = 0; s < 3; ++s) {
    const std::string split = DatasetManifest::kSplitNames[s];
    const std::uint64_t split_seed = mix64(cfg.seed, 0x73706c6974ull, s);
    const std::size_t n = counts[s];

    // largest-remainder quotas, then a deterministic shuffle
    std::array<std::size_t, 4> quota{};
    std::size_t assigned = 0;
    std::array<std::pair<double, std::size_t>, 4> fracs;
    for (std::size_t r = 0; r < 4; ++r) {
      const double want = cfg.regime_mix[r] * static_cast<double>(n);
      quota[r] = static_cast<std::size_t>(want);
      assigned += quota[r];
      fracs[r] = {want - static_cast<double>(quota[r]), r};
    }
    std::stable_sort(fracs.begin(), fracs.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < n; ++k, ++assigned) quota[fracs[k % 4].second] += 1;

    std::vector<Regime> order;
    for (std::size_t r = 0; r < 4; ++r)
      order.insert(order.end(), quota[r], kAllRegimes[r]);
    Rng shuffle_rng(mix64(split_seed, 0x6f72646572ull));
    shuffle_rng.shuffle(order);

    for (std::size_t i = 0; i < n; ++i) {
      const Regime target = order[i];
      bool accepted = false;
      for (std::size_t attempt = 0; attempt < cfg.max_attempts; ++attempt) {
        Rng rng(mix64(split_seed, i, attempt));
        Entity e = simulate_entity(cfg, target, rng);
        if (regime_label(e, cfg.min_confidence) != target) continue;
        char name[32];
        std::snprintf(name, sizeof(name), "ent_%05zu.bin", i);
        const std::string rel = split + "/" + name;
        write_entity(out_dir / rel, e);
        manifest.splits[s].push_back({rel, target, attempt});
        accepted = true;
        break;
      }
      if (!accepted)
        throw MixError("could not realize regime '" + regime_name(target) + "' for " + split +
                       " entity " + std::to_string(i) + " after " +
                       std::to_string(cfg.max_attempts) + " attempts");
    }
  }

  nlohmann::ordered_json j;
  j["version"] = 1;
  j["world"] = world_config_json(cfg);
  nlohmann::ordered_json jsplits = nlohmann::ordered_json::object();
  nlohmann::ordered_json jcounts = nlohmann::ordered_json::object();
  for (std::size_t s = 0; s < 3; ++s) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    std::map<std::string, std::size_t> by_regime;
    for (const auto& rec : manifest.splits[s]) {
      rows.push_back({{"file", rec.file}, {"regime", regime_name(rec.regime)},
                      {"attempt", rec.attempt}});
      by_regime[regime_name(rec.regime)] += 1;
    }
    jsplits[DatasetManifest::kSplitNames[s]] = rows;
    jcounts[DatasetManifest::kSplitNames[s]] = by_regime;
  }
  j["splits"] = jsplits;
  j["regime_counts"] = jcounts;
  write_text_file(out_dir / "manifest.json", j.dump(2) + "\n");
  return manifest;
}

DatasetManifest read_manifest(const std::filesystem::path& dataset_dir) {
  const auto j = nlohmann::json::parse(read_text_file(dataset_dir / "manifest.json"));
  DatasetManifest manifest;
  manifest.root = dataset_dir;
  manifest.world = world_config_from_json(j.at("world"));
  for (std::size_t s = 0; s < 3; ++s) {
    for (const auto& row : j.at("splits").at(DatasetManifest::kSplitNames[s])) {
      EntityRecord rec;
      rec.file = row.at("file").get<std::string>();
      rec.regime = regime_from_name(row.at("regime").get<std::string>());
      rec.attempt = row.at("attempt").get<std::size_t>();
      manifest.splits[s].push_back(std::move(rec));
    }
  }
  return manifest;
}

}  // namespace fireset
