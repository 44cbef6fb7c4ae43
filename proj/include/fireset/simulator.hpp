#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fireset/entity.hpp"
#include "fireset/rng.hpp"

#include <json.hpp>

namespace fireset {

// Entity category by past/future fire presence inside the valid region.
enum class Regime { new_ignition = 0, continued = 1, extinguished = 2, quiescent = 3 };

inline constexpr std::array<Regime, 4> kAllRegimes{Regime::new_ignition, Regime::continued,
                                                   Regime::extinguished, Regime::quiescent};

std::string regime_name(Regime r);
Regime regime_from_name(const std::string& name);

// Knobs for the synthetic fire world. Probabilities are per pixel per hour
// before covariate products; regime_mix is indexed by Regime and sums to 1.
struct WorldConfig {
  std::size_t H = 64, W = 64;
  std::size_t T_h = 16, T_p = 8;
  double p_ignite_base = 7e-5;
  double p_spread_base = 0.45;
  std::size_t burn_duration = 10;   // hours a cell can stay alight
  double burn_rate = 0.12;          // fuel consumed per hour at full dryness
  double rain_extinguish_p = 0.9;   // per burning cell per rain hour
  std::size_t rain_lead = 4;        // rain hours before the horizon boundary
  std::size_t rain_tail = 2;        // rain hours after it
  double storm_mult = 110.0;        // ignition boost during storm hours
  double storm_dryness = 0.35;      // additive dryness during storms
  double dropout_p = 0.05;          // observation dropout -> code -1
  double frp_scale = 60.0;          // fuel consumed -> radiative power (MW)
  int min_confidence = 2;
  std::array<double, 4> regime_mix{0.15, 0.65, 0.12, 0.08};
  std::size_t max_attempts = 200;
  std::uint64_t seed = 0;

  std::size_t T() const { return T_h + T_p; }
  void validate() const;
};

nlohmann::ordered_json world_config_json(const WorldConfig& c);
WorldConfig world_config_from_json(const nlohmann::json& j);

// Per-pixel combustion state.
struct FireState {
  std::size_t H = 0, W = 0;
  std::vector<std::uint8_t> burning;
  std::vector<std::uint16_t> hours_burning;
  std::vector<float> fuel;       // remaining
  std::vector<float> intensity;  // MW consumed this hour; > 0 iff burning
};

// Everything step_fire needs to know about one hour of weather, plus any
// planned ignition points for that hour.
struct HourConditions {
  std::vector<float> dryness;  // per pixel, already rain/storm adjusted
  float wind_u = 0.0f, wind_v = 0.0f;
  bool rain = false;
  double ignite_mult = 1.0;               // 0 suppresses spontaneous ignition
  std::vector<std::size_t> seed_pixels;   // forced ignitions (if ignitable)
};

FireState step_fire(const FireState& prev, const HourConditions& hour, const WorldConfig& cfg,
                    Rng& rng);

// Regime-directed scenario: which hours rain/storm, where seeds go.
struct RegimePlan {
  Regime regime = Regime::quiescent;
  std::vector<double> ignite_mult;                 // per hour
  std::vector<std::uint8_t> rain;                  // per hour
  std::vector<std::uint8_t> storm;                 // per hour
  std::vector<std::vector<std::size_t>> seeds;     // per hour pixel indices
  double dryness_scale = 1.0;                      // whole-scenario moisture bias
};

RegimePlan plan_for(Regime regime, const WorldConfig& cfg, Rng& rng);

// One simulated world: static terrain, hourly weather, fire codes and FRP.
struct WorldTrajectory {
  std::size_t H = 0, W = 0, T = 0;
  std::vector<float> elevation;                 // H*W
  std::vector<float> initial_fuel;              // H*W
  std::vector<std::vector<float>> dryness;      // T x H*W
  std::vector<std::vector<float>> fuel;         // T x H*W, remaining after hour t
  std::vector<float> wind_u, wind_v;            // T
  std::vector<std::vector<float>> frp;          // T x H*W (MW, post-dropout)
  std::vector<std::vector<float>> code;         // T x H*W in {-1,0,2,3}
};

WorldTrajectory simulate_world(const WorldConfig& cfg, const RegimePlan& plan, Rng& rng);

// Cuts the window [t, t + T_h + T_p) out of a trajectory.
Entity emit_entity(const WorldTrajectory& traj, std::size_t t, const WorldConfig& cfg);

// Pure function of the entity's active_fire channel and valid box.
Regime regime_label(const Entity& e, int min_confidence);

// Plan -> world -> entity for one target regime (unchecked label).
Entity simulate_entity(const WorldConfig& cfg, Regime target, Rng& rng);

// --- dataset generation ------------------------------------------------------

struct EntityRecord {
  std::string file;  // relative to the dataset root
  Regime regime = Regime::quiescent;
  std::size_t attempt = 0;
};

struct DatasetManifest {
  std::filesystem::path root;
  WorldConfig world;
  std::array<std::vector<EntityRecord>, 3> splits;  // train, val, test

  static constexpr std::array<const char*, 3> kSplitNames{"train", "val", "test"};
  const std::vector<EntityRecord>& split(const std::string& name) const;
};

DatasetManifest generate_dataset(const WorldConfig& cfg, std::size_t n_train, std::size_t n_val,
                                 std::size_t n_test, const std::filesystem::path& out_dir);

DatasetManifest read_manifest(const std::filesystem::path& dataset_dir);

}  // namespace fireset
