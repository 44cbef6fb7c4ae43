#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "fireset/errors.hpp"

namespace fireset {

// Fire-code convention for the active_fire channel.
inline constexpr float kFireUnobserved = -1.0f;
inline constexpr float kFireNone = 0.0f;
inline constexpr float kFireLow = 1.0f;
inline constexpr float kFireNominal = 2.0f;
inline constexpr float kFireHigh = 3.0f;

// A spatio-temporal sample: F channels over T = T_h + T_p hourly frames on an
// H x W grid. Layout is [F][T][H][W], matching the on-disk format.
struct Entity {
  std::size_t F = 0, T = 0, T_h = 0, H = 0, W = 0;
  std::vector<std::string> channels;
  std::vector<float> data;
  // Half-open pixel box [y0,x0,y1,x1]; targets and metrics only look inside.
  std::array<std::size_t, 4> valid_box{0, 0, 0, 0};
  int jitter_dy = 0, jitter_dx = 0;

  std::size_t T_p() const { return T - T_h; }

  std::size_t index(std::size_t f, std::size_t t, std::size_t y, std::size_t x) const {
    return ((f * T + t) * H + y) * W + x;
  }
  float at(std::size_t f, std::size_t t, std::size_t y, std::size_t x) const {
    return data[index(f, t, y, x)];
  }
  float& at(std::size_t f, std::size_t t, std::size_t y, std::size_t x) {
    return data[index(f, t, y, x)];
  }

  std::size_t channel(const std::string& name) const {
    for (std::size_t i = 0; i < channels.size(); ++i)
      if (channels[i] == name) return i;
    throw ManifestError("entity has no channel named '" + name + "'");
  }

  void validate() const {
    if (channels.size() != F) throw ManifestError("channel manifest length != F");
    if (data.size() != F * T * H * W) throw ShapeError("entity payload size mismatch");
    if (T_h < 1 || T <= T_h) throw ShapeError("entity needs T_h >= 1 and T_p >= 1");
    if (valid_box[0] >= valid_box[2] || valid_box[1] >= valid_box[3] || valid_box[2] > H ||
        valid_box[3] > W)
      throw ShapeError("valid box not inside grid");
  }
};

// Central box with 1/8 margins on each side (half-open).
inline std::array<std::size_t, 4> default_valid_box(std::size_t H, std::size_t W) {
  return {H / 8, W / 8, H - H / 8, W - W / 8};
}

inline const std::vector<std::string>& canonical_channels() {
  static const std::vector<std::string> names{"dryness", "fuel",        "wind_u", "wind_v",
                                              "elevation", "active_fire", "frp"};
  return names;
}

inline float channel_fill_value(const std::string& name) {
  return name == "active_fire" ? kFireUnobserved : 0.0f;
}

}  // namespace fireset
