#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fireset/errors.hpp"
#include "fireset/params.hpp"

namespace fireset {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9, beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;  // decoupled
};

// Adaptive-moment update with bias correction and decoupled weight decay.
template <typename S>
class AdamW {
 public:
  explicit AdamW(AdamConfig cfg) : cfg_(cfg) {}

  std::uint64_t steps() const { return t_; }

  void step(Params<S>& params) {
    t_ += 1;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& [name, p] : params.all()) {
      const auto& g = p.grad();  // may be empty if backward never reached it
      auto& vals = p.values_mut();
      auto& [m, v] = moments_[name];
      if (m.size() != vals.size()) {
        m.assign(vals.size(), S(0));
        v.assign(vals.size(), S(0));
      }
      for (std::size_t i = 0; i < vals.size(); ++i) {
        const double gi = g.empty() ? 0.0 : static_cast<double>(g[i]);
        if (!std::isfinite(gi))
          throw NumericError("non-finite gradient in parameter '" + name + "'");
        const double mi = cfg_.beta1 * static_cast<double>(m[i]) + (1.0 - cfg_.beta1) * gi;
        const double vi = cfg_.beta2 * static_cast<double>(v[i]) + (1.0 - cfg_.beta2) * gi * gi;
        m[i] = static_cast<S>(mi);
        v[i] = static_cast<S>(vi);
        const double update = cfg_.lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg_.eps);
        const double decay = cfg_.lr * cfg_.weight_decay * static_cast<double>(vals[i]);
        vals[i] = static_cast<S>(static_cast<double>(vals[i]) - update - decay);
      }
    }
  }

 private:
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
  std::map<std::string, std::pair<std::vector<S>, std::vector<S>>> moments_;
};

}  // namespace fireset
