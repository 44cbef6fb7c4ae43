#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fireset/entity.hpp"
#include "fireset/params.hpp"
#include "fireset/rng.hpp"
#include "fireset/tensor.hpp"

namespace fireset {

struct ModelConfig {
  std::size_t Q = 10;
  std::size_t L = 2;
  std::size_t d_e = 32;
  std::size_t patch_stride = 4;
  std::size_t n_heads = 4;
  std::size_t H = 64, W = 64;
  // Future window is pooled into this many memory steps; each step gets its
  // own forecast-conditioned token grid and step positional identity.
  std::size_t memory_steps = 2;
  double dropout = 0.1;
  // Injection coefficient per latent grid size; grids not listed use 1.0.
  std::map<std::size_t, double> alpha_schedule{
      {128, 0.25}, {64, 0.50}, {32, 1.00}, {16, 1.00}};
  std::uint64_t seed = 0;

  std::size_t latent_h() const { return H / patch_stride; }
  std::size_t latent_w() const { return W / patch_stride; }

  double alpha() const {
    auto it = alpha_schedule.find(latent_h());
    return it == alpha_schedule.end() ? 1.0 : it->second;
  }

  void validate() const {
    if (Q < 1 || L < 1 || d_e < 4) throw RangeError("model config: Q>=1, L>=1, d_e>=4");
    if (d_e % n_heads != 0) throw RangeError("model config: d_e must divide into heads");
    if (H % patch_stride != 0 || W % patch_stride != 0)
      throw RangeError("model config: grid not divisible by patch stride");
    if (memory_steps < 1) throw RangeError("model config: memory_steps >= 1");
  }
};

template <typename S>
struct QuerySet {
  Tensor<S> logits;  // (Q,2); class 1 = fire
  Tensor<S> locs;    // (Q,2) = final refined references, valid-region normalized
  std::vector<double> probs;                       // softmax(z)_1 per query
  std::vector<std::array<double, 2>> points;       // locs snapshot
  std::vector<std::vector<double>> ref_trajectory; // r^0..r^L, each 2Q values
};

// Condition groups injected into the historical context (plane counts fixed
// by the canonical channel set).
struct ConditionGroup {
  const char* name;
  std::size_t planes;
  bool per_step;
};

inline const std::array<ConditionGroup, 4>& condition_groups() {
  static const std::array<ConditionGroup, 4> g{{
      {"weather", 4, true},   // future dryness/fuel/wind summary per memory step
      {"static", 1, false},   // elevation
      {"firehist", 2, false}, // recency-weighted fire code and FRP over history
      {"firesum", 2, false},  // peak fire code and mean FRP over history
  }};
  return g;
}

inline double normalize_fire_code(double code) { return std::max(code, 0.0) / 3.0; }
inline double normalize_frp(double frp) { return std::log1p(std::max(frp, 0.0)) / 4.0; }

// Diagnostics captured during encode (gate saturation monitoring).
struct EncodeStats {
  double gate_min = 1.0, gate_max = 0.0;
};

// Reference update: squash(unsquash(r) + delta); keeps r strictly in (0,1).
template <typename S>
Tensor<S> refine_reference(const Tensor<S>& r, const Tensor<S>& delta) {
  return sigmoid(add(inverse_sigmoid(r), delta));
}

template <typename S>
class Network {
 public:
  ModelConfig cfg;
  Params<S> params;

  static Network init(const ModelConfig& config) {
    config.validate();
    Network net;
    net.cfg = config;
    Rng rng(mix64(config.seed, 0x6d6f64656cull));
    auto uniform_vec = [&rng](std::size_t n, double lo, double hi) {
      std::vector<S> v(n);
      for (auto& x : v) x = static_cast<S>(rng.uniform(lo, hi));
      return v;
    };
    auto zeros = [](std::size_t n) { return std::vector<S>(n, S(0)); };
    auto ones = [](std::size_t n) { return std::vector<S>(n, S(1)); };
    const std::size_t d = config.d_e;
    const std::size_t p2 = config.patch_stride * config.patch_stride;
    const double emb = 1.0 / std::sqrt(static_cast<double>(d));
    auto fan = [](std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); };

    // creation order below is fixed; it defines the init RNG stream
    const std::size_t base_in = canonical_channels().size() * p2;
    net.params.create("enc.patch.w", {base_in, d}, uniform_vec(base_in * d, -fan(base_in), fan(base_in)));
    net.params.create("enc.patch.b", {d}, zeros(d));
    for (const auto& g : condition_groups()) {
      const std::size_t in = g.planes * p2;
      const std::string base = std::string("enc.grp.") + g.name;
      net.params.create(base + ".delta.w", {in, d}, uniform_vec(in * d, -fan(in), fan(in)));
      net.params.create(base + ".delta.b", {d}, zeros(d));
      net.params.create(base + ".gate.w", {in, d}, uniform_vec(in * d, -fan(in), fan(in)));
      net.params.create(base + ".gate.b", {d}, zeros(d));  // zero gate bias
    }
    net.params.create("enc.pos.step", {config.memory_steps, d},
                      uniform_vec(config.memory_steps * d, -emb, emb));
    net.params.create("enc.pos.row", {config.latent_h(), d},
                      uniform_vec(config.latent_h() * d, -emb, emb));
    net.params.create("enc.pos.col", {config.latent_w(), d},
                      uniform_vec(config.latent_w() * d, -emb, emb));

    net.params.create("dec.query", {config.Q, d}, uniform_vec(config.Q * d, -emb, emb));
    {
      std::vector<S> r0(config.Q * 2);
      for (auto& x : r0) {
        const double u = rng.uniform(0.1, 0.9);
        x = static_cast<S>(std::log(u / (1.0 - u)));  // stored as logits
      }
      net.params.create("dec.ref0", {config.Q, 2}, std::move(r0));
    }
    net.params.create("dec.qpos.w", {2, d}, uniform_vec(2 * d, -fan(2), fan(2)));
    net.params.create("dec.qpos.b", {d}, zeros(d));
    for (std::size_t l = 0; l < config.L; ++l) {
      const std::string base = "dec.l" + std::to_string(l);
      for (const char* ln : {".ln1", ".ln2", ".ln3"}) {
        net.params.create(base + ln + ".g", {d}, ones(d));
        net.params.create(base + ln + ".b", {d}, zeros(d));
      }
      for (const char* at : {".sa", ".ca"})
        for (const char* m : {".wq", ".wk", ".wv", ".wo"})
          net.params.create(base + at + m, {d, d}, uniform_vec(d * d, -fan(d), fan(d)));
      net.params.create(base + ".ff.w1", {d, 4 * d}, uniform_vec(d * 4 * d, -fan(d), fan(d)));
      net.params.create(base + ".ff.b1", {4 * d}, zeros(4 * d));
      net.params.create(base + ".ff.w2", {4 * d, d},
                        uniform_vec(4 * d * d, -fan(4 * d), fan(4 * d)));
      net.params.create(base + ".ff.b2", {d}, zeros(d));
      net.params.create(base + ".off.w", {d, 2}, zeros(d * 2));  // zero-init offset head
      net.params.create(base + ".off.b", {2}, zeros(2));
    }
    net.params.create("dec.norm.g", {d}, ones(d));
    net.params.create("dec.norm.b", {d}, zeros(d));
    net.params.create("dec.cls.w", {d, 2}, uniform_vec(d * 2, -fan(d), fan(d)));
    net.params.create("dec.cls.b", {2}, zeros(2));
    return net;
  }

  // Scalar count implied by the configuration (cross-checked against the
  // store in tests and asserted when loading checkpoints).
  static std::size_t expected_param_count(const ModelConfig& c) {
    const std::size_t d = c.d_e, p2 = c.patch_stride * c.patch_stride;
    std::size_t n = canonical_channels().size() * p2 * d + d;
    for (const auto& g : condition_groups()) n += 2 * (g.planes * p2 * d + d);
    n += c.memory_steps * d + c.latent_h() * d + c.latent_w() * d;
    n += c.Q * d + c.Q * 2 + 2 * d + d;
    n += c.L * (3 * 2 * d + 8 * d * d + (d * 4 * d + 4 * d + 4 * d * d + d) + (d * 2 + 2));
    n += 2 * d + d * 2 + 2;
    return n;
  }

  Tensor<S> encode(const Entity& e, EncodeStats* stats = nullptr) const {
    if (e.channels != canonical_channels())
      throw ManifestError("entity channel manifest does not match the model's input schema");
    if (e.H != cfg.H || e.W != cfg.W) throw ShapeError("entity grid does not match model config");
    if (e.T_p() < cfg.memory_steps) throw RangeError("future window shorter than memory steps");

    const std::size_t GH = cfg.latent_h(), GW = cfg.latent_w(), N = GH * GW;
    const double alpha = cfg.alpha();

    auto embed = [&](const std::vector<S>& planes, std::size_t nplanes, const std::string& w,
                     const std::string& b) {
      auto patches = Tensor<S>::constant(Shape{N, nplanes * cfg.patch_stride * cfg.patch_stride},
                                         extract_patches(planes, nplanes));
      return add(matmul(patches, params.at(w)), params.at(b));
    };

    auto base = embed(base_planes(e), canonical_channels().size(), "enc.patch.w", "enc.patch.b");

    // step-invariant condition groups
    std::vector<Tensor<S>> const_inj;
    for (const auto& g : condition_groups()) {
      if (g.per_step) continue;
      auto planes = group_planes(e, g, 0);
      const std::string pre = std::string("enc.grp.") + g.name;
      auto delta = embed(planes, g.planes, pre + ".delta.w", pre + ".delta.b");
      auto gate = sigmoid(embed(planes, g.planes, pre + ".gate.w", pre + ".gate.b"));
      track_gate(gate, stats);
      const_inj.push_back(mul(gate, delta));
    }

    std::vector<Tensor<S>> per_step;
    for (std::size_t s = 0; s < cfg.memory_steps; ++s) {
      Tensor<S> inj;
      for (const auto& g : condition_groups()) {
        if (!g.per_step) continue;
        auto planes = group_planes(e, g, s);
        const std::string pre = std::string("enc.grp.") + g.name;
        auto delta = embed(planes, g.planes, pre + ".delta.w", pre + ".delta.b");
        auto gate = sigmoid(embed(planes, g.planes, pre + ".gate.w", pre + ".gate.b"));
        track_gate(gate, stats);
        inj = inj.defined() ? add(inj, mul(gate, delta)) : mul(gate, delta);
      }
      for (const auto& c : const_inj) inj = inj.defined() ? add(inj, c) : c;
      auto mem = inj.defined() ? add(base, scale(inj, static_cast<S>(alpha))) : base;
      per_step.push_back(mem);
    }

    auto memory = cfg.memory_steps == 1 ? per_step[0] : concat(per_step, 0);

    // factored positional identity: forecast step + row + column
    std::vector<std::size_t> step_ids, row_ids, col_ids;
    step_ids.reserve(cfg.memory_steps * N);
    for (std::size_t s = 0; s < cfg.memory_steps; ++s)
      for (std::size_t y = 0; y < GH; ++y)
        for (std::size_t x = 0; x < GW; ++x) {
          step_ids.push_back(s);
          row_ids.push_back(y);
          col_ids.push_back(x);
        }
    auto pos = add(add(gather_rows(params.at("enc.pos.step"), step_ids),
                       gather_rows(params.at("enc.pos.row"), row_ids)),
                   gather_rows(params.at("enc.pos.col"), col_ids));
    return add(memory, pos);
  }

  QuerySet<S> decode(const Tensor<S>& memory, const Entity& e, bool training = false,
                     Rng* dropout_rng = nullptr) const {
    Tensor<S> X = params.at("dec.query");  // (Q,d) shared leaf
    Tensor<S> r = sigmoid(params.at("dec.ref0"));

    QuerySet<S> out;
    out.ref_trajectory.push_back(snapshot(r));

    // reference points live in valid-region coordinates; positional
    // embeddings are built from the full-grid location
    const auto [y0, x0, y1, x1] = e.valid_box;
    std::vector<S> scale_v{static_cast<S>(static_cast<double>(y1 - y0) / e.H),
                           static_cast<S>(static_cast<double>(x1 - x0) / e.W)};
    std::vector<S> off_v{static_cast<S>(static_cast<double>(y0) / e.H),
                         static_cast<S>(static_cast<double>(x0) / e.W)};
    auto box_scale = Tensor<S>::constant({2}, scale_v);
    auto box_off = Tensor<S>::constant({2}, off_v);

    for (std::size_t l = 0; l < cfg.L; ++l) {
      const std::string base = "dec.l" + std::to_string(l);
      auto rf = add(mul(r, box_scale), box_off);
      auto qpos = add(matmul(rf, params.at("dec.qpos.w")), params.at("dec.qpos.b"));

      auto xn = affine_norm(X, base + ".ln1");
      auto qin = add(xn, qpos);
      auto sa = attention(qin, qin, xn, base + ".sa");
      X = add(X, drop(sa, training, dropout_rng));

      xn = affine_norm(X, base + ".ln2");
      auto ca = attention(add(xn, qpos), memory, memory, base + ".ca");
      X = add(X, drop(ca, training, dropout_rng));

      xn = affine_norm(X, base + ".ln3");
      auto h = relu(add(matmul(xn, params.at(base + ".ff.w1")), params.at(base + ".ff.b1")));
      auto ff = add(matmul(h, params.at(base + ".ff.w2")), params.at(base + ".ff.b2"));
      X = add(X, drop(ff, training, dropout_rng));

      auto delta = add(matmul(X, params.at(base + ".off.w")), params.at(base + ".off.b"));
      r = refine_reference(r, delta);
      out.ref_trajectory.push_back(snapshot(r));
    }

    auto xf = affine_norm(X, "dec.norm");
    out.logits = add(matmul(xf, params.at("dec.cls.w")), params.at("dec.cls.b"));
    out.locs = r;

    out.probs.resize(cfg.Q);
    out.points.resize(cfg.Q);
    for (std::size_t q = 0; q < cfg.Q; ++q) {
      const double z0 = static_cast<double>(out.logits.at(q * 2));
      const double z1 = static_cast<double>(out.logits.at(q * 2 + 1));
      const double m = std::max(z0, z1);
      out.probs[q] = std::exp(z1 - m) / (std::exp(z0 - m) + std::exp(z1 - m));
      out.points[q] = {static_cast<double>(r.at(q * 2)), static_cast<double>(r.at(q * 2 + 1))};
    }
    return out;
  }

  QuerySet<S> predict(const Entity& e, bool training = false, Rng* dropout_rng = nullptr,
                      EncodeStats* stats = nullptr) const {
    return decode(encode(e, stats), e, training, dropout_rng);
  }

 private:
  static void track_gate(const Tensor<S>& gate, EncodeStats* stats) {
    if (!stats) return;
    for (S v : gate.values()) {
      stats->gate_min = std::min(stats->gate_min, static_cast<double>(v));
      stats->gate_max = std::max(stats->gate_max, static_cast<double>(v));
    }
  }

  static std::vector<double> snapshot(const Tensor<S>& r) {
    std::vector<double> v(r.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(r.at(i));
    return v;
  }

  Tensor<S> affine_norm(const Tensor<S>& x, const std::string& base) const {
    return add(mul(layer_norm(x), params.at(base + ".g")), params.at(base + ".b"));
  }

  Tensor<S> drop(const Tensor<S>& x, bool training, Rng* rng) const {
    if (!training || cfg.dropout <= 0.0 || rng == nullptr) return x;
    const double keep = 1.0 - cfg.dropout;
    std::vector<S> mask(x.size());
    for (auto& m : mask) m = rng->bernoulli(keep) ? static_cast<S>(1.0 / keep) : S(0);
    return mul(x, Tensor<S>::constant(x.shape(), std::move(mask)));
  }

  Tensor<S> attention(const Tensor<S>& query_in, const Tensor<S>& key_in,
                      const Tensor<S>& value_in, const std::string& base) const {
    const std::size_t d = cfg.d_e, h = cfg.n_heads, dh = d / h;
    auto q = matmul(query_in, params.at(base + ".wq"));
    auto k = matmul(key_in, params.at(base + ".wk"));
    auto v = matmul(value_in, params.at(base + ".wv"));
    std::vector<Tensor<S>> heads;
    heads.reserve(h);
    const S inv_sqrt = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
    for (std::size_t i = 0; i < h; ++i) {
      auto qh = slice_cols(q, i * dh, (i + 1) * dh);
      auto kh = slice_cols(k, i * dh, (i + 1) * dh);
      auto vh = slice_cols(v, i * dh, (i + 1) * dh);
      auto scores = scale(matmul(qh, transpose2d(kh)), inv_sqrt);
      heads.push_back(matmul(softmax(scores, 1), vh));
    }
    auto joined = h == 1 ? heads[0] : concat(heads, 1);
    return matmul(joined, params.at(base + ".wo"));
  }

  // (C,H,W) planes -> (N, C*stride^2) patch rows, token-major.
  std::vector<S> extract_patches(const std::vector<S>& planes, std::size_t C) const {
    const std::size_t GH = cfg.latent_h(), GW = cfg.latent_w(), s = cfg.patch_stride;
    std::vector<S> out(GH * GW * C * s * s);
    std::size_t o = 0;
    for (std::size_t gy = 0; gy < GH; ++gy)
      for (std::size_t gx = 0; gx < GW; ++gx)
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t py = 0; py < s; ++py)
            for (std::size_t px = 0; px < s; ++px)
              out[o++] = planes[(c * cfg.H + gy * s + py) * cfg.W + gx * s + px];
    return out;
  }

  // Historical context: per-channel mean over the history window (fire
  // channels pass through their normalizers).
  std::vector<S> base_planes(const Entity& e) const {
    const std::size_t C = e.F, HW = e.H * e.W;
    std::vector<S> planes(C * HW, S(0));
    const std::size_t fire = e.channel("active_fire"), frp = e.channel("frp");
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < e.T_h; ++t)
        for (std::size_t p = 0; p < HW; ++p) {
          double v = e.data[(c * e.T + t) * HW + p];
          if (c == fire) v = normalize_fire_code(v);
          else if (c == frp) v = normalize_frp(v);
          planes[c * HW + p] += static_cast<S>(v / static_cast<double>(e.T_h));
        }
    return planes;
  }

  std::vector<S> group_planes(const Entity& e, const ConditionGroup& g, std::size_t step) const {
    const std::size_t HW = e.H * e.W;
    std::vector<S> planes(g.planes * HW, S(0));
    const std::string name = g.name;
    if (name == "weather") {
      // contiguous slice of the future window assigned to this memory step
      const std::size_t Tp = e.T_p();
      const std::size_t a = e.T_h + step * Tp / cfg.memory_steps;
      const std::size_t b = e.T_h + (step + 1) * Tp / cfg.memory_steps;
      const std::array<std::size_t, 4> chans{e.channel("dryness"), e.channel("fuel"),
                                             e.channel("wind_u"), e.channel("wind_v")};
      for (std::size_t i = 0; i < chans.size(); ++i)
        for (std::size_t t = a; t < b; ++t)
          for (std::size_t p = 0; p < HW; ++p)
            planes[i * HW + p] +=
                static_cast<S>(e.data[(chans[i] * e.T + t) * HW + p] / static_cast<double>(b - a));
    } else if (name == "static") {
      const std::size_t c = e.channel("elevation");
      for (std::size_t p = 0; p < HW; ++p) planes[p] = e.data[(c * e.T + 0) * HW + p];
    } else if (name == "firehist") {
      const std::size_t fire = e.channel("active_fire"), frp = e.channel("frp");
      double wsum = 0;
      for (std::size_t t = 0; t < e.T_h; ++t) wsum += static_cast<double>(t + 1);
      for (std::size_t t = 0; t < e.T_h; ++t) {
        const double w = static_cast<double>(t + 1) / wsum;  // recency-weighted
        for (std::size_t p = 0; p < HW; ++p) {
          planes[p] += static_cast<S>(
              w * normalize_fire_code(e.data[(fire * e.T + t) * HW + p]));
          planes[HW + p] +=
              static_cast<S>(w * normalize_frp(e.data[(frp * e.T + t) * HW + p]));
        }
      }
    } else {  // firesum: peak fire code and mean FRP over history
      const std::size_t fire = e.channel("active_fire"), frp = e.channel("frp");
      for (std::size_t t = 0; t < e.T_h; ++t)
        for (std::size_t p = 0; p < HW; ++p) {
          planes[p] = std::max(planes[p], static_cast<S>(normalize_fire_code(
                                              e.data[(fire * e.T + t) * HW + p])));
          planes[HW + p] += static_cast<S>(normalize_frp(e.data[(frp * e.T + t) * HW + p]) /
                                           static_cast<double>(e.T_h));
        }
    }
    return planes;
  }
};

using NetworkF = Network<float>;
using NetworkD = Network<double>;

}  // namespace fireset
