// The Polaris loop: an outer search over the enumerated hardware space and an
// inner per-layer software search, both driven by a UCB acquisition over the
// surrogate, with every selected candidate evaluated at high fidelity and fed
// back into the model.
//
// A hardware config alone is not a model input, so each config is scored by
// pairing it with a fixed number of Sobol-drawn feasible mappings per layer,
// taking the best UCB per layer and summing across layers. Scoring all 8192
// configs exactly would be quadratic in the training-set size, so a first
// pass computes means only and ranks configs by the bound
// sum_l max(-mean) + L * beta * max_sd; configs are then rescored exactly in
// bound order until the bound falls below the best exact score. The result is
// identical to exhaustive exact scoring.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "polaris/common.hpp"
#include "polaris/sampling.hpp"
#include "polaris/starlight.hpp"

namespace polaris {

struct BoConfig {
  int n_outer = 8;
  int m_inner = 6;
  int sw_pool_size = 10000;
  double beta = 2.0;
  std::uint64_t seed = 0;
  std::optional<HwConfig> fix_hw;
  int m_inner_fixed_hw = 20;
  int hw_probe_count = 64;  // Sobol mappings per layer when scoring a HW config
  int refit_steps = 50;     // surrogate refit budget after each observation

  void validate() const {
    check_arg(n_outer >= 1 && m_inner >= 1 && sw_pool_size >= 1 && m_inner_fixed_hw >= 1 &&
                  hw_probe_count >= 1,
              "BoConfig: all counts must be >= 1");
    check_arg(refit_steps >= 0, "BoConfig: negative refit_steps");
    check_arg(beta >= 0.0, "BoConfig: beta must be >= 0");
    if (fix_hw) validate_hw(*fix_hw);
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"n_outer", n_outer},
                     {"m_inner", m_inner},
                     {"sw_pool_size", sw_pool_size},
                     {"beta", beta},
                     {"seed", seed},
                     {"m_inner_fixed_hw", m_inner_fixed_hw},
                     {"hw_probe_count", hw_probe_count},
                     {"refit_steps", refit_steps}};
    if (fix_hw)
      j["fix_hw"] = {fix_hw->array_dim, fix_hw->acc_kb, fix_hw->spad_kb};
    else
      j["fix_hw"] = nullptr;
    return j;
  }
  static BoConfig from_json(const nlohmann::json& j) {
    BoConfig c;
    c.n_outer = j.at("n_outer").get<int>();
    c.m_inner = j.at("m_inner").get<int>();
    c.sw_pool_size = j.at("sw_pool_size").get<int>();
    c.beta = j.at("beta").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.m_inner_fixed_hw = j.at("m_inner_fixed_hw").get<int>();
    c.hw_probe_count = j.at("hw_probe_count").get<int>();
    c.refit_steps = j.at("refit_steps").get<int>();
    if (!j.at("fix_hw").is_null())
      c.fix_hw = HwConfig{j.at("fix_hw")[0].get<int>(), j.at("fix_hw")[1].get<int>(),
                          j.at("fix_hw")[2].get<int>()};
    return c;
  }
};

// Maximized acquisition over standardized log-EDP predictions (lower is
// better, hence the negated mean).
inline double ucb_score(double mean, double std_dev, double beta) {
  check_arg(std_dev >= 0.0, "ucb_score: negative std");
  check_arg(beta >= 0.0, "ucb_score: negative beta");
  return -mean + beta * std_dev;
}

namespace detail {

// Largest divisor of dim that is <= array_dim: the utilization-maximizing
// spatial unroll. Equals min(dim, array_dim) whenever that divides dim.
inline std::int64_t utilization_factor(std::int64_t dim, int array_dim) {
  const auto divs = divisor_list(dim);
  std::int64_t best = 1;
  for (std::int64_t d : divs)
    if (d <= array_dim) best = d;
  return best;
}

// Like map_mapping but with the level-0 C and K factors pinned to the
// utilization-maximizing unroll for the given array. Consumes the same 28
// coordinates; the level-0 slots of C and K are ignored.
inline SwMapping map_mapping_constrained(const double* u, const LayerShape& layer,
                                         int array_dim) {
  SwMapping sw;
  std::vector<int> remaining(kNumDims);
  std::iota(remaining.begin(), remaining.end(), 0);
  for (int pos = 0; pos < kNumDims; ++pos) {
    const auto pick = lattice_index(u[pos], remaining.size());
    sw.loop_order[pos] = remaining[pick];
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  for (int d = 0; d < kNumDims; ++d) {
    const std::int64_t dim = layer.dim(d);
    std::int64_t t0;
    if (d == kDimC || d == kDimK) {
      t0 = utilization_factor(dim, array_dim);
    } else {
      const auto div0 = divisor_list(dim);
      t0 = div0[lattice_index(u[kNumDims + 3 * d], div0.size())];
    }
    const auto div1 = divisor_list(dim / t0);
    const std::int64_t t1 = div1[lattice_index(u[kNumDims + 3 * d + 1], div1.size())];
    sw.tiling[0][d] = t0;
    sw.tiling[1][d] = t1;
    sw.tiling[2][d] = dim / (t0 * t1);
  }
  return sw;
}

inline std::uint64_t mapping_key(const SwMapping& sw) {
  std::int64_t buf[kNumDims * (kNumLevels + 1)];
  for (int i = 0; i < kNumDims; ++i) buf[i] = sw.loop_order[i];
  for (int l = 0; l < kNumLevels; ++l)
    for (int d = 0; d < kNumDims; ++d) buf[kNumDims * (l + 1) + d] = sw.tiling[l][d];
  return fnv1a64(buf, sizeof(buf));
}

// Up to `count` unique feasible mappings, Sobol-drawn starting at `skip`.
inline std::vector<SwMapping> generate_sw_candidates_at(const HwConfig& hw,
                                                        const LayerShape& layer, int count,
                                                        std::uint64_t skip) {
  check_arg(count >= 1, "generate_sw_candidates: count must be >= 1");
  SobolSequence seq(28);
  seq.seek(skip);
  const std::int64_t attempts =
      std::max<std::int64_t>(std::int64_t{16} * count, 4096);
  std::vector<SwMapping> out;
  out.reserve(static_cast<std::size_t>(count));
  std::unordered_set<std::uint64_t> seen;
  double u[28];
  for (std::int64_t a = 0; a < attempts && std::cmp_less(out.size(), count); ++a) {
    seq.next_into(u);
    SwMapping sw = map_mapping_constrained(u, layer, hw.array_dim);
    if (!validate_fit(hw, sw, layer)) continue;
    if (!seen.insert(mapping_key(sw)).second) continue;
    out.push_back(sw);
  }
  return out;
}

inline void fill_features(const HwConfig& hw, const LayerShape& layer,
                          const std::vector<SwMapping>& sws, nn::Matrix& dst,
                          Eigen::Index col0) {
  DesignPoint dp;
  dp.hw = hw;
  dp.layer = layer;
  for (std::size_t i = 0; i < sws.size(); ++i) {
    dp.sw = sws[i];
    const FeatureVector fv = encode_features(dp);
    for (int r = 0; r < kFeatureDim; ++r) dst(r, col0 + static_cast<Eigen::Index>(i)) = fv[r];
  }
}

inline nn::Matrix features_matrix(const HwConfig& hw, const LayerShape& layer,
                                  const std::vector<SwMapping>& sws) {
  nn::Matrix f(kFeatureDim, static_cast<Eigen::Index>(sws.size()));
  fill_features(hw, layer, sws, f, 0);
  return f;
}

// Minimal surrogate interface the loop needs: batched prediction in a
// standardized target space (std output optional), an upper bound on the
// predictive std, and an observation hook.
struct SurrogateApi {
  std::function<void(const nn::Matrix&, gp::Vector*, gp::Vector*)> predict;
  std::function<double()> max_sd;
  std::function<void(const EdpSample&, int)> observe;
};

inline SurrogateApi starlight_api(StarlightModel& m) {
  SurrogateApi api;
  api.predict = [&m](const nn::Matrix& f, gp::Vector* mean, gp::Vector* sd) {
    predict(m, f, mean, sd);
  };
  api.max_sd = [&m] { return std::sqrt(m.gp.params.outputscale()); };
  api.observe = [&m](const EdpSample& s, int refit_steps) { update(m, {s}, refit_steps); };
  return api;
}

struct HwChoice {
  HwConfig hw;
  double score = 0.0;
};

inline HwChoice select_hw_candidate_api(const SurrogateApi& api,
                                        const std::vector<LayerShape>& layers, Rng& rng,
                                        const std::set<HwConfig>& exclude,
                                        const BoConfig& cfg) {
  check_arg(!layers.empty(), "select_hw_candidate: empty layer list");
  const auto hw_space = enumerate_hw_space();
  const std::size_t n_hw = hw_space.size();
  const std::size_t n_layers = layers.size();
  const int probe = cfg.hw_probe_count;
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();

  // Pre-draw all Sobol offsets so stream consumption does not depend on how
  // far the exact-rescore pass gets.
  std::vector<std::uint64_t> skips(n_hw * n_layers);
  for (auto& s : skips) s = rng() % 65536;

  const double slack = static_cast<double>(n_layers) * cfg.beta * api.max_sd();

  // Pass 1: mean-only bounds, batched over chunks of configs.
  std::vector<double> bound(n_hw, kNegInf);
  constexpr std::size_t kChunk = 16;
  std::vector<SwMapping> cands;
  for (std::size_t c0 = 0; c0 < n_hw; c0 += kChunk) {
    const std::size_t c1 = std::min(c0 + kChunk, n_hw);
    std::vector<std::vector<SwMapping>> chunk_cands;
    std::size_t total = 0;
    for (std::size_t i = c0; i < c1; ++i) {
      for (std::size_t l = 0; l < n_layers; ++l) {
        chunk_cands.push_back(exclude.contains(hw_space[i])
                                  ? std::vector<SwMapping>{}
                                  : generate_sw_candidates_at(hw_space[i], layers[l], probe,
                                                              skips[i * n_layers + l]));
        total += chunk_cands.back().size();
      }
    }
    if (total == 0) continue;
    nn::Matrix f(kFeatureDim, static_cast<Eigen::Index>(total));
    Eigen::Index col = 0;
    for (std::size_t i = c0; i < c1; ++i)
      for (std::size_t l = 0; l < n_layers; ++l) {
        const auto& cs = chunk_cands[(i - c0) * n_layers + l];
        fill_features(hw_space[i], layers[l], cs, f, col);
        col += static_cast<Eigen::Index>(cs.size());
      }
    gp::Vector mean;
    api.predict(f, &mean, nullptr);
    col = 0;
    for (std::size_t i = c0; i < c1; ++i) {
      double b = 0.0;
      bool feasible = !exclude.contains(hw_space[i]);
      for (std::size_t l = 0; l < n_layers; ++l) {
        const auto& cs = chunk_cands[(i - c0) * n_layers + l];
        if (cs.empty()) {
          feasible = false;
        } else {
          b += -mean.segment(col, static_cast<Eigen::Index>(cs.size())).minCoeff();
        }
        col += static_cast<Eigen::Index>(cs.size());
      }
      if (feasible) bound[i] = b + slack;
    }
  }

  // Pass 2: exact rescore in bound order until the bound can no longer win.
  std::vector<std::size_t> order(n_hw);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return bound[a] != bound[b] ? bound[a] > bound[b] : a < b;
  });

  std::ptrdiff_t best = -1;
  double best_score = kNegInf;
  for (std::size_t idx : order) {
    if (bound[idx] == kNegInf) break;
    if (best >= 0 && bound[idx] <= best_score) break;
    double score = 0.0;
    bool feasible = true;
    for (std::size_t l = 0; l < n_layers && feasible; ++l) {
      cands = generate_sw_candidates_at(hw_space[idx], layers[l], probe,
                                        skips[idx * n_layers + l]);
      if (cands.empty()) {
        feasible = false;
        break;
      }
      const nn::Matrix f = features_matrix(hw_space[idx], layers[l], cands);
      gp::Vector mean, sd;
      api.predict(f, &mean, &sd);
      double layer_best = kNegInf;
      for (Eigen::Index j = 0; j < mean.size(); ++j)
        layer_best = std::max(layer_best, ucb_score(mean(j), sd(j), cfg.beta));
      score += layer_best;
    }
    if (feasible && score > best_score) {
      best_score = score;
      best = static_cast<std::ptrdiff_t>(idx);
    }
  }
  check(best >= 0, "select_hw_candidate: hardware space exhausted");
  return {hw_space[static_cast<std::size_t>(best)], best_score};
}

}  // namespace detail

// Sobol-drawn feasible mappings for one (hw, layer) pair. The rng supplies
// only the stream offset, so a call consumes exactly one draw. May return
// fewer than `count` when the feasible lattice is smaller than requested.
inline std::vector<SwMapping> generate_sw_candidates(const HwConfig& hw, const LayerShape& layer,
                                                     int count, Rng& rng) {
  const std::uint64_t skip = rng() % 65536;
  auto out = detail::generate_sw_candidates_at(hw, layer, count, skip);
  if (std::cmp_less(out.size(), count))
    std::cerr << "polaris: sw candidate lattice exhausted (" << out.size() << " of " << count
              << " requested)\n";
  return out;
}

inline HwConfig select_hw_candidate(const StarlightModel& model,
                                    const std::vector<LayerShape>& layers, Rng& rng,
                                    const std::set<HwConfig>& exclude,
                                    const BoConfig& cfg = {}) {
  auto api = detail::starlight_api(const_cast<StarlightModel&>(model));
  api.observe = nullptr;  // scoring never mutates the model
  return detail::select_hw_candidate_api(api, layers, rng, exclude, cfg).hw;
}

struct EvalRecord {
  SwMapping sw;
  CostBreakdown cost;
  double acq = 0.0;
};

struct LayerOutcome {
  int layer_index = 0;
  HwConfig hw;
  std::vector<EvalRecord> evals;
  std::size_t best_eval = 0;

  const EvalRecord& best() const {
    check(best_eval < evals.size(), "LayerOutcome: empty outcome");
    return evals[best_eval];
  }
};

namespace detail {

inline EdpSample make_high_sample(const DesignPoint& dp, const CostBreakdown& cb) {
  EdpSample s;
  s.features = encode_features(dp);
  s.design = dp;
  s.energy_pj = cb.energy_pj;
  s.delay_cycles = cb.delay_cycles;
  s.edp = cb.edp;
  s.fidelity = Fidelity::kHigh;
  return s;
}

// One inner software-DSE loop: draw a pool, take the acquisition argmax,
// evaluate it at high fidelity, feed the result back. The first
// `random_warmup` iterations pick uniformly instead of by acquisition.
inline LayerOutcome optimize_layer_api(const SurrogateApi& api, const HwConfig& hw,
                                       const LayerShape& layer, int layer_index, int m, int pool,
                                       Rng& rng, const BoConfig& cfg,
                                       const CostModelConstants& constants,
                                       int random_warmup = 0) {
  check_arg(m >= 1 && pool >= 1, "optimize_layer: m and pool must be >= 1");
  LayerOutcome out;
  out.layer_index = layer_index;
  out.hw = hw;
  for (int k = 0; k < m; ++k) {
    auto cands = generate_sw_candidates(hw, layer, pool, rng);
    if (cands.empty())
      throw std::runtime_error("optimize_layer: no feasible mapping for layer " +
                               std::to_string(layer_index));
    std::size_t pick = 0;
    double acq = 0.0;
    if (k < random_warmup) {
      pick = static_cast<std::size_t>(rng() % cands.size());
    } else {
      const nn::Matrix f = features_matrix(hw, layer, cands);
      gp::Vector mean, sd;
      api.predict(f, &mean, &sd);
      double best = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < mean.size(); ++j) {
        const double u = ucb_score(mean(j), sd(j), cfg.beta);
        if (u > best) {
          best = u;
          pick = static_cast<std::size_t>(j);
        }
      }
      acq = best;
    }
    DesignPoint dp{hw, cands[pick], layer};
    const CostBreakdown cb = evaluate_high(dp, constants);
    api.observe(make_high_sample(dp, cb), cfg.refit_steps);
    out.evals.push_back({cands[pick], cb, acq});
    if (cb.edp < out.evals[out.best_eval].cost.edp) out.best_eval = out.evals.size() - 1;
  }
  return out;
}

}  // namespace detail

inline LayerOutcome optimize_layer(StarlightModel& model, const HwConfig& hw,
                                   const LayerShape& layer, int m, int pool, Rng& rng,
                                   const BoConfig& cfg = {},
                                   const CostModelConstants& constants = {}) {
  return detail::optimize_layer_api(detail::starlight_api(model), hw, layer, /*layer_index=*/0, m,
                                    pool, rng, cfg, constants);
}

struct RunRecord {
  int iteration = 0;
  HwConfig hw;
  double acquisition = 0.0;
  std::vector<LayerOutcome> layers;
  double total_edp = 0.0;
  double cumulative_min_edp = 0.0;
};

struct RunHistory {
  std::string method = "polaris";
  std::string workload_name;
  std::uint64_t seed = 0;
  BoConfig config;
  std::string workload_hash;
  std::string cost_model_hash;
  std::vector<RunRecord> records;
  std::int64_t n_high_evals = 0;

  double final_edp() const {
    check(!records.empty(), "RunHistory: empty history");
    return records.back().cumulative_min_edp;
  }
  std::vector<double> cumulative_series() const {
    std::vector<double> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.cumulative_min_edp);
    return out;
  }
};

inline std::string workload_fingerprint(const Workload& w) {
  nlohmann::json j;
  j["name"] = w.name;
  j["layers"] = nlohmann::json::array();
  for (const auto& l : w.layers) j["layers"].push_back(layer_to_json(l));
  return hash_hex(fnv1a64(j.dump()));
}

namespace detail {

inline nlohmann::json record_to_json(const RunRecord& r) {
  nlohmann::json j;
  j["iteration"] = r.iteration;
  j["hw"] = {r.hw.array_dim, r.hw.acc_kb, r.hw.spad_kb};
  j["acquisition"] = r.acquisition;
  j["total_edp"] = r.total_edp;
  j["cumulative_min_edp"] = r.cumulative_min_edp;
  j["layers"] = nlohmann::json::array();
  for (const auto& lo : r.layers) {
    nlohmann::json lj;
    lj["layer"] = lo.layer_index;
    lj["hw"] = {lo.hw.array_dim, lo.hw.acc_kb, lo.hw.spad_kb};
    lj["best"] = lo.best_eval;
    lj["evals"] = nlohmann::json::array();
    for (const auto& e : lo.evals) {
      nlohmann::json ej;
      ej["loop_order"] = e.sw.loop_order;
      ej["tiling"] = e.sw.tiling;
      ej["energy_pj"] = e.cost.energy_pj;
      ej["delay_cycles"] = e.cost.delay_cycles;
      ej["edp"] = e.cost.edp;
      ej["compute_cycles"] = e.cost.compute_cycles;
      ej["macs"] = e.cost.macs;
      ej["acq"] = e.acq;
      lj["evals"].push_back(std::move(ej));
    }
    j["layers"].push_back(std::move(lj));
  }
  return j;
}

inline RunRecord record_from_json(const nlohmann::json& j) {
  RunRecord r;
  r.iteration = j.at("iteration").get<int>();
  r.hw = {j.at("hw")[0].get<int>(), j.at("hw")[1].get<int>(), j.at("hw")[2].get<int>()};
  r.acquisition = j.at("acquisition").get<double>();
  r.total_edp = j.at("total_edp").get<double>();
  r.cumulative_min_edp = j.at("cumulative_min_edp").get<double>();
  for (const auto& lj : j.at("layers")) {
    LayerOutcome lo;
    lo.layer_index = lj.at("layer").get<int>();
    lo.hw = {lj.at("hw")[0].get<int>(), lj.at("hw")[1].get<int>(), lj.at("hw")[2].get<int>()};
    lo.best_eval = lj.at("best").get<std::size_t>();
    for (const auto& ej : lj.at("evals")) {
      EvalRecord e;
      for (int i = 0; i < kNumDims; ++i) e.sw.loop_order[i] = ej.at("loop_order")[i].get<int>();
      for (int l = 0; l < kNumLevels; ++l)
        for (int d = 0; d < kNumDims; ++d)
          e.sw.tiling[l][d] = ej.at("tiling")[l][d].get<std::int64_t>();
      e.cost.energy_pj = ej.at("energy_pj").get<double>();
      e.cost.delay_cycles = ej.at("delay_cycles").get<double>();
      e.cost.edp = ej.at("edp").get<double>();
      e.cost.compute_cycles = ej.at("compute_cycles").get<double>();
      e.cost.macs = ej.at("macs").get<std::int64_t>();
      e.acq = ej.at("acq").get<double>();
      lo.evals.push_back(std::move(e));
    }
    check_arg(lo.best_eval < lo.evals.size(), "history: best index out of range");
    r.layers.push_back(std::move(lo));
  }
  return r;
}

inline void validate_history(const RunHistory& h) {
  double prev = std::numeric_limits<double>::infinity();
  std::int64_t evals = 0;
  for (const auto& r : h.records) {
    check_arg(r.cumulative_min_edp <= prev, "history: cumulative-min series increases");
    prev = r.cumulative_min_edp;
    check_arg(!r.layers.empty(), "history: record without layers");
    for (const auto& lo : r.layers) evals += static_cast<std::int64_t>(lo.evals.size());
  }
  check_arg(evals == h.n_high_evals, "history: evaluation count mismatch");
}

}  // namespace detail

inline void save_history(const std::string& path, const RunHistory& h) {
  detail::validate_history(h);
  std::ofstream out(path);
  check(out.good(), "save_history: cannot open " + path);
  nlohmann::json header{{"format", "polaris-history-v1"},
                        {"method", h.method},
                        {"workload", h.workload_name},
                        {"seed", h.seed},
                        {"config", h.config.to_json()},
                        {"workload_hash", h.workload_hash},
                        {"cost_model_hash", h.cost_model_hash},
                        {"n_high_evals", h.n_high_evals}};
  out << header.dump() << "\n";
  for (const auto& r : h.records) out << detail::record_to_json(r).dump() << "\n";
  check(out.good(), "save_history: write failed for " + path);
}

inline RunHistory load_history(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "load_history: cannot open " + path);
  std::string line;
  check(static_cast<bool>(std::getline(in, line)), "load_history: empty file " + path);
  const auto header = nlohmann::json::parse(line);
  check_arg(header.at("format") == "polaris-history-v1", "load_history: unknown format");
  RunHistory h;
  h.method = header.at("method").get<std::string>();
  h.workload_name = header.at("workload").get<std::string>();
  h.seed = header.at("seed").get<std::uint64_t>();
  h.config = BoConfig::from_json(header.at("config"));
  h.workload_hash = header.at("workload_hash").get<std::string>();
  h.cost_model_hash = header.at("cost_model_hash").get<std::string>();
  h.n_high_evals = header.at("n_high_evals").get<std::int64_t>();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    h.records.push_back(detail::record_from_json(nlohmann::json::parse(line)));
  }
  detail::validate_history(h);
  return h;
}

namespace detail {

// Loop-shape knobs that differ between Polaris and the online baseline.
struct LoopPolicy {
  bool random_first_hw = false;  // pick the first outer HW uniformly at random
  int sw_warmup_first_outer = 0;  // random inner picks in the first outer iteration
};

inline HwChoice random_hw_candidate(const std::vector<LayerShape>& layers, Rng& rng,
                                    const std::set<HwConfig>& exclude) {
  const auto hw_space = enumerate_hw_space();
  for (int attempt = 0; attempt < 4096; ++attempt) {
    const auto& hw = hw_space[rng() % hw_space.size()];
    if (exclude.contains(hw)) continue;
    bool ok = true;
    for (const auto& layer : layers)
      if (generate_sw_candidates_at(hw, layer, 1, rng() % 65536).empty()) {
        ok = false;
        break;
      }
    if (ok) return {hw, 0.0};
  }
  throw std::runtime_error("run: could not draw a feasible random hardware config");
}

// Replays the stored evaluations into the surrogate exactly as the live loop
// would have observed them; no oracle calls are made.
inline void replay_history(const SurrogateApi& api, const RunHistory& h,
                           const std::vector<LayerShape>& layers) {
  for (const auto& r : h.records)
    for (const auto& lo : r.layers) {
      check_arg(lo.layer_index >= 0 && std::cmp_less(lo.layer_index, layers.size()),
                "resume: layer index out of range");
      for (const auto& e : lo.evals) {
        DesignPoint dp{lo.hw, e.sw, layers[static_cast<std::size_t>(lo.layer_index)]};
        api.observe(make_high_sample(dp, e.cost), h.config.refit_steps);
      }
    }
}

inline RunHistory run_codesign_api(const SurrogateApi& api, const BoConfig& cfg,
                                   const Workload& workload, const CostModelConstants& constants,
                                   const std::string& method, const LoopPolicy& policy,
                                   const RunHistory* resume) {
  cfg.validate();
  check_arg(!workload.layers.empty(), "run: workload has no layers");
  const auto& layers = workload.layers;

  RunHistory h;
  h.method = method;
  h.workload_name = workload.name;
  h.seed = cfg.seed;
  h.config = cfg;
  h.workload_hash = workload_fingerprint(workload);
  h.cost_model_hash = constants.config_hash();
  if (resume) {
    check_arg(resume->method == method && resume->workload_hash == h.workload_hash &&
                  resume->cost_model_hash == h.cost_model_hash && resume->seed == cfg.seed &&
                  resume->config.to_json() == cfg.to_json(),
              "resume: history does not match this run configuration");
    h.records = resume->records;
    h.n_high_evals = resume->n_high_evals;
    replay_history(api, *resume, layers);
  }

  std::set<HwConfig> exclude;
  for (const auto& r : h.records) exclude.insert(r.hw);

  for (int outer = static_cast<int>(h.records.size()); outer < cfg.n_outer; ++outer) {
    auto rng = make_rng(cfg.seed, 1000 + static_cast<std::uint64_t>(outer));
    const HwChoice choice = (policy.random_first_hw && outer == 0)
                                ? random_hw_candidate(layers, rng, exclude)
                                : select_hw_candidate_api(api, layers, rng, exclude, cfg);
    exclude.insert(choice.hw);

    RunRecord rec;
    rec.iteration = outer;
    rec.hw = choice.hw;
    rec.acquisition = choice.score;
    const int warmup = outer == 0 ? policy.sw_warmup_first_outer : 0;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      try {
        rec.layers.push_back(optimize_layer_api(api, choice.hw, layers[l], static_cast<int>(l),
                                                cfg.m_inner, cfg.sw_pool_size, rng, cfg,
                                                constants, warmup));
      } catch (const std::exception& e) {
        throw std::runtime_error("run: outer " + std::to_string(outer) + ", layer " +
                                 std::to_string(l) + ": " + e.what());
      }
      h.n_high_evals += static_cast<std::int64_t>(rec.layers.back().evals.size());
      rec.total_edp += rec.layers.back().best().cost.edp;
    }
    rec.cumulative_min_edp =
        h.records.empty() ? rec.total_edp
                          : std::min(rec.total_edp, h.records.back().cumulative_min_edp);
    h.records.push_back(std::move(rec));
  }
  detail::validate_history(h);
  return h;
}

}  // namespace detail

// HW/SW co-design: n_outer hardware candidates, never repeated, each given a
// full inner software pass per layer. Pass `resume` (plus the surrogate in
// its original pre-run state) to continue an interrupted run.
inline RunHistory run_codesign(const BoConfig& cfg, const Workload& workload,
                               StarlightModel& model, const CostModelConstants& constants = {},
                               const RunHistory* resume = nullptr) {
  return detail::run_codesign_api(detail::starlight_api(model), cfg, workload, constants,
                                  "polaris", {}, resume);
}

// Software-only DSE on a fixed hardware config: m_inner_fixed_hw iterations
// per layer, one history record.
inline RunHistory run_sw_dse(const BoConfig& cfg, const Workload& workload,
                             StarlightModel& model, const CostModelConstants& constants = {}) {
  cfg.validate();
  check_arg(cfg.fix_hw.has_value(), "run_sw_dse: fix_hw is required");
  check_arg(!workload.layers.empty(), "run_sw_dse: workload has no layers");
  const auto& layers = workload.layers;
  const HwConfig hw = *cfg.fix_hw;

  std::vector<int> infeasible;
  for (std::size_t l = 0; l < layers.size(); ++l)
    if (detail::generate_sw_candidates_at(hw, layers[l], 1, 0).empty())
      infeasible.push_back(static_cast<int>(l));
  if (!infeasible.empty()) {
    std::string msg = "run_sw_dse: fix_hw infeasible for layer(s)";
    for (int l : infeasible) msg += " " + std::to_string(l);
    throw std::invalid_argument(msg);
  }

  auto api = detail::starlight_api(model);
  RunHistory h;
  h.method = "polaris-sw";
  h.workload_name = workload.name;
  h.seed = cfg.seed;
  h.config = cfg;
  h.workload_hash = workload_fingerprint(workload);
  h.cost_model_hash = constants.config_hash();

  auto rng = make_rng(cfg.seed, 1000);
  RunRecord rec;
  rec.iteration = 0;
  rec.hw = hw;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    try {
      rec.layers.push_back(detail::optimize_layer_api(api, hw, layers[l], static_cast<int>(l),
                                                      cfg.m_inner_fixed_hw, cfg.sw_pool_size,
                                                      rng, cfg, constants));
    } catch (const std::exception& e) {
      throw std::runtime_error("run_sw_dse: layer " + std::to_string(l) + ": " + e.what());
    }
    h.n_high_evals += static_cast<std::int64_t>(rec.layers.back().evals.size());
    rec.total_edp += rec.layers.back().best().cost.edp;
  }
  rec.cumulative_min_edp = rec.total_edp;
  h.records.push_back(std::move(rec));
  detail::validate_history(h);
  return h;
}

}  // namespace polaris
