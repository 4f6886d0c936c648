// Quasi-random sampling of the co-design space and dataset collection.
//
// A Sobol point in [0,1)^40 is folded onto the discrete lattice: hardware
// slots index the sorted choice lists, loop-order slots decode a permutation
// one remaining-dimension pick at a time, and tiling slots walk a divisor
// chain (level 0, then level 1 out of what remains, level 2 is the
// remainder) so the per-dimension product is exact by construction.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "polaris/common.hpp"
#include "polaris/cost_model.hpp"
#include "polaris/simulator.hpp"
#include "polaris/sobol.hpp"
#include "polaris/workload.hpp"

namespace polaris {

enum class Fidelity { kLow, kHigh };

inline const char* fidelity_name(Fidelity f) { return f == Fidelity::kLow ? "low" : "high"; }

namespace detail {

// Index into a list of m choices; u = 0 picks the first, u -> 1 the last.
inline std::size_t lattice_index(double u, std::size_t m) {
  const auto i = static_cast<std::int64_t>(u * static_cast<double>(m));
  return static_cast<std::size_t>(std::clamp<std::int64_t>(i, 0, static_cast<std::int64_t>(m) - 1));
}

}  // namespace detail

inline HwConfig map_hw(const double* u) {
  const auto& arr = array_dim_choices();
  const auto& mem = mem_kb_choices();
  HwConfig hw;
  hw.array_dim = arr[detail::lattice_index(u[0], arr.size())];
  hw.acc_kb = mem[detail::lattice_index(u[1], mem.size())];
  hw.spad_kb = mem[detail::lattice_index(u[2], mem.size())];
  return hw;
}

// Consumes 28 coordinates: 7 loop-order picks and 3 tiling slots per
// dimension (the level-2 slot is determined by the other two and ignored).
inline SwMapping map_mapping(const double* u, const LayerShape& layer) {
  SwMapping sw;
  std::vector<int> remaining(kNumDims);
  std::iota(remaining.begin(), remaining.end(), 0);
  for (int pos = 0; pos < kNumDims; ++pos) {
    const auto pick = detail::lattice_index(u[pos], remaining.size());
    sw.loop_order[pos] = remaining[pick];
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  for (int d = 0; d < kNumDims; ++d) {
    const std::int64_t dim = layer.dim(d);
    const auto div0 = divisor_list(dim);
    const std::int64_t t0 = div0[detail::lattice_index(u[kNumDims + 3 * d], div0.size())];
    const auto div1 = divisor_list(dim / t0);
    const std::int64_t t1 = div1[detail::lattice_index(u[kNumDims + 3 * d + 1], div1.size())];
    sw.tiling[0][d] = t0;
    sw.tiling[1][d] = t1;
    sw.tiling[2][d] = dim / (t0 * t1);
  }
  return sw;
}

inline DesignPoint lattice_map(const std::vector<double>& u, const LayerShape& layer) {
  check_arg(u.size() >= 31, "lattice_map: point needs at least 31 coordinates");
  for (double v : u) check_arg(v >= 0.0 && v < 1.0, "lattice_map: coordinates must be in [0,1)");
  DesignPoint dp;
  dp.layer = layer;
  dp.hw = map_hw(u.data());
  dp.sw = map_mapping(u.data() + 3, layer);
  check(validate_mapping(dp.sw, dp.layer), "lattice_map: produced invalid mapping");
  return dp;
}

struct EdpSample {
  FeatureVector features{};
  DesignPoint design;
  double energy_pj = 0.0;
  double delay_cycles = 0.0;
  double edp = 0.0;
  Fidelity fidelity = Fidelity::kLow;
  double target = 0.0;  // standardized log10(edp), filled by standardize_targets
};

// Deterministic shuffled 80/20 split.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::size_t n, std::uint64_t seed) {
  check_arg(n >= 2, "split_indices: need at least two samples");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = make_rng(seed, /*stream=*/1);
  for (std::size_t i = n - 1; i > 0; --i)
    std::swap(order[i], order[rng() % (i + 1)]);
  const auto n_train = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(n)));
  std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  return {std::move(train), std::move(test)};
}

struct Dataset {
  std::vector<EdpSample> samples;
  std::array<std::array<double, 2>, kFeatureDim> scaler_state{};  // per-slot [lo, hi]
  std::uint64_t seed = 0;
  std::uint64_t split_seed = 0;
  std::string oracle_id = "low";
  std::string cost_model_hash;
  std::int64_t redraws = 0;
  double target_mean = 0.0;
  double target_sd = 1.0;
  bool standardized = false;

  std::vector<std::size_t> train_indices() const { return split_indices(samples.size(), split_seed).first; }
  std::vector<std::size_t> test_indices() const { return split_indices(samples.size(), split_seed).second; }

  // Fits mean/sd of log10(edp) on the training split only and fills every
  // sample's target. All samples must share one fidelity tag.
  void standardize_targets() {
    check_arg(!samples.empty(), "standardize_targets: empty dataset");
    for (const auto& s : samples)
      check_arg(s.fidelity == samples.front().fidelity,
                "standardize_targets: mixed fidelities in one target column");
    const auto train = train_indices();
    double mean = 0.0;
    for (auto i : train) mean += std::log10(samples[i].edp);
    mean /= static_cast<double>(train.size());
    double var = 0.0;
    for (auto i : train) {
      const double d = std::log10(samples[i].edp) - mean;
      var += d * d;
    }
    var /= static_cast<double>(train.size());
    target_mean = mean;
    target_sd = var > 0.0 ? std::sqrt(var) : 1.0;
    for (auto& s : samples) s.target = (std::log10(s.edp) - target_mean) / target_sd;
    standardized = true;
  }

  double to_target(double edp) const { return (std::log10(edp) - target_mean) / target_sd; }
  double from_target(double t) const { return std::pow(10.0, t * target_sd + target_mean); }
};

namespace detail {

inline std::array<std::array<double, 2>, kFeatureDim> feature_bounds() {
  std::array<std::array<double, 2>, kFeatureDim> b{};
  b[0] = {4.0, 32.0};
  b[1] = {8.0, 256.0};
  b[2] = {8.0, 256.0};
  for (int i = 3; i < 10; ++i) b[i] = {0.0, 6.0};
  for (int i = 10; i < 31; ++i) b[i] = {0.0, 1.0};  // log2 ratio, already unit
  for (int i = 31; i < 38; ++i) b[i] = {1.0, static_cast<double>(kLayerDimMax)};
  b[38] = {1.0, 4.0};
  b[39] = {1.0, 4.0};
  return b;
}

inline nlohmann::json sample_to_json(const EdpSample& s) {
  nlohmann::json j;
  j["features"] = s.features;
  j["layer"] = layer_to_json(s.design.layer);
  j["hw"] = {s.design.hw.array_dim, s.design.hw.acc_kb, s.design.hw.spad_kb};
  j["loop_order"] = s.design.sw.loop_order;
  j["tiling"] = s.design.sw.tiling;
  j["energy_pj"] = s.energy_pj;
  j["delay_cycles"] = s.delay_cycles;
  j["edp"] = s.edp;
  j["fidelity"] = fidelity_name(s.fidelity);
  j["target"] = s.target;
  return j;
}

inline EdpSample sample_from_json(const nlohmann::json& j) {
  EdpSample s;
  const auto& f = j.at("features");
  check_arg(f.size() == kFeatureDim, "sample_from_json: bad feature width");
  for (int i = 0; i < kFeatureDim; ++i) s.features[i] = f[i].get<double>();
  s.design.layer = layer_from_json(j.at("layer"));
  s.design.hw = {j.at("hw")[0].get<int>(), j.at("hw")[1].get<int>(), j.at("hw")[2].get<int>()};
  for (int i = 0; i < kNumDims; ++i) s.design.sw.loop_order[i] = j.at("loop_order")[i].get<int>();
  for (int l = 0; l < kNumLevels; ++l)
    for (int d = 0; d < kNumDims; ++d) s.design.sw.tiling[l][d] = j.at("tiling")[l][d].get<std::int64_t>();
  s.energy_pj = j.at("energy_pj").get<double>();
  s.delay_cycles = j.at("delay_cycles").get<double>();
  s.edp = j.at("edp").get<double>();
  s.fidelity = j.at("fidelity").get<std::string>() == "high" ? Fidelity::kHigh : Fidelity::kLow;
  s.target = j.at("target").get<double>();
  return s;
}

}  // namespace detail

using OracleFn = std::function<CostBreakdown(const DesignPoint&)>;

// Draws n feasible points (round-robin over layers from one shared Sobol
// stream, infeasible draws rejected and redrawn) and evaluates them.
inline Dataset collect_dataset(const OracleFn& oracle, const std::string& oracle_id,
                               const std::vector<LayerShape>& layers, std::size_t n,
                               std::uint64_t seed, const CostModelConstants& constants = {},
                               int jobs = 1) {
  check_arg(n >= 1, "collect_dataset: n must be positive");
  check_arg(!layers.empty(), "collect_dataset: no layers");

  Dataset ds;
  ds.seed = seed;
  ds.split_seed = seed;
  ds.oracle_id = oracle_id;
  ds.cost_model_hash = constants.config_hash();
  ds.scaler_state = detail::feature_bounds();
  ds.samples.resize(n);

  SobolSequence sobol(kFeatureDim);
  std::vector<double> u(kFeatureDim);
  for (std::size_t i = 0; i < n; ++i) {
    const LayerShape& layer = layers[i % layers.size()];
    DesignPoint dp;
    for (;;) {
      sobol.next_into(u.data());
      dp = lattice_map(u, layer);
      if (validate_fit(dp)) break;
      ++ds.redraws;
    }
    ds.samples[i].design = dp;
    ds.samples[i].features = encode_features(dp);
  }

  std::string failure;
  parallel_for(jobs, n, [&](std::size_t i) {
    auto& s = ds.samples[i];
    try {
      const CostBreakdown cost = oracle(s.design);
      s.energy_pj = cost.energy_pj;
      s.delay_cycles = cost.delay_cycles;
      s.edp = cost.edp;
      s.fidelity = oracle_id == "high" ? Fidelity::kHigh : Fidelity::kLow;
    } catch (const std::exception& e) {
      if (failure.empty())
        failure = "collect_dataset: oracle failed at sample " + std::to_string(i) + ": " + e.what();
    }
  });
  check(failure.empty(), failure);
  return ds;
}

inline Dataset collect_dataset(Fidelity fidelity, const std::vector<LayerShape>& layers,
                               std::size_t n, std::uint64_t seed,
                               const CostModelConstants& constants = {}, int jobs = 1) {
  OracleFn fn = fidelity == Fidelity::kLow
                    ? OracleFn([constants](const DesignPoint& dp) { return evaluate_low(dp, constants); })
                    : OracleFn([constants](const DesignPoint& dp) { return evaluate_high(dp, constants); });
  return collect_dataset(fn, fidelity_name(fidelity), layers, n, seed, constants, jobs);
}

// JSON-lines persistence: one header line, then one sample per line.
inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  check(out.good(), "save_dataset: cannot open " + path);
  nlohmann::json header;
  header["format"] = "polaris-dataset-v1";
  header["n"] = ds.samples.size();
  header["seed"] = ds.seed;
  header["split_seed"] = ds.split_seed;
  header["oracle"] = ds.oracle_id;
  header["cost_model_hash"] = ds.cost_model_hash;
  header["scaler_state"] = ds.scaler_state;
  header["redraws"] = ds.redraws;
  header["target_mean"] = ds.target_mean;
  header["target_sd"] = ds.target_sd;
  header["standardized"] = ds.standardized;
  out << header.dump() << "\n";
  for (const auto& s : ds.samples) out << detail::sample_to_json(s).dump() << "\n";
  check(out.good(), "save_dataset: write failed for " + path);
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "load_dataset: cannot open " + path);
  std::string line;
  check(static_cast<bool>(std::getline(in, line)), "load_dataset: empty file " + path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("load_dataset: bad header in " + path + ": " + e.what());
  }
  check(header.value("format", "") == "polaris-dataset-v1",
        "load_dataset: unrecognized format in " + path);
  Dataset ds;
  ds.seed = header.at("seed").get<std::uint64_t>();
  ds.split_seed = header.at("split_seed").get<std::uint64_t>();
  ds.oracle_id = header.at("oracle").get<std::string>();
  ds.cost_model_hash = header.at("cost_model_hash").get<std::string>();
  for (int i = 0; i < kFeatureDim; ++i) {
    ds.scaler_state[i][0] = header.at("scaler_state")[i][0].get<double>();
    ds.scaler_state[i][1] = header.at("scaler_state")[i][1].get<double>();
  }
  ds.redraws = header.at("redraws").get<std::int64_t>();
  ds.target_mean = header.at("target_mean").get<double>();
  ds.target_sd = header.at("target_sd").get<double>();
  ds.standardized = header.at("standardized").get<bool>();
  const auto n = header.at("n").get<std::size_t>();
  ds.samples.reserve(n);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      ds.samples.push_back(detail::sample_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("load_dataset: bad sample line in " + path + ": " + e.what());
    }
  }
  check(ds.samples.size() == n, "load_dataset: sample count mismatch in " + path);
  return ds;
}

}  // namespace polaris
