#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "polaris/common.hpp"
#include "polaris/workload.hpp"

namespace polaris {

// Per-access energies (pJ/byte for storage, pJ/MAC for compute), boundary
// bandwidths (elements/cycle) and DMA shape parameters. Loadable from a JSON
// config; defaults below.
struct CostModelConstants {
  double e_dram = 128.0;
  double e_l2 = 16.0;
  double e_spad = 4.0;
  double e_acc = 2.0;
  double e_mac = 0.5;
  double bw_dram = 4.0;
  double bw_l2 = 8.0;
  double bw_spad = 16.0;
  double dma_setup_cycles = 64.0;
  double dma_bytes_per_cycle = 8.0;

  nlohmann::json to_json() const {
    return {{"e_dram", e_dram},     {"e_l2", e_l2},
            {"e_spad", e_spad},     {"e_acc", e_acc},
            {"e_mac", e_mac},       {"bw_dram", bw_dram},
            {"bw_l2", bw_l2},       {"bw_spad", bw_spad},
            {"dma_setup_cycles", dma_setup_cycles},
            {"dma_bytes_per_cycle", dma_bytes_per_cycle}};
  }

  static CostModelConstants from_json(const nlohmann::json& j) {
    CostModelConstants c;
    c.e_dram = j.value("e_dram", c.e_dram);
    c.e_l2 = j.value("e_l2", c.e_l2);
    c.e_spad = j.value("e_spad", c.e_spad);
    c.e_acc = j.value("e_acc", c.e_acc);
    c.e_mac = j.value("e_mac", c.e_mac);
    c.bw_dram = j.value("bw_dram", c.bw_dram);
    c.bw_l2 = j.value("bw_l2", c.bw_l2);
    c.bw_spad = j.value("bw_spad", c.bw_spad);
    c.dma_setup_cycles = j.value("dma_setup_cycles", c.dma_setup_cycles);
    c.dma_bytes_per_cycle = j.value("dma_bytes_per_cycle", c.dma_bytes_per_cycle);
    for (double v : {c.e_dram, c.e_l2, c.e_spad, c.e_acc, c.e_mac, c.bw_dram, c.bw_l2, c.bw_spad,
                     c.dma_setup_cycles, c.dma_bytes_per_cycle})
      check_arg(v >= 0.0 && std::isfinite(v), "CostModelConstants: negative or non-finite value");
    for (double v : {c.bw_dram, c.bw_l2, c.bw_spad, c.dma_bytes_per_cycle})
      check_arg(v > 0.0, "CostModelConstants: bandwidth must be positive");
    return c;
  }

  std::string config_hash() const { return hash_hex(fnv1a64(to_json().dump())); }
};

using FetchCounts = std::array<std::array<std::int64_t, kNumTensors>, kNumLevels>;

namespace detail {

// The flattened loop nest above storage level `level`: levels 2 down to
// level+1, each contributing its 7 loops in loop_order (outermost first).
// fetches(T, level) is the number of runs of constant level-`level` tile id
// of T across those iterations: the product of all trip counts divided by
// the trips of the maximal innermost suffix containing no loop that both
// indexes T and iterates more than once.
inline std::int64_t fetch_count(Tensor t, const SwMapping& sw, int level) {
  std::int64_t total = 1;
  std::int64_t suffix = 1;
  bool blocked = false;
  // Walk from the innermost loop of level+1 outward to the outermost of
  // level 2, accumulating the reusable suffix until a T-indexing loop with
  // trips > 1 is found.
  for (int l = level + 1; l < kNumLevels; ++l) {
    for (int pos = kNumDims - 1; pos >= 0; --pos) {
      const int dim = sw.loop_order[pos];
      const std::int64_t trips = sw.tiling[l][dim];
      total *= trips;
      if (!blocked) {
        if (trips > 1 && tensor_uses_dim(t, dim)) {
          blocked = true;
        } else {
          suffix *= trips;
        }
      }
    }
  }
  return total / suffix;
}

}  // namespace detail

// Tile-load counts into each storage level, per tensor. Level 2 is the cold
// whole-tensor load from DRAM and is always 1.
inline FetchCounts access_counts(const DesignPoint& dp) {
  check_arg(validate_mapping(dp.sw, dp.layer), "access_counts: invalid mapping");
  FetchCounts fetches{};
  for (int l = 0; l < kNumLevels; ++l)
    for (int t = 0; t < kNumTensors; ++t)
      fetches[l][t] = detail::fetch_count(static_cast<Tensor>(t), dp.sw, l);
  return fetches;
}

struct CostBreakdown {
  double energy_pj = 0.0;
  double delay_cycles = 0.0;
  double edp = 0.0;  // pJ * cycles
  double compute_cycles = 0.0;
  std::int64_t macs = 0;
  // Element traffic into each level (fetch count x tile elements).
  std::array<std::array<double, kNumTensors>, kNumLevels> per_level_accesses{};
};

inline double spatial_lanes(const DesignPoint& dp) {
  const std::int64_t c0 = dp.sw.tiling[0][kDimC];
  const std::int64_t k0 = dp.sw.tiling[0][kDimK];
  const std::int64_t a = dp.hw.array_dim;
  return static_cast<double>(std::min(c0, a) * std::min(k0, a));
}

inline CostBreakdown evaluate_low(const DesignPoint& dp,
                                  const CostModelConstants& c = CostModelConstants{}) {
  dp.layer.validate();
  validate_hw(dp.hw);
  check_arg(validate_mapping(dp.sw, dp.layer), "evaluate_low: invalid mapping");
  check_arg(validate_fit(dp), "evaluate_low: mapping does not fit the hardware");

  const auto fetches = access_counts(dp);
  CostBreakdown out;
  out.macs = dp.layer.macs();

  // Energy per level charges the storage that serves the fetch: cold tensor
  // footprints stream from DRAM, scratchpad refills are served by the L2,
  // inner tiles by the scratchpad, and resident output tiles by the
  // accumulator.
  const double level_energy[kNumLevels][kNumTensors] = {
      {c.e_spad, c.e_spad, c.e_acc},  // level 0: W, I from spad; O in accumulator
      {c.e_l2, c.e_l2, c.e_l2},
      {c.e_dram, c.e_dram, c.e_dram},
  };
  double energy = static_cast<double>(out.macs) * c.e_mac;
  double traffic[kNumLevels] = {0.0, 0.0, 0.0};
  for (int l = 0; l < kNumLevels; ++l) {
    for (int t = 0; t < kNumTensors; ++t) {
      const double elems = static_cast<double>(fetches[l][t]) *
                           static_cast<double>(tile_elems(static_cast<Tensor>(t), dp.sw, dp.layer, l));
      out.per_level_accesses[l][t] = elems;
      traffic[l] += elems;
      energy += elems * kElementBytes * level_energy[l][t];
    }
  }
  out.energy_pj = energy;

  out.compute_cycles = static_cast<double>(out.macs) / spatial_lanes(dp);
  const double bw[kNumLevels] = {c.bw_spad, c.bw_l2, c.bw_dram};
  double delay = out.compute_cycles;
  for (int l = 0; l < kNumLevels; ++l) delay = std::max(delay, traffic[l] / bw[l]);
  out.delay_cycles = delay;
  out.edp = out.energy_pj * out.delay_cycles;
  return out;
}

}  // namespace polaris
