#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>

#include "polaris/cost_model.hpp"
#include "polaris/workload.hpp"

namespace polaris {

struct SimTrace {
  std::int64_t delay_cycles = 0;
  std::int64_t n_tiles = 0;         // scratchpad tile visits (level-2 iterations)
  std::int64_t dma_cycles = 0;      // total DMA engine busy time
  std::int64_t compute_cycles = 0;  // total array busy time
  bool double_buffered = false;
  double overlap_fraction = 0.0;    // share of DMA time hidden under compute
};

namespace detail {

// Reuse period of tensor T across the level-2 loop odometer: T's scratchpad
// tile is re-fetched every p_T iterations, where p_T is the trip product of
// the maximal innermost suffix of DRAM-level loops that never advances T.
inline std::int64_t reuse_period(Tensor t, const SwMapping& sw) {
  std::int64_t suffix = 1;
  for (int pos = kNumDims - 1; pos >= 0; --pos) {
    const int dim = sw.loop_order[pos];
    const std::int64_t trips = sw.tiling[2][dim];
    if (trips > 1 && tensor_uses_dim(t, dim)) break;
    suffix *= trips;
  }
  return suffix;
}

inline std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

}  // namespace detail

// Tile-schedule simulator. Each scratchpad tile visit DMAs in the tensors
// whose tile changed (64-cycle setup plus burst transfer per tensor), then
// runs its level-0 tiles through the array with explicit fill and drain.
// DMA overlaps compute only if the scratchpad can hold two level-1 working
// sets. The result never undercuts the analytical roofline.
inline SimTrace simulate_delay(const DesignPoint& dp,
                               const CostModelConstants& c = CostModelConstants{}) {
  dp.layer.validate();
  validate_hw(dp.hw);
  check_arg(validate_mapping(dp.sw, dp.layer), "simulate_delay: invalid mapping");
  check_arg(validate_fit(dp), "simulate_delay: mapping does not fit the hardware");

  SimTrace trace;

  std::int64_t n_tiles = 1;
  std::int64_t n0 = 1;  // level-0 tiles per scratchpad tile
  std::int64_t macs0 = 1;
  for (int d = 0; d < kNumDims; ++d) {
    n_tiles *= dp.sw.tiling[2][d];
    n0 *= dp.sw.tiling[1][d];
    macs0 *= dp.sw.tiling[0][d];
  }
  trace.n_tiles = n_tiles;

  const std::int64_t lanes = static_cast<std::int64_t>(spatial_lanes(dp));
  const std::int64_t rows = detail::ceil_div(macs0, lanes);
  const std::int64_t fill_drain = 2 * static_cast<std::int64_t>(dp.hw.array_dim);
  const std::int64_t compute_per_spad_tile = n0 * (fill_drain + rows);
  trace.compute_cycles = n_tiles * compute_per_spad_tile;

  // Per-tensor DMA cost and reuse period over the DRAM-level odometer.
  std::array<std::int64_t, kNumTensors> dma_cost{};
  std::array<std::int64_t, kNumTensors> period{};
  std::int64_t spad_bytes_per_set = 0;
  for (int t = 0; t < kNumTensors; ++t) {
    const auto tensor = static_cast<Tensor>(t);
    const std::int64_t bytes = tile_elems(tensor, dp.sw, dp.layer, 1) * kElementBytes;
    spad_bytes_per_set += bytes;
    dma_cost[t] = static_cast<std::int64_t>(c.dma_setup_cycles) +
                  detail::ceil_div(bytes, static_cast<std::int64_t>(c.dma_bytes_per_cycle));
    period[t] = detail::reuse_period(tensor, dp.sw);
    trace.dma_cycles += (n_tiles / period[t]) * dma_cost[t];
  }

  trace.double_buffered = 2 * spad_bytes_per_set <= std::int64_t{dp.hw.spad_kb} * 1024;

  std::int64_t schedule = 0;
  double exposed_dma = 0.0;
  if (!trace.double_buffered) {
    schedule = trace.dma_cycles + trace.compute_cycles;
    exposed_dma = static_cast<double>(trace.dma_cycles);
  } else {
    // Reuse periods are suffix products of one loop list, so they divide one
    // another; iterations fall into at most four nested DMA-load classes.
    std::array<int, kNumTensors> order = {0, 1, 2};
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return period[a] < period[b]; });
    const std::int64_t c_tile = compute_per_spad_tile;
    // D_k = DMA cost when all tensors with period <= period[order[k]] reload.
    std::int64_t d_class[kNumTensors];
    std::int64_t cum = 0;
    for (int k = 0; k < kNumTensors; ++k) {
      cum += dma_cost[order[k]];
      d_class[k] = cum;
    }
    const std::int64_t first_load = d_class[kNumTensors - 1];
    // Iterations 1..n-1, classed by the largest period dividing the index.
    std::int64_t multiples[kNumTensors];
    for (int k = 0; k < kNumTensors; ++k) multiples[k] = (n_tiles - 1) / period[order[k]];
    schedule = first_load;
    exposed_dma = static_cast<double>(first_load);
    std::int64_t remaining = n_tiles - 1;
    for (int k = kNumTensors - 1; k >= 0; --k) {
      const std::int64_t count = multiples[k] - (k + 1 < kNumTensors ? multiples[k + 1] : 0);
      schedule += count * std::max(c_tile, d_class[k]);
      exposed_dma += static_cast<double>(count) * std::max<std::int64_t>(0, d_class[k] - c_tile);
      remaining -= count;
    }
    schedule += remaining * c_tile;  // iterations with no reload
    schedule += c_tile;              // trailing compute of the last tile
  }

  trace.overlap_fraction =
      trace.dma_cycles == 0
          ? 0.0
          : 1.0 - exposed_dma / static_cast<double>(trace.dma_cycles);

  const double roofline = evaluate_low(dp, c).delay_cycles;
  trace.delay_cycles = std::max(schedule, static_cast<std::int64_t>(std::ceil(roofline)));
  return trace;
}

inline CostBreakdown evaluate_high(const DesignPoint& dp,
                                   const CostModelConstants& c = CostModelConstants{}) {
  CostBreakdown out = evaluate_low(dp, c);
  const SimTrace trace = simulate_delay(dp, c);
  out.delay_cycles = static_cast<double>(trace.delay_cycles);
  out.edp = out.energy_pj * out.delay_cycles;
  return out;
}

}  // namespace polaris
