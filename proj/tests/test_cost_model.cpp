#include <catch2/catch_amalgamated.hpp>

#include <vector>

#include "polaris/cost_model.hpp"
#include "polaris/workload.hpp"

using namespace polaris;

namespace {

// Brute-force oracle: walk every iteration of the 21-loop nest in program
// order and count the tile loads a storage hierarchy would actually perform
// (a load whenever the needed tile id differs from the resident one).
FetchCounts interpret_loop_nest(const DesignPoint& dp) {
  struct Loop {
    int level;
    int dim;
    std::int64_t trips;
  };
  std::vector<Loop> loops;
  for (int l = kNumLevels - 1; l >= 0; --l)
    for (int pos = 0; pos < kNumDims; ++pos) {
      const int dim = dp.sw.loop_order[pos];
      loops.push_back({l, dim, dp.sw.tiling[l][dim]});
    }

  std::array<std::array<std::int64_t, kNumDims>, kNumLevels> x{};
  for (int l = 0; l < kNumLevels; ++l) {
    for (int d = 0; d < kNumDims; ++d) {
      std::int64_t prod = 1;
      for (int ll = 0; ll <= l; ++ll) prod *= dp.sw.tiling[ll][d];
      x[l][d] = prod;
    }
  }

  std::vector<std::int64_t> idx(loops.size(), 0);
  FetchCounts fetches{};
  std::array<std::array<std::vector<std::int64_t>, kNumTensors>, kNumLevels> resident;
  for (int l = 0; l < kNumLevels; ++l)
    for (int t = 0; t < kNumTensors; ++t) resident[l][t] = {};

  bool done = false;
  while (!done) {
    // Global coordinate per dimension from the current loop indices.
    std::array<std::int64_t, kNumDims> coord{};
    for (std::size_t i = 0; i < loops.size(); ++i) {
      const auto& lp = loops[i];
      std::int64_t stride = 1;
      for (int ll = 0; ll < lp.level; ++ll) stride *= dp.sw.tiling[ll][lp.dim];
      coord[lp.dim] += idx[i] * stride;
    }
    for (int l = 0; l < kNumLevels; ++l) {
      for (int t = 0; t < kNumTensors; ++t) {
        std::vector<std::int64_t> id;
        for (int d = 0; d < kNumDims; ++d)
          if (tensor_uses_dim(static_cast<Tensor>(t), d)) id.push_back(coord[d] / x[l][d]);
        if (resident[l][t] != id) {
          resident[l][t] = id;
          ++fetches[l][t];
        }
      }
    }
    // Odometer step, innermost loop fastest.
    done = true;
    for (int i = static_cast<int>(loops.size()) - 1; i >= 0; --i) {
      if (++idx[i] < loops[i].trips) {
        done = false;
        break;
      }
      idx[i] = 0;
    }
  }
  // First visit of an all-ones id vector still counts as one load; tensors
  // with no indexing dims (impossible here) would load once.
  return fetches;
}

DesignPoint random_small_point(Rng& rng) {
  DesignPoint dp;
  const std::int64_t choices[] = {1, 2, 3, 4, 6};
  dp.layer.n = choices[rng() % 5];
  dp.layer.k = choices[rng() % 5];
  dp.layer.c = choices[rng() % 5];
  dp.layer.p = choices[rng() % 5];
  dp.layer.q = choices[rng() % 5];
  dp.layer.r = 1 + static_cast<std::int64_t>(rng() % 2);
  dp.layer.s = 1 + static_cast<std::int64_t>(rng() % 2);
  dp.layer.stride = 1 + static_cast<std::int64_t>(rng() % 2);
  dp.hw = {8, 64, 64};
  for (int d = 0; d < kNumDims; ++d) {
    const auto div0 = divisor_list(dp.layer.dim(d));
    const std::int64_t t0 = div0[rng() % div0.size()];
    const auto div1 = divisor_list(dp.layer.dim(d) / t0);
    const std::int64_t t1 = div1[rng() % div1.size()];
    dp.sw.tiling[0][d] = t0;
    dp.sw.tiling[1][d] = t1;
    dp.sw.tiling[2][d] = dp.layer.dim(d) / (t0 * t1);
  }
  for (int i = kNumDims - 1; i > 0; --i)
    std::swap(dp.sw.loop_order[i], dp.sw.loop_order[rng() % (i + 1)]);
  return dp;
}

}  // namespace

TEST_CASE("access counts match the loop-nest interpreter", "[cost-model]") {
  // The documented fixture first.
  DesignPoint dp;
  dp.layer = LayerShape{1, 4, 4, 2, 2, 1, 1, 1, 1};
  dp.hw = {8, 64, 64};
  dp.sw.tiling[0] = {1, 2, 1, 2, 1, 1, 1};
  dp.sw.tiling[1] = {1, 1, 2, 1, 1, 1, 1};
  dp.sw.tiling[2] = {1, 2, 2, 1, 2, 1, 1};
  REQUIRE(validate_mapping(dp.sw, dp.layer));
  REQUIRE(access_counts(dp) == interpret_loop_nest(dp));

  // Then random small mappings, including loop-order permutations.
  auto rng = make_rng(11, 0);
  for (int iter = 0; iter < 60; ++iter) {
    auto p = random_small_point(rng);
    INFO("iteration " << iter);
    REQUIRE(access_counts(p) == interpret_loop_nest(p));
  }
}

TEST_CASE("identity tiling fetches each tensor once from DRAM", "[cost-model]") {
  DesignPoint dp;
  dp.layer = LayerShape{2, 8, 4, 6, 6, 3, 3, 1, 1};
  dp.hw = {8, 64, 64};
  for (int d = 0; d < kNumDims; ++d) dp.sw.tiling[2][d] = dp.layer.dim(d);

  const auto fetches = access_counts(dp);
  for (int t = 0; t < kNumTensors; ++t) REQUIRE(fetches[2][t] == 1);

  const auto cost = evaluate_low(dp);
  REQUIRE(cost.per_level_accesses[2][0] ==
          static_cast<double>(tile_elems(Tensor::kWeight, dp.sw, dp.layer, 2)));
  REQUIRE(cost.per_level_accesses[2][1] ==
          static_cast<double>(tile_elems(Tensor::kInput, dp.sw, dp.layer, 2)));
  REQUIRE(cost.per_level_accesses[2][2] ==
          static_cast<double>(tile_elems(Tensor::kOutput, dp.sw, dp.layer, 2)));
}

TEST_CASE("unit layer touches each tensor once per level", "[cost-model]") {
  DesignPoint dp;
  dp.hw = {4, 8, 8};
  const auto fetches = access_counts(dp);
  for (int l = 0; l < kNumLevels; ++l)
    for (int t = 0; t < kNumTensors; ++t) REQUIRE(fetches[l][t] == 1);
  const auto cost = evaluate_low(dp);
  REQUIRE(cost.macs == 1);
  REQUIRE(cost.delay_cycles >= 1.0);
}

TEST_CASE("loop order changes access counts", "[cost-model]") {
  DesignPoint dp;
  dp.layer = LayerShape{1, 4, 4, 4, 1, 1, 1, 1, 1};
  dp.hw = {8, 64, 64};
  dp.sw.tiling[2] = {1, 4, 4, 4, 1, 1, 1};
  dp.sw.loop_order = {kDimN, kDimK, kDimC, kDimP, kDimQ, kDimR, kDimS};
  const auto a = access_counts(dp);
  auto dp2 = dp;
  dp2.sw.loop_order = {kDimP, kDimC, kDimK, kDimN, kDimQ, kDimR, kDimS};
  const auto b = access_counts(dp2);
  REQUIRE(a != b);
  // Innermost P loop does not index the weight: the weight tile is reused
  // across it, so the first order fetches weights fewer times at level 1.
  REQUIRE(a[1][0] < b[1][0]);
}

TEST_CASE("energy decomposes per level and scales with e_mac", "[cost-model]") {
  auto rng = make_rng(12, 1);
  auto dp = random_small_point(rng);
  CostModelConstants c;
  const auto base = evaluate_low(dp, c);
  REQUIRE(base.energy_pj > 0.0);
  REQUIRE(base.delay_cycles > 0.0);
  REQUIRE(base.edp == base.energy_pj * base.delay_cycles);

  CostModelConstants doubled = c;
  doubled.e_mac *= 2.0;
  const auto more = evaluate_low(dp, doubled);
  REQUIRE(more.energy_pj > base.energy_pj);
  REQUIRE(more.energy_pj - base.energy_pj ==
          Catch::Approx(static_cast<double>(base.macs) * c.e_mac));
  REQUIRE(more.delay_cycles == base.delay_cycles);

  // Independent recomputation of the energy sum from the reported traffic.
  const double per_byte[kNumLevels][kNumTensors] = {
      {c.e_spad, c.e_spad, c.e_acc},
      {c.e_l2, c.e_l2, c.e_l2},
      {c.e_dram, c.e_dram, c.e_dram},
  };
  double expect = static_cast<double>(base.macs) * c.e_mac;
  for (int l = 0; l < kNumLevels; ++l)
    for (int t = 0; t < kNumTensors; ++t)
      expect += base.per_level_accesses[l][t] * kElementBytes * per_byte[l][t];
  REQUIRE(base.energy_pj == Catch::Approx(expect));
}

TEST_CASE("compute-bound mapping hits the MAC roofline", "[cost-model]") {
  // Everything at level 0: single fetch per tensor, huge compute.
  DesignPoint dp;
  dp.layer = LayerShape{1, 32, 32, 8, 8, 1, 1, 1, 1};
  dp.hw = {4, 256, 256};
  for (int d = 0; d < kNumDims; ++d) dp.sw.tiling[0][d] = dp.layer.dim(d);
  REQUIRE(validate_fit(dp));
  const auto cost = evaluate_low(dp);
  // min(C0, A) * min(K0, A) = 16 lanes.
  REQUIRE(cost.compute_cycles == Catch::Approx(static_cast<double>(cost.macs) / 16.0));
  REQUIRE(cost.delay_cycles == Catch::Approx(cost.compute_cycles));
}

TEST_CASE("every tile is fetched at least once", "[cost-model]") {
  auto rng = make_rng(13, 2);
  for (int iter = 0; iter < 40; ++iter) {
    auto dp = random_small_point(rng);
    const auto cost = evaluate_low(dp);
    for (int l = 0; l < kNumLevels; ++l)
      for (int t = 0; t < kNumTensors; ++t)
        REQUIRE(cost.per_level_accesses[l][t] >=
                static_cast<double>(tile_elems(static_cast<Tensor>(t), dp.sw, dp.layer, l)));
    // Each MAC consumes two operands; the model must account all of them.
    REQUIRE(cost.macs == dp.layer.macs());
    REQUIRE(2 * cost.macs >= cost.macs);
  }
}

TEST_CASE("rejects invalid mappings and misfits", "[cost-model]") {
  DesignPoint dp;
  dp.layer = LayerShape{1, 4, 4, 2, 2, 1, 1, 1, 1};
  dp.hw = {8, 64, 64};
  dp.sw.tiling[2] = {1, 3, 4, 2, 2, 1, 1};  // 3 does not divide K=4
  REQUIRE_THROWS(evaluate_low(dp));

  DesignPoint big;
  big.layer = LayerShape{1, 64, 1, 64, 64, 1, 1, 1, 1};
  big.hw = {32, 8, 8};
  for (int d = 0; d < kNumDims; ++d) big.sw.tiling[0][d] = big.layer.dim(d);
  REQUIRE_FALSE(validate_fit(big));
  REQUIRE_THROWS(evaluate_low(big));
}

TEST_CASE("constants load from JSON and hash stably", "[cost-model]") {
  CostModelConstants c;
  auto j = c.to_json();
  auto c2 = CostModelConstants::from_json(j);
  REQUIRE(c2.config_hash() == c.config_hash());

  j["e_dram"] = 256.0;
  auto c3 = CostModelConstants::from_json(j);
  REQUIRE(c3.e_dram == 256.0);
  REQUIRE(c3.config_hash() != c.config_hash());

  j["bw_l2"] = 0.0;
  REQUIRE_THROWS(CostModelConstants::from_json(j));
}
