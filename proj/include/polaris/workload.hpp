#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "polaris/common.hpp"

namespace polaris {

// Convolution loop dimensions, in canonical order.
enum : int { kDimN = 0, kDimK, kDimC, kDimP, kDimQ, kDimR, kDimS };
inline constexpr int kNumDims = 7;
inline constexpr char kDimNames[kNumDims + 1] = "NKCPQRS";

enum class Tensor { kWeight = 0, kInput, kOutput };
inline constexpr int kNumTensors = 3;

// Which loop dimensions index each tensor's layout.
inline bool tensor_uses_dim(Tensor t, int dim) {
  switch (t) {
    case Tensor::kWeight:
      return dim == kDimK || dim == kDimC || dim == kDimR || dim == kDimS;
    case Tensor::kInput:
      return dim != kDimK;
    case Tensor::kOutput:
      return dim == kDimN || dim == kDimK || dim == kDimP || dim == kDimQ;
  }
  return false;
}

inline constexpr std::int64_t kElementBytes = 2;
inline constexpr std::int64_t kLayerDimMax = 4096;
inline constexpr int kStrideMax = 4;

struct LayerShape {
  std::int64_t n = 1, k = 1, c = 1, p = 1, q = 1, r = 1, s = 1;
  std::int64_t stride = 1;
  std::int64_t dilation = 1;

  std::int64_t dim(int d) const {
    const std::int64_t v[kNumDims] = {n, k, c, p, q, r, s};
    return v[d];
  }

  void set_dim(int d, std::int64_t value) {
    std::int64_t* v[kNumDims] = {&n, &k, &c, &p, &q, &r, &s};
    *v[d] = value;
  }

  std::int64_t input_h() const { return (p - 1) * stride + (r - 1) * dilation + 1; }
  std::int64_t input_w() const { return (q - 1) * stride + (s - 1) * dilation + 1; }

  std::int64_t macs() const {
    std::int64_t m = 1;
    for (int d = 0; d < kNumDims; ++d) m *= dim(d);
    return m;
  }

  void validate() const {
    for (int d = 0; d < kNumDims; ++d)
      check_arg(dim(d) >= 1 && dim(d) <= kLayerDimMax,
                std::string("LayerShape: dimension ") + kDimNames[d] + " out of range");
    check_arg(stride >= 1 && stride <= kStrideMax, "LayerShape: stride out of range");
    check_arg(dilation >= 1 && dilation <= kStrideMax, "LayerShape: dilation out of range");
    double m = 1.0;
    for (int d = 0; d < kNumDims; ++d) m *= static_cast<double>(dim(d));
    check_arg(m < 9.0e18, "LayerShape: MAC count overflows");
  }

  bool operator==(const LayerShape&) const = default;
};

struct HwConfig {
  int array_dim = 4;   // square PE array side
  int acc_kb = 8;      // accumulator capacity
  int spad_kb = 8;     // scratchpad capacity

  auto operator<=>(const HwConfig&) const = default;
};

// Discrete hardware menu: 8 x 32 x 32 = 8192 configurations.
inline const std::vector<int>& array_dim_choices() {
  static const std::vector<int> v = {4, 8, 12, 16, 20, 24, 28, 32};
  return v;
}

inline const std::vector<int>& mem_kb_choices() {
  static const std::vector<int> v = [] {
    std::vector<int> out;
    for (int kb = 8; kb <= 256; kb += 8) out.push_back(kb);
    return out;
  }();
  return v;
}

inline void validate_hw(const HwConfig& hw) {
  const auto& arr = array_dim_choices();
  const auto& mem = mem_kb_choices();
  check_arg(std::find(arr.begin(), arr.end(), hw.array_dim) != arr.end(),
            "HwConfig: array_dim not in menu");
  check_arg(std::find(mem.begin(), mem.end(), hw.acc_kb) != mem.end(),
            "HwConfig: acc_kb not in menu");
  check_arg(std::find(mem.begin(), mem.end(), hw.spad_kb) != mem.end(),
            "HwConfig: spad_kb not in menu");
}

inline std::vector<HwConfig> enumerate_hw_space() {
  std::vector<HwConfig> out;
  out.reserve(array_dim_choices().size() * mem_kb_choices().size() * mem_kb_choices().size());
  for (int a : array_dim_choices())
    for (int acc : mem_kb_choices())
      for (int sp : mem_kb_choices()) out.push_back({a, acc, sp});
  return out;
}

// Three-level tiling: level 0 = innermost (accumulator), level 1 = scratchpad,
// level 2 = outermost (DRAM). loop_order lists dimension codes outermost first
// and applies at every level.
inline constexpr int kNumLevels = 3;

struct SwMapping {
  std::array<int, kNumDims> loop_order = {0, 1, 2, 3, 4, 5, 6};
  std::array<std::array<std::int64_t, kNumDims>, kNumLevels> tiling = {{
      {1, 1, 1, 1, 1, 1, 1},
      {1, 1, 1, 1, 1, 1, 1},
      {1, 1, 1, 1, 1, 1, 1},
  }};

  bool operator==(const SwMapping&) const = default;
};

inline bool validate_mapping(const SwMapping& sw, const LayerShape& layer) {
  std::array<bool, kNumDims> seen = {};
  for (int code : sw.loop_order) {
    if (code < 0 || code >= kNumDims || seen[code]) return false;
    seen[code] = true;
  }
  for (int d = 0; d < kNumDims; ++d) {
    std::int64_t prod = 1;
    for (int l = 0; l < kNumLevels; ++l) {
      if (sw.tiling[l][d] < 1) return false;
      prod *= sw.tiling[l][d];
    }
    if (prod != layer.dim(d)) return false;
  }
  return true;
}

// Per-dimension tile extent at a level: cumulative product of the factors at
// that level and below.
inline std::array<std::int64_t, kNumDims> tile_dims(const SwMapping& sw, int level) {
  std::array<std::int64_t, kNumDims> x;
  for (int d = 0; d < kNumDims; ++d) {
    std::int64_t prod = 1;
    for (int l = 0; l <= level; ++l) prod *= sw.tiling[l][d];
    x[d] = prod;
  }
  return x;
}

inline std::int64_t tile_elems(Tensor t, const SwMapping& sw, const LayerShape& layer,
                               int level) {
  const auto x = tile_dims(sw, level);
  switch (t) {
    case Tensor::kWeight:
      return x[kDimK] * x[kDimC] * x[kDimR] * x[kDimS];
    case Tensor::kInput: {
      const std::int64_t h = (x[kDimP] - 1) * layer.stride + (x[kDimR] - 1) * layer.dilation + 1;
      const std::int64_t w = (x[kDimQ] - 1) * layer.stride + (x[kDimS] - 1) * layer.dilation + 1;
      return x[kDimN] * x[kDimC] * h * w;
    }
    case Tensor::kOutput:
      return x[kDimN] * x[kDimK] * x[kDimP] * x[kDimQ];
  }
  return 0;
}

// Capacity check: the level-0 output tile must fit the accumulator and the
// level-1 weight, input and output tiles must fit the scratchpad together.
inline bool validate_fit(const HwConfig& hw, const SwMapping& sw, const LayerShape& layer) {
  const std::int64_t out0 = tile_elems(Tensor::kOutput, sw, layer, 0) * kElementBytes;
  if (out0 > std::int64_t{hw.acc_kb} * 1024) return false;
  const std::int64_t spad1 = (tile_elems(Tensor::kWeight, sw, layer, 1) +
                              tile_elems(Tensor::kInput, sw, layer, 1) +
                              tile_elems(Tensor::kOutput, sw, layer, 1)) *
                             kElementBytes;
  return spad1 <= std::int64_t{hw.spad_kb} * 1024;
}

struct DesignPoint {
  HwConfig hw;
  SwMapping sw;
  LayerShape layer;

  bool operator==(const DesignPoint&) const = default;
};

inline bool validate_fit(const DesignPoint& dp) { return validate_fit(dp.hw, dp.sw, dp.layer); }

// ---------------------------------------------------------------------------
// Feature encoding: 40 components in [0,1].
//   [0..2]   array_dim, acc_kb, spad_kb (min-max over the hardware menu)
//   [3..9]   loop_order dimension codes, scaled by 1/6
//   [10..30] tiling factors, dimension-major (dim d, level l at 10 + 3d + l),
//            log2(factor)/log2(dim) before scaling
//   [31..37] layer dims, log2(dim)/log2(4096)
//   [38..39] stride, dilation (min-max over [1,4])
// ---------------------------------------------------------------------------
inline constexpr int kFeatureDim = 40;
using FeatureVector = std::array<double, kFeatureDim>;

namespace detail {

inline double log_ratio(std::int64_t value, std::int64_t maximum) {
  if (maximum <= 1) return 0.0;
  return std::log2(static_cast<double>(value)) / std::log2(static_cast<double>(maximum));
}

inline double minmax(double value, double lo, double hi) {
  return std::clamp((value - lo) / (hi - lo), 0.0, 1.0);
}

}  // namespace detail

inline FeatureVector encode_features(const DesignPoint& dp) {
  dp.layer.validate();
  validate_hw(dp.hw);
  check_arg(validate_mapping(dp.sw, dp.layer), "encode_features: invalid mapping");
  FeatureVector f{};
  f[0] = detail::minmax(dp.hw.array_dim, 4.0, 32.0);
  f[1] = detail::minmax(dp.hw.acc_kb, 8.0, 256.0);
  f[2] = detail::minmax(dp.hw.spad_kb, 8.0, 256.0);
  for (int i = 0; i < kNumDims; ++i) f[3 + i] = dp.sw.loop_order[i] / 6.0;
  for (int d = 0; d < kNumDims; ++d)
    for (int l = 0; l < kNumLevels; ++l)
      f[10 + 3 * d + l] = detail::log_ratio(dp.sw.tiling[l][d], dp.layer.dim(d));
  for (int d = 0; d < kNumDims; ++d)
    f[31 + d] = detail::log_ratio(dp.layer.dim(d), kLayerDimMax);
  f[38] = detail::minmax(static_cast<double>(dp.layer.stride), 1.0, kStrideMax);
  f[39] = detail::minmax(static_cast<double>(dp.layer.dilation), 1.0, kStrideMax);
  return f;
}

namespace detail {

inline std::int64_t unlog_ratio(double f, std::int64_t maximum) {
  if (maximum <= 1) return 1;
  return std::llround(std::exp2(f * std::log2(static_cast<double>(maximum))));
}

inline int snap_to_choices(double raw, const std::vector<int>& choices) {
  int best = choices.front();
  double best_err = std::abs(raw - best);
  for (int c : choices) {
    const double err = std::abs(raw - c);
    if (err < best_err) {
      best = c;
      best_err = err;
    }
  }
  return best;
}

}  // namespace detail

inline DesignPoint decode_features(const FeatureVector& f) {
  DesignPoint dp;
  dp.hw.array_dim = detail::snap_to_choices(4.0 + f[0] * 28.0, array_dim_choices());
  dp.hw.acc_kb = detail::snap_to_choices(8.0 + f[1] * 248.0, mem_kb_choices());
  dp.hw.spad_kb = detail::snap_to_choices(8.0 + f[2] * 248.0, mem_kb_choices());
  for (int i = 0; i < kNumDims; ++i)
    dp.sw.loop_order[i] = static_cast<int>(std::llround(f[3 + i] * 6.0));
  for (int d = 0; d < kNumDims; ++d)
    dp.layer.set_dim(d, detail::unlog_ratio(f[31 + d], kLayerDimMax));
  dp.layer.stride = std::llround(1.0 + f[38] * (kStrideMax - 1));
  dp.layer.dilation = std::llround(1.0 + f[39] * (kStrideMax - 1));
  for (int d = 0; d < kNumDims; ++d)
    for (int l = 0; l < kNumLevels; ++l)
      dp.sw.tiling[l][d] = detail::unlog_ratio(f[10 + 3 * d + l], dp.layer.dim(d));
  check_arg(validate_mapping(dp.sw, dp.layer), "decode_features: inconsistent tiling slots");
  return dp;
}

inline std::vector<std::int64_t> divisor_list(std::int64_t x) {
  check_arg(x >= 1, "divisor_list: x must be positive");
  std::vector<std::int64_t> out;
  for (std::int64_t d = 1; d * d <= x; ++d) {
    if (x % d == 0) {
      out.push_back(d);
      if (d != x / d) out.push_back(x / d);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Workload files
// ---------------------------------------------------------------------------
struct Workload {
  std::string name;
  std::vector<LayerShape> layers;
};

inline LayerShape layer_from_json(const nlohmann::json& j) {
  LayerShape layer;
  for (int d = 0; d < kNumDims; ++d) {
    const std::string key(1, kDimNames[d]);
    check_arg(j.contains(key), "workload layer missing dimension " + key);
    layer.set_dim(d, j.at(key).get<std::int64_t>());
  }
  layer.stride = j.value("stride", std::int64_t{1});
  layer.dilation = j.value("dilation", std::int64_t{1});
  layer.validate();
  return layer;
}

inline nlohmann::json layer_to_json(const LayerShape& layer) {
  nlohmann::json j;
  for (int d = 0; d < kNumDims; ++d) j[std::string(1, kDimNames[d])] = layer.dim(d);
  j["stride"] = layer.stride;
  j["dilation"] = layer.dilation;
  return j;
}

inline Workload workload_from_json(const nlohmann::json& j) {
  Workload w;
  check_arg(j.contains("name") && j.at("name").is_string(), "workload missing name");
  w.name = j.at("name").get<std::string>();
  check_arg(j.contains("layers") && j.at("layers").is_array() && !j.at("layers").empty(),
            "workload '" + w.name + "' has no layers");
  for (const auto& lj : j.at("layers")) w.layers.push_back(layer_from_json(lj));
  return w;
}

inline std::vector<Workload> load_workload(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "load_workload: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("load_workload: parse error in " + path + ": " + e.what());
  }
  std::vector<Workload> out;
  if (j.is_array()) {
    for (const auto& wj : j) out.push_back(workload_from_json(wj));
  } else {
    out.push_back(workload_from_json(j));
  }
  check(!out.empty(), "load_workload: no workloads in " + path);
  return out;
}

}  // namespace polaris
