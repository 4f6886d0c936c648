// Reference methods Polaris is measured against: a one-shot random search
// scored by the surrogate mean, a conventional single-fidelity BO loop on raw
// features (Spotlight-like), and the surrogate ablation grid.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "polaris/optimizer.hpp"

namespace polaris {

enum class BaselineKind {
  kOfflineRandom,
  kVanillaBo,
  kDklScratch,
  kTransferredNn,
  kFinetuneLow,
};

inline std::string to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::kOfflineRandom: return "offline_random";
    case BaselineKind::kVanillaBo: return "vanilla_bo";
    case BaselineKind::kDklScratch: return "dkl_scratch";
    case BaselineKind::kTransferredNn: return "transfer_nn";
    case BaselineKind::kFinetuneLow: return "finetune_low";
  }
  throw std::invalid_argument("baseline kind: bad enum value");
}

inline BaselineKind baseline_kind_from_string(const std::string& s) {
  for (BaselineKind k : {BaselineKind::kOfflineRandom, BaselineKind::kVanillaBo,
                         BaselineKind::kDklScratch, BaselineKind::kTransferredNn,
                         BaselineKind::kFinetuneLow})
    if (to_string(k) == s) return k;
  throw std::invalid_argument("baseline kind: unknown '" + s + "'");
}

struct BaselineConfig {
  BaselineKind kind = BaselineKind::kOfflineRandom;
  int samples_per_layer = 48000;  // offline_random budget
  BoConfig bo;                    // vanilla_bo budget; bo.seed is authoritative there
  std::uint64_t seed = 0;

  void validate() const {
    check_arg(samples_per_layer >= 1, "BaselineConfig: samples_per_layer must be >= 1");
    bo.validate();
  }
};

// Plain Matern GP on the 40-wide scaled features, no learned encoder. Targets
// are log10 EDP, re-standardized over everything observed so far.
struct VanillaGp {
  gp::GpState gp;
  nn::Matrix features{kFeatureDim, 0};
  std::vector<double> raw_targets;
  double target_mean = 0.0;
  double target_sd = 1.0;

  Eigen::Index train_size() const { return features.cols(); }
};

inline void observe(VanillaGp& m, const EdpSample& s, int refit_steps) {
  check_arg(s.fidelity == Fidelity::kHigh, "vanilla: samples must be high fidelity");
  for (Eigen::Index c = 0; c < m.features.cols(); ++c) {
    bool dup = true;
    for (int r = 0; r < kFeatureDim && dup; ++r) dup = m.features(r, c) == s.features[r];
    if (dup) {
      std::cerr << "vanilla: dropping duplicate training sample\n";
      return;
    }
  }
  const auto n = m.features.cols();
  m.features.conservativeResize(Eigen::NoChange, n + 1);
  for (int r = 0; r < kFeatureDim; ++r) m.features(r, n) = s.features[r];
  m.raw_targets.push_back(std::log10(s.edp));

  double mean = 0.0;
  for (double t : m.raw_targets) mean += t;
  mean /= static_cast<double>(m.raw_targets.size());
  double var = 0.0;
  for (double t : m.raw_targets) var += (t - mean) * (t - mean);
  var /= static_cast<double>(m.raw_targets.size());
  m.target_mean = mean;
  m.target_sd = var > 1e-24 ? std::sqrt(var) : 1.0;

  gp::Vector y(static_cast<Eigen::Index>(m.raw_targets.size()));
  for (Eigen::Index i = 0; i < y.size(); ++i)
    y(i) = (m.raw_targets[static_cast<std::size_t>(i)] - m.target_mean) / m.target_sd;
  m.gp.set_data(m.features.transpose(), std::move(y));
  if (m.train_size() >= 2 && refit_steps > 0) gp::fit(m.gp, refit_steps);
}

inline void predict(const VanillaGp& m, const nn::Matrix& features, gp::Vector* mean,
                    gp::Vector* std_dev) {
  check(m.train_size() > 0, "vanilla: predict before any observation");
  check_arg(features.rows() == kFeatureDim, "vanilla: feature width mismatch");
  if (std_dev == nullptr) {
    gp::posterior(m.gp, features.transpose(), mean, nullptr);
    return;
  }
  gp::Vector var;
  gp::posterior(m.gp, features.transpose(), mean, &var);
  *std_dev = var.array().sqrt();
}

namespace detail {

inline SurrogateApi vanilla_api(VanillaGp& m) {
  SurrogateApi api;
  api.predict = [&m](const nn::Matrix& f, gp::Vector* mean, gp::Vector* sd) {
    predict(m, f, mean, sd);
  };
  api.max_sd = [&m] { return std::sqrt(m.gp.params.outputscale()); };
  api.observe = [&m](const EdpSample& s, int refit) { observe(m, s, refit); };
  return api;
}

}  // namespace detail

// Same outer/inner loop shape and budget as run_codesign, but the surrogate
// starts empty: the first hardware pick is uniform and the first three inner
// picks per layer are acquisition-independent.
inline RunHistory vanilla_bo(const BoConfig& cfg, const Workload& workload, VanillaGp& model,
                             const CostModelConstants& constants = {},
                             const RunHistory* resume = nullptr) {
  detail::LoopPolicy policy;
  policy.random_first_hw = true;
  policy.sw_warmup_first_outer = 3;
  return detail::run_codesign_api(detail::vanilla_api(model), cfg, workload, constants,
                                  "vanilla_bo", policy, resume);
}

// One-shot offline search: per layer, samples_per_layer feasible designs drawn
// uniformly from the joint HW x mapping lattice, ranked by the surrogate mean
// alone, and only the winner is simulated. The model is never updated.
inline RunHistory offline_random(const StarlightModel& model, const Workload& workload,
                                 int samples_per_layer, std::uint64_t seed,
                                 const CostModelConstants& constants = {}) {
  check_arg(samples_per_layer >= 1, "offline_random: samples_per_layer must be >= 1");
  check_arg(!workload.layers.empty(), "offline_random: workload has no layers");
  check(model.train_size() > 0, "offline_random: untrained surrogate");

  RunRecord rec;
  rec.iteration = 0;
  std::int64_t evals = 0;
  for (std::size_t l = 0; l < workload.layers.size(); ++l) {
    const LayerShape& layer = workload.layers[l];
    auto rng = make_rng(seed, 2000 + l);
    std::vector<double> u(31);
    constexpr Eigen::Index kChunk = 4096;
    nn::Matrix feats(kFeatureDim, kChunk);
    std::vector<DesignPoint> dps;
    dps.reserve(kChunk);

    double best_mean = std::numeric_limits<double>::infinity();
    DesignPoint best_dp;
    bool found = false;
    std::int64_t scored = 0;
    std::int64_t attempts = 0;
    const std::int64_t max_attempts = 64 * static_cast<std::int64_t>(samples_per_layer);
    while (scored < samples_per_layer && attempts < max_attempts) {
      dps.clear();
      Eigen::Index c = 0;
      while (c < kChunk && scored + c < samples_per_layer && attempts < max_attempts) {
        ++attempts;
        for (auto& v : u) v = uniform01(rng);
        DesignPoint dp = lattice_map(u, layer);
        if (!validate_fit(dp)) continue;
        const FeatureVector f = encode_features(dp);
        for (int r = 0; r < kFeatureDim; ++r) feats(r, c) = f[r];
        dps.push_back(std::move(dp));
        ++c;
      }
      if (c == 0) break;
      gp::Vector mean;
      predict(model, feats.leftCols(c), &mean, nullptr);
      for (Eigen::Index j = 0; j < c; ++j) {
        if (mean(j) < best_mean) {
          best_mean = mean(j);
          best_dp = dps[static_cast<std::size_t>(j)];
          found = true;
        }
      }
      scored += c;
    }
    check(found, "offline_random: no feasible design for layer " + std::to_string(l));
    if (scored < samples_per_layer)
      std::cerr << "polaris: offline sample budget cut short (" << scored << " of "
                << samples_per_layer << " for layer " << l << ")\n";

    const CostBreakdown cb = evaluate_high(best_dp, constants);
    LayerOutcome lo;
    lo.layer_index = static_cast<int>(l);
    lo.hw = best_dp.hw;
    lo.evals.push_back({best_dp.sw, cb, -best_mean});
    lo.best_eval = 0;
    rec.acquisition += -best_mean;
    rec.total_edp += cb.edp;
    rec.layers.push_back(std::move(lo));
    ++evals;
  }
  rec.hw = rec.layers.front().hw;  // layers may differ; per-layer hw is authoritative
  rec.cumulative_min_edp = rec.total_edp;

  RunHistory h;
  h.method = "offline_random";
  h.workload_name = workload.name;
  h.seed = seed;
  h.config.seed = seed;
  h.config.n_outer = 1;
  h.config.m_inner = 1;
  h.config.sw_pool_size = samples_per_layer;
  h.workload_hash = workload_fingerprint(workload);
  h.cost_model_hash = constants.config_hash();
  h.records.push_back(std::move(rec));
  h.n_high_evals = evals;
  detail::validate_history(h);
  return h;
}

inline RunSeries to_run_series(const RunHistory& h) {
  RunSeries s;
  s.workload = h.workload_name;
  s.method = h.method;
  s.seed = h.seed;
  s.cumulative_min_edp = h.cumulative_series();
  return s;
}

struct AblationOptions {
  int joint_epochs = 150;    // DKL variants (transfer and scratch)
  int nn_epochs = 200;       // transferred encoder + MLP head, MSE
  int finetune_epochs = 150; // continued full-loss training of the low model
  int batch_size = 64;
  double lr_encoder = 0.005;
  double lr_gp = 0.05;
  double lr_nn = 1e-3;
};

struct AblationRow {
  std::string variant;
  std::int64_t train_size = 0;
  double mean_rho = 0.0;
  double std_rho = 0.0;
  std::vector<double> rhos;
};

inline constexpr std::array<const char*, 4> kAblationVariants = {
    "starlight", "dkl_scratch", "transfer_nn", "finetune_low"};

namespace detail {

inline std::vector<std::size_t> ablation_subsample(const std::vector<std::size_t>& train,
                                                   std::int64_t size, std::uint64_t seed) {
  check_arg(size >= 2 && std::cmp_less_equal(size, train.size()),
            "ablation: train size out of range");
  std::vector<std::size_t> idx = train;
  auto rng = make_rng(seed, 300);
  for (std::size_t i = idx.size() - 1; i > 0; --i) std::swap(idx[i], idx[rng() % (i + 1)]);
  idx.resize(static_cast<std::size_t>(size));
  return idx;
}

// Transferred encoder kept frozen as a feature extractor; only the fresh MLP
// head trains, on plain MSE. The contrast with Starlight is that nothing
// adapts the latent space to the new fidelity.
inline double ablation_transfer_nn(const StarlightLowModel& low, Dataset& ds,
                                   const std::vector<std::size_t>& sub, const nn::Matrix& x_test,
                                   const std::vector<double>& y_test, std::uint64_t seed,
                                   const AblationOptions& opt) {
  const nn::Network encoder = export_encoder(low);
  auto rng = make_rng(seed, 400);
  nn::Network head = nn::make_network({kLatentDim, 64, 256, 256, 64, 1}, rng);
  nn::Matrix x, y;
  dataset_matrices(ds, sub, &x, &y);
  const nn::Matrix mu_all = nn::forward(encoder, x).topRows(kLatentDim);

  nn::Adam opt_head(head, opt.lr_nn);
  const auto n = x.cols();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < opt.nn_epochs; ++epoch) {
    for (std::size_t i = order.size() - 1; i > 0; --i)
      std::swap(order[i], order[rng() % (i + 1)]);
    Eigen::Index done = 0;
    while (done < n) {
      const Eigen::Index b = std::min<Eigen::Index>(opt.batch_size, n - done);
      nn::Matrix mub(kLatentDim, b), yb(1, b);
      for (Eigen::Index c = 0; c < b; ++c) {
        mub.col(c) = mu_all.col(order[static_cast<std::size_t>(done + c)]);
        yb.col(c) = y.col(order[static_cast<std::size_t>(done + c)]);
      }
      done += b;
      nn::ForwardCache head_cache;
      const nn::Matrix pred = nn::forward(head, mub, &head_cache);
      const auto g_head = nn::backward(head, head_cache, nn::mse_grad(pred, yb));
      opt_head.update(head, g_head);
    }
  }
  const nn::Matrix mu_test = nn::forward(encoder, x_test).topRows(kLatentDim);
  const nn::Matrix pred = nn::forward(head, mu_test);
  std::vector<double> p(pred.data(), pred.data() + pred.cols());
  return spearman_rho(p, y_test);
}

// The low model continued as-is (all three loss terms) on high-fidelity targets.
inline double ablation_finetune_low(const StarlightLowModel& low, Dataset& ds,
                                    const std::vector<std::size_t>& sub, const nn::Matrix& x_test,
                                    const std::vector<double>& y_test, std::uint64_t seed,
                                    const AblationOptions& opt) {
  StarlightLowModel m = low;
  nn::Matrix x, y;
  dataset_matrices(ds, sub, &x, &y);
  auto rng = make_rng(seed, 400);
  train_low_epochs(m, x, y, opt.finetune_epochs, opt.batch_size, opt.lr_nn, rng);
  const nn::Matrix pred = predict_low(m, x_test);
  std::vector<double> p(pred.data(), pred.data() + pred.cols());
  return spearman_rho(p, y_test);
}

}  // namespace detail

// Trains each surrogate variant at each training-set size across seeds and
// reports the test-split Spearman rho. The held-out split never shrinks.
inline std::vector<AblationRow> ablation_suite(const StarlightLowModel& low_model,
                                               Dataset& high_ds,
                                               const std::vector<std::int64_t>& sizes,
                                               const std::vector<std::uint64_t>& seeds,
                                               const AblationOptions& opt = {}) {
  check_arg(!sizes.empty() && !seeds.empty(), "ablation: need at least one size and seed");
  check_arg(!high_ds.samples.empty(), "ablation: empty dataset");
  check_arg(high_ds.samples.front().fidelity == Fidelity::kHigh,
            "ablation: dataset must be high fidelity");
  if (!high_ds.standardized) high_ds.standardize_targets();
  const auto train = high_ds.train_indices();
  const auto test = high_ds.test_indices();
  check_arg(test.size() >= 2, "ablation: test split too small");

  nn::Matrix x_test, y_mat;
  dataset_matrices(high_ds, test, &x_test, &y_mat);
  const std::vector<double> y_test(y_mat.data(), y_mat.data() + y_mat.cols());

  std::vector<AblationRow> rows;
  for (const char* variant : kAblationVariants) {
    for (std::int64_t size : sizes) {
      AblationRow row;
      row.variant = variant;
      row.train_size = size;
      for (std::uint64_t seed : seeds) {
        const auto sub = detail::ablation_subsample(train, size, seed);
        double rho = 0.0;
        const std::string v = variant;
        if (v == "starlight" || v == "dkl_scratch") {
          StarlightModel m = v == "starlight"
                                 ? init_from_transfer(export_encoder(low_model), high_ds, sub, test)
                                 : init_from_scratch(high_ds, seed, sub, test);
          m.seed = seed;
          train_joint(m, opt.joint_epochs, opt.lr_encoder, opt.lr_gp, seed);
          rho = evaluate_surrogate(m, x_test, y_test).spearman;
        } else if (v == "transfer_nn") {
          rho = detail::ablation_transfer_nn(low_model, high_ds, sub, x_test, y_test, seed, opt);
        } else {
          rho = detail::ablation_finetune_low(low_model, high_ds, sub, x_test, y_test, seed, opt);
        }
        row.rhos.push_back(rho);
      }
      double mean = 0.0;
      for (double r : row.rhos) mean += r;
      mean /= static_cast<double>(row.rhos.size());
      double var = 0.0;
      for (double r : row.rhos) var += (r - mean) * (r - mean);
      row.mean_rho = mean;
      row.std_rho = row.rhos.size() > 1
                        ? std::sqrt(var / static_cast<double>(row.rhos.size() - 1))
                        : 0.0;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace polaris
