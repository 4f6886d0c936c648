// Source-domain surrogate: a variational autoencoder over the 40-wide
// feature encoding with a predictor head on the 2-D latent mean. The three
// loss terms (prediction MSE, reconstruction MSE, KL against a unit
// Gaussian) are trained jointly; the encoder is what transfers onward.
#pragma once

#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "polaris/common.hpp"
#include "polaris/metrics.hpp"
#include "polaris/nn.hpp"
#include "polaris/sampling.hpp"

namespace polaris {

inline constexpr int kLatentDim = 2;

inline std::string dataset_fingerprint(const Dataset& ds) {
  std::uint64_t h = fnv1a64(ds.oracle_id);
  h ^= fnv1a64(ds.cost_model_hash);
  h = h * 1099511628211ull + ds.seed;
  h = h * 1099511628211ull + ds.samples.size();
  for (const auto& s : ds.samples) h = h * 1099511628211ull + fnv1a64(&s.edp, sizeof(double));
  return hash_hex(h);
}

// Feature matrix (40 x n) and target row (1 x n) for the given indices.
inline void dataset_matrices(const Dataset& ds, const std::vector<std::size_t>& idx,
                             nn::Matrix* x, nn::Matrix* y) {
  x->resize(kFeatureDim, static_cast<Eigen::Index>(idx.size()));
  y->resize(1, static_cast<Eigen::Index>(idx.size()));
  for (std::size_t c = 0; c < idx.size(); ++c) {
    const auto& s = ds.samples[idx[c]];
    for (int r = 0; r < kFeatureDim; ++r) (*x)(r, static_cast<Eigen::Index>(c)) = s.features[r];
    (*y)(0, static_cast<Eigen::Index>(c)) = s.target;
  }
}

struct LowLossHistory {
  std::vector<double> pred, recon, kl, total;
};

struct StarlightLowModel {
  nn::Network encoder;    // 40 -> 24 -> 12 -> 4 (2 latent means, 2 logvars)
  nn::Network decoder;    // 2 -> 12 -> 24 -> 40
  nn::Network predictor;  // 2 -> 64 -> 256 -> 256 -> 64 -> 1
  double lambda_pred = 1.0;
  double lambda_recon = 1.0;
  double lambda_kl = 0.01;
  std::uint64_t seed = 0;
  std::string dataset_hash;
  double target_mean = 0.0;
  double target_sd = 1.0;
  LowLossHistory history;
};

// Splits the encoder output into its mean and logvar halves.
inline void encode(const StarlightLowModel& m, const nn::Matrix& features, nn::Matrix* mu,
                   nn::Matrix* logvar) {
  const nn::Matrix out = nn::forward(m.encoder, features);
  *mu = out.topRows(kLatentDim);
  *logvar = out.bottomRows(kLatentDim);
}

inline nn::Matrix predict_low(const StarlightLowModel& m, const nn::Matrix& features) {
  nn::Matrix mu, logvar;
  encode(m, features, &mu, &logvar);
  return nn::forward(m.predictor, mu);
}

inline nn::Network export_encoder(const StarlightLowModel& m) {
  check_arg(!m.encoder.layers.empty(), "export_encoder: untrained model");
  return m.encoder;  // value copy
}

struct TrainLowOptions {
  int epochs = 1000;
  int batch_size = 256;
  double lr = 1e-3;
  double lambda_pred = 1.0;
  double lambda_recon = 1.0;
  double lambda_kl = 0.01;
};

namespace detail {

// Joint VAE + predictor epochs over a fixed design matrix. rng drives the
// per-epoch shuffle and the reparameterization noise; losses append to
// m.history so callers can continue training a loaded checkpoint.
inline void train_low_epochs(StarlightLowModel& m, const nn::Matrix& x_all,
                             const nn::Matrix& y_all, int epochs, int batch_size, double lr,
                             Rng& rng) {
  check_arg(x_all.cols() > 0, "train_low: empty train split");
  check_arg(x_all.cols() == y_all.cols(), "train_low: feature/target count mismatch");
  NormalSampler normal(rng);

  nn::Adam opt_enc(m.encoder, lr);
  nn::Adam opt_dec(m.decoder, lr);
  nn::Adam opt_pred(m.predictor, lr);

  const auto n = x_all.cols();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (std::size_t i = order.size() - 1; i > 0; --i)
      std::swap(order[i], order[rng() % (i + 1)]);

    double ep_pred = 0.0, ep_recon = 0.0, ep_kl = 0.0;
    Eigen::Index done = 0;
    while (done < n) {
      const Eigen::Index b = std::min<Eigen::Index>(batch_size, n - done);
      nn::Matrix x(kFeatureDim, b), y(1, b);
      for (Eigen::Index c = 0; c < b; ++c) {
        x.col(c) = x_all.col(order[static_cast<std::size_t>(done + c)]);
        y.col(c) = y_all.col(order[static_cast<std::size_t>(done + c)]);
      }
      done += b;

      nn::ForwardCache enc_cache, dec_cache, pred_cache;
      const nn::Matrix enc_out = nn::forward(m.encoder, x, &enc_cache);
      const nn::Matrix mu = enc_out.topRows(kLatentDim);
      const nn::Matrix logvar = enc_out.bottomRows(kLatentDim);

      nn::Matrix eps;
      const nn::Matrix z_sample = nn::reparameterize(mu, logvar, normal, &eps);
      const nn::Matrix pred = nn::forward(m.predictor, mu, &pred_cache);
      const nn::Matrix recon = nn::forward(m.decoder, z_sample, &dec_cache);

      const double loss_pred = nn::mse(pred, y);
      const double loss_recon = nn::mse(recon, x);
      const double loss_kl = nn::gaussian_kl_batch(mu, logvar);
      const double total = m.lambda_pred * loss_pred + m.lambda_recon * loss_recon +
                           m.lambda_kl * loss_kl;
      check(std::isfinite(total), "train_low: non-finite loss");
      ep_pred += loss_pred * static_cast<double>(b);
      ep_recon += loss_recon * static_cast<double>(b);
      ep_kl += loss_kl * static_cast<double>(b);

      // Predictor path (latent mean input).
      const auto g_pred = nn::backward(m.predictor, pred_cache,
                                       m.lambda_pred * nn::mse_grad(pred, y));
      // Reconstruction path (sampled latent input).
      const auto g_dec = nn::backward(m.decoder, dec_cache,
                                      m.lambda_recon * nn::mse_grad(recon, x));
      // Pull both latent gradients plus the KL term back into the encoder.
      nn::Matrix dmu_kl, dlogvar_kl;
      nn::gaussian_kl_batch_grad(mu, logvar, &dmu_kl, &dlogvar_kl);
      nn::Matrix d_enc_out(2 * kLatentDim, b);
      d_enc_out.topRows(kLatentDim) = g_pred.input + g_dec.input + m.lambda_kl * dmu_kl;
      d_enc_out.bottomRows(kLatentDim) =
          g_dec.input.cwiseProduct(eps).cwiseProduct((logvar.array() / 2.0).exp().matrix()) *
              0.5 +
          m.lambda_kl * dlogvar_kl;
      const auto g_enc = nn::backward(m.encoder, enc_cache, d_enc_out);

      opt_pred.update(m.predictor, g_pred);
      opt_dec.update(m.decoder, g_dec);
      opt_enc.update(m.encoder, g_enc);
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    m.history.pred.push_back(ep_pred * inv_n);
    m.history.recon.push_back(ep_recon * inv_n);
    m.history.kl.push_back(ep_kl * inv_n);
    m.history.total.push_back(m.lambda_pred * ep_pred * inv_n +
                              m.lambda_recon * ep_recon * inv_n +
                              m.lambda_kl * ep_kl * inv_n);
  }
}

}  // namespace detail

inline StarlightLowModel train_low(Dataset& ds, std::uint64_t seed,
                                   const TrainLowOptions& opt = {}) {
  check_arg(!ds.samples.empty(), "train_low: empty dataset");
  check_arg(ds.samples.front().fidelity == Fidelity::kLow, "train_low: dataset must be low fidelity");
  if (!ds.standardized) ds.standardize_targets();

  auto rng = make_rng(seed, 100);

  StarlightLowModel m;
  m.encoder = nn::make_network({kFeatureDim, 24, 12, 2 * kLatentDim}, rng);
  m.decoder = nn::make_network({kLatentDim, 12, 24, kFeatureDim}, rng);
  m.predictor = nn::make_network({kLatentDim, 64, 256, 256, 64, 1}, rng);
  m.lambda_pred = opt.lambda_pred;
  m.lambda_recon = opt.lambda_recon;
  m.lambda_kl = opt.lambda_kl;
  m.seed = seed;
  m.dataset_hash = dataset_fingerprint(ds);
  m.target_mean = ds.target_mean;
  m.target_sd = ds.target_sd;

  nn::Matrix x_all, y_all;
  dataset_matrices(ds, ds.train_indices(), &x_all, &y_all);
  detail::train_low_epochs(m, x_all, y_all, opt.epochs, opt.batch_size, opt.lr, rng);
  return m;
}

// Spearman rank correlation of predictions against targets on a split.
inline double evaluate_low(const StarlightLowModel& m, const Dataset& ds,
                           const std::vector<std::size_t>& idx) {
  check_arg(idx.size() >= 2, "evaluate_low: split too small");
  nn::Matrix x, y;
  dataset_matrices(ds, idx, &x, &y);
  const nn::Matrix pred = predict_low(m, x);
  std::vector<double> p(pred.data(), pred.data() + pred.cols());
  std::vector<double> t(y.data(), y.data() + y.cols());
  return spearman_rho(p, t);
}

inline void save_starlight_low(const StarlightLowModel& m, const std::string& path) {
  nlohmann::json j;
  j["format"] = "starlight-low-v1";
  j["encoder"] = nn::network_to_json(m.encoder);
  j["decoder"] = nn::network_to_json(m.decoder);
  j["predictor"] = nn::network_to_json(m.predictor);
  j["target_mean"] = m.target_mean;
  j["target_sd"] = m.target_sd;
  std::ofstream out(path);
  check(out.good(), "save_starlight_low: cannot open " + path);
  out << j.dump() << "\n";
  check(out.good(), "save_starlight_low: write failed");

  nlohmann::json side;
  side["lambda_pred"] = m.lambda_pred;
  side["lambda_recon"] = m.lambda_recon;
  side["lambda_kl"] = m.lambda_kl;
  side["seed"] = m.seed;
  side["dataset_hash"] = m.dataset_hash;
  std::ofstream meta(path + ".meta.json");
  check(meta.good(), "save_starlight_low: cannot open sidecar");
  meta << side.dump(2) << "\n";
}

inline StarlightLowModel load_starlight_low(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "load_starlight_low: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("load_starlight_low: parse error in " + path + ": " + e.what());
  }
  check(j.value("format", "") == "starlight-low-v1", "load_starlight_low: unrecognized format");
  StarlightLowModel m;
  m.encoder = nn::network_from_json(j.at("encoder"));
  m.decoder = nn::network_from_json(j.at("decoder"));
  m.predictor = nn::network_from_json(j.at("predictor"));
  m.target_mean = j.at("target_mean").get<double>();
  m.target_sd = j.at("target_sd").get<double>();

  std::ifstream meta(path + ".meta.json");
  if (meta.good()) {
    nlohmann::json side;
    try {
      meta >> side;
      m.lambda_pred = side.value("lambda_pred", 1.0);
      m.lambda_recon = side.value("lambda_recon", 1.0);
      m.lambda_kl = side.value("lambda_kl", 0.01);
      m.seed = side.value("seed", std::uint64_t{0});
      m.dataset_hash = side.value("dataset_hash", std::string{});
    } catch (const nlohmann::json::exception&) {
      // Sidecar is advisory; the checkpoint alone is sufficient.
    }
  }
  return m;
}

}  // namespace polaris
