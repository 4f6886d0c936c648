// Exact Gaussian-process regression with a Matern-5/2 kernel, a Gamma prior
// on the lengthscale, and marginal-likelihood training of the three
// hyperparameters. Inputs are row-vector points of any width (2 for the
// learned latent space, 40 when a baseline regresses raw features).
//
// All hyperparameters live as unconstrained logs; noise carries an additive
// 1e-6 floor so the Gram matrix stays invertible even when training drives
// the raw parameter to -inf.
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "polaris/common.hpp"

namespace polaris::gp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kNoiseFloor = 1e-6;
inline constexpr double kGammaShape = 3.0;
inline constexpr double kGammaRate = 6.0;

struct KernelParams {
  double log_lengthscale = std::log(0.5);
  double log_outputscale = 0.0;
  double log_noise = std::log(1e-2);

  double lengthscale() const { return std::exp(log_lengthscale); }
  double outputscale() const { return std::exp(log_outputscale); }
  double noise() const { return kNoiseFloor + std::exp(log_noise); }

  nlohmann::json to_json() const {
    return {{"log_lengthscale", log_lengthscale},
            {"log_outputscale", log_outputscale},
            {"log_noise", log_noise}};
  }
  static KernelParams from_json(const nlohmann::json& j) {
    KernelParams p;
    p.log_lengthscale = j.at("log_lengthscale").get<double>();
    p.log_outputscale = j.at("log_outputscale").get<double>();
    p.log_noise = j.at("log_noise").get<double>();
    return p;
  }
};

inline double matern_kernel(const Vector& a, const Vector& b, const KernelParams& p) {
  check_arg(a.size() == b.size(), "matern_kernel: dimension mismatch");
  check_arg(a.allFinite() && b.allFinite(), "matern_kernel: non-finite input");
  const double r = (a - b).norm() / p.lengthscale();
  const double sr5 = std::sqrt(5.0) * r;
  return p.outputscale() * (1.0 + sr5 + 5.0 * r * r / 3.0) * std::exp(-sr5);
}

// log Gamma(shape, rate) density of the lengthscale, in log-lengthscale.
inline double log_lengthscale_prior(double log_ell) {
  const double ell = std::exp(log_ell);
  return kGammaShape * std::log(kGammaRate) - std::lgamma(kGammaShape) +
         (kGammaShape - 1.0) * std::log(ell) - kGammaRate * ell;
}

struct GpState {
  Matrix x;  // n x d, one training point per row
  Vector y;  // n standardized targets
  KernelParams params;

  void set_data(Matrix x_in, Vector y_in) {
    check_arg(x_in.rows() == y_in.size(), "gp: row/target count mismatch");
    x = std::move(x_in);
    y = std::move(y_in);
    invalidate();
  }
  void set_params(const KernelParams& p) {
    params = p;
    invalidate();
  }
  void invalidate() { cache_ok_ = false; }

  Eigen::Index size() const { return x.rows(); }
  Eigen::Index dim() const { return x.cols(); }

  // Pairwise distance matrix; kernel and gradients all derive from it.
  Matrix distances() const {
    const auto n = x.rows();
    Matrix d(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      d(i, i) = 0.0;
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double v = (x.row(i) - x.row(j)).norm();
        d(i, j) = v;
        d(j, i) = v;
      }
    }
    return d;
  }

  void refresh() const {
    if (cache_ok_) return;
    check_arg(x.rows() >= 1, "gp: no training data");
    check_arg(x.allFinite() && y.allFinite(), "gp: non-finite training data");
    const auto n = x.rows();
    const double ell = params.lengthscale();
    const double os = params.outputscale();
    const Eigen::ArrayXXd r = distances().array() / ell;
    const Eigen::ArrayXXd sr5 = std::sqrt(5.0) * r;
    Matrix k = (os * (1.0 + sr5 + 5.0 / 3.0 * r.square()) * (-sr5).exp()).matrix();
    k.diagonal().array() += params.noise();

    // Jitter ladder: 0, then 1e-8 escalating to 1e-3.
    jitter_used_ = 0.0;
    Eigen::LLT<Matrix> llt(k);
    double jitter = 1e-8;
    while (llt.info() != Eigen::Success && jitter <= 1e-3) {
      Matrix kj = k;
      kj.diagonal().array() += jitter;
      llt.compute(kj);
      jitter_used_ = jitter;
      jitter *= 10.0;
    }
    check(llt.info() == Eigen::Success, "gp: Cholesky failed after max jitter");
    l_ = llt.matrixL();
    alpha_ = llt.solve(y);
    kinv_ = llt.solve(Matrix::Identity(n, n));
    log_det_ = 2.0 * l_.diagonal().array().log().sum();
    cache_ok_ = true;
  }

  const Vector& alpha() const {
    refresh();
    return alpha_;
  }
  const Matrix& kinv() const {
    refresh();
    return kinv_;
  }
  double log_det() const {
    refresh();
    return log_det_;
  }
  double jitter_used() const {
    refresh();
    return jitter_used_;
  }

 private:
  mutable bool cache_ok_ = false;
  mutable Matrix l_, kinv_;
  mutable Vector alpha_;
  mutable double log_det_ = 0.0;
  mutable double jitter_used_ = 0.0;
};

inline double mll(const GpState& s) {
  s.refresh();
  const double n = static_cast<double>(s.size());
  const double fit_term = -0.5 * s.y.dot(s.alpha());
  const double value = fit_term - 0.5 * s.log_det() - 0.5 * n * std::log(2.0 * M_PI) +
                       log_lengthscale_prior(s.params.log_lengthscale);
  check(std::isfinite(value), "gp: non-finite marginal log likelihood");
  return value;
}

struct MllGrads {
  double value = 0.0;
  double d_log_lengthscale = 0.0;
  double d_log_outputscale = 0.0;
  double d_log_noise = 0.0;
  Matrix d_x;  // n x d, filled when requested
};

inline MllGrads mll_grads(const GpState& s, bool want_x_grad = false) {
  s.refresh();
  MllGrads out;
  out.value = mll(s);

  const double ell = s.params.lengthscale();
  const double os = s.params.outputscale();
  const Eigen::ArrayXXd r = s.distances().array() / ell;
  const Eigen::ArrayXXd sr5 = std::sqrt(5.0) * r;
  const Eigen::ArrayXXd e = (-sr5).exp();

  // A = alpha alpha^T - K^-1; d mll / d theta = 1/2 tr(A dK/dtheta).
  const Matrix a = s.alpha() * s.alpha().transpose() - s.kinv();

  // dk/dlog(ell) = (5 r^2 / 3)(1 + sqrt5 r) os e^{-sqrt5 r}; dk/dlog(os) = k.
  const double g_ell = (a.array() * (5.0 / 3.0 * r.square()) * (1.0 + sr5) * os * e).sum();
  const double g_os = (a.array() * (os * (1.0 + sr5 + 5.0 / 3.0 * r.square()) * e)).sum();
  out.d_log_lengthscale = 0.5 * g_ell + (kGammaShape - 1.0) - kGammaRate * ell;
  out.d_log_outputscale = 0.5 * g_os;
  out.d_log_noise = 0.5 * a.trace() * std::exp(s.params.log_noise);

  if (want_x_grad) {
    // d mll / d x_p = sum_j A_pj g(r_pj) (x_p - x_j) / ell^2 with
    // g(r) = -(5/3)(1 + sqrt5 r) os e^{-sqrt5 r}; the diagonal term is
    // multiplied by a zero difference, so it can stay in the weight matrix.
    const Matrix w =
        (a.array() * (-(5.0 / 3.0) * (1.0 + sr5) * os * e) / (ell * ell)).matrix();
    out.d_x = w.rowwise().sum().asDiagonal() * s.x - w * s.x;
  }
  return out;
}

// Adam ascent on the three log parameters; returns the best state seen, so
// the final mll never falls below the initial one.
inline void fit(GpState& s, int steps, double lr = 0.05) {
  check_arg(steps >= 0, "gp: negative step count");
  check_arg(s.size() >= 2, "gp: need at least two points to fit");
  if (steps == 0) return;

  double m[3] = {0, 0, 0}, v[3] = {0, 0, 0};
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  KernelParams best = s.params;
  double best_mll = mll(s);
  for (int t = 1; t <= steps; ++t) {
    const auto g = mll_grads(s);
    if (g.value > best_mll) {
      best_mll = g.value;
      best = s.params;
    }
    const double grads[3] = {g.d_log_lengthscale, g.d_log_outputscale, g.d_log_noise};
    double* p[3] = {&s.params.log_lengthscale, &s.params.log_outputscale, &s.params.log_noise};
    const double c1 = 1.0 - std::pow(b1, t);
    const double c2 = 1.0 - std::pow(b2, t);
    for (int i = 0; i < 3; ++i) {
      check(std::isfinite(grads[i]), "gp: non-finite mll gradient");
      m[i] = b1 * m[i] + (1.0 - b1) * grads[i];
      v[i] = b2 * v[i] + (1.0 - b2) * grads[i] * grads[i];
      *p[i] += lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);  // ascent
    }
    s.invalidate();
  }
  if (mll(s) < best_mll) s.set_params(best);
}

// Exact posterior of the latent function (no observation noise added):
// far from data the variance reverts to the outputscale. Pass variance =
// nullptr to skip the quadratic-cost term when only means are needed.
inline void posterior(const GpState& s, const Matrix& queries, Vector* mean, Vector* variance) {
  s.refresh();
  check_arg(queries.cols() == s.dim(), "gp: query dimension mismatch");
  const auto n = s.size();
  const auto m = queries.rows();
  const double ell = s.params.lengthscale();
  const double os = s.params.outputscale();

  Matrix kstar(n, m);
  if (m >= 64) {
    // Large batches: squared distances via one GEMM, kernel via array ops.
    Matrix d2 = -2.0 * s.x * queries.transpose();
    d2.colwise() += s.x.rowwise().squaredNorm();
    d2.rowwise() += queries.rowwise().squaredNorm().transpose();
    const Eigen::ArrayXXd r = d2.array().max(0.0).sqrt() / ell;
    const Eigen::ArrayXXd sr5 = std::sqrt(5.0) * r;
    kstar = (os * (1.0 + sr5 + 5.0 / 3.0 * r.square()) * (-sr5).exp()).matrix();
  } else {
    for (Eigen::Index j = 0; j < m; ++j)
      for (Eigen::Index i = 0; i < n; ++i) {
        const double r = (s.x.row(i) - queries.row(j)).norm() / ell;
        const double sr5 = std::sqrt(5.0) * r;
        kstar(i, j) = os * (1.0 + sr5 + 5.0 * r * r / 3.0) * std::exp(-sr5);
      }
  }
  *mean = kstar.transpose() * s.alpha();
  if (variance == nullptr) return;
  const Matrix vsolve = s.kinv() * kstar;
  variance->resize(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const double q = kstar.col(j).dot(vsolve.col(j));
    (*variance)(j) = std::max(os - q, 1e-12);
  }
}

inline std::pair<double, double> posterior_point(const GpState& s, const Vector& query) {
  Vector mean, var;
  posterior(s, query.transpose(), &mean, &var);
  return {mean(0), var(0)};
}

}  // namespace polaris::gp
