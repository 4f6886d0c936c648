// Dense-network engine used by the surrogates: fixed affine+ReLU stacks with
// a linear head, exact reverse-mode gradients, Adam, and the two losses the
// variational pieces need. Everything is 64-bit and batch-columnar
// (a sample is a column, so a batch is input_dim x batch_size).
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "polaris/common.hpp"

namespace polaris::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct DenseLayer {
  Matrix w;  // out x in
  Vector b;  // out
};

struct Network {
  std::vector<int> sizes;  // e.g. {40, 24, 12, 4}
  std::vector<DenseLayer> layers;

  int input_dim() const { return sizes.front(); }
  int output_dim() const { return sizes.back(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.w.size() + l.b.size());
    return n;
  }
};

// Glorot-uniform init, seeded.
inline Network make_network(const std::vector<int>& sizes, Rng& rng) {
  check_arg(sizes.size() >= 2, "make_network: need at least input and output sizes");
  for (int s : sizes) check_arg(s >= 1, "make_network: layer sizes must be positive");
  Network net;
  net.sizes = sizes;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    const int fan_in = sizes[i];
    const int fan_out = sizes[i + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    DenseLayer layer;
    layer.w = Matrix(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r)
      for (int c = 0; c < fan_in; ++c) layer.w(r, c) = (2.0 * uniform01(rng) - 1.0) * bound;
    layer.b = Vector::Zero(fan_out);
    net.layers.push_back(std::move(layer));
  }
  return net;
}

struct ForwardCache {
  Matrix input;
  std::vector<Matrix> pre;   // z_i = W_i a_{i-1} + b_i
  std::vector<Matrix> post;  // a_i = relu(z_i), last layer linear
};

// ReLU on hidden layers, linear final layer.
inline Matrix forward(const Network& net, const Matrix& x, ForwardCache* cache = nullptr) {
  check_arg(x.rows() == net.input_dim(), "forward: input width mismatch");
  if (cache) {
    cache->input = x;
    cache->pre.clear();
    cache->post.clear();
  }
  Matrix a = x;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    Matrix z = (net.layers[i].w * a).colwise() + net.layers[i].b;
    const bool last = i + 1 == net.layers.size();
    Matrix out = last ? z : z.cwiseMax(0.0);
    if (cache) {
      cache->pre.push_back(z);
      cache->post.push_back(out);
    }
    a = std::move(out);
  }
  return a;
}

struct Gradients {
  std::vector<DenseLayer> layers;  // same shapes as the network
  Matrix input;                    // d loss / d input, input_dim x batch

  bool all_finite() const {
    for (const auto& l : layers)
      if (!l.w.allFinite() || !l.b.allFinite()) return false;
    return input.allFinite();
  }
};

// Exact reverse-mode pass. output_grad is d loss / d network output.
inline Gradients backward(const Network& net, const ForwardCache& cache,
                          const Matrix& output_grad) {
  const auto n = net.layers.size();
  check_arg(cache.pre.size() == n && cache.post.size() == n, "backward: stale or missing cache");
  check_arg(output_grad.rows() == net.output_dim(), "backward: output grad width mismatch");
  check_arg(output_grad.cols() == cache.input.cols(), "backward: batch size mismatch");

  Gradients g;
  g.layers.resize(n);
  Matrix dz = output_grad;  // final layer is linear
  for (std::size_t ii = n; ii-- > 0;) {
    const Matrix& a_prev = ii == 0 ? cache.input : cache.post[ii - 1];
    g.layers[ii].w = dz * a_prev.transpose();
    g.layers[ii].b = dz.rowwise().sum();
    Matrix da = net.layers[ii].w.transpose() * dz;
    if (ii == 0) {
      g.input = std::move(da);
    } else {
      dz = da.cwiseProduct((cache.pre[ii - 1].array() > 0.0).cast<double>().matrix());
    }
  }
  return g;
}

struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<DenseLayer> m, v;

  explicit Adam(const Network& net, double lr_ = 1e-3) : lr(lr_) {
    for (const auto& l : net.layers) {
      m.push_back({Matrix::Zero(l.w.rows(), l.w.cols()), Vector::Zero(l.b.size())});
      v.push_back({Matrix::Zero(l.w.rows(), l.w.cols()), Vector::Zero(l.b.size())});
    }
  }

  void update(Network& net, const Gradients& g) {
    check_arg(g.layers.size() == net.layers.size(), "adam: gradient shape mismatch");
    for (const auto& l : g.layers)
      check_arg(l.w.allFinite() && l.b.allFinite(), "adam: non-finite gradient");
    ++step;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
      auto apply = [&](auto& param, const auto& grad, auto& m_acc, auto& v_acc) {
        m_acc = beta1 * m_acc + (1.0 - beta1) * grad;
        v_acc = beta2 * v_acc + (1.0 - beta2) * grad.cwiseProduct(grad);
        param.array() -=
            lr * (m_acc.array() / c1) / ((v_acc.array() / c2).sqrt() + eps);
      };
      apply(net.layers[i].w, g.layers[i].w, m[i].w, v[i].w);
      apply(net.layers[i].b, g.layers[i].b, m[i].b, v[i].b);
    }
  }
};

// Mean over the batch of the summed squared error per sample.
inline double mse(const Matrix& pred, const Matrix& target) {
  check_arg(pred.rows() == target.rows() && pred.cols() == target.cols(), "mse: shape mismatch");
  check_arg(pred.cols() > 0, "mse: empty batch");
  return (pred - target).squaredNorm() / static_cast<double>(pred.cols());
}

inline Matrix mse_grad(const Matrix& pred, const Matrix& target) {
  return 2.0 * (pred - target) / static_cast<double>(pred.cols());
}

// KL(N(mu, diag exp(logvar)) || N(0, I)) summed over components.
inline double gaussian_kl(const Vector& mu, const Vector& logvar) {
  check_arg(mu.size() == logvar.size(), "gaussian_kl: length mismatch");
  check_arg(mu.allFinite() && logvar.allFinite(), "gaussian_kl: non-finite input");
  return 0.5 * (logvar.array().exp() + mu.array().square() - 1.0 - logvar.array()).sum();
}

// Batched KL, mean over columns; gradients match that normalization.
inline double gaussian_kl_batch(const Matrix& mu, const Matrix& logvar) {
  check_arg(mu.rows() == logvar.rows() && mu.cols() == logvar.cols(),
            "gaussian_kl_batch: shape mismatch");
  check_arg(mu.allFinite() && logvar.allFinite(), "gaussian_kl_batch: non-finite input");
  const double total =
      0.5 * (logvar.array().exp() + mu.array().square() - 1.0 - logvar.array()).sum();
  return total / static_cast<double>(mu.cols());
}

inline void gaussian_kl_batch_grad(const Matrix& mu, const Matrix& logvar, Matrix* dmu,
                                   Matrix* dlogvar) {
  const double inv_b = 1.0 / static_cast<double>(mu.cols());
  *dmu = mu * inv_b;
  *dlogvar = (0.5 * (logvar.array().exp() - 1.0)).matrix() * inv_b;
}

// z = mu + exp(logvar / 2) * eps, eps ~ N(0, I).
inline Matrix reparameterize(const Matrix& mu, const Matrix& logvar, NormalSampler& normal,
                             Matrix* eps_out = nullptr) {
  check_arg(mu.rows() == logvar.rows() && mu.cols() == logvar.cols(),
            "reparameterize: shape mismatch");
  Matrix eps(mu.rows(), mu.cols());
  for (Eigen::Index c = 0; c < eps.cols(); ++c)
    for (Eigen::Index r = 0; r < eps.rows(); ++r) eps(r, c) = normal();
  if (eps_out) *eps_out = eps;
  return mu + (logvar.array() / 2.0).exp().matrix().cwiseProduct(eps);
}

inline nlohmann::json network_to_json(const Network& net) {
  nlohmann::json j;
  j["sizes"] = net.sizes;
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : net.layers) {
    nlohmann::json jl;
    std::vector<double> w(l.w.data(), l.w.data() + l.w.size());
    std::vector<double> b(l.b.data(), l.b.data() + l.b.size());
    jl["w"] = w;
    jl["b"] = b;
    layers.push_back(jl);
  }
  j["layers"] = layers;
  return j;
}

inline Network network_from_json(const nlohmann::json& j) {
  Network net;
  net.sizes = j.at("sizes").get<std::vector<int>>();
  check_arg(net.sizes.size() >= 2, "network_from_json: bad sizes");
  const auto& layers = j.at("layers");
  check_arg(layers.size() + 1 == net.sizes.size(), "network_from_json: layer count mismatch");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const int rows = net.sizes[i + 1];
    const int cols = net.sizes[i];
    const auto w = layers[i].at("w").get<std::vector<double>>();
    const auto b = layers[i].at("b").get<std::vector<double>>();
    check_arg(w.size() == static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols),
              "network_from_json: weight size mismatch");
    check_arg(b.size() == static_cast<std::size_t>(rows), "network_from_json: bias size mismatch");
    DenseLayer l;
    l.w = Eigen::Map<const Matrix>(w.data(), rows, cols);
    l.b = Eigen::Map<const Vector>(b.data(), rows);
    net.layers.push_back(std::move(l));
  }
  return net;
}

}  // namespace polaris::nn
