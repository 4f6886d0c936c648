#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "polaris/nn.hpp"

using namespace polaris;
using nn::Matrix;
using nn::Vector;

namespace {

// Independent scalar forward pass: plain loops, no linear algebra library.
std::vector<double> scalar_forward(const nn::Network& net, const std::vector<double>& x) {
  std::vector<double> a = x;
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    const auto& l = net.layers[li];
    std::vector<double> z(static_cast<std::size_t>(l.w.rows()), 0.0);
    for (Eigen::Index r = 0; r < l.w.rows(); ++r) {
      double acc = l.b(r);
      for (Eigen::Index c = 0; c < l.w.cols(); ++c) acc += l.w(r, c) * a[static_cast<std::size_t>(c)];
      z[static_cast<std::size_t>(r)] = acc;
    }
    if (li + 1 < net.layers.size())
      for (auto& v : z) v = v > 0.0 ? v : 0.0;
    a = std::move(z);
  }
  return a;
}

// Loss used for gradient checking: fixed random projection of the outputs.
double projected_loss(const nn::Network& net, const Matrix& x, const Matrix& dy) {
  return (nn::forward(net, x).cwiseProduct(dy)).sum();
}

// Central finite differences on every parameter (or a deterministic subset).
void check_gradients(std::vector<int> sizes, int batch, std::size_t max_checks,
                     std::uint64_t seed) {
  auto rng = make_rng(seed, 0);
  auto net = nn::make_network(sizes, rng);
  Matrix x(sizes.front(), batch);
  Matrix dy(sizes.back(), batch);
  for (Eigen::Index c = 0; c < x.cols(); ++c)
    for (Eigen::Index r = 0; r < x.rows(); ++r) x(r, c) = 2.0 * uniform01(rng) - 1.0;
  for (Eigen::Index c = 0; c < dy.cols(); ++c)
    for (Eigen::Index r = 0; r < dy.rows(); ++r) dy(r, c) = 2.0 * uniform01(rng) - 1.0;

  nn::ForwardCache cache;
  nn::forward(net, x, &cache);
  const auto grads = nn::backward(net, cache, dy);

  struct Slot {
    double* param;
    double analytic;
  };
  std::vector<Slot> slots;
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    auto& l = net.layers[li];
    for (Eigen::Index i = 0; i < l.w.size(); ++i)
      slots.push_back({l.w.data() + i, grads.layers[li].w.data()[i]});
    for (Eigen::Index i = 0; i < l.b.size(); ++i)
      slots.push_back({l.b.data() + i, grads.layers[li].b.data()[i]});
  }
  const std::size_t stride = std::max<std::size_t>(1, slots.size() / max_checks);
  int checked = 0;
  for (std::size_t s = 0; s < slots.size(); s += stride) {
    double* p = slots[s].param;
    const double orig = *p;
    const double h = 1e-5 * std::max(1.0, std::abs(orig));
    *p = orig + h;
    const double up = projected_loss(net, x, dy);
    *p = orig - h;
    const double down = projected_loss(net, x, dy);
    *p = orig;
    const double fd = (up - down) / (2.0 * h);
    const double scale = std::max({1e-6, std::abs(fd), std::abs(slots[s].analytic)});
    INFO("sizes[0]=" << sizes.front() << " slot=" << s << " fd=" << fd
                     << " analytic=" << slots[s].analytic);
    REQUIRE(std::abs(fd - slots[s].analytic) / scale < 1e-4);
    ++checked;
  }
  REQUIRE(checked > 0);

  // Input gradient too (the encoder is trained through it).
  for (Eigen::Index i = 0; i < std::min<Eigen::Index>(x.size(), 40); ++i) {
    const double orig = x.data()[i];
    const double h = 1e-5 * std::max(1.0, std::abs(orig));
    x.data()[i] = orig + h;
    const double up = projected_loss(net, x, dy);
    x.data()[i] = orig - h;
    const double down = projected_loss(net, x, dy);
    x.data()[i] = orig;
    const double fd = (up - down) / (2.0 * h);
    const double analytic = grads.input.data()[i];
    const double scale = std::max({1e-6, std::abs(fd), std::abs(analytic)});
    REQUIRE(std::abs(fd - analytic) / scale < 1e-4);
  }
}

}  // namespace

TEST_CASE("forward fixtures", "[nn]") {
  auto rng = make_rng(41, 0);
  auto net = nn::make_network({3, 4, 2}, rng);
  for (auto& l : net.layers) {
    l.w.setZero();
    l.b.setZero();
  }
  Matrix x = Matrix::Random(3, 5);
  REQUIRE(nn::forward(net, x).isZero(0.0));

  nn::Network id;
  id.sizes = {3, 3};
  id.layers.push_back({Matrix::Identity(3, 3), Vector::Zero(3)});
  REQUIRE(nn::forward(id, x) == x);

  REQUIRE_THROWS(nn::forward(id, Matrix::Random(4, 2)));
}

TEST_CASE("forward matches a scalar reimplementation", "[nn]") {
  auto rng = make_rng(42, 0);
  auto net = nn::make_network({5, 7, 6, 2}, rng);
  Matrix x(5, 9);
  for (Eigen::Index c = 0; c < x.cols(); ++c)
    for (Eigen::Index r = 0; r < x.rows(); ++r) x(r, c) = 2.0 * uniform01(rng) - 1.0;
  const Matrix y = nn::forward(net, x);
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    std::vector<double> col(5);
    for (int r = 0; r < 5; ++r) col[static_cast<std::size_t>(r)] = x(r, c);
    const auto ref = scalar_forward(net, col);
    for (int r = 0; r < 2; ++r) REQUIRE(y(r, c) == Catch::Approx(ref[static_cast<std::size_t>(r)]).margin(1e-12));
  }
}

TEST_CASE("gradients agree with central differences", "[nn]") {
  check_gradients({3, 5, 4, 2}, 6, 1u << 20, 43);  // exhaustive on the small net
  // The architectures used by the surrogates, spot-checked.
  check_gradients({40, 24, 12, 4}, 4, 160, 44);
  check_gradients({2, 12, 24, 40}, 4, 160, 45);
  check_gradients({2, 64, 256, 256, 64, 1}, 4, 120, 46);
  check_gradients({4, 64, 64, 2}, 4, 160, 47);
}

TEST_CASE("zero output gradient gives zero parameter gradients", "[nn]") {
  auto rng = make_rng(48, 0);
  auto net = nn::make_network({4, 6, 3}, rng);
  nn::ForwardCache cache;
  Matrix x = Matrix::Random(4, 5);
  nn::forward(net, x, &cache);
  const auto g = nn::backward(net, cache, Matrix::Zero(3, 5));
  for (const auto& l : g.layers) {
    REQUIRE(l.w.isZero(0.0));
    REQUIRE(l.b.isZero(0.0));
  }
  REQUIRE(g.input.isZero(0.0));
}

TEST_CASE("linear layer MSE gradient has the closed form", "[nn]") {
  auto rng = make_rng(49, 0);
  nn::Network net;
  net.sizes = {3, 1};
  net.layers.push_back({Matrix::Random(1, 3), Vector::Random(1)});
  Matrix x = Matrix::Random(3, 16);
  Matrix y = Matrix::Random(1, 16);
  nn::ForwardCache cache;
  const Matrix pred = nn::forward(net, x, &cache);
  const auto g = nn::backward(net, cache, nn::mse_grad(pred, y));
  const Matrix expect = 2.0 * (pred - y) * x.transpose() / 16.0;
  REQUIRE((g.layers[0].w - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("adam fixtures", "[nn]") {
  auto rng = make_rng(50, 0);
  auto net = nn::make_network({2, 2}, rng);
  const Matrix w0 = net.layers[0].w;
  nn::Adam opt(net);
  nn::Gradients zero;
  zero.layers.push_back({Matrix::Zero(2, 2), Vector::Zero(2)});
  zero.input = Matrix::Zero(2, 1);
  opt.update(net, zero);
  REQUIRE(opt.step == 1);
  REQUIRE(net.layers[0].w == w0);

  // Hand-computed single step on a scalar parameter.
  nn::Network scalar;
  scalar.sizes = {1, 1};
  scalar.layers.push_back({Matrix::Constant(1, 1, 1.0), Vector::Zero(1)});
  nn::Adam sopt(scalar, 0.1);
  nn::Gradients g;
  g.layers.push_back({Matrix::Constant(1, 1, 0.5), Vector::Zero(1)});
  sopt.update(scalar, g);
  // m_hat = 0.5, v_hat = 0.25, step = lr * 0.5 / (0.5 + eps) ~= 0.1.
  REQUIRE(scalar.layers[0].w(0, 0) == Catch::Approx(0.9).margin(1e-6));

  // Constant gradient: update magnitude approaches lr * sign(g).
  for (int i = 0; i < 600; ++i) sopt.update(scalar, g);
  const double before = scalar.layers[0].w(0, 0);
  sopt.update(scalar, g);
  REQUIRE(before - scalar.layers[0].w(0, 0) == Catch::Approx(0.1).epsilon(0.02));

  g.layers[0].w(0, 0) = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS(sopt.update(scalar, g));
}

TEST_CASE("gaussian KL matches quadrature", "[nn]") {
  Vector zero = Vector::Zero(3);
  REQUIRE(nn::gaussian_kl(zero, zero) == 0.0);
  Vector mu(2);
  mu << 1.0, 0.0;
  REQUIRE(nn::gaussian_kl(mu, Vector::Zero(2)) == Catch::Approx(0.5));

  auto rng = make_rng(51, 0);
  for (int rep = 0; rep < 10; ++rep) {
    const double m = 3.0 * (uniform01(rng) - 0.5);
    const double lv = 2.0 * (uniform01(rng) - 0.5);
    const double var = std::exp(lv);
    // Numerical integral of p log(p/q) for p = N(m, var), q = N(0, 1).
    double integral = 0.0;
    const double dx = 1e-3;
    for (double x = -14.0; x <= 14.0; x += dx) {
      const double p = std::exp(-(x - m) * (x - m) / (2.0 * var)) / std::sqrt(2.0 * M_PI * var);
      const double logq = -x * x / 2.0 - 0.5 * std::log(2.0 * M_PI);
      const double logp = -(x - m) * (x - m) / (2.0 * var) - 0.5 * std::log(2.0 * M_PI * var);
      integral += p * (logp - logq) * dx;
    }
    Vector vm(1), vl(1);
    vm << m;
    vl << lv;
    REQUIRE(nn::gaussian_kl(vm, vl) == Catch::Approx(integral).margin(1e-6));
  }

  Vector nan1(1);
  nan1 << std::numeric_limits<double>::infinity();
  REQUIRE_THROWS(nn::gaussian_kl(nan1, Vector::Zero(1)));
}

TEST_CASE("reparameterize moments and determinism", "[nn]") {
  auto rng = make_rng(52, 0);
  NormalSampler normal(rng);
  Matrix mu = Matrix::Constant(1, 100000, 0.7);
  Matrix lv = Matrix::Constant(1, 100000, -0.4);
  const Matrix z = nn::reparameterize(mu, lv, normal);
  const double n = 100000.0;
  const double mean = z.sum() / n;
  const double var = (z.array() - mean).square().sum() / n;
  const double sd = std::sqrt(std::exp(-0.4));
  REQUIRE(std::abs(mean - 0.7) < 3.0 * sd / std::sqrt(n));
  REQUIRE(std::abs(var - std::exp(-0.4)) < 3.0 * std::exp(-0.4) * std::sqrt(2.0 / n));

  // Vanishing variance returns mu.
  Matrix tiny = Matrix::Constant(2, 3, -800.0);
  Matrix m2 = Matrix::Random(2, 3);
  REQUIRE(nn::reparameterize(m2, tiny, normal) == m2);

  auto rng_a = make_rng(9, 9);
  auto rng_b = make_rng(9, 9);
  NormalSampler na(rng_a), nb(rng_b);
  REQUIRE(nn::reparameterize(m2, Matrix::Zero(2, 3), na) ==
          nn::reparameterize(m2, Matrix::Zero(2, 3), nb));
}

TEST_CASE("toy regression trains to under 1% of initial loss", "[nn]") {
  auto rng = make_rng(53, 0);
  auto net = nn::make_network({1, 16, 1}, rng);
  Matrix x(1, 64), y(1, 64);
  for (int i = 0; i < 64; ++i) {
    x(0, i) = -1.0 + 2.0 * i / 63.0;
    y(0, i) = 2.0 * x(0, i) - 1.0;
  }
  nn::Adam opt(net, 1e-2);
  nn::ForwardCache cache;
  const double initial = nn::mse(nn::forward(net, x), y);
  for (int step = 0; step < 800; ++step) {
    const Matrix pred = nn::forward(net, x, &cache);
    opt.update(net, nn::backward(net, cache, nn::mse_grad(pred, y)));
  }
  const double final_loss = nn::mse(nn::forward(net, x), y);
  REQUIRE(final_loss < 0.01 * initial);
}

TEST_CASE("checkpoints round-trip bit-exactly", "[nn]") {
  auto rng = make_rng(54, 0);
  auto net = nn::make_network({4, 9, 3}, rng);
  const auto text = nn::network_to_json(net).dump();
  const auto back = nn::network_from_json(nlohmann::json::parse(text));
  REQUIRE(back.sizes == net.sizes);
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    REQUIRE(back.layers[i].w == net.layers[i].w);
    REQUIRE(back.layers[i].b == net.layers[i].b);
  }
}
