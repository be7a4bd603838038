#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "support.hpp"

using namespace lace;

namespace {

double naive_lse(const std::vector<double>& v) {
  long double s = 0.0L;
  for (double x : v) s += std::exp(static_cast<long double>(x));
  return static_cast<double>(std::log(s));
}

// Straight loops over the weight layout, used as an independent forward.
std::vector<double> scalar_forward(const MlpParams& p, std::vector<double> x) {
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    const auto& w = p.weight(l);
    const auto& b = p.bias(l);
    std::vector<double> y(w.extent(0));
    for (std::size_t r = 0; r < y.size(); ++r) {
      double s = b[r];
      for (std::size_t c = 0; c < x.size(); ++c) s += w(r, c) * x[c];
      y[r] = (l + 1 < p.num_layers() && s < 0.0) ? 0.01 * s : s;
    }
    x = std::move(y);
  }
  return x;
}

MlpParams random_params(const std::vector<std::size_t>& dims, std::uint64_t seed) {
  auto p = mlp_init(dims, seed);
  Rng rng(seed + 99);
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    for (double& b : p.bias(l).data()) b = 0.3 * rng.normal();
  }
  return p;
}

}  // namespace

TEST(Logsumexp, Examples) {
  const std::vector<double> a{0.0, 0.0}, b{1000.0, 1000.0}, c{1.0, 2.0, 3.0};
  EXPECT_NEAR(logsumexp(a), std::numbers::ln2, 1e-15);
  EXPECT_NEAR(logsumexp(b), 1000.0 + std::numbers::ln2, 1e-12);
  EXPECT_NEAR(logsumexp(c), 3.40760596444438, 1e-13);
  EXPECT_NEAR(logsumexp(c), naive_lse(c), 1e-14);
}

TEST(Logsumexp, EmptyIsAnError) {
  const std::vector<double> e;
  EXPECT_THROW(logsumexp(e), ArgumentError);
}

TEST(Logsumexp, ShiftCovariance) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(1 + rng.index(6));
    rng.fill_normal(v);
    const double a = 50.0 * rng.normal();
    std::vector<double> s(v);
    for (double& x : s) x += a;
    EXPECT_NEAR(logsumexp(s), logsumexp(v) + a, 1e-12 * (1.0 + std::abs(a)));
  }
}

TEST(RealArray, ShapeMustMatchData) {
  EXPECT_THROW(RealArray({2, 3}, std::vector<double>(5)), ArgumentError);
  RealArray m = RealArray::matrix(2, 2, {1, 2, 3, 4});
  EXPECT_EQ(m(1, 0), 3.0);
  EXPECT_EQ(m.row(1)[1], 4.0);
}

TEST(MlpInit, BiasesAreZero) {
  for (std::uint64_t seed : {0u, 1u, 77u}) {
    const auto p = mlp_init({2, 1}, seed);
    EXPECT_EQ(p.bias(0)[0], 0.0);
  }
}

TEST(MlpInit, Deterministic) {
  const std::vector<std::size_t> dims{512, 384, 256, 128, 2};
  EXPECT_TRUE(mlp_init(dims, 7) == mlp_init(dims, 7));
  EXPECT_FALSE(mlp_init(dims, 7) == mlp_init(dims, 8));
}

TEST(MlpInit, FanInVariance) {
  const auto p = mlp_init({64, 64}, 7);
  double s = 0.0, s2 = 0.0;
  for (double w : p.weight(0).data()) {
    s += w;
    s2 += w * w;
  }
  const double n = static_cast<double>(p.weight(0).size());
  const double var = s2 / n - (s / n) * (s / n);
  const double want = 2.0 / (64.0 * (1.0 + kLeakySlope * kLeakySlope));
  EXPECT_LT(std::abs(var - want), 0.2 * want);
}

TEST(MlpInit, InvalidDims) {
  EXPECT_THROW(mlp_init({3}, 0), ArgumentError);
  EXPECT_THROW(mlp_init({3, 0, 2}, 0), ArgumentError);
}

TEST(MlpForward, ZeroNetGivesZero) {
  MlpParams p({3, 5, 2});
  RealArray x = RealArray::matrix(2, 3, {1, -2, 3, 0.5, 0.1, -7});
  const auto y = mlp_forward(p, x);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(MlpForward, IdentityLayerAddsBias) {
  MlpParams p({2, 2});
  p.weight(0)(0, 0) = 1.0;
  p.weight(0)(1, 1) = 1.0;
  p.bias(0)[0] = 0.25;
  p.bias(0)[1] = -1.5;
  const auto y = mlp_forward(p, RealArray::matrix(1, 2, {3.0, -4.0}));
  EXPECT_EQ(y(0, 0), 3.25);
  EXPECT_EQ(y(0, 1), -5.5);
}

TEST(MlpForward, MatchesScalarReimplementation) {
  const auto p = random_params({2, 5, 3}, 3);
  const auto y = mlp_forward(p, RealArray::matrix(1, 2, {0.5, -0.2}));
  const auto want = scalar_forward(p, {0.5, -0.2});
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(y(0, i), want[i], 1e-12);
}

TEST(MlpForward, ShapeMismatch) {
  MlpParams p({3, 2});
  EXPECT_THROW(mlp_forward(p, RealArray::matrix(1, 2, {1, 2})), ArgumentError);
}

TEST(MlpVjp, ZeroCotangent) {
  const auto p = random_params({3, 4, 2}, 1);
  const auto r = mlp_vjp(p, RealArray::matrix(1, 3, {0.1, 0.2, 0.3}), RealArray({1, 2}));
  for (const auto& t : r.grad_params.tensors()) {
    for (double v : t.data()) EXPECT_EQ(v, 0.0);
  }
  for (double v : r.grad_input.data()) EXPECT_EQ(v, 0.0);
}

TEST(MlpVjp, LinearLayerGivesTransposeProduct) {
  const auto p = random_params({3, 2}, 2);
  const std::vector<double> u{0.7, -1.3};
  const auto r = mlp_vjp(p, RealArray::matrix(1, 3, {1, 2, 3}), RealArray::matrix(1, 2, {u[0], u[1]}));
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_EQ(r.grad_input(0, c), p.weight(0)(0, c) * u[0] + p.weight(0)(1, c) * u[1]);
  }
}

TEST(MlpVjp, ShapeMismatch) {
  const auto p = random_params({3, 2}, 2);
  EXPECT_THROW(mlp_vjp(p, RealArray::matrix(1, 3, {1, 2, 3}), RealArray({1, 3})), ArgumentError);
}

// 100 random (net, input) pairs, all parameter and input gradients.
TEST(MlpVjp, MatchesFiniteDifferences) {
  Rng rng(12);
  const double h = 1e-5;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t din = 1 + rng.index(4), dh1 = 2 + rng.index(5), dh2 = 2 + rng.index(5),
                      dout = 1 + rng.index(3);
    auto p = random_params({din, dh1, dh2, dout}, 1000 + trial);
    RealArray x({1, din});
    rng.fill_normal(x.data());
    RealArray u({1, dout});
    rng.fill_normal(u.data());
    auto objective = [&](const MlpParams& q, const RealArray& xx) {
      const auto y = mlp_forward(q, xx);
      return dot(y.data(), u.data());
    };
    const auto r = mlp_vjp(p, x, u);
    std::vector<double> analytic, numeric;
    for (std::size_t k = 0; k < p.tensors().size(); ++k) {
      for (std::size_t i = 0; i < p.tensors()[k].size(); ++i) {
        double& w = p.tensors()[k][i];
        const double w0 = w;
        w = w0 + h;
        const double fp = objective(p, x);
        w = w0 - h;
        const double fm = objective(p, x);
        w = w0;
        numeric.push_back((fp - fm) / (2 * h));
        analytic.push_back(r.grad_params.tensors()[k][i]);
      }
    }
    for (std::size_t i = 0; i < din; ++i) {
      RealArray xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      numeric.push_back((objective(p, xp) - objective(p, xm)) / (2 * h));
      analytic.push_back(r.grad_input[i]);
    }
    EXPECT_LT(test::rel_error(analytic, numeric), 1e-6) << "trial " << trial;
  }
}

TEST(Adam, ZeroGradientIsIdentity) {
  std::vector<RealArray> params{RealArray::vector({1.0, -2.0}), RealArray::matrix(1, 2, {0.5, 3.0})};
  const auto before = params;
  auto st = adam_init(params, 1e-3);
  std::vector<RealArray> zeros{RealArray({2}), RealArray({1, 2})};
  adam_step(st, params, zeros);
  EXPECT_EQ(st.step, 1u);
  EXPECT_TRUE(params == before);
  adam_step(st, params, zeros);
  EXPECT_EQ(st.step, 2u);
  EXPECT_TRUE(params == before);
}

TEST(Adam, FirstStepMagnitude) {
  const double lr = 0.01;
  for (double g : {0.5, -3.0, 1e-2}) {
    std::vector<RealArray> params{RealArray::vector({1.0})};
    auto st = adam_init(params, lr);
    std::vector<RealArray> grads{RealArray::vector({g})};
    adam_step(st, params, grads);
    // m_hat = g, v_hat = g^2 on the first step.
    const double want = lr * std::abs(g) / (std::abs(g) + st.epsilon);
    EXPECT_NEAR(std::abs(params[0][0] - 1.0), want, 1e-15);
    EXPECT_NEAR(std::abs(params[0][0] - 1.0), lr, 1e-6);
    EXPECT_EQ(params[0][0] < 1.0, g > 0.0);
  }
}

TEST(Adam, Deterministic) {
  std::vector<RealArray> p1{RealArray::vector({1.0, 2.0})}, p2 = p1;
  auto s1 = adam_init(p1, 1e-2), s2 = adam_init(p2, 1e-2);
  std::vector<RealArray> g{RealArray::vector({0.3, -0.7})};
  for (int i = 0; i < 5; ++i) {
    adam_step(s1, p1, g);
    adam_step(s2, p2, g);
  }
  EXPECT_TRUE(p1 == p2);
  EXPECT_TRUE(s1.first == s2.first && s1.second == s2.second);
}

TEST(Adam, Errors) {
  std::vector<RealArray> params{RealArray::vector({1.0})};
  auto st = adam_init(params, 1e-3);
  std::vector<RealArray> nan{RealArray::vector({std::nan("")})};
  EXPECT_THROW(adam_step(st, params, nan), NumericError);
  std::vector<RealArray> wrong{RealArray::vector({1.0, 2.0})};
  EXPECT_THROW(adam_step(st, params, wrong), ArgumentError);
  EXPECT_THROW(adam_init(params, 0.0), ArgumentError);
}
