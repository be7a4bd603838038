#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <numeric>
#include <sstream>

#include "support.hpp"

using namespace lace;

namespace {

TruthOracle x1_positive_oracle() {
  return TruthOracle(test::binary_spec(1), {HalfSpaceRule{{1.0, 0.0}, 0.0}});
}

double eigen_condition(const RealArray& a) {
  Eigen::MatrixXd m(a.extent(0), a.extent(1));
  for (std::size_t r = 0; r < a.extent(0); ++r) {
    for (std::size_t c = 0; c < a.extent(1); ++c) m(r, c) = a(r, c);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  return s(0) / s(s.size() - 1);
}

}  // namespace

TEST(AttributeSpec, Validation) {
  EXPECT_THROW(AttributeSpec(std::vector<AttributeDescriptor>{}), ArgumentError);
  EXPECT_THROW(AttributeSpec({AttributeDescriptor::discrete("a", 2), AttributeDescriptor::continuous("a")}),
               ArgumentError);
  EXPECT_THROW(AttributeSpec({AttributeDescriptor::discrete("a", 1)}), ArgumentError);
  const auto spec = test::mixed_spec();
  EXPECT_NO_THROW(spec.check_value(1, 3.0));
  EXPECT_THROW(spec.check_value(1, 4.0), ArgumentError);
  EXPECT_THROW(spec.check_value(0, 0.5), ArgumentError);
  EXPECT_THROW(spec.check_value(2, 1.5), ArgumentError);
  EXPECT_THROW(validate_code(spec, AttributeCode{1.0}), ArgumentError);
  EXPECT_NO_THROW(validate_code(spec, AttributeCode{1.0, std::nullopt, 0.3}));
}

TEST(Generator, IdentityIsIdentity) {
  const auto g = make_generator(GeneratorKind::Identity, 2, 2, 0);
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    std::vector<double> z(2), x(2);
    rng.fill_normal(z);
    g.apply(z, x);
    EXPECT_EQ(x, z);
  }
  EXPECT_THROW(make_generator(GeneratorKind::Identity, 2, 3, 0), ArgumentError);
}

TEST(Generator, LinearScaling) {
  const auto g = GeneratorModel::linear(RealArray::matrix(2, 2, {2, 0, 0, 2}), {0.0, 0.0});
  std::vector<double> x(2);
  g.apply(std::vector<double>{1.0, -1.0}, x);
  EXPECT_EQ(x, (std::vector<double>{2.0, -2.0}));
}

TEST(Generator, LinearSeed11IsWellConditioned) {
  for (std::size_t d : {2u, 8u}) {
    const auto g = make_generator(GeneratorKind::Linear, d, d, 11);
    EXPECT_LT(eigen_condition(g.matrix()), 10.0);
    EXPECT_NEAR(condition_number(g.matrix()), eigen_condition(g.matrix()), 1e-9);
  }
}

TEST(Generator, UnsupportedKindName) { EXPECT_THROW(parse_generator_kind("stylegan"), ArgumentError); }

TEST(Generator, IdentityVjpPassesCotangent) {
  const auto g = make_generator(GeneratorKind::Identity, 3, 3, 0);
  const std::vector<double> u{0.1, -2.0, 5.0};
  EXPECT_EQ(generator_vjp(g, std::vector<double>{1, 2, 3}, u), u);
}

TEST(Generator, LinearVjpIsTranspose) {
  const auto g = make_generator(GeneratorKind::Linear, 3, 4, 11);
  const std::vector<double> u{0.5, -1.0, 2.0, 0.25};
  const auto got = generator_vjp(g, std::vector<double>{0.3, 0.1, -0.2}, u);
  for (std::size_t c = 0; c < 3; ++c) {
    double want = 0.0;
    for (std::size_t r = 0; r < 4; ++r) want += g.matrix()(r, c) * u[r];
    EXPECT_NEAR(got[c], want, 1e-15);
  }
}

TEST(Generator, SmallMlpVjpMatchesFiniteDifferences) {
  const auto g = make_generator(GeneratorKind::SmallMlp, 3, 4, 5);
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> z(3), u(4);
    rng.fill_normal(z);
    rng.fill_normal(u);
    const auto analytic = generator_vjp(g, z, u);
    const auto numeric = finite_diff_grad(
        [&](std::span<const double> zz) {
          std::vector<double> x(4);
          g.apply(zz, x);
          return dot(x, u);
        },
        z, 1e-5);
    EXPECT_LT(test::rel_error(analytic, numeric), 1e-6);
  }
}

TEST(Generator, IntermediateFeaturesOnlyForMlp) {
  const auto lin = make_generator(GeneratorKind::Linear, 2, 2, 11);
  EXPECT_THROW(lin.intermediate_dim(), CapabilityError);
  const auto mlp = make_generator(GeneratorKind::SmallMlp, 2, 3, 5);
  EXPECT_EQ(mlp.intermediate_dim(), 8u);
  // vjp of the intermediate map against finite differences.
  std::vector<double> z{0.3, -0.8}, u(8);
  Rng rng(2);
  rng.fill_normal(u);
  std::vector<double> grad(2);
  mlp.intermediate_vjp(z, u, grad);
  const auto numeric = finite_diff_grad(
      [&](std::span<const double> zz) {
        std::vector<double> h(8);
        mlp.intermediate(zz, h);
        return dot(h, u);
      },
      z);
  EXPECT_LT(test::rel_error(grad, numeric), 1e-6);
}

TEST(Generator, ShapeMismatch) {
  const auto g = make_generator(GeneratorKind::Linear, 2, 3, 11);
  EXPECT_THROW(generator_apply(g, RealArray({4, 3})), ArgumentError);
  std::vector<double> x(3);
  EXPECT_THROW(g.apply(std::vector<double>{1, 2, 3}, x), ArgumentError);
  EXPECT_THROW(generator_vjp(g, std::vector<double>{1, 2}, std::vector<double>{1, 2}), ArgumentError);
}

TEST(Synthesis, ZeroCountRejected) {
  const auto g = make_generator(GeneratorKind::Identity, 2, 2, 0);
  EXPECT_THROW(synthesize_pairs(g, x1_positive_oracle(), 0, 1), ArgumentError);
}

TEST(Synthesis, HalfSpaceBalance) {
  const auto g = make_generator(GeneratorKind::Identity, 2, 2, 0);
  const auto d = synthesize_pairs(g, x1_positive_oracle(), 100000, 3);
  double ones = 0.0;
  for (std::size_t r = 0; r < d.size(); ++r) ones += d.labels(r, 0);
  EXPECT_NEAR(ones / 100000.0, 0.5, 0.01);
}

TEST(Synthesis, Deterministic) {
  const auto w = make_benchmark_world({});
  const auto a = synthesize_pairs(w.generator, w.truth, 5000, 42);
  const auto b = synthesize_pairs(w.generator, w.truth, 5000, 42);
  EXPECT_TRUE(a.z == b.z && a.x == b.x && a.labels == b.labels);
  const auto c = synthesize_pairs(w.generator, w.truth, 5000, 43);
  EXPECT_FALSE(a.z == c.z);
}

TEST(Synthesis, LatentMoments) {
  const auto g = make_generator(GeneratorKind::Identity, 2, 2, 0);
  const auto d = synthesize_pairs(g, x1_positive_oracle(), 100000, 8);
  const double n = static_cast<double>(d.size());
  double m[2] = {0, 0}, c[2][2] = {{0, 0}, {0, 0}};
  for (std::size_t r = 0; r < d.size(); ++r) {
    for (int i = 0; i < 2; ++i) m[i] += d.z(r, i) / n;
  }
  for (std::size_t r = 0; r < d.size(); ++r) {
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) c[i][j] += (d.z(r, i) - m[i]) * (d.z(r, j) - m[j]) / n;
    }
  }
  for (int i = 0; i < 2; ++i) {
    EXPECT_LT(std::abs(m[i]), 0.02);
    for (int j = 0; j < 2; ++j) EXPECT_LT(std::abs(c[i][j] - (i == j ? 1.0 : 0.0)), 0.03);
  }
}

TEST(Synthesis, HoldoutRemovesCombination) {
  WorldOptions o;
  o.latent_dim = o.data_dim = 8;
  const auto w = make_benchmark_world(o);
  SynthesisOptions opt;
  opt.holdout = AttributeCode{1.0, 3.0, std::nullopt};
  const auto full = synthesize_pairs(w.generator, w.truth, 20000, 1);
  const auto held = synthesize_pairs(w.generator, w.truth, 20000, 1, opt);
  std::size_t combo = 0;
  for (std::size_t r = 0; r < full.size(); ++r) combo += full.labels(r, 0) == 1.0 && full.labels(r, 1) == 3.0;
  EXPECT_GT(combo, 0u);
  EXPECT_EQ(held.size(), full.size() - combo);
  for (std::size_t r = 0; r < held.size(); ++r) {
    EXPECT_FALSE(held.labels(r, 0) == 1.0 && held.labels(r, 1) == 3.0);
  }
  SynthesisOptions bad;
  bad.holdout = AttributeCode{std::nullopt, std::nullopt, 0.5};
  EXPECT_THROW(synthesize_pairs(w.generator, w.truth, 10, 1, bad), ArgumentError);
}

TEST(Synthesis, LabelNoiseFlipsDiscreteOnly) {
  const auto w = make_benchmark_world({});
  SynthesisOptions opt;
  opt.label_noise = 0.2;
  const auto clean = synthesize_pairs(w.generator, w.truth, 20000, 5);
  const auto noisy = synthesize_pairs(w.generator, w.truth, 20000, 5, opt);
  std::size_t flipped = 0;
  for (std::size_t r = 0; r < clean.size(); ++r) {
    flipped += clean.labels(r, 0) != noisy.labels(r, 0);
    EXPECT_EQ(clean.labels(r, 2), noisy.labels(r, 2));
  }
  EXPECT_NEAR(static_cast<double>(flipped) / 20000.0, 0.2, 0.015);
  opt.label_noise = 1.5;
  EXPECT_THROW(synthesize_pairs(w.generator, w.truth, 10, 1, opt), ArgumentError);
}

TEST(TruthOracle, IndependentOfBatchOrder) {
  const auto w = make_benchmark_world({});
  const auto d = synthesize_pairs(w.generator, w.truth, 500, 2);
  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  std::reverse(order.begin(), order.end());
  for (std::size_t k : order) {
    const auto again = w.truth.labels(d.x.row(k));
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(again[i], d.labels(k, i));
  }
}

TEST(TruthOracle, RuleMustMatchDescriptor) {
  EXPECT_THROW(TruthOracle(test::binary_spec(1), {QuadrantRule{{1, 0}, {0, 1}}}), ArgumentError);
  EXPECT_THROW(TruthOracle(test::binary_spec(2), {HalfSpaceRule{{1, 0}, 0}}), ArgumentError);
}

TEST(BenchmarkWorld, EightDimensionalWorldRealisesEveryCombination) {
  WorldOptions o;
  o.latent_dim = o.data_dim = 8;
  const auto w = make_benchmark_world(o);
  const auto d = synthesize_pairs(w.generator, w.truth, 20000, 1);
  std::size_t counts[2][4] = {};
  for (std::size_t r = 0; r < d.size(); ++r) {
    ++counts[static_cast<int>(d.labels(r, 0))][static_cast<int>(d.labels(r, 1))];
  }
  for (auto& row : counts) {
    for (std::size_t c : row) EXPECT_GT(c, 1000u);
  }
}

TEST(Dataset, CsvHeader) {
  const auto w = make_benchmark_world({});
  const auto d = synthesize_pairs(w.generator, w.truth, 3, 1);
  std::ostringstream out;
  write_dataset_csv(out, d, w.spec);
  const auto text = out.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "z_0,z_1,x_0,x_1,attr0,attr1,attr2");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);
}
