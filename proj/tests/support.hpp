#pragma once

// Shared fixtures for the unit tests: trained benchmark worlds (cached per
// process), zero-weight models and small random worlds for gradient checks.

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "lace/lace.hpp"

namespace lace::test {

struct TrainedWorld {
  World world;
  ClassifierModel model;
  std::vector<double> train_accuracy;
};

inline TrainedWorld train_world(const WorldOptions& opt, std::size_t samples = 20000, std::size_t epochs = 100) {
  World w = make_benchmark_world(opt);
  const Dataset data = synthesize_pairs(w.generator, w.truth, samples, 1);
  auto cfg = TrainConfig::with_epochs(epochs);
  if (epochs == 100) cfg = TrainConfig{};
  auto res = train_classifier(data, w.spec, cfg, &w.generator);
  return {std::move(w), std::move(res.model), std::move(res.train_accuracy)};
}

// Default 2-D benchmark world with the default classifier recipe.
inline const TrainedWorld& world_2d() {
  static const TrainedWorld tw = train_world(WorldOptions{});
  return tw;
}

inline const TrainedWorld& world_8d() {
  static const TrainedWorld tw = [] {
    WorldOptions o;
    o.latent_dim = 8;
    o.data_dim = 8;
    return train_world(o);
  }();
  return tw;
}

inline ClassifierModel zero_model(const AttributeSpec& spec, std::size_t input_dim,
                                  ClassifierMode mode = ClassifierMode::Separate) {
  auto m = ClassifierModel::create(spec, mode, InputSpace::Latent, input_dim, {4}, 1);
  for (RealArray* t : m.parameter_tensors()) {
    for (double& v : t->data()) v = 0.0;
  }
  return m;
}

inline AttributeSpec binary_spec(std::size_t n = 1) {
  std::vector<AttributeDescriptor> a;
  for (std::size_t i = 0; i < n; ++i) a.push_back(AttributeDescriptor::discrete("attr" + std::to_string(i), 2));
  return AttributeSpec(std::move(a));
}

inline AttributeSpec mixed_spec() {
  return AttributeSpec({AttributeDescriptor::discrete("attr0", 2), AttributeDescriptor::discrete("attr1", 4),
                        AttributeDescriptor::continuous("attr2")});
}

inline EnergyExpr leaf_expr(std::size_t attr, double target) {
  EnergyExpr e;
  e.root = ExprNode::leaf(attr, target);
  return e;
}

// |a - b| / max(|a|, |b|) over whole vectors, 0 when both vanish.
inline double rel_error(std::span<const double> a, std::span<const double> b) {
  double d = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  return scale == 0.0 ? 0.0 : std::sqrt(d) / scale;
}

enum class ExprKind { Leaf, And, Or, NotFixed, SeqEdit };

inline const char* to_string(ExprKind k) {
  switch (k) {
    case ExprKind::Leaf: return "leaf";
    case ExprKind::And: return "and";
    case ExprKind::Or: return "or";
    case ExprKind::NotFixed: return "not";
    case ExprKind::SeqEdit: return "seq-edit";
  }
  return "?";
}

// One random (world, expression, z) case: a SmallMlp generator, a random
// classifier on a random input space, and a random expression of the given
// kind. Returns the norm-wise relative error between value_grad and central
// differences of value with step h.
inline double gradient_case_error(ExprKind kind, std::uint64_t seed, double h = 1e-5) {
  Rng rng(seed);
  const std::size_t d = 2 + rng.index(3), data = 2 + rng.index(4);
  const auto g = make_generator(GeneratorKind::SmallMlp, d, data, seed + 1);
  const InputSpace space = std::array{InputSpace::Latent, InputSpace::Intermediate, InputSpace::Data}[rng.index(3)];
  const auto mode = rng.index(2) == 0 ? ClassifierMode::Separate : ClassifierMode::SingleTrunk;
  const auto spec = mixed_spec();
  auto model = ClassifierModel::create(spec, mode, space, input_space_dim(space, g), {6, 5}, seed + 2);
  for (RealArray* t : model.parameter_tensors()) {
    if (t->rank() == 1) {
      for (double& b : t->data()) b = 0.2 * rng.normal();
    }
  }
  auto random_leaf = [&](std::size_t attr) {
    const auto& a = spec[attr];
    if (a.is_discrete()) {
      return ExprNode::leaf(attr, static_cast<double>(rng.index(a.num_categories)), 0.5 + 1.5 * rng.uniform(),
                            0.5 + rng.uniform());
    }
    return ExprNode::leaf(attr, rng.uniform(), 1.0, 0.5 + rng.uniform());
  };
  auto some_leaves = [&](std::size_t n) {
    std::vector<ExprNode> v;
    for (std::size_t k = 0; k < n; ++k) v.push_back(random_leaf(rng.index(spec.size())));
    return v;
  };

  std::optional<EnergyFunction> fn;
  EnergyExpr e;
  switch (kind) {
    case ExprKind::Leaf:
      e.root = random_leaf(rng.index(spec.size()));
      break;
    case ExprKind::And:
      e.root = ExprNode::all_of(some_leaves(2 + rng.index(2)));
      break;
    case ExprKind::Or:
      e.root = ExprNode::any_of(some_leaves(2 + rng.index(2)), 3.0 * rng.uniform());
      break;
    case ExprKind::NotFixed: {
      auto l = some_leaves(2);
      e.root = ExprNode::negate(l[0], l[1], AlphaPolicy::Fixed, 2.0 * rng.uniform());
      break;
    }
    case ExprKind::SeqEdit:
      break;
  }
  if (kind == ExprKind::SeqEdit) {
    std::vector<std::size_t> attrs{0, 1, 2};
    for (std::size_t k = 3; k > 1; --k) std::swap(attrs[k - 1], attrs[rng.index(k)]);
    std::vector<EditTarget> edits;
    const std::size_t n = 1 + rng.index(3);
    for (std::size_t k = 0; k < n; ++k) edits.push_back({attrs[k], random_leaf(attrs[k]).target});
    RealArray anchor({1, d});
    rng.fill_normal(anchor.data());
    fn.emplace(make_seq_edit_energy(model, g, edits, anchor, EditWeights{}));
  } else {
    fn.emplace(model, g, e);
  }

  std::vector<double> z(d), grad(d), numeric(d);
  rng.fill_normal(z);
  auto ev = fn->evaluator();
  ev.value_grad(z, grad);
  for (std::size_t i = 0; i < d; ++i) {
    auto zp = z, zm = z;
    zp[i] += h;
    zm[i] -= h;
    numeric[i] = (ev.value(zp) - ev.value(zm)) / (2.0 * h);
  }
  return rel_error(grad, numeric);
}

}  // namespace lace::test
