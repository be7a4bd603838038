#pragma once

// Conditional, joint, compositional and sequential-edit energies over the
// latent z, with exact gradients.

#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lace/classifier.hpp"
#include "lace/errors.hpp"
#include "lace/ndmath.hpp"
#include "lace/worldgen.hpp"

namespace lace {

inline constexpr double kDefaultSigma2 = 0.01;
inline const double kLn20 = std::log(20.0);

// E = -f[c]/T + logsumexp(f/T).
inline double cond_energy_discrete(std::span<const double> logits, std::size_t category, double temperature = 1.0) {
  if (category >= logits.size()) {
    throw ArgumentError("category " + std::to_string(category) + " out of range for " +
                        std::to_string(logits.size()) + " logits");
  }
  if (!(temperature > 0.0)) throw ArgumentError("temperature must be positive");
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double f : logits) s += std::exp((f - m) / temperature);
  return (m - logits[category]) / temperature + std::log(s);
}

// E = (c - f)^2 / (2 sigma2).
inline double cond_energy_continuous(double prediction, double target, double sigma2 = kDefaultSigma2) {
  if (!(sigma2 > 0.0)) throw ArgumentError("sigma2 must be positive");
  const double r = target - prediction;
  return r * r / (2.0 * sigma2);
}

// ---------------------------------------------------------------------------
// Expression trees

enum class NodeKind { Leaf, And, Or, Not };
enum class AlphaPolicy { Fixed, Adaptive };

struct ExprNode {
  NodeKind kind = NodeKind::Leaf;
  // Leaf
  std::size_t attr = 0;
  double target = 0.0;
  double temperature = 1.0;  // discrete leaves only
  double weight = 1.0;
  // Or
  double beta = kLn20;
  // Not
  AlphaPolicy alpha_policy = AlphaPolicy::Adaptive;
  double alpha = 1.0;
  std::vector<ExprNode> children;

  static ExprNode leaf(std::size_t attr, double target, double temperature = 1.0, double weight = 1.0) {
    ExprNode n;
    n.attr = attr;
    n.target = target;
    n.temperature = temperature;
    n.weight = weight;
    return n;
  }
  static ExprNode all_of(std::vector<ExprNode> children) {
    ExprNode n;
    n.kind = NodeKind::And;
    n.children = std::move(children);
    return n;
  }
  static ExprNode any_of(std::vector<ExprNode> children, double beta = kLn20) {
    ExprNode n;
    n.kind = NodeKind::Or;
    n.beta = beta;
    n.children = std::move(children);
    return n;
  }
  static ExprNode negate(ExprNode positive, ExprNode negative, AlphaPolicy policy = AlphaPolicy::Adaptive,
                         double alpha = 1.0) {
    ExprNode n;
    n.kind = NodeKind::Not;
    n.alpha_policy = policy;
    n.alpha = alpha;
    n.children.push_back(std::move(positive));
    n.children.push_back(std::move(negative));
    return n;
  }

  friend bool operator==(const ExprNode&, const ExprNode&) = default;
};

// A missing root is the empty code: only the prior remains.
struct EnergyExpr {
  std::optional<ExprNode> root;
  bool include_prior = true;
  double sigma2 = kDefaultSigma2;

  friend bool operator==(const EnergyExpr&, const EnergyExpr&) = default;
};

inline void validate_node(const ExprNode& n, const AttributeSpec& spec) {
  switch (n.kind) {
    case NodeKind::Leaf:
      if (n.attr >= spec.size()) throw ArgumentError("leaf attribute index " + std::to_string(n.attr) + " out of range");
      spec.check_value(n.attr, n.target);
      if (!(n.temperature > 0.0)) throw ArgumentError("leaf temperature must be positive");
      if (!std::isfinite(n.weight)) throw ArgumentError("leaf weight must be finite");
      return;
    case NodeKind::And:
      if (n.children.empty()) throw ArgumentError("AND needs at least one child");
      break;
    case NodeKind::Or:
      if (n.children.size() < 2) throw ArgumentError("OR needs at least two children");
      if (!std::isfinite(n.beta)) throw ArgumentError("OR beta must be finite");
      break;
    case NodeKind::Not:
      if (n.children.size() != 2) throw ArgumentError("NOT needs exactly two children");
      if (n.alpha_policy == AlphaPolicy::Fixed && !(n.alpha >= 0.0 && std::isfinite(n.alpha))) {
        throw ArgumentError("NOT alpha must be finite and >= 0");
      }
      break;
  }
  for (const auto& c : n.children) validate_node(c, spec);
}

inline void validate_expr(const EnergyExpr& e, const AttributeSpec& spec) {
  if (!(e.sigma2 > 0.0)) throw ArgumentError("sigma2 must be positive");
  if (e.root) validate_node(*e.root, spec);
}

// AND of one leaf per present code entry; an all-absent code gives the empty
// expression.
inline EnergyExpr expr_from_code(const AttributeSpec& spec, const AttributeCode& code) {
  validate_code(spec, code);
  std::vector<ExprNode> leaves;
  for (std::size_t i = 0; i < code.size(); ++i) {
    if (code[i]) leaves.push_back(ExprNode::leaf(i, *code[i]));
  }
  EnergyExpr e;
  if (!leaves.empty()) e.root = ExprNode::all_of(std::move(leaves));
  return e;
}

// alpha = min(0.1/|E2|, 1), and 1 when |E2| < 1e-12.
inline double adaptive_alpha(double e2) {
  const double a = std::abs(e2);
  if (a < 1e-12) return 1.0;
  return std::min(0.1 / a, 1.0);
}

// -log(e^{beta - e1} + e^{-e2}).
inline double or_energy(double e1, double e2, double beta) {
  const double a = beta - e1, b = -e2;
  const double m = std::max(a, b);
  return -(m + std::log(std::exp(a - m) + std::exp(b - m)));
}

// ---------------------------------------------------------------------------
// Evaluation

// Classifier input as a function of z.
class FeatureMap {
 public:
  FeatureMap(InputSpace space, const GeneratorModel& g) : space_(space), g_(&g), dim_(input_space_dim(space, g)) {}

  std::size_t dim() const noexcept { return dim_; }

  void forward(std::span<const double> z, std::span<double> x) {
    switch (space_) {
      case InputSpace::Latent: std::copy(z.begin(), z.end(), x.begin()); break;
      case InputSpace::Data: g_->apply(z, x, tape_); break;
      case InputSpace::Intermediate: g_->intermediate(z, x); break;
    }
  }

  void vjp(std::span<const double> z, std::span<const double> cot, std::span<double> grad_z) {
    switch (space_) {
      case InputSpace::Latent: std::copy(cot.begin(), cot.end(), grad_z.begin()); break;
      case InputSpace::Data: g_->vjp(z, cot, grad_z, tape_); break;
      case InputSpace::Intermediate: g_->intermediate_vjp(z, cot, grad_z); break;
    }
  }

 private:
  InputSpace space_;
  const GeneratorModel* g_;
  std::size_t dim_;
  MlpTape tape_;
};

// Keeps z near an anchor: mu (|g(z) - g(a)|^2 + |z - a|^2) +
// gamma sum_{j in drift} |f_j(z) - f_j(a)|^2. One anchor row per chain, or a
// single row shared by all chains.
struct ProximityTerm {
  RealArray anchors;
  double mu = 0.04;
  double gamma = 0.01;
  std::vector<std::size_t> drift_attrs;
};

class EnergyEvaluator;

// A complete energy bound to a model and generator.
class EnergyFunction {
 public:
  EnergyFunction(const ClassifierModel& model, const GeneratorModel& g, EnergyExpr expr,
                 std::optional<ProximityTerm> proximity = std::nullopt)
      : model_(&model), g_(&g), expr_(std::move(expr)), prox_(std::move(proximity)) {
    validate_expr(expr_, model.spec());
    if (input_space_dim(model.input_space(), g) != model.input_dim()) {
      throw ArgumentError("classifier input width " + std::to_string(model.input_dim()) +
                          " does not match the generator's " + to_string(model.input_space()) + " dim");
    }
    if (prox_) {
      if (!(prox_->mu >= 0.0) || !(prox_->gamma >= 0.0)) throw ArgumentError("mu and gamma must be >= 0");
      if (prox_->anchors.rank() != 2 || prox_->anchors.extent(1) != g.latent_dim() || prox_->anchors.extent(0) == 0) {
        throw ArgumentError("proximity anchors must be a non-empty batch of latent vectors");
      }
      for (auto j : prox_->drift_attrs) {
        if (j >= model.spec().size()) throw ArgumentError("drift attribute out of range");
      }
    }
  }

  const ClassifierModel& model() const noexcept { return *model_; }
  const GeneratorModel& generator() const noexcept { return *g_; }
  const EnergyExpr& expr() const noexcept { return expr_; }
  const std::optional<ProximityTerm>& proximity() const noexcept { return prox_; }
  std::size_t latent_dim() const noexcept { return g_->latent_dim(); }
  // True when nothing but the prior contributes.
  bool prior_only() const noexcept { return !expr_.root && !prox_; }

  // Per-chain leaf targets: row k, column i replaces the target of every leaf
  // on attribute i for chain k. Used to condition each chain on its own code.
  void set_chain_targets(RealArray targets) {
    const auto& spec = model_->spec();
    if (targets.rank() != 2 || targets.extent(1) != spec.size() || targets.extent(0) == 0) {
      throw ArgumentError("chain targets must be {chains, num_attributes}");
    }
    for (std::size_t r = 0; r < targets.extent(0); ++r) {
      for (std::size_t i = 0; i < spec.size(); ++i) spec.check_value(i, targets(r, i));
    }
    chain_targets_ = std::move(targets);
  }
  const std::optional<RealArray>& chain_targets() const noexcept { return chain_targets_; }

  EnergyEvaluator evaluator(std::size_t chain = 0) const;

 private:
  const ClassifierModel* model_;
  const GeneratorModel* g_;
  EnergyExpr expr_;
  std::optional<ProximityTerm> prox_;
  std::optional<RealArray> chain_targets_;
};

// Per-thread workspace for one chain. value_grad() returns the energy and
// writes its z-gradient; with_prior toggles the 1/2 |z|^2 term (the ODE drift
// omits it). Adaptive NOT alphas are held constant when differentiating.
class EnergyEvaluator {
 public:
  EnergyEvaluator(const EnergyFunction& fn, std::size_t chain)
      : fn_(&fn), features_(fn.model().input_space(), fn.generator()), heads_(fn.model()) {
    const auto& spec = fn.model().spec();
    needed_.assign(spec.size(), false);
    if (fn.expr().root) flatten(*fn.expr().root);
    targets_.resize(flat_.size());
    for (std::size_t k = 0; k < flat_.size(); ++k) targets_[k] = flat_[k].node->target;
    if (const auto& ct = fn.chain_targets()) {
      if (chain >= ct->extent(0)) throw ArgumentError("no target row for chain " + std::to_string(chain));
      for (std::size_t k = 0; k < flat_.size(); ++k) {
        if (flat_[k].node->kind == NodeKind::Leaf) targets_[k] = (*ct)(chain, flat_[k].node->attr);
      }
    }
    x_.resize(features_.dim());
    gx_.resize(features_.dim());
    cots_.assign(spec.size(), {});
    const std::size_t dz = fn.latent_dim();
    gz_.resize(dz);
    if (const auto& p = fn.proximity()) {
      for (auto j : p->drift_attrs) needed_[j] = true;
      const auto& a = p->anchors;
      const std::size_t row = a.extent(0) == 1 ? 0 : chain;
      if (row >= a.extent(0)) throw ArgumentError("no proximity anchor for chain " + std::to_string(chain));
      anchor_.assign(a.row(row).begin(), a.row(row).end());
      anchor_x_.resize(fn.generator().data_dim());
      fn.generator().apply(anchor_, anchor_x_, gen_tape_);
      gdiff_.resize(anchor_x_.size());
      gen_grad_.resize(dz);
      if (!p->drift_attrs.empty()) {
        features_.forward(anchor_, x_);
        heads_.forward(x_, needed_);
        anchor_heads_.assign(spec.size(), {});
        for (auto j : p->drift_attrs) anchor_heads_[j] = heads_.output(j);
      }
    }
    any_head_ = std::find(needed_.begin(), needed_.end(), true) != needed_.end();
  }

  double value(std::span<const double> z, bool with_prior = true) { return run(z, {}, with_prior, false); }

  double value_grad(std::span<const double> z, std::span<double> grad, bool with_prior = true) {
    return run(z, grad, with_prior, true);
  }

  bool prior_only() const noexcept { return fn_->prior_only(); }

  // Conditional energy of the tree root at the last evaluation (no prior, no
  // proximity).
  double last_tree_value() const { return flat_.empty() ? 0.0 : vals_[0]; }

 private:
  struct Flat {
    const ExprNode* node;
    std::vector<std::size_t> kids;
  };

  std::size_t flatten(const ExprNode& n) {
    const std::size_t idx = flat_.size();
    flat_.push_back({&n, {}});
    if (n.kind == NodeKind::Leaf) needed_[n.attr] = true;
    for (const auto& c : n.children) {
      const std::size_t k = flatten(c);
      flat_[idx].kids.push_back(k);
    }
    return idx;
  }

  double leaf_value(const ExprNode& n, double target) const {
    const auto& f = heads_.output(n.attr);
    if (fn_->model().spec()[n.attr].is_discrete()) {
      return n.weight * cond_energy_discrete(f, static_cast<std::size_t>(target), n.temperature);
    }
    return n.weight * cond_energy_continuous(f[0], target, fn_->expr().sigma2);
  }

  void leaf_backward(const ExprNode& n, double target, double adj) {
    const auto& f = heads_.output(n.attr);
    auto& cot = cots_[n.attr];
    if (cot.empty()) cot.assign(f.size(), 0.0);
    const double s = adj * n.weight;
    if (fn_->model().spec()[n.attr].is_discrete()) {
      const double t = n.temperature;
      const double m = *std::max_element(f.begin(), f.end());
      double z = 0.0;
      for (double v : f) z += std::exp((v - m) / t);
      for (std::size_t k = 0; k < f.size(); ++k) cot[k] += s * std::exp((f[k] - m) / t) / z / t;
      cot[static_cast<std::size_t>(target)] -= s / t;
    } else {
      cot[0] += s * (f[0] - target) / fn_->expr().sigma2;
    }
  }

  double run(std::span<const double> z, std::span<double> grad, bool with_prior, bool want_grad) {
    const std::size_t dz = fn_->latent_dim();
    if (z.size() != dz) throw ArgumentError("energy: latent width " + std::to_string(z.size()) + " != " + std::to_string(dz));
    if (want_grad && grad.size() != dz) throw ArgumentError("energy: gradient width mismatch");
    with_prior = with_prior && fn_->expr().include_prior;
    double total = 0.0;
    if (any_head_) {
      features_.forward(z, x_);
      heads_.forward(x_, needed_);
    }
    // Tree values, children before parents.
    vals_.resize(flat_.size());
    alphas_.resize(flat_.size());
    for (std::size_t k = flat_.size(); k-- > 0;) {
      const ExprNode& n = *flat_[k].node;
      const auto& kids = flat_[k].kids;
      switch (n.kind) {
        case NodeKind::Leaf: vals_[k] = leaf_value(n, targets_[k]); break;
        case NodeKind::And: {
          double s = 0.0;
          for (auto c : kids) s += vals_[c];
          vals_[k] = s;
          break;
        }
        case NodeKind::Or: {
          double acc = vals_[kids[0]];
          for (std::size_t c = 1; c < kids.size(); ++c) acc = or_energy(acc, vals_[kids[c]], n.beta);
          vals_[k] = acc;
          break;
        }
        case NodeKind::Not: {
          const double e2 = vals_[kids[1]];
          alphas_[k] = n.alpha_policy == AlphaPolicy::Adaptive ? adaptive_alpha(e2) : n.alpha;
          vals_[k] = vals_[kids[0]] - alphas_[k] * e2;
          break;
        }
      }
    }
    if (!flat_.empty()) total += vals_[0];

    const auto& prox = fn_->proximity();
    if (prox) {
      const auto& g = fn_->generator();
      g.apply(z, gdiff_, gen_tape_);
      double gd = 0.0, zd = 0.0;
      for (std::size_t r = 0; r < gdiff_.size(); ++r) {
        gdiff_[r] -= anchor_x_[r];
        gd += gdiff_[r] * gdiff_[r];
      }
      for (std::size_t c = 0; c < dz; ++c) zd += (z[c] - anchor_[c]) * (z[c] - anchor_[c]);
      total += prox->mu * (gd + zd);
      for (auto j : prox->drift_attrs) {
        const auto& f = heads_.output(j);
        double d = 0.0;
        for (std::size_t k = 0; k < f.size(); ++k) d += (f[k] - anchor_heads_[j][k]) * (f[k] - anchor_heads_[j][k]);
        total += prox->gamma * d;
      }
    }
    if (with_prior) total += 0.5 * squared_norm(z);
    if (!want_grad) return total;

    std::fill(grad.begin(), grad.end(), 0.0);
    for (auto& c : cots_) c.clear();
    if (!flat_.empty()) {
      adj_.assign(flat_.size(), 0.0);
      adj_[0] = 1.0;
      for (std::size_t k = 0; k < flat_.size(); ++k) {
        const ExprNode& n = *flat_[k].node;
        const auto& kids = flat_[k].kids;
        const double a = adj_[k];
        switch (n.kind) {
          case NodeKind::Leaf: leaf_backward(n, targets_[k], a); break;
          case NodeKind::And:
            for (auto c : kids) adj_[c] += a;
            break;
          case NodeKind::Or: {
            // Replay the left fold, then distribute the adjoint backwards.
            fold_.assign(kids.size(), 0.0);
            fold_[0] = vals_[kids[0]];
            for (std::size_t c = 1; c < kids.size(); ++c) fold_[c] = or_energy(fold_[c - 1], vals_[kids[c]], n.beta);
            double carry = a;
            for (std::size_t c = kids.size(); c-- > 1;) {
              const double e = fold_[c];
              const double w_left = std::exp(n.beta - fold_[c - 1] + e);
              const double w_right = std::exp(-vals_[kids[c]] + e);
              adj_[kids[c]] += carry * w_right;
              carry *= w_left;
            }
            adj_[kids[0]] += carry;
            break;
          }
          case NodeKind::Not:
            adj_[kids[0]] += a;
            adj_[kids[1]] -= a * alphas_[k];
            break;
        }
      }
    }
    if (prox) {
      for (auto j : prox->drift_attrs) {
        const auto& f = heads_.output(j);
        auto& cot = cots_[j];
        if (cot.empty()) cot.assign(f.size(), 0.0);
        for (std::size_t k = 0; k < f.size(); ++k) cot[k] += 2.0 * prox->gamma * (f[k] - anchor_heads_[j][k]);
      }
    }
    if (any_head_) {
      heads_.backward(cots_, gx_);
      features_.vjp(z, gx_, gz_);
      for (std::size_t c = 0; c < dz; ++c) grad[c] += gz_[c];
    }
    if (prox) {
      for (double& v : gdiff_) v *= 2.0 * prox->mu;
      fn_->generator().vjp(z, gdiff_, gen_grad_, gen_tape_);
      for (std::size_t c = 0; c < dz; ++c) grad[c] += gen_grad_[c] + 2.0 * prox->mu * (z[c] - anchor_[c]);
    }
    if (with_prior) {
      for (std::size_t c = 0; c < dz; ++c) grad[c] += z[c];
    }
    return total;
  }

  const EnergyFunction* fn_;
  FeatureMap features_;
  HeadEvaluator heads_;
  std::vector<bool> needed_;
  bool any_head_ = false;
  std::vector<Flat> flat_;
  std::vector<double> targets_, vals_, alphas_, adj_, fold_;
  std::vector<double> x_, gx_, gz_;
  std::vector<std::vector<double>> cots_;
  std::vector<double> anchor_, anchor_x_, gdiff_, gen_grad_;
  std::vector<std::vector<double>> anchor_heads_;
  MlpTape gen_tape_;
};

inline EnergyEvaluator EnergyFunction::evaluator(std::size_t chain) const { return EnergyEvaluator(*this, chain); }

// ---------------------------------------------------------------------------
// Convenience entry points

inline double eval_expr(std::span<const double> z, const EnergyExpr& expr, const ClassifierModel& model,
                        const GeneratorModel& g) {
  EnergyFunction fn(model, g, expr);
  return fn.evaluator().value(z);
}

inline double joint_energy(std::span<const double> z, const AttributeCode& code, const ClassifierModel& model,
                           const GeneratorModel& g) {
  return eval_expr(z, expr_from_code(model.spec(), code), model, g);
}

inline std::vector<double> energy_grad_z(std::span<const double> z, const EnergyExpr& expr,
                                         const ClassifierModel& model, const GeneratorModel& g) {
  EnergyFunction fn(model, g, expr);
  std::vector<double> grad(z.size());
  fn.evaluator().value_grad(z, grad);
  return grad;
}

inline std::vector<double> energy_grad_z(std::span<const double> z, const AttributeCode& code,
                                         const ClassifierModel& model, const GeneratorModel& g) {
  return energy_grad_z(z, expr_from_code(model.spec(), code), model, g);
}

// ---------------------------------------------------------------------------
// Sequential editing

struct EditTarget {
  std::size_t attr = 0;
  double value = 0.0;

  friend bool operator==(const EditTarget&, const EditTarget&) = default;
};

struct EditWeights {
  double mu = 0.04;
  double gamma = 0.01;
  double alpha0 = 0.2;
  std::optional<double> alpha1;  // default: 10 continuous, 5 discrete

  static double default_alpha1(const AttributeDescriptor& a) { return a.is_discrete() ? 5.0 : 10.0; }
};

// Energy for edit i given targets c_1..c_i (edits.back() is the current edit):
// alpha0 sum_{j<i} E(c_j) + alpha1 E(c_i) + 1/2 |z|^2 + proximity to the
// anchors, with classifier drift penalised on attributes not yet edited.
inline EnergyFunction make_seq_edit_energy(const ClassifierModel& model, const GeneratorModel& g,
                                           std::span<const EditTarget> edits, RealArray anchors,
                                           const EditWeights& w) {
  const auto& spec = model.spec();
  if (edits.empty()) throw ArgumentError("sequential edit needs at least one target");
  for (const auto& e : edits) {
    if (e.attr >= spec.size()) {
      throw ArgumentError("edit attribute index " + std::to_string(e.attr) + " exceeds spec length " +
                          std::to_string(spec.size()));
    }
  }
  if (!(w.alpha0 >= 0.0) || (w.alpha1 && !(*w.alpha1 >= 0.0))) throw ArgumentError("alpha0/alpha1 must be >= 0");
  const auto& cur = edits.back();
  const double a1 = w.alpha1.value_or(EditWeights::default_alpha1(spec[cur.attr]));
  std::vector<ExprNode> leaves;
  std::vector<bool> edited(spec.size(), false);
  for (std::size_t k = 0; k + 1 < edits.size(); ++k) {
    leaves.push_back(ExprNode::leaf(edits[k].attr, edits[k].value, 1.0, w.alpha0));
    edited[edits[k].attr] = true;
  }
  leaves.push_back(ExprNode::leaf(cur.attr, cur.value, 1.0, a1));
  edited[cur.attr] = true;
  EnergyExpr expr;
  expr.root = ExprNode::all_of(std::move(leaves));
  ProximityTerm prox;
  prox.anchors = std::move(anchors);
  prox.mu = w.mu;
  prox.gamma = w.gamma;
  for (std::size_t j = 0; j < spec.size(); ++j) {
    if (!edited[j]) prox.drift_attrs.push_back(j);
  }
  return EnergyFunction(model, g, std::move(expr), std::move(prox));
}

inline double seq_edit_energy(std::span<const double> z, std::span<const double> z_prev,
                              std::span<const EditTarget> edits, const EditWeights& w, const ClassifierModel& model,
                              const GeneratorModel& g) {
  auto fn = make_seq_edit_energy(model, g, edits,
                                 RealArray({1, z_prev.size()}, std::vector<double>(z_prev.begin(), z_prev.end())), w);
  return fn.evaluator().value(z);
}

inline std::vector<double> seq_edit_grad_z(std::span<const double> z, std::span<const double> z_prev,
                                           std::span<const EditTarget> edits, const EditWeights& w,
                                           const ClassifierModel& model, const GeneratorModel& g) {
  auto fn = make_seq_edit_energy(model, g, edits,
                                 RealArray({1, z_prev.size()}, std::vector<double>(z_prev.begin(), z_prev.end())), w);
  std::vector<double> grad(z.size());
  fn.evaluator().value_grad(z, grad);
  return grad;
}

}  // namespace lace
