#pragma once

// Synthetic stand-in for a pre-trained generator plus labelling pipeline:
// a fixed differentiable map g: z -> x, analytic ground-truth attributes of x,
// and seeded (z, x, c) dataset synthesis.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "lace/csv.hpp"
#include "lace/errors.hpp"
#include "lace/ndmath.hpp"
#include "lace/parallel.hpp"
#include "lace/rng.hpp"

namespace lace {

// ---------------------------------------------------------------------------
// Attributes

enum class AttributeKind { Discrete, Continuous };

struct AttributeDescriptor {
  std::string name;
  AttributeKind kind = AttributeKind::Discrete;
  std::size_t num_categories = 2;  // discrete only

  static AttributeDescriptor discrete(std::string name, std::size_t m) {
    return {std::move(name), AttributeKind::Discrete, m};
  }
  static AttributeDescriptor continuous(std::string name) {
    return {std::move(name), AttributeKind::Continuous, 0};
  }

  bool is_discrete() const { return kind == AttributeKind::Discrete; }
  // Head width of a classifier for this attribute.
  std::size_t head_width() const { return is_discrete() ? num_categories : 1; }

  friend bool operator==(const AttributeDescriptor&, const AttributeDescriptor&) = default;
};

class AttributeSpec {
 public:
  AttributeSpec() = default;
  explicit AttributeSpec(std::vector<AttributeDescriptor> attrs) : attrs_(std::move(attrs)) {
    if (attrs_.empty()) throw ArgumentError("AttributeSpec: need at least one attribute");
    std::set<std::string> names;
    for (const auto& a : attrs_) {
      if (a.name.empty()) throw ArgumentError("AttributeSpec: empty attribute name");
      if (!names.insert(a.name).second) {
        throw ArgumentError("AttributeSpec: duplicate attribute name '" + a.name + "'");
      }
      if (a.is_discrete() && a.num_categories < 2) {
        throw ArgumentError("AttributeSpec: '" + a.name + "' needs at least 2 categories");
      }
    }
  }

  std::size_t size() const noexcept { return attrs_.size(); }
  const AttributeDescriptor& operator[](std::size_t i) const { return attrs_.at(i); }
  const std::vector<AttributeDescriptor>& attributes() const noexcept { return attrs_; }

  std::optional<std::size_t> find(std::string_view name) const {
    for (std::size_t i = 0; i < attrs_.size(); ++i) {
      if (attrs_[i].name == name) return i;
    }
    return std::nullopt;
  }

  // Throws if value is outside attribute i's domain.
  void check_value(std::size_t i, double value) const {
    const auto& a = (*this)[i];
    if (a.is_discrete()) {
      if (value != std::floor(value) || value < 0.0 ||
          value >= static_cast<double>(a.num_categories)) {
        throw ArgumentError("attribute '" + a.name + "' expects a category in [0, " +
                            std::to_string(a.num_categories) + "), got " + format_double(value));
      }
    } else if (!(value >= 0.0 && value <= 1.0)) {
      throw ArgumentError("attribute '" + a.name + "' expects a value in [0, 1], got " +
                          format_double(value));
    }
  }

  friend bool operator==(const AttributeSpec&, const AttributeSpec&) = default;

 private:
  std::vector<AttributeDescriptor> attrs_;
};

// One entry per attribute; std::nullopt leaves the attribute unconditioned.
// Discrete categories are stored as integral doubles.
using AttributeCode = std::vector<std::optional<double>>;

inline void validate_code(const AttributeSpec& spec, const AttributeCode& code) {
  if (code.size() != spec.size()) {
    throw ArgumentError("attribute code has " + std::to_string(code.size()) + " entries, spec has " +
                        std::to_string(spec.size()));
  }
  for (std::size_t i = 0; i < code.size(); ++i) {
    if (code[i]) spec.check_value(i, *code[i]);
  }
}

// ---------------------------------------------------------------------------
// Generator

enum class GeneratorKind { Identity, Linear, SmallMlp };

inline std::string to_string(GeneratorKind k) {
  switch (k) {
    case GeneratorKind::Identity: return "identity";
    case GeneratorKind::Linear: return "linear";
    case GeneratorKind::SmallMlp: return "small_mlp";
  }
  return "?";
}

inline GeneratorKind parse_generator_kind(std::string_view s) {
  if (s == "identity") return GeneratorKind::Identity;
  if (s == "linear") return GeneratorKind::Linear;
  if (s == "small_mlp") return GeneratorKind::SmallMlp;
  throw ArgumentError("unsupported generator kind '" + std::string(s) + "'");
}

namespace detail {

// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
inline std::vector<double> symmetric_eigenvalues(RealArray a) {
  const std::size_t n = a.extent(0);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = a(i, i);
  std::sort(ev.begin(), ev.end());
  return ev;
}

}  // namespace detail

// Singular values of a rank-2 array, ascending.
inline std::vector<double> singular_values(const RealArray& a) {
  const std::size_t rows = a.extent(0), cols = a.extent(1);
  const bool tall = rows >= cols;
  const std::size_t n = tall ? cols : rows;
  RealArray gram({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      if (tall) {
        for (std::size_t k = 0; k < rows; ++k) s += a(k, i) * a(k, j);
      } else {
        for (std::size_t k = 0; k < cols; ++k) s += a(i, k) * a(j, k);
      }
      gram(i, j) = s;
    }
  }
  auto ev = detail::symmetric_eigenvalues(std::move(gram));
  for (double& v : ev) v = std::sqrt(std::max(0.0, v));
  return ev;
}

inline double condition_number(const RealArray& a) {
  const auto sv = singular_values(a);
  return sv.front() > 0.0 ? sv.back() / sv.front() : std::numeric_limits<double>::infinity();
}

// Fixed map from latent z to data x with an exact vector-Jacobian product.
class GeneratorModel {
 public:
  static GeneratorModel identity(std::size_t dim) {
    if (dim == 0) throw ArgumentError("generator dims must be positive");
    GeneratorModel g;
    g.kind_ = GeneratorKind::Identity;
    g.latent_dim_ = g.data_dim_ = dim;
    return g;
  }

  static GeneratorModel linear(RealArray matrix, std::vector<double> offset) {
    if (matrix.rank() != 2 || matrix.extent(0) == 0 || matrix.extent(1) == 0) {
      throw ArgumentError("linear generator needs a non-empty matrix");
    }
    if (offset.size() != matrix.extent(0)) throw ArgumentError("linear generator offset width mismatch");
    GeneratorModel g;
    g.kind_ = GeneratorKind::Linear;
    g.data_dim_ = matrix.extent(0);
    g.latent_dim_ = matrix.extent(1);
    g.matrix_ = std::move(matrix);
    g.offset_ = std::move(offset);
    return g;
  }

  static GeneratorModel small_mlp(MlpParams net) {
    if (net.num_layers() < 2) throw ArgumentError("small_mlp generator needs a hidden layer");
    GeneratorModel g;
    g.kind_ = GeneratorKind::SmallMlp;
    g.latent_dim_ = net.input_dim();
    g.data_dim_ = net.output_dim();
    g.net_ = std::move(net);
    return g;
  }

  GeneratorKind kind() const noexcept { return kind_; }
  std::size_t latent_dim() const noexcept { return latent_dim_; }
  std::size_t data_dim() const noexcept { return data_dim_; }
  const RealArray& matrix() const { return matrix_; }
  const std::vector<double>& offset() const { return offset_; }
  const MlpParams& network() const { return net_; }

  // Width of the first hidden layer (SmallMlp only).
  std::size_t intermediate_dim() const {
    if (kind_ != GeneratorKind::SmallMlp) {
      throw CapabilityError("intermediate features exist only for small_mlp generators");
    }
    return net_.dims()[1];
  }

  void apply(std::span<const double> z, std::span<double> x) const {
    MlpTape tape;
    apply(z, x, tape);
  }

  void apply(std::span<const double> z, std::span<double> x, MlpTape& tape) const {
    check_latent(z);
    switch (kind_) {
      case GeneratorKind::Identity:
        std::copy(z.begin(), z.end(), x.begin());
        break;
      case GeneratorKind::Linear:
        for (std::size_t r = 0; r < data_dim_; ++r) x[r] = offset_[r] + dot(matrix_.row(r), z);
        break;
      case GeneratorKind::SmallMlp: {
        auto out = tape.forward(net_, z);
        std::copy(out.begin(), out.end(), x.begin());
        break;
      }
    }
  }

  // grad_z = J_g(z)^T cotangent.
  void vjp(std::span<const double> z, std::span<const double> cotangent, std::span<double> grad_z,
           MlpTape& tape) const {
    check_latent(z);
    if (cotangent.size() != data_dim_) throw ArgumentError("generator vjp: cotangent width mismatch");
    switch (kind_) {
      case GeneratorKind::Identity:
        std::copy(cotangent.begin(), cotangent.end(), grad_z.begin());
        break;
      case GeneratorKind::Linear:
        std::fill(grad_z.begin(), grad_z.end(), 0.0);
        for (std::size_t r = 0; r < data_dim_; ++r) {
          const auto row = matrix_.row(r);
          for (std::size_t c = 0; c < latent_dim_; ++c) grad_z[c] += row[c] * cotangent[r];
        }
        break;
      case GeneratorKind::SmallMlp:
        tape.forward(net_, z);
        tape.backward(net_, cotangent, grad_z);
        break;
    }
  }

  void vjp(std::span<const double> z, std::span<const double> cotangent, std::span<double> grad_z) const {
    MlpTape tape;
    vjp(z, cotangent, grad_z, tape);
  }

  // First hidden activation of a SmallMlp generator, and its vjp.
  void intermediate(std::span<const double> z, std::span<double> h) const {
    check_latent(z);
    const std::size_t width = intermediate_dim();
    const auto& w = net_.weight(0);
    const auto& b = net_.bias(0);
    for (std::size_t o = 0; o < width; ++o) h[o] = leaky(b[o] + dot(w.row(o), z));
  }

  void intermediate_vjp(std::span<const double> z, std::span<const double> cotangent,
                        std::span<double> grad_z) const {
    check_latent(z);
    const std::size_t width = intermediate_dim();
    const auto& w = net_.weight(0);
    const auto& b = net_.bias(0);
    std::fill(grad_z.begin(), grad_z.end(), 0.0);
    for (std::size_t o = 0; o < width; ++o) {
      const double d = cotangent[o] * leaky_grad(b[o] + dot(w.row(o), z));
      const auto row = w.row(o);
      for (std::size_t c = 0; c < latent_dim_; ++c) grad_z[c] += row[c] * d;
    }
  }

 private:
  void check_latent(std::span<const double> z) const {
    if (z.size() != latent_dim_) {
      throw ArgumentError("generator: latent width " + std::to_string(z.size()) + " != " +
                          std::to_string(latent_dim_));
    }
  }

  GeneratorKind kind_ = GeneratorKind::Identity;
  std::size_t latent_dim_ = 0;
  std::size_t data_dim_ = 0;
  RealArray matrix_;
  std::vector<double> offset_;
  MlpParams net_;
};

inline constexpr double kMaxGeneratorCondition = 10.0;

// Identity requires latent_dim == data_dim. Linear draws a Gaussian matrix,
// resampling until its condition number is below 10; the offset is zero.
// SmallMlp is a frozen mlp_init network latent -> max(8, 2*latent) -> data.
inline GeneratorModel make_generator(GeneratorKind kind, std::size_t latent_dim, std::size_t data_dim,
                                     std::uint64_t seed) {
  if (latent_dim == 0 || data_dim == 0) throw ArgumentError("generator dims must be positive");
  switch (kind) {
    case GeneratorKind::Identity:
      if (latent_dim != data_dim) throw ArgumentError("identity generator needs latent_dim == data_dim");
      return GeneratorModel::identity(latent_dim);
    case GeneratorKind::Linear: {
      Rng rng(seed);
      const double scale = 1.0 / std::sqrt(static_cast<double>(latent_dim));
      for (int attempt = 0; attempt < 100000; ++attempt) {
        RealArray a({data_dim, latent_dim});
        for (double& v : a.data()) v = scale * rng.normal();
        if (condition_number(a) < kMaxGeneratorCondition) {
          return GeneratorModel::linear(std::move(a), std::vector<double>(data_dim, 0.0));
        }
      }
      throw NumericError("make_generator: no well-conditioned matrix found");
    }
    case GeneratorKind::SmallMlp: {
      const std::size_t hidden = std::max<std::size_t>(8, 2 * latent_dim);
      return GeneratorModel::small_mlp(mlp_init({latent_dim, hidden, data_dim}, seed));
    }
  }
  throw ArgumentError("unsupported generator kind");
}

// Batch forms: rows of z_batch are latents.
inline RealArray generator_apply(const GeneratorModel& g, const RealArray& z_batch) {
  if (z_batch.rank() != 2 || z_batch.extent(1) != g.latent_dim()) {
    throw ArgumentError("generator_apply: expected batch of width " + std::to_string(g.latent_dim()));
  }
  RealArray x({z_batch.extent(0), g.data_dim()});
  for (std::size_t r = 0; r < z_batch.extent(0); ++r) g.apply(z_batch.row(r), x.row(r));
  return x;
}

inline std::vector<double> generator_vjp(const GeneratorModel& g, std::span<const double> z,
                                         std::span<const double> cotangent) {
  std::vector<double> grad(g.latent_dim());
  g.vjp(z, cotangent, grad);
  return grad;
}

// ---------------------------------------------------------------------------
// Ground-truth labelling rules

// Discrete binary: [u.x > offset].
struct HalfSpaceRule {
  std::vector<double> normal;
  double offset = 0.0;
};

// Discrete 4-category: 2*[a.x > 0] + [b.x > 0].
struct QuadrantRule {
  std::vector<double> first;
  std::vector<double> second;
};

// Continuous: logistic(scale * w.x).
struct LogisticRule {
  std::vector<double> direction;
  double scale = 1.0;
};

using TruthRule = std::variant<HalfSpaceRule, QuadrantRule, LogisticRule>;

inline double evaluate_rule(const TruthRule& rule, std::span<const double> x) {
  return std::visit(
      [&](const auto& r) -> double {
        using R = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<R, HalfSpaceRule>) {
          return dot(r.normal, x) > r.offset ? 1.0 : 0.0;
        } else if constexpr (std::is_same_v<R, QuadrantRule>) {
          return 2.0 * (dot(r.first, x) > 0.0 ? 1.0 : 0.0) + (dot(r.second, x) > 0.0 ? 1.0 : 0.0);
        } else {
          return 1.0 / (1.0 + std::exp(-r.scale * dot(r.direction, x)));
        }
      },
      rule);
}

inline AttributeDescriptor rule_descriptor(const TruthRule& rule, std::string name) {
  if (std::holds_alternative<HalfSpaceRule>(rule)) return AttributeDescriptor::discrete(std::move(name), 2);
  if (std::holds_alternative<QuadrantRule>(rule)) return AttributeDescriptor::discrete(std::move(name), 4);
  return AttributeDescriptor::continuous(std::move(name));
}

// Analytic labeller on x-space; total and deterministic.
class TruthOracle {
 public:
  TruthOracle() = default;
  TruthOracle(AttributeSpec spec, std::vector<TruthRule> rules)
      : spec_(std::move(spec)), rules_(std::move(rules)) {
    if (rules_.size() != spec_.size()) throw ArgumentError("TruthOracle: one rule per attribute required");
    for (std::size_t i = 0; i < rules_.size(); ++i) {
      if (!(rule_descriptor(rules_[i], spec_[i].name) == spec_[i])) {
        throw ArgumentError("TruthOracle: rule " + std::to_string(i) + " does not match its descriptor");
      }
    }
  }

  const AttributeSpec& spec() const noexcept { return spec_; }
  const std::vector<TruthRule>& rules() const noexcept { return rules_; }

  double label(std::size_t attr, std::span<const double> x) const { return evaluate_rule(rules_.at(attr), x); }

  std::vector<double> labels(std::span<const double> x) const {
    std::vector<double> out(rules_.size());
    for (std::size_t i = 0; i < rules_.size(); ++i) out[i] = evaluate_rule(rules_[i], x);
    return out;
  }

 private:
  AttributeSpec spec_;
  std::vector<TruthRule> rules_;
};

// ---------------------------------------------------------------------------
// Datasets

struct Dataset {
  RealArray z;       // {count, latent_dim}
  RealArray x;       // {count, data_dim}
  RealArray labels;  // {count, num_attributes}

  std::size_t size() const { return z.rank() == 2 ? z.extent(0) : 0; }
};

struct SynthesisOptions {
  // Probability of replacing a discrete label with a uniformly drawn other category.
  double label_noise = 0.0;
  // Samples whose labels match every present entry are dropped.
  std::optional<AttributeCode> holdout;
};

inline constexpr std::size_t kSynthesisChunk = 4096;

inline bool matches_code(const AttributeCode& code, std::span<const double> labels) {
  bool any = false;
  for (std::size_t i = 0; i < code.size(); ++i) {
    if (!code[i]) continue;
    any = true;
    if (labels[i] != *code[i]) return false;
  }
  return any;
}

// z ~ N(0, I), x = g(z), c = oracle(x). Chunk k draws from stream seed + k, so
// the result depends only on (g, oracle, count, seed, options).
inline Dataset synthesize_pairs(const GeneratorModel& g, const TruthOracle& oracle, std::size_t count,
                                std::uint64_t seed, const SynthesisOptions& options = {}) {
  if (count == 0) throw ArgumentError("synthesize_pairs: count must be positive");
  if (!(options.label_noise >= 0.0 && options.label_noise <= 1.0)) {
    throw ArgumentError("synthesize_pairs: label_noise must lie in [0, 1]");
  }
  const auto& spec = oracle.spec();
  if (options.holdout) {
    validate_code(spec, *options.holdout);
    for (std::size_t i = 0; i < spec.size(); ++i) {
      if ((*options.holdout)[i] && !spec[i].is_discrete()) {
        throw ArgumentError("holdout entries must be discrete attributes");
      }
    }
  }
  const std::size_t dz = g.latent_dim(), dx = g.data_dim(), na = spec.size();
  const std::size_t chunks = (count + kSynthesisChunk - 1) / kSynthesisChunk;
  std::vector<Dataset> parts(chunks);
  parallel_for(chunks, [&](std::size_t k) {
    const std::size_t begin = k * kSynthesisChunk;
    const std::size_t n = std::min(kSynthesisChunk, count - begin);
    Rng rng = stream(seed, k);
    // Label flips draw from their own stream so z does not depend on the noise level.
    Rng flip = stream(~seed, k);
    std::vector<double> zs, xs, ls;
    zs.reserve(n * dz);
    xs.reserve(n * dx);
    ls.reserve(n * na);
    std::vector<double> z(dz), x(dx);
    for (std::size_t r = 0; r < n; ++r) {
      rng.fill_normal(z);
      g.apply(z, x);
      auto c = oracle.labels(x);
      if (options.label_noise > 0.0) {
        for (std::size_t i = 0; i < na; ++i) {
          if (!spec[i].is_discrete()) continue;
          if (flip.uniform() < options.label_noise) {
            const auto m = spec[i].num_categories;
            const auto shift = 1 + flip.index(m - 1);
            c[i] = static_cast<double>((static_cast<std::size_t>(c[i]) + shift) % m);
          }
        }
      }
      if (options.holdout && matches_code(*options.holdout, c)) continue;
      zs.insert(zs.end(), z.begin(), z.end());
      xs.insert(xs.end(), x.begin(), x.end());
      ls.insert(ls.end(), c.begin(), c.end());
    }
    const std::size_t kept = zs.size() / dz;
    parts[k] = Dataset{RealArray({kept, dz}, std::move(zs)), RealArray({kept, dx}, std::move(xs)),
                       RealArray({kept, na}, std::move(ls))};
  });
  std::vector<double> zs, xs, ls;
  for (auto& p : parts) {
    zs.insert(zs.end(), p.z.values().begin(), p.z.values().end());
    xs.insert(xs.end(), p.x.values().begin(), p.x.values().end());
    ls.insert(ls.end(), p.labels.values().begin(), p.labels.values().end());
  }
  const std::size_t total = zs.size() / dz;
  return Dataset{RealArray({total, dz}, std::move(zs)), RealArray({total, dx}, std::move(xs)),
                 RealArray({total, na}, std::move(ls))};
}

// Header: z_0.., x_0.., attribute names.
inline void write_dataset_csv(std::ostream& out, const Dataset& d, const AttributeSpec& spec) {
  CsvWriter csv(out);
  std::vector<std::string> head;
  for (std::size_t j = 0; j < d.z.extent(1); ++j) head.push_back("z_" + std::to_string(j));
  for (std::size_t j = 0; j < d.x.extent(1); ++j) head.push_back("x_" + std::to_string(j));
  for (const auto& a : spec.attributes()) head.push_back(a.name);
  csv.header(head);
  for (std::size_t r = 0; r < d.size(); ++r) {
    std::vector<std::string> cells;
    for (double v : d.z.row(r)) cells.push_back(format_double(v));
    for (double v : d.x.row(r)) cells.push_back(format_double(v));
    for (double v : d.labels.row(r)) cells.push_back(format_double(v));
    csv.row(cells);
  }
}

// ---------------------------------------------------------------------------
// Benchmark worlds

struct World {
  AttributeSpec spec;
  GeneratorModel generator;
  TruthOracle truth;
};

struct WorldOptions {
  std::size_t latent_dim = 2;
  std::size_t data_dim = 2;
  GeneratorKind generator = GeneratorKind::Linear;
  std::uint64_t seed = 11;
  double logistic_scale = 2.0;
};

// Three attributes: attr0 binary half-space, attr1 4-category quadrant of two
// functionals, attr2 continuous logistic squash. With data_dim >= 4 the four
// functionals are orthonormal, so every attribute combination is realisable.
// In 2-D they are the unit vectors at angles theta (attr0), theta+45 and
// theta+135 degrees (attr1) and theta+90 degrees (attr2).
inline World make_benchmark_world(const WorldOptions& opt) {
  if (opt.data_dim < 2) throw ArgumentError("benchmark world needs data_dim >= 2");
  auto g = make_generator(opt.generator, opt.latent_dim, opt.data_dim, opt.seed);
  Rng rng(opt.seed ^ 0x9e3779b97f4a7c15ULL);
  const std::size_t d = opt.data_dim;
  std::vector<std::vector<double>> dirs;
  if (d >= 4) {
    while (dirs.size() < 4) {
      std::vector<double> v(d);
      rng.fill_normal(v);
      for (const auto& u : dirs) {
        const double p = dot(u, v);
        for (std::size_t k = 0; k < d; ++k) v[k] -= p * u[k];
      }
      const double n = std::sqrt(squared_norm(v));
      if (n < 1e-6) continue;
      for (double& e : v) e /= n;
      dirs.push_back(std::move(v));
    }
  } else {
    const double theta = 2.0 * std::numbers::pi * rng.uniform();
    for (double deg : {0.0, 45.0, 135.0, 90.0}) {
      std::vector<double> v(d, 0.0);
      const double a = theta + deg * std::numbers::pi / 180.0;
      v[0] = std::cos(a);
      v[1] = std::sin(a);
      dirs.push_back(std::move(v));
    }
  }
  AttributeSpec spec({AttributeDescriptor::discrete("attr0", 2), AttributeDescriptor::discrete("attr1", 4),
                      AttributeDescriptor::continuous("attr2")});
  std::vector<TruthRule> rules{HalfSpaceRule{dirs[0], 0.0}, QuadrantRule{dirs[1], dirs[2]},
                               LogisticRule{dirs[3], opt.logistic_scale}};
  return World{spec, std::move(g), TruthOracle(spec, std::move(rules))};
}

}  // namespace lace
