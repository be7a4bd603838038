#pragma once

// Attribute classifier heads f_i(x; theta): training, inference, checkpoints.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lace/errors.hpp"
#include "lace/ndmath.hpp"
#include "lace/rng.hpp"
#include "lace/worldgen.hpp"

namespace lace {

enum class ClassifierMode { Separate, SingleTrunk };
enum class InputSpace { Latent, Intermediate, Data };

inline std::string to_string(ClassifierMode m) {
  return m == ClassifierMode::Separate ? "separate" : "single_trunk";
}
inline std::string to_string(InputSpace s) {
  switch (s) {
    case InputSpace::Latent: return "latent";
    case InputSpace::Intermediate: return "intermediate";
    case InputSpace::Data: return "data";
  }
  return "?";
}
inline ClassifierMode parse_classifier_mode(std::string_view s) {
  if (s == "separate") return ClassifierMode::Separate;
  if (s == "single_trunk") return ClassifierMode::SingleTrunk;
  throw ArgumentError("unknown classifier mode '" + std::string(s) + "'");
}
inline InputSpace parse_input_space(std::string_view s) {
  if (s == "latent") return InputSpace::Latent;
  if (s == "intermediate") return InputSpace::Intermediate;
  if (s == "data") return InputSpace::Data;
  throw ArgumentError("unknown input space '" + std::string(s) + "'");
}

// Dimension of the classifier input for a given generator.
inline std::size_t input_space_dim(InputSpace s, const GeneratorModel& g) {
  switch (s) {
    case InputSpace::Latent: return g.latent_dim();
    case InputSpace::Intermediate: return g.intermediate_dim();
    case InputSpace::Data: return g.data_dim();
  }
  return 0;
}

// Hidden widths 384/256/128; for inputs narrower than 16 each width becomes
// max(8, round(width * d / 512)).
inline std::vector<std::size_t> default_hidden_widths(std::size_t input_dim) {
  std::vector<std::size_t> widths{384, 256, 128};
  if (input_dim < 16) {
    for (auto& w : widths) {
      const auto scaled = static_cast<std::size_t>(std::lround(static_cast<double>(w) * input_dim / 512.0));
      w = std::max<std::size_t>(8, scaled);
    }
  }
  return widths;
}

class ClassifierModel {
 public:
  ClassifierModel() = default;

  // Separate: one MLP input -> hidden... -> head per attribute.
  // SingleTrunk: trunk MLP input -> hidden..., leaky-ReLU, then one linear
  // head per attribute.
  static ClassifierModel create(const AttributeSpec& spec, ClassifierMode mode, InputSpace space,
                                std::size_t input_dim, const std::vector<std::size_t>& hidden,
                                std::uint64_t seed) {
    if (input_dim == 0) throw ArgumentError("classifier input dim must be positive");
    if (hidden.empty()) throw ArgumentError("classifier needs at least one hidden layer");
    ClassifierModel m;
    m.spec_ = spec;
    m.mode_ = mode;
    m.space_ = space;
    if (mode == ClassifierMode::Separate) {
      for (std::size_t i = 0; i < spec.size(); ++i) {
        std::vector<std::size_t> dims{input_dim};
        dims.insert(dims.end(), hidden.begin(), hidden.end());
        dims.push_back(spec[i].head_width());
        m.nets_.push_back(mlp_init(dims, seed + i));
      }
    } else {
      std::vector<std::size_t> dims{input_dim};
      dims.insert(dims.end(), hidden.begin(), hidden.end());
      m.trunk_ = mlp_init(dims, seed);
      for (std::size_t i = 0; i < spec.size(); ++i) {
        m.nets_.push_back(mlp_init({hidden.back(), spec[i].head_width()}, seed + 1 + i));
      }
    }
    m.check();
    return m;
  }

  static ClassifierModel from_parts(AttributeSpec spec, ClassifierMode mode, InputSpace space,
                                    std::optional<MlpParams> trunk, std::vector<MlpParams> nets) {
    ClassifierModel m;
    m.spec_ = std::move(spec);
    m.mode_ = mode;
    m.space_ = space;
    if (trunk) m.trunk_ = std::move(*trunk);
    m.nets_ = std::move(nets);
    m.check();
    return m;
  }

  const AttributeSpec& spec() const noexcept { return spec_; }
  ClassifierMode mode() const noexcept { return mode_; }
  InputSpace input_space() const noexcept { return space_; }
  std::size_t input_dim() const {
    return mode_ == ClassifierMode::Separate ? nets_.front().input_dim() : trunk_.input_dim();
  }
  const MlpParams& trunk() const { return trunk_; }
  MlpParams& trunk() { return trunk_; }
  // Per-attribute network (Separate) or linear head (SingleTrunk).
  const std::vector<MlpParams>& nets() const noexcept { return nets_; }
  std::vector<MlpParams>& nets() noexcept { return nets_; }

  // Every trainable tensor in a fixed order: trunk first, then nets.
  std::vector<RealArray*> parameter_tensors() {
    std::vector<RealArray*> out;
    if (mode_ == ClassifierMode::SingleTrunk) {
      for (auto& t : trunk_.tensors()) out.push_back(&t);
    }
    for (auto& n : nets_) {
      for (auto& t : n.tensors()) out.push_back(&t);
    }
    return out;
  }

  friend bool operator==(const ClassifierModel&, const ClassifierModel&) = default;

 private:
  void check() const {
    if (nets_.size() != spec_.size()) throw ArgumentError("classifier: one head per attribute required");
    for (std::size_t i = 0; i < nets_.size(); ++i) {
      if (nets_[i].output_dim() != spec_[i].head_width()) {
        throw ArgumentError("classifier: head " + std::to_string(i) + " width " +
                            std::to_string(nets_[i].output_dim()) + " != " +
                            std::to_string(spec_[i].head_width()));
      }
    }
    if (mode_ == ClassifierMode::Separate) {
      for (const auto& n : nets_) {
        if (n.input_dim() != nets_.front().input_dim()) throw ArgumentError("classifier: input dims differ");
      }
    } else {
      for (const auto& n : nets_) {
        if (n.num_layers() != 1 || n.input_dim() != trunk_.output_dim()) {
          throw ArgumentError("classifier: single-trunk heads must be linear maps from the trunk width");
        }
      }
    }
  }

  AttributeSpec spec_;
  ClassifierMode mode_ = ClassifierMode::Separate;
  InputSpace space_ = InputSpace::Latent;
  MlpParams trunk_;
  std::vector<MlpParams> nets_;
};

// Evaluates selected heads on one input and back-propagates head cotangents.
// Not thread-safe; use one per thread.
class HeadEvaluator {
 public:
  explicit HeadEvaluator(const ClassifierModel& model)
      : model_(&model), tapes_(model.nets().size()), outputs_(model.nets().size()),
        computed_(model.nets().size(), false) {}

  // Forward for attributes with needed[i] (all when empty).
  void forward(std::span<const double> x, const std::vector<bool>& needed = {}) {
    const auto& m = *model_;
    if (x.size() != m.input_dim()) {
      throw ArgumentError("classifier input width " + std::to_string(x.size()) + " != " +
                          std::to_string(m.input_dim()));
    }
    std::span<const double> head_in = x;
    if (m.mode() == ClassifierMode::SingleTrunk) {
      auto t = trunk_tape_.forward(m.trunk(), x);
      trunk_pre_.assign(t.begin(), t.end());
      trunk_act_.resize(t.size());
      for (std::size_t k = 0; k < t.size(); ++k) trunk_act_[k] = leaky(t[k]);
      head_in = trunk_act_;
    }
    for (std::size_t i = 0; i < m.nets().size(); ++i) {
      computed_[i] = needed.empty() || needed[i];
      if (!computed_[i]) continue;
      auto out = tapes_[i].forward(m.nets()[i], head_in);
      outputs_[i].assign(out.begin(), out.end());
    }
  }

  const std::vector<double>& output(std::size_t attr) const { return outputs_.at(attr); }

  // cotangents[i] is ignored for attributes not computed in the last forward
  // or when empty. grad_x receives the input gradient. When grads is non-null
  // (a model of identical structure), parameter gradients are accumulated
  // into it.
  void backward(const std::vector<std::vector<double>>& cotangents, std::span<double> grad_x,
                ClassifierModel* grads = nullptr) {
    const auto& m = *model_;
    const bool trunk = m.mode() == ClassifierMode::SingleTrunk;
    const std::size_t head_in = trunk ? m.trunk().output_dim() : m.input_dim();
    acc_.assign(head_in, 0.0);
    scratch_.resize(head_in);
    for (std::size_t i = 0; i < m.nets().size(); ++i) {
      if (!computed_[i] || i >= cotangents.size() || cotangents[i].empty()) continue;
      tapes_[i].backward(m.nets()[i], cotangents[i], scratch_, grads ? &grads->nets()[i] : nullptr);
      for (std::size_t k = 0; k < head_in; ++k) acc_[k] += scratch_[k];
    }
    if (!trunk) {
      std::copy(acc_.begin(), acc_.end(), grad_x.begin());
      return;
    }
    for (std::size_t k = 0; k < head_in; ++k) acc_[k] *= leaky_grad(trunk_pre_[k]);
    trunk_tape_.backward(m.trunk(), acc_, grad_x, grads ? &grads->trunk() : nullptr);
  }

 private:
  const ClassifierModel* model_;
  MlpTape trunk_tape_;
  std::vector<double> trunk_pre_, trunk_act_;
  std::vector<MlpTape> tapes_;
  std::vector<std::vector<double>> outputs_;
  std::vector<bool> computed_;
  std::vector<double> acc_, scratch_;
};

// Raw head outputs (logits for discrete, scalar for continuous), one array
// {batch, head_width} per attribute.
inline std::vector<RealArray> predict_heads(const ClassifierModel& model, const RealArray& x_batch) {
  if (x_batch.rank() != 2 || x_batch.extent(1) != model.input_dim()) {
    throw ArgumentError("predict_heads: expected batch of width " + std::to_string(model.input_dim()));
  }
  const std::size_t batch = x_batch.extent(0);
  std::vector<RealArray> out;
  for (const auto& a : model.spec().attributes()) out.emplace_back(std::vector<std::size_t>{batch, a.head_width()});
  HeadEvaluator ev(model);
  for (std::size_t r = 0; r < batch; ++r) {
    ev.forward(x_batch.row(r));
    for (std::size_t i = 0; i < out.size(); ++i) {
      const auto& o = ev.output(i);
      std::copy(o.begin(), o.end(), out[i].row(r).begin());
    }
  }
  return out;
}

// Classifier inputs for each dataset row in the requested space.
inline RealArray classifier_inputs(const Dataset& d, InputSpace space, const GeneratorModel* g) {
  switch (space) {
    case InputSpace::Latent: return d.z;
    case InputSpace::Data: return d.x;
    case InputSpace::Intermediate: {
      if (g == nullptr) throw ArgumentError("intermediate inputs need the generator");
      RealArray h({d.size(), g->intermediate_dim()});
      for (std::size_t r = 0; r < d.size(); ++r) g->intermediate(d.z.row(r), h.row(r));
      return h;
    }
  }
  return {};
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 128;
  double learning_rate = 1e-3;
  double decay_factor = 0.1;
  std::vector<std::size_t> milestones{60, 90};
  std::uint64_t seed = 0;
  ClassifierMode mode = ClassifierMode::Separate;
  InputSpace input_space = InputSpace::Latent;
  std::vector<std::size_t> hidden;  // empty: default_hidden_widths(input_dim)

  // Staircase milestones placed at 60% and 90% of the run.
  static TrainConfig with_epochs(std::size_t epochs) {
    TrainConfig c;
    c.epochs = epochs;
    c.milestones.clear();
    for (double frac : {0.6, 0.9}) {
      const auto m = static_cast<std::size_t>(std::lround(frac * static_cast<double>(epochs)));
      if (m > 0 && m < epochs && (c.milestones.empty() || m > c.milestones.back())) c.milestones.push_back(m);
    }
    return c;
  }

  void validate() const {
    if (epochs == 0 || batch_size == 0 || !(learning_rate > 0.0) || !(decay_factor > 0.0)) {
      throw ArgumentError("TrainConfig: epochs, batch size, learning rate and decay factor must be positive");
    }
    for (std::size_t k = 0; k < milestones.size(); ++k) {
      if (milestones[k] == 0 || milestones[k] >= epochs || (k > 0 && milestones[k] <= milestones[k - 1])) {
        throw ArgumentError("TrainConfig: milestones must be strictly increasing within (0, epochs)");
      }
    }
  }

  double learning_rate_at(std::size_t epoch) const {
    double lr = learning_rate;
    for (auto m : milestones) {
      if (epoch >= m) lr *= decay_factor;
    }
    return lr;
  }
};

struct TrainResult {
  ClassifierModel model;
  std::vector<double> loss_trace;  // mean training loss per epoch
  // Final model on the training set: argmax accuracy for discrete heads,
  // 1 - mean |f - c| for continuous heads.
  std::vector<double> train_accuracy;
};

// Per-sample loss and head cotangents: cross-entropy for discrete heads,
// squared error for continuous heads.
inline double head_loss(const AttributeDescriptor& a, const std::vector<double>& out, double label,
                        std::vector<double>& cot) {
  cot.assign(out.size(), 0.0);
  if (a.is_discrete()) {
    const double lse = logsumexp(out);
    const auto c = static_cast<std::size_t>(label);
    for (std::size_t k = 0; k < out.size(); ++k) cot[k] = std::exp(out[k] - lse);
    cot[c] -= 1.0;
    return lse - out[c];
  }
  const double r = out[0] - label;
  cot[0] = 2.0 * r;
  return r * r;
}

inline std::vector<double> training_accuracy(const ClassifierModel& model, const RealArray& inputs,
                                             const RealArray& labels) {
  const auto& spec = model.spec();
  std::vector<double> acc(spec.size(), 0.0);
  HeadEvaluator ev(model);
  const std::size_t n = inputs.extent(0);
  for (std::size_t r = 0; r < n; ++r) {
    ev.forward(inputs.row(r));
    for (std::size_t i = 0; i < spec.size(); ++i) {
      const auto& o = ev.output(i);
      if (spec[i].is_discrete()) {
        const auto arg = static_cast<std::size_t>(std::max_element(o.begin(), o.end()) - o.begin());
        acc[i] += arg == static_cast<std::size_t>(labels(r, i)) ? 1.0 : 0.0;
      } else {
        acc[i] += 1.0 - std::abs(o[0] - labels(r, i));
      }
    }
  }
  for (double& a : acc) a /= static_cast<double>(n);
  return acc;
}

// Minimises summed per-head mean losses with Adam and a staircase learning
// rate. Deterministic given cfg.seed.
inline TrainResult train_classifier(const Dataset& data, const AttributeSpec& spec, const TrainConfig& cfg,
                                    const GeneratorModel* generator = nullptr) {
  cfg.validate();
  const std::size_t n = data.size();
  if (n == 0) throw ArgumentError("train_classifier: empty dataset");
  if (data.labels.extent(1) != spec.size()) throw DataError("train_classifier: label width does not match spec");
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < spec.size(); ++i) {
      try {
        spec.check_value(i, data.labels(r, i));
      } catch (const ArgumentError& e) {
        throw DataError("train_classifier: row " + std::to_string(r) + ": " + e.what());
      }
    }
  }
  const RealArray inputs = classifier_inputs(data, cfg.input_space, generator);
  const std::size_t in_dim = inputs.extent(1);
  const auto hidden = cfg.hidden.empty() ? default_hidden_widths(in_dim) : cfg.hidden;
  TrainResult result;
  result.model = ClassifierModel::create(spec, cfg.mode, cfg.input_space, in_dim, hidden, cfg.seed);
  auto& model = result.model;

  ClassifierModel grads = model;
  auto param_ptrs = model.parameter_tensors();
  auto grad_ptrs = grads.parameter_tensors();
  std::vector<RealArray> shapes;
  for (auto* t : param_ptrs) shapes.emplace_back(t->shape());
  AdamState adam = adam_init(shapes, cfg.learning_rate);
  std::vector<RealArray> params, grad_list;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(cfg.seed ^ 0xa5a5a5a5ULL);
  HeadEvaluator ev(model);
  std::vector<std::vector<double>> cots(spec.size());
  std::vector<double> grad_x(in_dim);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    adam.learning_rate = cfg.learning_rate_at(epoch);
    for (std::size_t k = n; k > 1; --k) std::swap(order[k - 1], order[rng.index(k)]);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      const double inv_b = 1.0 / static_cast<double>(end - start);
      for (auto* g : grad_ptrs) std::fill(g->data().begin(), g->data().end(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t s = start; s < end; ++s) {
        const std::size_t r = order[s];
        ev.forward(inputs.row(r));
        for (std::size_t i = 0; i < spec.size(); ++i) {
          batch_loss += head_loss(spec[i], ev.output(i), data.labels(r, i), cots[i]);
          for (double& c : cots[i]) c *= inv_b;
        }
        ev.backward(cots, grad_x, &grads);
      }
      batch_loss *= inv_b;
      if (!std::isfinite(batch_loss)) {
        throw NumericError("train_classifier: loss diverged at epoch " + std::to_string(epoch));
      }
      epoch_loss += batch_loss * static_cast<double>(end - start);
      // adam_step takes contiguous spans; move the tensors out and back.
      params.clear();
      grad_list.clear();
      for (auto* t : param_ptrs) params.push_back(std::move(*t));
      for (auto* t : grad_ptrs) grad_list.push_back(std::move(*t));
      adam_step(adam, params, grad_list);
      for (std::size_t k = 0; k < param_ptrs.size(); ++k) {
        *param_ptrs[k] = std::move(params[k]);
        *grad_ptrs[k] = std::move(grad_list[k]);
      }
    }
    result.loss_trace.push_back(epoch_loss / static_cast<double>(n));
  }
  result.train_accuracy = training_accuracy(model, inputs, data.labels);
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr int kCheckpointVersion = 1;

namespace detail {

using ojson = nlohmann::ordered_json;

inline ojson net_to_json(const MlpParams& p) {
  ojson layers = ojson::array();
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    ojson w = ojson::array();
    const auto& wt = p.weight(l);
    for (std::size_t r = 0; r < wt.extent(0); ++r) {
      ojson row = ojson::array();
      for (double v : wt.row(r)) row.push_back(v);
      w.push_back(std::move(row));
    }
    ojson b = ojson::array();
    for (double v : p.bias(l).data()) b.push_back(v);
    ojson layer;
    layer["W"] = std::move(w);
    layer["b"] = std::move(b);
    layers.push_back(std::move(layer));
  }
  return layers;
}

inline const ojson& require(const ojson& j, const std::string& key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw FormatError("checkpoint " + where + ": missing field '" + key + "'");
  return j.at(key);
}

inline std::vector<std::size_t> dims_from_json(const ojson& j, const std::string& where) {
  if (!j.is_array() || j.size() < 2) throw FormatError("checkpoint " + where + ": expected a list of >= 2 dims");
  std::vector<std::size_t> dims;
  for (std::size_t k = 0; k < j.size(); ++k) {
    if (!j[k].is_number_unsigned() || j[k].get<std::size_t>() == 0) {
      throw FormatError("checkpoint " + where + "[" + std::to_string(k) + "]: expected a positive integer");
    }
    dims.push_back(j[k].get<std::size_t>());
  }
  return dims;
}

inline double number_at(const ojson& j, const std::string& where) {
  if (!j.is_number()) throw FormatError("checkpoint " + where + ": expected a number");
  return j.get<double>();
}

inline MlpParams net_from_json(const ojson& j, const std::vector<std::size_t>& dims, const std::string& where) {
  MlpParams p(dims);
  if (!j.is_array() || j.size() != p.num_layers()) {
    throw FormatError("checkpoint " + where + ": dim inconsistency, expected " + std::to_string(p.num_layers()) +
                      " layers, found " + std::to_string(j.is_array() ? j.size() : 0));
  }
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    const std::string lw = where + "[" + std::to_string(l) + "]";
    const auto& w = require(j[l], "W", lw);
    const auto& b = require(j[l], "b", lw);
    const std::size_t out = dims[l + 1], in = dims[l];
    if (!w.is_array() || w.size() != out) {
      throw FormatError("checkpoint " + lw + ".W: dim inconsistency, expected " + std::to_string(out) +
                        " rows, found " + std::to_string(w.is_array() ? w.size() : 0));
    }
    for (std::size_t r = 0; r < out; ++r) {
      const std::string rw = lw + ".W[" + std::to_string(r) + "]";
      if (!w[r].is_array() || w[r].size() != in) {
        throw FormatError("checkpoint " + rw + ": dim inconsistency, expected " + std::to_string(in) +
                          " values, found " + std::to_string(w[r].is_array() ? w[r].size() : 0));
      }
      for (std::size_t c = 0; c < in; ++c) p.weight(l)(r, c) = number_at(w[r][c], rw);
    }
    if (!b.is_array() || b.size() != out) {
      throw FormatError("checkpoint " + lw + ".b: dim inconsistency, expected " + std::to_string(out) +
                        " values, found " + std::to_string(b.is_array() ? b.size() : 0));
    }
    for (std::size_t r = 0; r < out; ++r) p.bias(l)[r] = number_at(b[r], lw + ".b");
  }
  return p;
}

}  // namespace detail

inline std::string checkpoint_to_string(const ClassifierModel& m) {
  using detail::ojson;
  ojson j;
  j["format_version"] = kCheckpointVersion;
  ojson spec = ojson::array();
  for (const auto& a : m.spec().attributes()) {
    ojson e;
    e["name"] = a.name;
    e["kind"] = a.is_discrete() ? "discrete" : "continuous";
    if (a.is_discrete()) e["num_categories"] = a.num_categories;
    spec.push_back(std::move(e));
  }
  j["spec"] = std::move(spec);
  j["mode"] = to_string(m.mode());
  j["input_space"] = to_string(m.input_space());
  ojson heads_dims = ojson::array();
  for (const auto& n : m.nets()) heads_dims.push_back(n.dims());
  ojson heads_w = ojson::array();
  for (const auto& n : m.nets()) heads_w.push_back(detail::net_to_json(n));
  if (m.mode() == ClassifierMode::Separate) {
    j["layer_dims"] = std::move(heads_dims);
  } else {
    ojson d;
    d["trunk"] = m.trunk().dims();
    d["heads"] = std::move(heads_dims);
    j["layer_dims"] = std::move(d);
  }
  ojson act;
  act["name"] = "leaky_relu";
  act["negative_slope"] = kLeakySlope;
  j["activation"] = std::move(act);
  if (m.mode() == ClassifierMode::Separate) {
    j["weights"] = std::move(heads_w);
  } else {
    ojson w;
    w["trunk"] = detail::net_to_json(m.trunk());
    w["heads"] = std::move(heads_w);
    j["weights"] = std::move(w);
  }
  return j.dump(1) + "\n";
}

inline ClassifierModel checkpoint_from_string(const std::string& text) {
  using detail::ojson;
  using detail::require;
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("checkpoint truncated or malformed at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  const auto& version = require(j, "format_version", "root");
  if (!version.is_number_integer() || version.get<int>() != kCheckpointVersion) {
    throw FormatError("checkpoint format_version: expected " + std::to_string(kCheckpointVersion) + ", found " +
                      version.dump());
  }
  const auto& jspec = require(j, "spec", "root");
  if (!jspec.is_array()) throw FormatError("checkpoint spec: expected a list");
  std::vector<AttributeDescriptor> attrs;
  for (std::size_t i = 0; i < jspec.size(); ++i) {
    const std::string where = "spec[" + std::to_string(i) + "]";
    const auto& name = require(jspec[i], "name", where);
    const auto& kind = require(jspec[i], "kind", where);
    if (!name.is_string() || !kind.is_string()) throw FormatError("checkpoint " + where + ": name/kind must be strings");
    if (kind == "discrete") {
      const auto& m = require(jspec[i], "num_categories", where);
      if (!m.is_number_unsigned()) throw FormatError("checkpoint " + where + ".num_categories: expected an integer");
      attrs.push_back(AttributeDescriptor::discrete(name.get<std::string>(), m.get<std::size_t>()));
    } else if (kind == "continuous") {
      attrs.push_back(AttributeDescriptor::continuous(name.get<std::string>()));
    } else {
      throw FormatError("checkpoint " + where + ".kind: unknown kind " + kind.dump());
    }
  }
  AttributeSpec spec;
  ClassifierMode mode{};
  InputSpace space{};
  try {
    spec = AttributeSpec(std::move(attrs));
    mode = parse_classifier_mode(require(j, "mode", "root").get<std::string>());
    space = parse_input_space(require(j, "input_space", "root").get<std::string>());
  } catch (const ArgumentError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  const auto& act = require(j, "activation", "root");
  if (require(act, "name", "activation") != "leaky_relu" ||
      detail::number_at(require(act, "negative_slope", "activation"), "activation.negative_slope") != kLeakySlope) {
    throw FormatError("checkpoint activation: only leaky_relu with slope 0.01 is supported");
  }
  const auto& dims = require(j, "layer_dims", "root");
  const auto& weights = require(j, "weights", "root");
  std::optional<MlpParams> trunk;
  const ojson* head_dims = &dims;
  const ojson* head_weights = &weights;
  if (mode == ClassifierMode::SingleTrunk) {
    trunk = detail::net_from_json(require(weights, "trunk", "weights"),
                                  detail::dims_from_json(require(dims, "trunk", "layer_dims"), "layer_dims.trunk"),
                                  "weights.trunk");
    head_dims = &require(dims, "heads", "layer_dims");
    head_weights = &require(weights, "heads", "weights");
  }
  const std::string dim_prefix = mode == ClassifierMode::SingleTrunk ? "layer_dims.heads" : "layer_dims";
  const std::string w_prefix = mode == ClassifierMode::SingleTrunk ? "weights.heads" : "weights";
  if (!head_dims->is_array() || head_dims->size() != spec.size()) {
    throw FormatError("checkpoint " + dim_prefix + ": dim inconsistency, expected " + std::to_string(spec.size()) +
                      " networks");
  }
  if (!head_weights->is_array() || head_weights->size() != spec.size()) {
    throw FormatError("checkpoint " + w_prefix + ": dim inconsistency, expected " + std::to_string(spec.size()) +
                      " networks");
  }
  std::vector<MlpParams> nets;
  for (std::size_t i = 0; i < spec.size(); ++i) {
    const std::string idx = "[" + std::to_string(i) + "]";
    auto d = detail::dims_from_json((*head_dims)[i], dim_prefix + idx);
    if (d.back() != spec[i].head_width()) {
      throw FormatError("checkpoint " + dim_prefix + idx + ": dim inconsistency, head width " +
                        std::to_string(d.back()) + " but attribute '" + spec[i].name + "' needs " +
                        std::to_string(spec[i].head_width()));
    }
    if (trunk && d.front() != trunk->output_dim()) {
      throw FormatError("checkpoint " + dim_prefix + idx + ": dim inconsistency, head input " +
                        std::to_string(d.front()) + " != trunk width " + std::to_string(trunk->output_dim()));
    }
    if (!trunk && i > 0 && d.front() != nets.front().input_dim()) {
      throw FormatError("checkpoint " + dim_prefix + idx + ": dim inconsistency, input width differs from network 0");
    }
    nets.push_back(detail::net_from_json((*head_weights)[i], d, w_prefix + idx));
  }
  try {
    return ClassifierModel::from_parts(std::move(spec), mode, space, std::move(trunk), std::move(nets));
  } catch (const ArgumentError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const ClassifierModel& m, const std::filesystem::path& path) {
  write_file_atomic(path, [&](std::ostream& out) { out << checkpoint_to_string(m); });
}

inline ClassifierModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_string(ss.str());
}

}  // namespace lace
