#pragma once

// Experiment commands behind the lace CLI. Each command reads a RunConfig,
// writes CSV tables plus a JSON sidecar into experiment.output_dir, and
// returns its results so tests can drive it without a process boundary.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lace/app/config.hpp"
#include "lace/classifier.hpp"
#include "lace/csv.hpp"
#include "lace/energy.hpp"
#include "lace/errors.hpp"
#include "lace/eval.hpp"
#include "lace/expr_parser.hpp"
#include "lace/oracle.hpp"
#include "lace/parallel.hpp"
#include "lace/rng.hpp"
#include "lace/samplers.hpp"
#include "lace/worldgen.hpp"

namespace lace::app {

inline constexpr const char* kVersion = "0.1.0";
// Oracle draws use sampler.seed + this offset so they never share a stream
// with the chains they are compared against.
inline constexpr std::uint64_t kOracleSeedOffset = 1000003;

// ---------------------------------------------------------------------------
// Shared plumbing

inline World build_world(const RunConfig& c) { return make_benchmark_world(world_options(c.world)); }

inline std::optional<AttributeCode> holdout_code(const RunConfig& c, const AttributeSpec& spec) {
  if (trim(c.world.holdout).empty()) return std::nullopt;
  try {
    return parse_code(c.world.holdout, spec);
  } catch (const ParseError& e) {
    throw ConfigError(std::string("world.holdout: ") + e.what());
  }
}

inline Dataset build_dataset(const RunConfig& c, const World& w) {
  SynthesisOptions opt;
  opt.label_noise = c.world.label_noise;
  opt.holdout = holdout_code(c, w.spec);
  return synthesize_pairs(w.generator, w.truth, c.world.train_samples, c.world.data_seed, opt);
}

inline std::filesystem::path output_path(const RunConfig& c, const std::string& name) {
  return std::filesystem::absolute(std::filesystem::path(c.experiment.output_dir) / name);
}

// Sidecar key order: command, version, prng, seed, config, results.
inline void write_sidecar(const RunConfig& c, const std::string& command, const ojson& results,
                          double wall_seconds) {
  ojson j;
  j["command"] = command;
  j["version"] = kVersion;
  j["prng"] = kRngAlgorithm;
  j["seed"] = c.sampler.seed;
  j["config"] = to_json(c);
  j["results"] = results;
  j["wall_seconds"] = wall_seconds;
  write_file_atomic(output_path(c, command + ".meta.json"), [&](std::ostream& out) { out << j.dump(2) << "\n"; });
}

inline ClassifierModel load_model(const RunConfig& c, const World& w) {
  const auto path = checkpoint_path(c);
  if (!std::filesystem::exists(path)) {
    throw ConfigError("checkpoint " + path.string() + " not found; run `lace train` with the same config first");
  }
  auto model = load_checkpoint(path);
  if (model.spec().size() != w.spec.size()) {
    throw ConfigError("checkpoint " + path.string() + " was trained for a different world");
  }
  for (std::size_t i = 0; i < w.spec.size(); ++i) {
    if (model.spec()[i].name != w.spec[i].name || model.spec()[i].kind != w.spec[i].kind ||
        model.spec()[i].num_categories != w.spec[i].num_categories) {
      throw ConfigError("checkpoint " + path.string() + " was trained for a different world");
    }
  }
  if (input_space_dim(model.input_space(), w.generator) != model.input_dim()) {
    throw ConfigError("checkpoint input width does not match world latent/data dims");
  }
  return model;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// train

struct TrainOutcome {
  TrainResult result;
  std::size_t dataset_size = 0;
  double aggregate_accuracy = 0.0;
};

inline TrainOutcome train_model(const RunConfig& c, const World& w) {
  const Dataset data = build_dataset(c, w);
  if (data.size() == 0) throw ConfigError("world.holdout removes every training sample");
  TrainConfig tc = train_config(c.classifier);
  try {
    tc.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("config classifier: ") + e.what());
  }
  TrainOutcome out{train_classifier(data, w.spec, tc, &w.generator), data.size(), 0.0};
  double s = 0.0;
  for (double a : out.result.train_accuracy) s += a;
  out.aggregate_accuracy = s / static_cast<double>(out.result.train_accuracy.size());
  return out;
}

// ---------------------------------------------------------------------------
// Conditional sampling (shared by sample, eval, sweep and the zero-shot
// check of train)

struct SampleRun {
  EnergyExpr expr;
  SampleBatch batch;
  RealArray labels;                        // truth labels of g(z)
  RealArray predictions;                   // classifier argmax (discrete) or value
  std::vector<AttributeCode> codes;        // per-chain requested code, empty if none
  std::optional<AccScore> acc;             // per-attribute ACC when codes exist
  double satisfaction = 0.0;               // fuzzy truth of the expression, mean over chains
  std::optional<double> tv;
  std::optional<double> oracle_acceptance;
  EvalReport report;
};

// Leaf or AND of leaves on distinct attributes -> the code it requests.
inline std::optional<AttributeCode> implied_code(const EnergyExpr& e, const AttributeSpec& spec) {
  AttributeCode code(spec.size());
  if (!e.root) return std::nullopt;
  auto add_leaf = [&](const ExprNode& n) {
    if (n.kind != NodeKind::Leaf || code[n.attr]) return false;
    code[n.attr] = n.target;
    return true;
  };
  if (e.root->kind == NodeKind::Leaf) {
    add_leaf(*e.root);
    return code;
  }
  if (e.root->kind != NodeKind::And) return std::nullopt;
  for (const auto& ch : e.root->children) {
    if (!add_leaf(ch)) return std::nullopt;
  }
  return code;
}

// Truth value of an expression on labels, in [0, 1]: a discrete leaf is 1 on
// an exact match, a continuous leaf scores 1 - |c_hat - c|; AND takes the
// minimum, OR the maximum, NOT(a, b) min(a, 1 - b).
inline double satisfaction(const ExprNode& n, std::span<const double> labels, const AttributeSpec& spec,
                           const double* chain_targets) {
  switch (n.kind) {
    case NodeKind::Leaf: {
      const double t = chain_targets ? chain_targets[n.attr] : n.target;
      return spec[n.attr].is_discrete() ? (labels[n.attr] == t ? 1.0 : 0.0) : 1.0 - std::abs(labels[n.attr] - t);
    }
    case NodeKind::And: {
      double v = 1.0;
      for (const auto& c : n.children) v = std::min(v, satisfaction(c, labels, spec, chain_targets));
      return v;
    }
    case NodeKind::Or: {
      double v = 0.0;
      for (const auto& c : n.children) v = std::max(v, satisfaction(c, labels, spec, chain_targets));
      return v;
    }
    case NodeKind::Not:
      return std::min(satisfaction(n.children[0], labels, spec, chain_targets),
                      1.0 - satisfaction(n.children[1], labels, spec, chain_targets));
  }
  return 0.0;
}

inline EnergyExpr uniform_target_expr(const AttributeSpec& spec) {
  std::vector<ExprNode> leaves;
  for (std::size_t i = 0; i < spec.size(); ++i) leaves.push_back(ExprNode::leaf(i, 0.0));
  EnergyExpr e;
  e.root = ExprNode::all_of(std::move(leaves));
  return e;
}

inline EnergyExpr parse_config_expr(const RunConfig& c, const AttributeSpec& spec) {
  if (c.experiment.targets == "uniform") return uniform_target_expr(spec);
  return parse_expr(c.experiment.expr, spec);
}

inline GridSpec tv_grid(const RunConfig& c) {
  return GridSpec{-c.experiment.grid_bound, c.experiment.grid_bound, c.experiment.tv_resolution};
}

// Classifier prediction per chain: argmax category or the regressed value.
inline RealArray classifier_predictions(const RealArray& z, const ClassifierModel& model, const GeneratorModel& g) {
  const std::size_t n = z.extent(0);
  FeatureMap features(model.input_space(), g);
  RealArray x({n, features.dim()});
  for (std::size_t k = 0; k < n; ++k) features.forward(z.row(k), x.row(k));
  const auto heads = predict_heads(model, x);
  const auto& spec = model.spec();
  RealArray out({n, spec.size()});
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < spec.size(); ++i) {
      const auto row = heads[i].row(k);
      out(k, i) = spec[i].is_discrete()
                      ? static_cast<double>(std::max_element(row.begin(), row.end()) - row.begin())
                      : row[0];
    }
  }
  return out;
}

inline SampleRun run_sample(const RunConfig& c, const World& w, const ClassifierModel& model) {
  validate(c);
  const auto& spec = w.spec;
  SampleRun run;
  run.expr = parse_config_expr(c, spec);
  const bool uniform = c.experiment.targets == "uniform";
  // Capability problems surface before any sampling work.
  if (c.experiment.oracle == "rejection" && !uniform) rejection_bound(run.expr);
  const SamplerConfig sc = sampler_config(c.sampler);
  EnergyFunction fn(model, w.generator, run.expr);
  std::optional<RealArray> targets;
  if (uniform) {
    targets = uniform_targets(spec, sc.chains, c.experiment.target_seed);
    fn.set_chain_targets(*targets);
  }
  run.batch = run_sampler(fn, sc);
  run.labels = truth_labels(run.batch.z, w.generator, w.truth);
  run.predictions = classifier_predictions(run.batch.z, model, w.generator);

  if (targets) {
    run.codes = codes_from_rows(*targets);
  } else if (auto code = implied_code(run.expr, spec)) {
    run.codes.assign(sc.chains, *code);
  }
  if (!run.codes.empty()) run.acc = acc_score(run.labels, run.codes, spec);
  if (run.expr.root) {
    double s = 0.0;
    for (std::size_t k = 0; k < sc.chains; ++k) {
      s += satisfaction(*run.expr.root, run.labels.row(k), spec, targets ? targets->row(k).data() : nullptr);
    }
    run.satisfaction = s / static_cast<double>(sc.chains);
  } else {
    run.satisfaction = 1.0;
  }

  if (!uniform && c.experiment.oracle != "none" && w.generator.latent_dim() == 2) {
    const GridSpec grid = tv_grid(c);
    GridDensity ref;
    if (c.experiment.oracle == "grid") {
      ref = grid_conditional_density(fn, grid, c.experiment.grid_resolution / c.experiment.tv_resolution);
    } else {
      auto rs = rejection_sample(fn, c.experiment.oracle_samples, c.sampler.seed + kOracleSeedOffset);
      run.oracle_acceptance = rs.acceptance_rate;
      ref = histogram(rs.z, grid);
    }
    run.tv = tv_distance(histogram(run.batch.z, grid), ref);
  }

  run.report.samples = sc.chains;
  run.report.acc = run.acc ? *run.acc : AccScore{{}, run.satisfaction};
  run.report.tv = run.tv;
  run.report.mean_nfe = run.batch.mean_nfe();
  run.report.config = to_json(c);
  return run;
}

// chain_id, z_*, x_*, target_<attr> (when codes exist), pred_<attr>,
// truth_<attr>, final_energy, nfe
inline void write_samples_csv(std::ostream& out, const SampleRun& run, const World& w) {
  const auto& spec = w.spec;
  const RealArray x = generator_apply(w.generator, run.batch.z);
  CsvWriter csv(out);
  std::vector<std::string> head{"chain_id"};
  for (std::size_t j = 0; j < run.batch.z.extent(1); ++j) head.push_back("z_" + std::to_string(j));
  for (std::size_t j = 0; j < x.extent(1); ++j) head.push_back("x_" + std::to_string(j));
  if (!run.codes.empty()) {
    for (const auto& a : spec.attributes()) head.push_back("target_" + a.name);
  }
  for (const auto& a : spec.attributes()) head.push_back("pred_" + a.name);
  for (const auto& a : spec.attributes()) head.push_back("truth_" + a.name);
  head.push_back("final_energy");
  head.push_back("nfe");
  csv.header(head);
  for (std::size_t k = 0; k < run.batch.size(); ++k) {
    std::vector<std::string> row{std::to_string(k)};
    for (double v : run.batch.z.row(k)) row.push_back(format_double(v));
    for (double v : x.row(k)) row.push_back(format_double(v));
    if (!run.codes.empty()) {
      for (const auto& t : run.codes[k]) row.push_back(t ? format_double(*t) : std::string());
    }
    for (double v : run.predictions.row(k)) row.push_back(format_double(v));
    for (double v : run.labels.row(k)) row.push_back(format_double(v));
    row.push_back(format_double(run.batch.diagnostics[k].final_energy));
    row.push_back(std::to_string(run.batch.diagnostics[k].nfe));
    csv.row(row);
  }
}

inline ojson sample_results(const SampleRun& run, const AttributeSpec& spec) {
  ojson j;
  j["expr"] = expr_text(run.expr, spec);
  j["sampler"] = run.batch.sampler;
  j["chains"] = run.batch.size();
  if (run.acc) {
    ojson acc;
    for (std::size_t i = 0; i < spec.size(); ++i) {
      if (run.acc->per_attribute[i]) acc[spec[i].name] = *run.acc->per_attribute[i];
    }
    j["acc"] = acc;
    j["acc_aggregate"] = run.acc->aggregate;
  }
  j["satisfaction"] = run.satisfaction;
  if (run.tv) j["tv"] = *run.tv;
  if (run.oracle_acceptance) j["oracle_acceptance_rate"] = *run.oracle_acceptance;
  j["mean_nfe"] = run.batch.mean_nfe();
  return j;
}

inline void print_sample_summary(std::ostream& log, const SampleRun& run, const AttributeSpec& spec) {
  log << "sampler " << run.batch.sampler << ", " << run.batch.size() << " chains, mean NFE "
      << format_double(run.batch.mean_nfe()) << "\n";
  if (run.acc) {
    log << "ACC " << format_double(run.acc->aggregate);
    for (std::size_t i = 0; i < spec.size(); ++i) {
      if (run.acc->per_attribute[i]) log << "  " << spec[i].name << "=" << format_double(*run.acc->per_attribute[i]);
    }
    log << "\n";
  }
  log << "expression satisfied " << format_double(run.satisfaction) << "\n";
  if (run.tv) log << "TV to oracle " << format_double(*run.tv) << "\n";
}

// ---------------------------------------------------------------------------
// Sequential editing

struct EditStep {
  std::size_t attr = 0;
  std::optional<double> value;  // nullopt: per-chain uniform target
};

// "attr0=1,attr1=*"; '*' draws a uniform target per chain.
inline std::vector<EditStep> parse_edit_sequence(std::string_view text, const AttributeSpec& spec) {
  std::vector<EditStep> steps;
  std::size_t offset = 0;
  for (const auto& part : split(text, ',')) {
    const auto eq = part.find('=');
    if (eq == std::string::npos) throw ParseError("edit must look like name=value or name=*", offset);
    const auto name = trim(part.substr(0, eq));
    const auto attr = spec.find(name);
    if (!attr) throw ParseError("unknown attribute '" + name + "' in edit sequence", offset);
    const auto value = trim(part.substr(eq + 1));
    EditStep s{*attr, std::nullopt};
    if (value != "*") {
      const auto code = parse_code(name + "=" + value, spec);
      s.value = *code[*attr];
    }
    steps.push_back(s);
    offset += part.size() + 1;
  }
  if (steps.empty()) throw ParseError("empty edit sequence", 0);
  return steps;
}

inline EditWeights edit_weights(const ExperimentConfig& e) {
  EditWeights w;
  w.mu = e.mu;
  w.gamma = e.gamma;
  w.alpha0 = e.alpha0;
  if (e.alpha1 >= 0.0) w.alpha1 = e.alpha1;
  return w;
}

inline RealArray prior_draws(std::size_t n, std::size_t dim, std::uint64_t seed) {
  RealArray z({n, dim});
  for (std::size_t k = 0; k < n; ++k) {
    Rng rng = stream(seed, k);
    rng.fill_normal(z.row(k));
  }
  return z;
}

struct EditRun {
  std::vector<RealArray> stages;  // z_0 (prior draws) .. z_n
  EvalReport report;
};

// Edit i targets attribute a_i and warm-starts from z_{i-1}. For DES the
// reference code at stage i is the new target on a_i and the truth labels of
// z_{i-1} on every other attribute.
inline EditRun run_edit(const RunConfig& c, const World& w, const ClassifierModel& model) {
  validate(c);
  const auto& spec = w.spec;
  const auto steps = parse_edit_sequence(c.experiment.edits, spec);
  const EditWeights weights = edit_weights(c.experiment);
  SamplerConfig sc = sampler_config(c.sampler);
  const std::size_t n = sc.chains, na = spec.size();

  EditRun run;
  run.stages.push_back(prior_draws(n, w.generator.latent_dim(), c.sampler.seed));
  RealArray chain_targets({n, na}, std::vector<double>(n * na, 0.0));
  std::vector<EditTarget> edits;
  double des_sum = 0.0;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const auto& step = steps[i];
    const RealArray& prev = run.stages.back();
    const RealArray before = truth_labels(prev, w.generator, w.truth);
    const RealArray drawn = uniform_targets(spec, n, c.experiment.target_seed + (i + 1) * n);
    for (std::size_t k = 0; k < n; ++k) chain_targets(k, step.attr) = step.value ? *step.value : drawn(k, step.attr);
    edits.push_back({step.attr, chain_targets(0, step.attr)});

    std::vector<AttributeCode> ref(n, AttributeCode(na));
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t j = 0; j < na; ++j) ref[k][j] = j == step.attr ? chain_targets(k, j) : before(k, j);
    }
    auto fn = make_seq_edit_energy(model, w.generator, edits, prev, weights);
    fn.set_chain_targets(chain_targets);
    sc.seed = c.sampler.seed + (i + 1) * n;
    SampleBatch batch = run_sampler(fn, sc, &prev);
    const RealArray after = truth_labels(batch.z, w.generator, w.truth);

    const AccScore acc0 = acc_score(before, ref, spec), acc1 = acc_score(after, ref, spec);
    EditStageReport st;
    st.stage = i + 1;
    st.attr = step.attr;
    for (std::size_t j = 0; j < na; ++j) {
      st.acc_before.push_back(*acc0.per_attribute[j]);
      st.acc_after.push_back(*acc1.per_attribute[j]);
    }
    st.des = des_score(st.acc_before, st.acc_after, step.attr);
    st.id_drift = id_drift(prev, batch.z, w.generator);
    st.mean_nfe = batch.mean_nfe();
    des_sum += st.des;
    run.report.edits.push_back(std::move(st));
    run.stages.push_back(std::move(batch.z));
  }
  // Final ACC: every edited attribute against its latest target.
  std::vector<AttributeCode> final_code(n, AttributeCode(na));
  for (const auto& s : steps) {
    for (std::size_t k = 0; k < n; ++k) final_code[k][s.attr] = chain_targets(k, s.attr);
  }
  run.report.samples = n;
  run.report.acc = acc_score(run.stages.back(), final_code, w.truth, w.generator);
  run.report.des_aggregate = des_sum / static_cast<double>(steps.size());
  run.report.id_drift_total = id_drift(run.stages.front(), run.stages.back(), w.generator);
  double nfe = 0.0;
  for (const auto& s : run.report.edits) nfe += s.mean_nfe;
  run.report.mean_nfe = nfe;
  run.report.config = to_json(c);
  return run;
}

// stage, attribute, acc_before_<attr>..., acc_after_<attr>..., des, id_drift, nfe
inline void write_edit_csv(std::ostream& out, const EditRun& run, const AttributeSpec& spec) {
  CsvWriter csv(out);
  std::vector<std::string> head{"stage", "attribute"};
  for (const auto& a : spec.attributes()) head.push_back("acc_before_" + a.name);
  for (const auto& a : spec.attributes()) head.push_back("acc_after_" + a.name);
  for (const char* k : {"des", "id_drift", "nfe"}) head.emplace_back(k);
  csv.header(head);
  for (const auto& s : run.report.edits) {
    std::vector<std::string> row{std::to_string(s.stage), spec[s.attr].name};
    for (double v : s.acc_before) row.push_back(format_double(v));
    for (double v : s.acc_after) row.push_back(format_double(v));
    row.push_back(format_double(s.des));
    row.push_back(format_double(s.id_drift));
    row.push_back(format_double(s.mean_nfe));
    csv.row(row);
  }
}

// ---------------------------------------------------------------------------
// Sweeps

inline const std::vector<double>& default_ode_tolerances() {
  static const std::vector<double> t{1e-1, 5e-2, 1e-2, 5e-3, 1e-3, 5e-4, 1e-4, 5e-5, 1e-5};
  return t;
}
inline const std::vector<std::size_t>& default_ld_steps() {
  static const std::vector<std::size_t> s{50, 100, 200, 300, 400, 500, 600, 1000};
  return s;
}
inline const std::vector<double>& default_ld_step_sizes() {
  static const std::vector<double> s{0.1, 0.05, 0.01, 0.005, 0.001};
  return s;
}

// One sampler setting per row, in row order: ODE rows (atol outer, rtol
// inner), then LD rows (steps, step size, noise). experiment.sweep may
// override {"samplers": [...], "ode": {"atol", "rtol"}, "ld": {"steps",
// "step_size", "noise"}}; an LD noise entry "eta" means noise = step size, and
// duplicate noises within one step size are dropped.
inline std::vector<SamplerSection> sweep_rows(const RunConfig& c) {
  const ojson& sw = c.experiment.sweep;
  if (!sw.is_object()) throw ConfigError("experiment.sweep must be an object");
  for (const auto& [key, value] : sw.items()) {
    if (key != "samplers" && key != "ode" && key != "ld") throw ConfigError("experiment.sweep: unknown key '" + key + "'");
  }
  auto list = [&](const char* section, const char* key, auto fallback) {
    using T = typename decltype(fallback)::value_type;
    if (!sw.contains(section) || !sw[section].contains(key)) return fallback;
    const auto& j = sw[section][key];
    std::vector<T> out;
    if (!j.is_array() || j.empty()) throw ConfigError(std::string("experiment.sweep.") + section + "." + key + " must be a non-empty list");
    for (const auto& v : j) {
      T x{};
      detail::read_value(v, std::string("experiment.sweep.") + section + "." + key, x);
      out.push_back(x);
    }
    return out;
  };
  for (const char* section : {"ode", "ld"}) {
    if (!sw.contains(section)) continue;
    if (!sw[section].is_object()) throw ConfigError(std::string("experiment.sweep.") + section + " must be an object");
    for (const auto& [key, value] : sw[section].items()) {
      const bool ok = std::string(section) == "ode" ? (key == "atol" || key == "rtol")
                                                    : (key == "steps" || key == "step_size" || key == "noise");
      if (!ok) throw ConfigError(std::string("experiment.sweep.") + section + ": unknown key '" + key + "'");
    }
  }
  std::vector<std::string> samplers{"ode", "ld"};
  if (sw.contains("samplers")) {
    samplers.clear();
    const auto& j = sw["samplers"];
    if (!j.is_array() || j.empty()) throw ConfigError("experiment.sweep.samplers must be a non-empty list");
    for (const auto& v : j) {
      if (!v.is_string() || (v != "ode" && v != "ld")) throw ConfigError("experiment.sweep.samplers entries must be ode or ld");
      samplers.push_back(v.get<std::string>());
    }
  }
  const auto atols = list("ode", "atol", default_ode_tolerances());
  const auto rtols = list("ode", "rtol", default_ode_tolerances());
  const auto steps = list("ld", "steps", default_ld_steps());
  const auto etas = list("ld", "step_size", default_ld_step_sizes());
  // Noise entries: numbers or "eta".
  std::vector<std::optional<double>> noises{0.1, 0.05, std::nullopt};
  if (sw.contains("ld") && sw["ld"].contains("noise")) {
    const auto& j = sw["ld"]["noise"];
    if (!j.is_array() || j.empty()) throw ConfigError("experiment.sweep.ld.noise must be a non-empty list");
    noises.clear();
    for (const auto& v : j) {
      if (v.is_string() && v == "eta") noises.push_back(std::nullopt);
      else if (v.is_number()) noises.push_back(v.get<double>());
      else throw ConfigError("experiment.sweep.ld.noise entries must be numbers or \"eta\"");
    }
  }

  std::vector<SamplerSection> rows;
  for (const auto& s : samplers) {
    if (s == "ode") {
      for (double a : atols) {
        for (double r : rtols) {
          SamplerSection row = c.sampler;
          row.kind = "ode";
          row.atol = a;
          row.rtol = r;
          rows.push_back(row);
        }
      }
    } else {
      for (std::size_t n : steps) {
        for (double eta : etas) {
          std::vector<double> seen;
          for (const auto& sigma : noises) {
            const double v = sigma.value_or(eta);
            if (std::find(seen.begin(), seen.end(), v) != seen.end()) continue;
            seen.push_back(v);
            SamplerSection row = c.sampler;
            row.kind = "ld";
            row.steps = n;
            row.step_size = eta;
            row.noise = v;
            row.matched_noise = false;
            rows.push_back(row);
          }
        }
      }
    }
  }
  return rows;
}

struct SweepRow {
  std::size_t index = 0;
  SamplerSection sampler;
  std::optional<SampleRun> run;
  std::string error;
};

inline std::vector<std::string> sweep_csv_header(const AttributeSpec& spec) {
  std::vector<std::string> h{"row", "sampler", "atol", "rtol", "steps", "step_size", "noise"};
  for (const auto& a : spec.attributes()) h.push_back("acc_" + a.name);
  for (const char* k : {"acc", "satisfaction", "tv", "nfe", "error"}) h.emplace_back(k);
  return h;
}

inline std::vector<std::string> sweep_csv_row(const SweepRow& r, const AttributeSpec& spec) {
  const bool ode = r.sampler.kind == "ode";
  std::vector<std::string> row{std::to_string(r.index), r.sampler.kind,
                               ode ? format_double(r.sampler.atol) : "", ode ? format_double(r.sampler.rtol) : "",
                               ode ? "" : std::to_string(r.sampler.steps),
                               ode ? "" : format_double(r.sampler.step_size), ode ? "" : format_double(r.sampler.noise)};
  for (std::size_t i = 0; i < spec.size(); ++i) {
    const bool has = r.run && r.run->acc && r.run->acc->per_attribute[i];
    row.push_back(has ? format_double(*r.run->acc->per_attribute[i]) : "");
  }
  if (r.run) {
    row.push_back(r.run->acc ? format_double(r.run->acc->aggregate) : "");
    row.push_back(format_double(r.run->satisfaction));
    row.push_back(r.run->tv ? format_double(*r.run->tv) : "");
    row.push_back(format_double(r.run->batch.mean_nfe()));
  } else {
    row.insert(row.end(), {"", "", "", ""});
  }
  row.push_back(r.error);
  return row;
}

// Rows run in order; each row is exactly run_sample on the base config with
// the row's sampler section. A failing row records its error and the sweep
// continues. When csv_path is set the table is rewritten atomically after
// every row.
inline std::vector<SweepRow> run_sweep(const RunConfig& c, const World& w, const ClassifierModel& model,
                                       const std::optional<std::filesystem::path>& csv_path = std::nullopt,
                                       std::ostream* log = nullptr) {
  const auto settings = sweep_rows(c);
  std::vector<SweepRow> rows;
  auto flush = [&] {
    if (!csv_path) return;
    write_file_atomic(*csv_path, [&](std::ostream& out) {
      CsvWriter csv(out);
      csv.header(sweep_csv_header(w.spec));
      for (const auto& r : rows) csv.row(sweep_csv_row(r, w.spec));
    });
  };
  for (std::size_t i = 0; i < settings.size(); ++i) {
    SweepRow row{i, settings[i], std::nullopt, {}};
    RunConfig rc = c;
    rc.sampler = settings[i];
    try {
      row.run = run_sample(rc, w, model);
      row.run->batch.z = RealArray();  // keep memory flat over long sweeps
      row.run->labels = RealArray();
      row.run->predictions = RealArray();
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      row.error = e.what();
    }
    if (log) {
      *log << "row " << i + 1 << "/" << settings.size() << " " << row.sampler.kind;
      if (row.run) {
        if (row.run->acc) *log << " ACC " << format_double(row.run->acc->aggregate);
        if (row.run->tv) *log << " TV " << format_double(*row.run->tv);
        *log << " NFE " << format_double(row.run->batch.mean_nfe());
      } else {
        *log << " failed: " << row.error;
      }
      *log << "\n";
    }
    rows.push_back(std::move(row));
    flush();
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Command entry points. Each returns 0; errors propagate as exceptions.

inline void prepare_output(const RunConfig& c) {
  validate(c);
  set_worker_threads(c.experiment.threads);
  std::error_code ec;
  std::filesystem::create_directories(c.experiment.output_dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + c.experiment.output_dir + ": " + ec.message());
}

inline int cmd_train(const RunConfig& c, std::ostream& log) {
  prepare_output(c);
  const auto t0 = std::chrono::steady_clock::now();
  const World w = build_world(c);
  const auto holdout = holdout_code(c, w.spec);
  TrainOutcome t = train_model(c, w);
  save_checkpoint(t.result.model, checkpoint_path(c));
  write_file_atomic(output_path(c, "train_loss.csv"), [&](std::ostream& out) {
    CsvWriter csv(out);
    csv.header({"epoch", "loss"});
    for (std::size_t e = 0; e < t.result.loss_trace.size(); ++e) {
      csv.row({std::to_string(e + 1), format_double(t.result.loss_trace[e])});
    }
  });
  ojson res;
  res["checkpoint"] = checkpoint_path(c).string();
  res["dataset_size"] = t.dataset_size;
  ojson acc;
  for (std::size_t i = 0; i < w.spec.size(); ++i) acc[w.spec[i].name] = t.result.train_accuracy[i];
  res["train_accuracy"] = acc;
  res["train_accuracy_aggregate"] = t.aggregate_accuracy;
  log << "trained on " << t.dataset_size << " samples; train ACC " << format_double(t.aggregate_accuracy);
  for (std::size_t i = 0; i < w.spec.size(); ++i) {
    log << "  " << w.spec[i].name << "=" << format_double(t.result.train_accuracy[i]);
  }
  log << "\ncheckpoint " << checkpoint_path(c).string() << "\n";

  if (holdout) {
    // Zero-shot check: condition on the withheld combination.
    RunConfig zc = c;
    zc.experiment.targets = "fixed";
    zc.experiment.oracle = "none";
    std::string text = "AND(";
    bool first = true;
    for (std::size_t i = 0; i < w.spec.size(); ++i) {
      if (!(*holdout)[i]) continue;
      text += (first ? "" : ", ") + w.spec[i].name + "=" + format_double(*(*holdout)[i]);
      first = false;
    }
    zc.experiment.expr = text + ")";
    const SampleRun z = run_sample(zc, w, t.result.model);
    write_file_atomic(output_path(c, "zero_shot_samples.csv"),
                      [&](std::ostream& out) { write_samples_csv(out, z, w); });
    res["zero_shot"] = sample_results(z, w.spec);
    log << "zero-shot on held-out " << zc.experiment.expr << ": ";
    print_sample_summary(log, z, w.spec);
  }
  write_sidecar(c, "train", res, seconds_since(t0));
  return 0;
}

inline int cmd_sample(const RunConfig& c, std::ostream& log) {
  prepare_output(c);
  const auto t0 = std::chrono::steady_clock::now();
  const World w = build_world(c);
  const ClassifierModel model = load_model(c, w);
  const SampleRun run = run_sample(c, w, model);
  write_file_atomic(output_path(c, "samples.csv"), [&](std::ostream& out) { write_samples_csv(out, run, w); });
  write_sidecar(c, "sample", sample_results(run, w.spec), seconds_since(t0));
  print_sample_summary(log, run, w.spec);
  return 0;
}

// ACC protocol: uniformly drawn codes over every attribute, one per chain.
inline int cmd_eval(const RunConfig& base, std::ostream& log) {
  RunConfig c = base;
  c.experiment.targets = "uniform";
  prepare_output(c);
  const auto t0 = std::chrono::steady_clock::now();
  const World w = build_world(c);
  const ClassifierModel model = load_model(c, w);
  const SampleRun run = run_sample(c, w, model);
  write_file_atomic(output_path(c, "eval.csv"), [&](std::ostream& out) {
    CsvWriter csv(out);
    csv.header(report_csv_header(w.spec));
    csv.row(report_csv_row(run.report, w.spec));
  });
  write_file_atomic(output_path(c, "eval_samples.csv"), [&](std::ostream& out) { write_samples_csv(out, run, w); });
  write_sidecar(c, "eval", report_json(run.report, w.spec), seconds_since(t0));
  print_sample_summary(log, run, w.spec);
  return 0;
}

inline int cmd_edit(const RunConfig& c, std::ostream& log) {
  prepare_output(c);
  const auto t0 = std::chrono::steady_clock::now();
  const World w = build_world(c);
  const ClassifierModel model = load_model(c, w);
  const EditRun run = run_edit(c, w, model);
  write_file_atomic(output_path(c, "edits.csv"), [&](std::ostream& out) { write_edit_csv(out, run, w.spec); });
  write_file_atomic(output_path(c, "edit_trajectory.csv"), [&](std::ostream& out) {
    CsvWriter csv(out);
    std::vector<std::string> head{"stage", "chain"};
    for (std::size_t j = 0; j < w.generator.latent_dim(); ++j) head.push_back("z_" + std::to_string(j));
    csv.header(head);
    for (std::size_t s = 0; s < run.stages.size(); ++s) {
      for (std::size_t k = 0; k < run.stages[s].extent(0); ++k) {
        std::vector<std::string> row{std::to_string(s), std::to_string(k)};
        for (double v : run.stages[s].row(k)) row.push_back(format_double(v));
        csv.row(row);
      }
    }
  });
  write_sidecar(c, "edit", report_json(run.report, w.spec), seconds_since(t0));
  for (const auto& s : run.report.edits) {
    log << "edit " << s.stage << " (" << w.spec[s.attr].name << "): DES " << format_double(s.des) << ", id_drift "
        << format_double(s.id_drift) << ", NFE " << format_double(s.mean_nfe) << "\n";
  }
  log << "aggregate DES " << format_double(*run.report.des_aggregate) << ", total id_drift "
      << format_double(*run.report.id_drift_total) << ", final ACC " << format_double(run.report.acc.aggregate)
      << "\n";
  return 0;
}

inline int cmd_sweep(const RunConfig& c, std::ostream& log) {
  prepare_output(c);
  const auto t0 = std::chrono::steady_clock::now();
  const World w = build_world(c);
  const ClassifierModel model = load_model(c, w);
  const auto rows = run_sweep(c, w, model, output_path(c, "sweep.csv"), &log);
  std::size_t failed = 0;
  for (const auto& r : rows) failed += r.run ? 0 : 1;
  ojson res;
  res["rows"] = rows.size();
  res["failed_rows"] = failed;
  res["table"] = output_path(c, "sweep.csv").string();
  write_sidecar(c, "sweep", res, seconds_since(t0));
  log << rows.size() << " rows, " << failed << " failed\n";
  return 0;
}

// Reference densities for an expression: the grid density (2-D latent only)
// and, with experiment.oracle = rejection, exact samples.
inline int cmd_oracle(const RunConfig& c, std::ostream& log) {
  prepare_output(c);
  const auto t0 = std::chrono::steady_clock::now();
  const World w = build_world(c);
  const ClassifierModel model = load_model(c, w);
  const EnergyExpr expr = parse_expr(c.experiment.expr, w.spec);
  EnergyFunction fn(model, w.generator, expr);
  ojson res;
  res["expr"] = expr_text(expr, w.spec);
  if (c.experiment.oracle == "rejection") {
    const auto rs = rejection_sample(fn, c.experiment.oracle_samples, c.sampler.seed + kOracleSeedOffset);
    write_file_atomic(output_path(c, "oracle_samples.csv"), [&](std::ostream& out) {
      CsvWriter csv(out);
      std::vector<std::string> head;
      for (std::size_t j = 0; j < rs.z.extent(1); ++j) head.push_back("z_" + std::to_string(j));
      csv.header(head);
      for (std::size_t k = 0; k < rs.z.extent(0); ++k) {
        std::vector<std::string> row;
        for (double v : rs.z.row(k)) row.push_back(format_double(v));
        csv.row(row);
      }
    });
    res["samples"] = rs.z.extent(0);
    res["proposals"] = rs.proposals;
    res["acceptance_rate"] = rs.acceptance_rate;
    log << "rejection: " << rs.z.extent(0) << " samples, acceptance rate " << format_double(rs.acceptance_rate)
        << "\n";
  } else if (c.experiment.oracle == "grid") {
    const GridSpec grid{-c.experiment.grid_bound, c.experiment.grid_bound, c.experiment.grid_resolution};
    const GridDensity d = grid_conditional_density(fn, grid);
    write_file_atomic(output_path(c, "oracle_grid.csv"), [&](std::ostream& out) { write_grid_csv(out, d); });
    res["resolution"] = grid.resolution;
    log << "grid density " << grid.resolution << "x" << grid.resolution << " written\n";
  } else {
    throw ConfigError("lace oracle needs experiment.oracle = grid or rejection");
  }
  write_sidecar(c, "oracle", res, seconds_since(t0));
  return 0;
}

}  // namespace lace::app
