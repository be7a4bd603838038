#pragma once

// Run configuration shared by every command: four JSON sections with fixed
// keys. Unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lace/classifier.hpp"
#include "lace/errors.hpp"
#include "lace/samplers.hpp"
#include "lace/worldgen.hpp"

namespace lace::app {

using ojson = nlohmann::ordered_json;

struct WorldConfig {
  std::size_t latent_dim = 2;
  std::size_t data_dim = 2;
  std::string generator = "linear";
  std::uint64_t seed = 11;
  double logistic_scale = 2.0;
  std::size_t train_samples = 20000;
  std::uint64_t data_seed = 1;
  double label_noise = 0.0;
  std::string holdout;  // e.g. "attr0=1,attr1=3"
};

struct ClassifierConfig {
  std::string mode = "separate";
  std::string input_space = "latent";
  std::size_t epochs = 100;
  std::size_t batch_size = 128;
  double learning_rate = 1e-3;
  double decay_factor = 0.1;
  std::vector<std::size_t> milestones{60, 90};
  std::uint64_t seed = 0;
  std::vector<std::size_t> hidden;
};

struct SamplerSection {
  std::string kind = "ode";  // ode | ld | euler | pc
  std::size_t chains = 1000;
  std::uint64_t seed = 0;
  double atol = 1e-3;
  double rtol = 1e-3;
  bool prior_drift = false;
  std::size_t steps = 100;   // LD iterations or PC predictor steps
  double step_size = 0.01;   // LD eta
  double noise = 0.01;       // LD sigma
  bool matched_noise = false;
  double euler_step = 1e-3;
  std::size_t corrector_steps = 1;
  double snr = 0.05;
  double beta_min = 0.1;
  double beta_max = 20.0;
  double t_end = 1.0;
};

struct ExperimentConfig {
  std::string output_dir = "lace_out";
  std::string checkpoint;            // default: <output_dir>/classifier.json
  std::string expr = "attr0=1";
  std::string targets = "fixed";     // fixed | uniform
  std::uint64_t target_seed = 1234;
  std::string oracle = "grid";       // grid | rejection | none
  std::size_t oracle_samples = 50000;
  std::size_t tv_resolution = 32;
  std::size_t grid_resolution = 128;
  double grid_bound = 4.0;
  std::string edits = "attr0=*,attr1=*,attr2=*";
  double mu = 0.04;
  double gamma = 0.01;
  double alpha0 = 0.2;
  double alpha1 = -1.0;               // < 0: per attribute type
  ojson sweep = ojson::object();      // overrides of the default grids
  unsigned threads = 0;
};

struct RunConfig {
  WorldConfig world;
  ClassifierConfig classifier;
  SamplerSection sampler;
  ExperimentConfig experiment;
};

namespace detail {

template <typename T>
void read_value(const ojson& j, const std::string& where, T& out) {
  try {
    out = j.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config " + where + ": wrong type (" + j.dump() + ")");
  }
}

inline void read_value(const ojson& j, const std::string& where, std::size_t& out) {
  if (!j.is_number_unsigned()) throw ConfigError("config " + where + ": expected a non-negative integer");
  out = j.get<std::size_t>();
}

inline void read_value(const ojson& j, const std::string& where, double& out) {
  if (!j.is_number()) throw ConfigError("config " + where + ": expected a number");
  out = j.get<double>();
}

inline void read_value(const ojson& j, const std::string& where, ojson& out) {
  (void)where;
  out = j;
}

// Field tables, used for reading and writing.
#define LACE_FIELD(name) f(#name, s.name)

template <typename Fn>
void fields(WorldConfig& s, Fn&& f) {
  LACE_FIELD(latent_dim); LACE_FIELD(data_dim); LACE_FIELD(generator); LACE_FIELD(seed);
  LACE_FIELD(logistic_scale); LACE_FIELD(train_samples); LACE_FIELD(data_seed); LACE_FIELD(label_noise);
  LACE_FIELD(holdout);
}
template <typename Fn>
void fields(ClassifierConfig& s, Fn&& f) {
  LACE_FIELD(mode); LACE_FIELD(input_space); LACE_FIELD(epochs); LACE_FIELD(batch_size);
  LACE_FIELD(learning_rate); LACE_FIELD(decay_factor); LACE_FIELD(milestones); LACE_FIELD(seed);
  LACE_FIELD(hidden);
}
template <typename Fn>
void fields(SamplerSection& s, Fn&& f) {
  LACE_FIELD(kind); LACE_FIELD(chains); LACE_FIELD(seed); LACE_FIELD(atol); LACE_FIELD(rtol);
  LACE_FIELD(prior_drift); LACE_FIELD(steps); LACE_FIELD(step_size); LACE_FIELD(noise);
  LACE_FIELD(matched_noise); LACE_FIELD(euler_step); LACE_FIELD(corrector_steps); LACE_FIELD(snr);
  LACE_FIELD(beta_min); LACE_FIELD(beta_max); LACE_FIELD(t_end);
}
template <typename Fn>
void fields(ExperimentConfig& s, Fn&& f) {
  LACE_FIELD(output_dir); LACE_FIELD(checkpoint); LACE_FIELD(expr); LACE_FIELD(targets);
  LACE_FIELD(target_seed); LACE_FIELD(oracle); LACE_FIELD(oracle_samples); LACE_FIELD(tv_resolution);
  LACE_FIELD(grid_resolution); LACE_FIELD(grid_bound); LACE_FIELD(edits); LACE_FIELD(mu); LACE_FIELD(gamma);
  LACE_FIELD(alpha0); LACE_FIELD(alpha1); LACE_FIELD(sweep); LACE_FIELD(threads);
}

#undef LACE_FIELD

template <typename S>
void read_section(const ojson& j, const std::string& section, S& s) {
  if (!j.is_object()) throw ConfigError("config " + section + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    bool found = false;
    fields(s, [&](const char* name, auto& field) {
      if (key == name) {
        read_value(value, section + "." + key, field);
        found = true;
      }
    });
    if (!found) throw ConfigError("config " + section + ": unknown key '" + key + "'");
  }
}

template <typename S>
ojson write_section(const S& s) {
  ojson j = ojson::object();
  fields(const_cast<S&>(s), [&](const char* name, auto& field) { j[name] = field; });
  return j;
}

}  // namespace detail

inline ojson to_json(const RunConfig& c) {
  ojson j;
  j["world"] = detail::write_section(c.world);
  j["classifier"] = detail::write_section(c.classifier);
  j["sampler"] = detail::write_section(c.sampler);
  j["experiment"] = detail::write_section(c.experiment);
  return j;
}

// Merges j over c. Unknown sections or keys raise ConfigError.
inline void apply_json(RunConfig& c, const ojson& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  for (const auto& [key, value] : j.items()) {
    if (key == "world") detail::read_section(value, key, c.world);
    else if (key == "classifier") detail::read_section(value, key, c.classifier);
    else if (key == "sampler") detail::read_section(value, key, c.sampler);
    else if (key == "experiment") detail::read_section(value, key, c.experiment);
    else throw ConfigError("config: unknown section '" + key + "'");
  }
}

inline RunConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  ojson j;
  try {
    j = ojson::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  // A command sidecar carries the full config under "config".
  if (j.is_object() && j.contains("command") && j.contains("config")) j = j["config"];
  RunConfig c;
  apply_json(c, j);
  return c;
}

// "section.key=value"; value is parsed as JSON when possible, else taken as a
// string.
inline void apply_override(RunConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
    throw ConfigError("override '" + assignment + "' must look like section.key=value");
  }
  const std::string section = assignment.substr(0, dot);
  const std::string key = assignment.substr(dot + 1, eq - dot - 1);
  const std::string text = assignment.substr(eq + 1);
  ojson value = ojson::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  ojson patch;
  patch[section][key] = value;
  apply_json(c, patch);
}

inline void validate(const RunConfig& c) {
  auto fail = [](const std::string& m) { throw ConfigError("config " + m); };
  const auto& s = c.sampler;
  if (s.kind != "ode" && s.kind != "ld" && s.kind != "euler" && s.kind != "pc") {
    fail("sampler.kind must be ode, ld, euler or pc");
  }
  const auto& e = c.experiment;
  if (e.targets != "fixed" && e.targets != "uniform") fail("experiment.targets must be fixed or uniform");
  if (e.oracle != "grid" && e.oracle != "rejection" && e.oracle != "none") {
    fail("experiment.oracle must be grid, rejection or none");
  }
  if (e.tv_resolution == 0 || e.grid_resolution == 0 || e.grid_resolution % e.tv_resolution != 0) {
    fail("experiment.tv_resolution must divide experiment.grid_resolution");
  }
  if (!(e.grid_bound > 0.0)) fail("experiment.grid_bound must be positive");
  if (e.output_dir.empty()) fail("experiment.output_dir must not be empty");
  try {
    parse_generator_kind(c.world.generator);
    parse_classifier_mode(c.classifier.mode);
    parse_input_space(c.classifier.input_space);
  } catch (const ArgumentError& err) {
    fail(err.what());
  }
}

inline std::filesystem::path checkpoint_path(const RunConfig& c) {
  if (!c.experiment.checkpoint.empty()) return std::filesystem::absolute(c.experiment.checkpoint);
  return std::filesystem::absolute(std::filesystem::path(c.experiment.output_dir) / "classifier.json");
}

inline WorldOptions world_options(const WorldConfig& w) {
  WorldOptions o;
  o.latent_dim = w.latent_dim;
  o.data_dim = w.data_dim;
  o.generator = parse_generator_kind(w.generator);
  o.seed = w.seed;
  o.logistic_scale = w.logistic_scale;
  return o;
}

inline TrainConfig train_config(const ClassifierConfig& c) {
  TrainConfig t;
  t.epochs = c.epochs;
  t.batch_size = c.batch_size;
  t.learning_rate = c.learning_rate;
  t.decay_factor = c.decay_factor;
  t.milestones = c.milestones;
  t.seed = c.seed;
  t.mode = parse_classifier_mode(c.mode);
  t.input_space = parse_input_space(c.input_space);
  t.hidden = c.hidden;
  return t;
}

inline SamplerConfig sampler_config(const SamplerSection& s) {
  SamplerConfig cfg;
  cfg.seed = s.seed;
  cfg.chains = s.chains;
  cfg.schedule = DiffusionSchedule{s.beta_min, s.beta_max, s.t_end};
  if (s.kind == "ode") cfg.variant = OdeConfig{s.atol, s.rtol, s.prior_drift};
  else if (s.kind == "ld") cfg.variant = LdConfig{s.steps, s.step_size, s.noise, s.matched_noise};
  else if (s.kind == "euler") cfg.variant = EulerConfig{s.euler_step};
  else if (s.kind == "pc") cfg.variant = PcConfig{s.steps, s.corrector_steps, s.snr};
  else throw ConfigError("unknown sampler kind '" + s.kind + "'");
  try {
    cfg.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("config sampler: ") + e.what());
  }
  return cfg;
}

}  // namespace lace::app
