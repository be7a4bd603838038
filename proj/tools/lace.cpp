// lace: train, sample, edit, eval, sweep, oracle.
//
// Settings come from built-in defaults, then --config FILE, then the
// dedicated flags, then --set section.key=value in order.

#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lace/app/commands.hpp"

namespace {

using namespace lace;
using namespace lace::app;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const CapabilityError*>(&e)) return 3;
  if (dynamic_cast<const NumericError*>(&e)) return 4;
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ArgumentError*>(&e) ||
      dynamic_cast<const FormatError*>(&e) || dynamic_cast<const DataError*>(&e)) {
    return 2;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent-space attribute control with classifier energies"};
  app.require_subcommand(1);

  struct Common {
    std::string config;
    std::vector<std::string> sets;
    std::optional<std::string> out, checkpoint, expr, sampler, oracle, targets, holdout, edits;
    std::optional<std::size_t> steps, chains, tv_resolution, epochs, train_samples, threads;
    std::optional<std::uint64_t> seed;
    std::optional<double> step_size, noise, atol, rtol, mu, gamma, alpha0, alpha1;
  } opt;
  std::vector<std::pair<std::string, std::function<std::optional<std::string>()>>> flag_keys;

  // Every subcommand binds the same slots; the key table is built once.
  bool record_keys = true;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "JSON config file (or a command sidecar)");
    sub->add_option("--set", opt.sets, "Override section.key=value (repeatable)");
    auto add = [&](const std::string& flag, const std::string& key, const std::string& help, auto* slot) {
      sub->add_option(flag, *slot, help);
      if (!record_keys) return;
      flag_keys.push_back({key, [slot]() -> std::optional<std::string> {
                             if (!*slot) return std::nullopt;
                             return nlohmann::json(**slot).dump();
                           }});
    };
    add("--out", "experiment.output_dir", "Output directory", &opt.out);
    add("--checkpoint", "experiment.checkpoint", "Classifier checkpoint path", &opt.checkpoint);
    add("--expr", "experiment.expr", "Energy expression, e.g. AND(attr0=1, attr1=3)", &opt.expr);
    add("--sampler", "sampler.kind", "ode | ld | euler | pc", &opt.sampler);
    add("--oracle", "experiment.oracle", "grid | rejection | none", &opt.oracle);
    add("--targets", "experiment.targets", "fixed | uniform", &opt.targets);
    add("--holdout", "world.holdout", "Attribute combination withheld from training", &opt.holdout);
    add("--edits", "experiment.edits", "Edit sequence, e.g. attr0=1,attr1=*", &opt.edits);
    add("--steps", "sampler.steps", "LD iterations or PC predictor steps", &opt.steps);
    add("--chains", "sampler.chains", "Number of chains", &opt.chains);
    add("--tv-resolution", "experiment.tv_resolution", "Histogram resolution for TV", &opt.tv_resolution);
    add("--epochs", "classifier.epochs", "Training epochs", &opt.epochs);
    add("--train-samples", "world.train_samples", "Training pairs to synthesize", &opt.train_samples);
    add("--threads", "experiment.threads", "Worker threads (0: hardware)", &opt.threads);
    add("--seed", "sampler.seed", "Sampler seed", &opt.seed);
    add("--step-size", "sampler.step_size", "LD step size", &opt.step_size);
    add("--noise", "sampler.noise", "LD noise scale", &opt.noise);
    add("--atol", "sampler.atol", "ODE absolute tolerance", &opt.atol);
    add("--rtol", "sampler.rtol", "ODE relative tolerance", &opt.rtol);
    add("--mu", "experiment.mu", "Edit proximity weight", &opt.mu);
    add("--gamma", "experiment.gamma", "Edit classifier-drift weight", &opt.gamma);
    add("--alpha0", "experiment.alpha0", "Weight of earlier edits", &opt.alpha0);
    add("--alpha1", "experiment.alpha1", "Weight of the current edit", &opt.alpha1);
  };

  struct Command {
    const char* name;
    const char* help;
    int (*run)(const RunConfig&, std::ostream&);
  };
  const Command commands[] = {
      {"train", "Synthesize data, train the classifier, write the checkpoint", cmd_train},
      {"sample", "Conditional sampling for an expression", cmd_sample},
      {"edit", "Sequential attribute editing", cmd_edit},
      {"eval", "ACC over uniformly drawn attribute codes", cmd_eval},
      {"sweep", "ODE and LD hyperparameter grids", cmd_sweep},
      {"oracle", "Grid density or rejection samples for an expression", cmd_oracle},
  };
  int (*selected)(const RunConfig&, std::ostream&) = nullptr;
  for (const auto& cmd : commands) {
    CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
    add_common(sub);
    record_keys = false;
    sub->callback([&selected, run = cmd.run] { selected = run; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    RunConfig cfg = opt.config.empty() ? RunConfig{} : load_config_file(opt.config);
    for (const auto& [key, get] : flag_keys) {
      if (auto v = get()) apply_override(cfg, key + "=" + *v);
    }
    for (const auto& s : opt.sets) apply_override(cfg, s);
    validate(cfg);
    return selected(cfg, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "lace: " << e.what() << "\n";
    return exit_code_for(e);
  }
}
