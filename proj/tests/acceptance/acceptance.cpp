// Acceptance run: one [PASS]/[FAIL] line per criterion, thresholds fixed
// below. Exit status 1 when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>

#include "lace/app/commands.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace lace;
using namespace lace::app;

namespace {

using Clock = std::chrono::steady_clock;

int g_failed = 0;

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, v);
  return buf;
}

void report(int id, const std::string& name, bool pass, const std::string& detail, double seconds) {
  if (!pass) ++g_failed;
  std::cout << (pass ? "[PASS] " : "[FAIL] ") << id << " " << name << ": " << detail << " (" << fmt(seconds, 3)
            << " s)" << std::endl;
}

void note(const std::string& text) { std::cout << "       " << text << std::endl; }

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Trained {
  RunConfig config;
  World world;
  ClassifierModel model;
};

Trained make_trained(std::size_t latent, const std::string& holdout = "") {
  RunConfig c;
  c.world.latent_dim = latent;
  c.world.data_dim = latent;
  c.world.holdout = holdout;
  c.experiment.oracle = "none";
  World w = build_world(c);
  auto model = train_model(c, w).result.model;
  return {c, std::move(w), std::move(model)};
}

const Trained& trained_2d() {
  static const Trained t = make_trained(2);
  return t;
}

const Trained& trained_8d() {
  static const Trained t = make_trained(8);
  return t;
}

const GridSpec kTvGrid{-4.0, 4.0, 128};

// Expected TV between a density p and an n-draw histogram of it.
double mc_floor(const GridDensity& p, std::size_t n) {
  double s = 0.0;
  for (double v : p.prob) s += std::sqrt(v);
  return 0.5 * std::sqrt(2.0 / (std::numbers::pi * static_cast<double>(n))) * s;
}

double per_dim_stats(const RealArray& z, double& worst_mean, double& lo_var, double& hi_var) {
  const std::size_t n = z.extent(0), d = z.extent(1);
  worst_mean = 0.0;
  lo_var = 1e300;
  hi_var = -1e300;
  for (std::size_t j = 0; j < d; ++j) {
    double m = 0.0, v = 0.0;
    for (std::size_t k = 0; k < n; ++k) m += z(k, j);
    m /= static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k) v += (z(k, j) - m) * (z(k, j) - m);
    v /= static_cast<double>(n - 1);
    worst_mean = std::max(worst_mean, std::abs(m));
    lo_var = std::min(lo_var, v);
    hi_var = std::max(hi_var, v);
  }
  return worst_mean;
}

// Linear-interpolated quartiles.
double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto i = static_cast<std::size_t>(pos);
  const double f = pos - static_cast<double>(i);
  return i + 1 < v.size() ? v[i] * (1.0 - f) + v[i + 1] * f : v[i];
}

double iqr(const std::vector<double>& v) { return quantile(v, 0.75) - quantile(v, 0.25); }

// ---------------------------------------------------------------------------

void gradient_correctness() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string where;
  std::size_t cases = 0;
  for (auto kind : {test::ExprKind::Leaf, test::ExprKind::And, test::ExprKind::Or, test::ExprKind::NotFixed,
                    test::ExprKind::SeqEdit}) {
    for (std::uint64_t s = 0; s < 20; ++s) {
      const double e = test::gradient_case_error(kind, 9000 + 37 * s);
      ++cases;
      if (e > worst) {
        worst = e;
        where = std::string(test::to_string(kind)) + " seed " + std::to_string(9000 + 37 * s);
      }
    }
  }
  const double secs = since(t0);
  report(1, "gradient correctness", worst < 1e-5 && secs < 30.0,
         std::to_string(cases) + " cases, max rel err " + fmt(worst) + " (" + where + "), limit 1e-5 / 30 s", secs);
}

void discrete_normalization() {
  const auto t0 = Clock::now();
  Rng rng(2024);
  double worst = 0.0;
  for (std::size_t k = 0; k < 1000; ++k) {
    const std::size_t m = 2 + rng.index(9);
    std::vector<double> f(m);
    for (double& v : f) v = 4.0 * rng.normal();
    for (double T : {0.5, 1.0, 2.0}) {
      double s = 0.0;
      for (std::size_t c = 0; c < m; ++c) s += std::exp(-cond_energy_discrete(f, c, T));
      worst = std::max(worst, std::abs(s - 1.0));
    }
  }
  report(2, "discrete-energy normalization", worst <= 1e-12, "max |sum - 1| " + fmt(worst) + ", limit 1e-12",
         since(t0));
}

void prior_preservation() {
  const auto t0 = Clock::now();
  const auto& t = trained_2d();
  EnergyFunction prior(t.model, t.world.generator, EnergyExpr{});

  const RealArray init = prior_draws(1000, 2, 5);
  const auto ode = run_sampler(prior, SamplerConfig{OdeConfig{}, 5, 1000, {}}, &init);
  const bool identity = ode.z == init;

  const auto ld = run_sampler(prior, SamplerConfig{LdConfig{5000, 0.01, 0.0, true}, 6, 20000, {}});
  double ld_mean, ld_lo, ld_hi;
  per_dim_stats(ld.z, ld_mean, ld_lo, ld_hi);
  const bool ld_ok = ld_mean < 0.05 && ld_lo >= 0.9 && ld_hi <= 1.1;

  const auto pc = run_sampler(prior, SamplerConfig{PcConfig{200, 1, 0.05}, 7, 20000, {}});
  double pc_mean, pc_lo, pc_hi;
  per_dim_stats(pc.z, pc_mean, pc_lo, pc_hi);
  const bool pc_ok = pc_mean < 0.05 && pc_lo >= 0.85 && pc_hi <= 1.15;

  const double secs = since(t0);
  report(3, "prior preservation", identity && ld_ok && pc_ok && secs < 120.0,
         std::string("ODE identity ") + (identity ? "yes" : "no") + "; LD |mean| " + fmt(ld_mean) + " var [" +
             fmt(ld_lo) + ", " + fmt(ld_hi) + "]; PC |mean| " + fmt(pc_mean) + " var [" + fmt(pc_lo) + ", " +
             fmt(pc_hi) + "]; limit 120 s",
         secs);
}

struct OracleTvs {
  double ode = 0.0, ld = 0.0;
};

OracleTvs sampler_vs_oracle() {
  const auto t0 = Clock::now();
  const auto& t = trained_2d();
  EnergyFunction fn(t.model, t.world.generator, test::leaf_expr(0, 1.0));
  const GridDensity grid = grid_conditional_density(fn, kTvGrid);
  const std::size_t chains = 20000;

  OracleTvs out;
  const auto ode = run_sampler(fn, SamplerConfig{OdeConfig{1e-3, 1e-3, false}, 0, chains, {}});
  out.ode = tv_distance(histogram(ode.z, kTvGrid), grid);
  const auto ld = run_sampler(fn, SamplerConfig{LdConfig{}, 0, chains, {}});
  out.ld = tv_distance(histogram(ld.z, kTvGrid), grid);
  const auto rs = rejection_sample(fn, 50000, kOracleSeedOffset);
  const double rej = tv_distance(histogram(rs.z, kTvGrid), grid);
  const double secs = since(t0);

  report(4, "sampler vs oracle", out.ode <= 0.08 && out.ld <= 0.12 && rej <= 0.03 && secs < 300.0,
         "TV ODE " + fmt(out.ode) + " (<= 0.08), LD " + fmt(out.ld) + " (<= 0.12), rejection-grid " + fmt(rej) +
             " (<= 0.03); limit 300 s",
         secs);
  // Sampling noise alone: expected TV of an exact n-draw histogram.
  note("expected TV of exact draws at 128^2: n=20000 " + fmt(mc_floor(grid, chains)) + ", n=50000 " +
       fmt(mc_floor(grid, 50000)) + ", n=1e6 " + fmt(mc_floor(grid, 1000000)));
  const GridSpec coarse{-4.0, 4.0, 16};
  const GridDensity grid16 = grid_conditional_density(fn, coarse, 8);
  note("at 16^2: TV ODE " + fmt(tv_distance(histogram(ode.z, coarse), grid16)) + ", LD " +
       fmt(tv_distance(histogram(ld.z, coarse), grid16)) + ", expected TV of exact draws " +
       fmt(mc_floor(grid16, chains)));
  const auto big = rejection_sample(fn, 1000000, kOracleSeedOffset + 1);
  note("rejection-grid TV with 1e6 draws " + fmt(tv_distance(histogram(big.z, kTvGrid), grid)) +
       ", acceptance rate " + fmt(big.acceptance_rate));
  return out;
}

void controllability() {
  const auto t0 = Clock::now();
  const auto& t = trained_8d();
  RunConfig c = t.config;
  c.experiment.targets = "uniform";
  c.sampler.chains = 10000;
  c.sampler.kind = "ode";
  const auto ode = run_sample(c, t.world, t.model);
  c.sampler.kind = "pc";
  c.sampler.steps = 100;
  const auto pc = run_sample(c, t.world, t.model);
  const double a = ode.acc->aggregate, b = pc.acc->aggregate;
  report(5, "controllability", a >= 0.95 && b < a,
         "ACC ODE " + fmt(a) + " (>= 0.95), PC(N=100) " + fmt(b) + " (< ODE); ODE mean NFE " +
             fmt(ode.batch.mean_nfe()),
         since(t0));
}

void composition() {
  const auto t0 = Clock::now();
  const auto& t = trained_8d();
  RunConfig c = t.config;
  c.sampler.chains = 2000;
  const double n = static_cast<double>(c.sampler.chains);

  c.experiment.expr = "OR(attr0=1, attr1=0)";
  const auto orr = run_sample(c, t.world, t.model);
  double either = 0.0, pure_a = 0.0, pure_b = 0.0;
  for (std::size_t k = 0; k < c.sampler.chains; ++k) {
    const bool a = orr.labels(k, 0) == 1.0, b = orr.labels(k, 1) == 0.0;
    either += a || b ? 1.0 : 0.0;
    pure_a += a && !b ? 1.0 : 0.0;
    pure_b += b && !a ? 1.0 : 0.0;
  }
  either /= n;
  pure_a /= n;
  pure_b /= n;
  const bool or_ok = either >= 0.95 && pure_a >= 0.1 && pure_b >= 0.1;

  auto rates = [&](const std::string& expr) {
    c.experiment.expr = expr;
    const auto run = run_sample(c, t.world, t.model);
    double pa = 0.0, pb = 0.0;
    for (std::size_t k = 0; k < c.sampler.chains; ++k) {
      pa += run.labels(k, 0) == 1.0 ? 1.0 : 0.0;
      pb += run.labels(k, 1) == 3.0 ? 1.0 : 0.0;
    }
    return std::pair{pa / n, pb / n};
  };
  const auto [base_a, base_b] = rates("attr0=1");
  const auto [not_a, not_b] = rates("NOT(attr0=1, attr1=3)");
  const bool not_ok = not_b < 0.2 * base_b && not_a >= 0.9;
  const auto [fixed_a, fixed_b] = rates("NOT(attr0=1, attr1=3; alpha=1)");

  report(6, "composition", or_ok && not_ok,
         "OR satisfied " + fmt(either) + " (>= 0.95), pure-a " + fmt(pure_a) + ", pure-b " + fmt(pure_b) +
             " (each >= 0.1); NOT P(attr1=3) " + fmt(not_b) + " vs baseline " + fmt(base_b) + " (< 0.2x), P(attr0=1) " +
             fmt(not_a) + " (>= 0.9, baseline " + fmt(base_a) + ")",
         since(t0));
  note("NOT with fixed alpha=1: P(attr1=3) " + fmt(fixed_b) + ", P(attr0=1) " + fmt(fixed_a));
}

void zero_shot() {
  const auto t0 = Clock::now();
  RunConfig c;
  c.world.latent_dim = c.world.data_dim = 8;
  c.world.holdout = "attr0=1,attr1=3";
  c.experiment.oracle = "none";
  const World w = build_world(c);
  const auto trained = train_model(c, w);
  std::size_t leaked = 0;
  const Dataset data = build_dataset(c, w);
  const RealArray& y = data.labels;
  for (std::size_t k = 0; k < y.extent(0); ++k) leaked += y(k, 0) == 1.0 && y(k, 1) == 3.0 ? 1 : 0;
  c.experiment.expr = "AND(attr0=1, attr1=3)";
  c.sampler.chains = 2000;
  const auto run = run_sample(c, w, trained.result.model);
  const double acc = run.acc->aggregate;
  report(7, "zero-shot", acc >= 0.90 && leaked == 0,
         "ACC on withheld combination " + fmt(acc) + " (>= 0.90); training set " +
             std::to_string(trained.dataset_size) + " samples, " + std::to_string(leaked) + " withheld rows present",
         since(t0));
}

void sequential_editing() {
  const auto t0 = Clock::now();
  const auto& t = trained_8d();
  RunConfig c = t.config;
  c.sampler.chains = 500;
  const auto full = run_edit(c, t.world, t.model);
  c.experiment.mu = c.experiment.gamma = 0.0;
  const auto ablation = run_edit(c, t.world, t.model);
  const double des = full.report.des_aggregate.value_or(0.0);
  const double d1 = full.report.id_drift_total.value_or(0.0), d0 = ablation.report.id_drift_total.value_or(0.0);
  std::string stages;
  for (const auto& s : full.report.edits) stages += " " + fmt(s.des, 3);
  report(8, "sequential editing", des >= 0.7 && d1 < d0,
         "DES " + fmt(des) + " (>= 0.7, per edit" + stages + "); id_drift " + fmt(d1) + " vs ablation " + fmt(d0),
         since(t0));
}

void sweep_efficiency() {
  const auto t0 = Clock::now();
  const auto& t = trained_2d();
  RunConfig c = t.config;
  c.sampler.chains = 4000;
  c.experiment.expr = "attr0=1";
  c.experiment.oracle = "grid";
  c.experiment.tv_resolution = 16;
  const auto rows = run_sweep(c, t.world, t.model);

  std::vector<double> ode_acc, ld_acc;
  double ode_nfe = 1e300, ld_steps = 1e300;
  std::size_t ode_ok = 0, ld_ok = 0, failed = 0;
  double ode_tv = 1e300, ld_tv = 1e300;
  for (const auto& r : rows) {
    if (!r.run) {
      ++failed;
      continue;
    }
    const double acc = r.run->acc->aggregate;
    const bool good = acc >= 0.95 && r.run->tv && *r.run->tv <= 0.1;
    const double tv = r.run->tv.value_or(1e300);
    (r.sampler.kind == "ode" ? ode_tv : ld_tv) = std::min(r.sampler.kind == "ode" ? ode_tv : ld_tv, tv);
    if (r.sampler.kind == "ode") {
      ode_acc.push_back(acc);
      if (good) ++ode_ok, ode_nfe = std::min(ode_nfe, r.run->batch.mean_nfe());
    } else {
      ld_acc.push_back(acc);
      if (good) ++ld_ok, ld_steps = std::min(ld_steps, static_cast<double>(r.sampler.steps));
    }
  }
  const bool have = ode_ok > 0 && ld_ok > 0;
  const bool eff = have && ode_nfe <= 0.5 * ld_steps;
  const double iqr_ode = ode_acc.empty() ? 1.0 : iqr(ode_acc), iqr_ld = ld_acc.empty() ? 0.0 : iqr(ld_acc);
  const bool robust = iqr_ode <= 0.5 * iqr_ld;
  report(9, "ODE efficiency and robustness", eff && robust,
         "qualifying rows ODE " + std::to_string(ode_ok) + "/" + std::to_string(ode_acc.size()) + ", LD " +
             std::to_string(ld_ok) + "/" + std::to_string(ld_acc.size()) + " (" + std::to_string(failed) +
             " failed); min ODE NFE " + (ode_ok ? fmt(ode_nfe) : "-") + " vs min LD steps " +
             (ld_ok ? fmt(ld_steps) : "-") + " (<= 0.5x); ACC IQR ODE " + fmt(iqr_ode) + " vs LD " + fmt(iqr_ld) +
             " (<= 0.5x)",
         since(t0));
  note("lowest TV over the grid: ODE " + fmt(ode_tv) + ", LD " + fmt(ld_tv));
}

void solver_validation(const OracleTvs& tvs) {
  const auto t0 = Clock::now();
  const std::vector<double> z_end{1.3, -0.7, 0.2, 2.1};
  bool ode_ok = true;
  std::size_t last_nfe = 0;
  std::string detail;
  for (double tol : {1e-2, 1e-3, 1e-4}) {
    const auto v = linear_validation(z_end, tol, tol);
    ode_ok = ode_ok && v.error_ratio <= 10.0 && v.stats.nfe > last_nfe;
    last_nfe = v.stats.nfe;
    detail += "tol " + fmt(tol, 1) + ": err/tol " + fmt(v.error_ratio, 3) + ", NFE " + std::to_string(v.stats.nfe) +
              "; ";
  }

  const auto& t = trained_2d();
  EnergyFunction fn(t.model, t.world.generator, test::leaf_expr(0, 1.0));
  const auto eu = run_sampler(fn, SamplerConfig{EulerConfig{1e-3}, 0, 20000, {}});
  bool exact_nfe = true;
  for (const auto& d : eu.diagnostics) exact_nfe = exact_nfe && d.nfe == 1000;
  const double eu_tv = tv_distance(histogram(eu.z, kTvGrid), grid_conditional_density(fn, kTvGrid));
  const bool between = eu_tv <= tvs.ld * 1.1 && eu_tv >= tvs.ode * 0.9;

  report(10, "solver validation", ode_ok && exact_nfe,
         detail + "Euler NFE " + (exact_nfe ? "1000 on every chain" : "not 1000"), since(t0));
  note(std::string("soft ordering ") + (between ? "holds" : "does not hold") + ": Euler TV " + fmt(eu_tv) +
       ", LD TV " + fmt(tvs.ld) + ", ODE TV " + fmt(tvs.ode));
}

std::map<std::string, std::string> csv_files(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto p = e.path();
    if (p.extension() != ".csv" && p.filename() != "classifier.json") continue;
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    out[p.filename().string()] = ss.str();
  }
  return out;
}

void reproducibility() {
  const auto t0 = Clock::now();
  const fs::path root = fs::temp_directory_path() / "lace_acceptance_repro";
  fs::remove_all(root);
  RunConfig base;
  base.world.train_samples = 2000;
  base.world.holdout = "attr0=1,attr1=3";
  base.classifier.epochs = 10;
  base.classifier.milestones = {6, 9};
  base.sampler.chains = 200;
  base.experiment.checkpoint = (root / "train_a" / "classifier.json").string();
  base.experiment.oracle_samples = 2000;
  base.experiment.sweep = ojson::parse(
      R"({"ode": {"atol": [1e-2, 1e-3], "rtol": [1e-3]}, "ld": {"steps": [50], "step_size": [0.01], "noise": [0.01]}})");

  struct Case {
    std::string name;
    std::function<int(const RunConfig&, std::ostream&)> cmd;
    std::function<void(RunConfig&)> tweak;
  };
  const std::vector<Case> cases{
      {"train", cmd_train, [](RunConfig&) {}},
      {"sample-ode", cmd_sample, [](RunConfig& c) { c.experiment.expr = "OR(attr0=1, attr1=0)"; }},
      {"sample-ld", cmd_sample, [](RunConfig& c) { c.sampler.kind = "ld"; }},
      {"sample-euler", cmd_sample, [](RunConfig& c) { c.sampler.kind = "euler"; c.sampler.euler_step = 1e-2; }},
      {"sample-pc", cmd_sample, [](RunConfig& c) { c.sampler.kind = "pc"; c.experiment.oracle = "rejection"; }},
      {"eval", cmd_eval, [](RunConfig&) {}},
      {"edit", cmd_edit, [](RunConfig&) {}},
      {"sweep", cmd_sweep, [](RunConfig&) {}},
      {"oracle-rejection", cmd_oracle, [](RunConfig& c) { c.experiment.oracle = "rejection"; }},
      {"oracle-grid", cmd_oracle, [](RunConfig& c) { c.experiment.expr = "NOT(attr0=1, attr1=3)"; }},
  };
  std::ostringstream sink;
  std::size_t compared = 0;
  std::string mismatch;
  for (const auto& cs : cases) {
    std::map<std::string, std::string> files[2];
    for (int r = 0; r < 2; ++r) {
      RunConfig c = base;
      cs.tweak(c);
      const auto dir = root / (cs.name == "train" ? std::string(r ? "train_b" : "train_a") : cs.name + (r ? "_b" : "_a"));
      c.experiment.output_dir = dir.string();
      if (cs.name == "train") c.experiment.checkpoint.clear();
      try {
        cs.cmd(c, sink);
      } catch (const std::exception& e) {
        mismatch += " " + cs.name + " threw (" + e.what() + ")";
        break;
      }
      files[r] = csv_files(dir);
    }
    if (files[0].empty()) {
      mismatch += " " + cs.name + " wrote nothing";
      continue;
    }
    if (files[0] != files[1]) mismatch += " " + cs.name;
    compared += files[0].size();
  }
  report(11, "reproducibility", mismatch.empty(),
         std::to_string(compared) + " files compared across " + std::to_string(cases.size()) + " command runs" +
             (mismatch.empty() ? ", all byte-identical" : "; differing:" + mismatch),
         since(t0));
}

}  // namespace

int main() {
  std::cout << "lace acceptance (" << kRngAlgorithm << ")" << std::endl;
  const auto t0 = Clock::now();
  try {
    // Fixture training is not part of any criterion's runtime.
    trained_2d();
    trained_8d();
    std::cout << "classifiers trained in " << fmt(since(t0), 4) << " s" << std::endl;
    gradient_correctness();
    discrete_normalization();
    prior_preservation();
    const OracleTvs tvs = sampler_vs_oracle();
    controllability();
    composition();
    zero_shot();
    sequential_editing();
    sweep_efficiency();
    solver_validation(tvs);
    reproducibility();
  } catch (const std::exception& e) {
    std::cout << "[FAIL] aborted: " << e.what() << std::endl;
    return 1;
  }
  std::cout << (g_failed == 0 ? "all criteria passed" : std::to_string(g_failed) + " criteria failed") << " in "
            << fmt(since(t0), 4) << " s" << std::endl;
  return g_failed == 0 ? 0 : 1;
}
