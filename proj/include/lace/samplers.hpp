#pragma once

// Latent samplers for an EnergyFunction: Langevin dynamics, the
// probability-flow ODE (adaptive Dormand-Prince 5(4) or fixed-step Euler) and
// a predictor-corrector reverse-SDE sampler.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "lace/energy.hpp"
#include "lace/errors.hpp"
#include "lace/ndmath.hpp"
#include "lace/parallel.hpp"
#include "lace/rng.hpp"

namespace lace {

struct DiffusionSchedule {
  double beta_min = 0.1;
  double beta_max = 20.0;
  double t_end = 1.0;

  void validate() const {
    if (!(beta_min > 0.0 && beta_min < beta_max) || !(t_end > 0.0)) {
      throw ArgumentError("schedule needs 0 < beta_min < beta_max and t_end > 0");
    }
  }
};

inline double beta_at(const DiffusionSchedule& s, double t) {
  if (!(t >= 0.0 && t <= s.t_end)) throw ArgumentError("beta_at: t outside [0, t_end]");
  return s.beta_min + (s.beta_max - s.beta_min) * t / s.t_end;
}

// Same as beta_at without the range check, for solver stages that may land a
// rounding error outside [0, t_end].
inline double beta_unchecked(const DiffusionSchedule& s, double t) {
  return s.beta_min + (s.beta_max - s.beta_min) * t / s.t_end;
}

// Integral of beta from 0 to t.
inline double beta_integral(const DiffusionSchedule& s, double t) {
  return s.beta_min * t + 0.5 * (s.beta_max - s.beta_min) * t * t / s.t_end;
}

// ---------------------------------------------------------------------------
// Dormand-Prince 5(4)

struct OdeStats {
  std::size_t nfe = 0;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
};

struct Dopri5Options {
  double atol = 1e-3;
  double rtol = 1e-3;
  double safety = 0.9;
  double min_factor = 0.2;
  double max_factor = 10.0;
  double min_step = 1e-10;
  std::size_t max_steps = 1000000;
};

namespace detail {

inline double rms_error(std::span<const double> err, std::span<const double> y0, std::span<const double> y1,
                        double atol, double rtol) {
  double s = 0.0;
  for (std::size_t i = 0; i < err.size(); ++i) {
    const double sc = atol + rtol * std::max(std::abs(y0[i]), std::abs(y1[i]));
    s += (err[i] / sc) * (err[i] / sc);
  }
  return std::sqrt(s / static_cast<double>(err.size()));
}

}  // namespace detail

// Integrates dy/ds = f(s, y) from s0 to s1 > s0 in place. f(s, y, dy).
// Embedded 5(4) pair with FSAL, PI step control, RMS error norm scaled by
// atol + rtol*|y|, Hairer-Norsett-Wanner initial step. A controller step below
// min_step raises StiffnessError carrying the current s.
template <typename F>
OdeStats dopri5(F&& f, std::span<double> y, double s0, double s1, const Dopri5Options& opt = {}) {
  if (!(opt.atol > 0.0) || !(opt.rtol > 0.0)) throw ArgumentError("dopri5: tolerances must be positive");
  if (!(s1 > s0)) throw ArgumentError("dopri5: need s1 > s0");
  constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  constexpr double a21 = 1.0 / 5;
  constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                   a65 = -5103.0 / 18656;
  constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784, a76 = 11.0 / 84;
  constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                   e6 = 22.0 / 525, e7 = -1.0 / 40;
  constexpr double beta = 0.04;
  constexpr double expo = 0.2 - beta * 0.75;

  const std::size_t n = y.size();
  OdeStats st;
  std::vector<double> k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), tmp(n), y1(n), err(n);
  auto call = [&](double s, std::span<const double> yy, std::span<double> out) {
    f(s, yy, out);
    ++st.nfe;
  };

  call(s0, y, k1);
  // Initial step.
  double h;
  {
    auto norm = [&](std::span<const double> v) { return detail::rms_error(v, y, y, opt.atol, opt.rtol); };
    const double d0 = norm(y), d1 = norm(k1);
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h0 = std::min(h0, s1 - s0);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h0 * k1[i];
    call(s0 + h0, tmp, k2);
    for (std::size_t i = 0; i < n; ++i) err[i] = (k2[i] - k1[i]) / h0;
    const double d2 = norm(err);
    const double dm = std::max(d1, d2);
    const double h1 = dm <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dm, 0.2);
    h = std::min({100.0 * h0, h1, s1 - s0});
  }

  double s = s0;
  double err_old = 1e-4;
  bool last_rejected = false;
  for (std::size_t step = 0; s < s1; ++step) {
    if (step >= opt.max_steps) throw NumericError("dopri5: exceeded max steps at s=" + std::to_string(s));
    if (h < opt.min_step) throw StiffnessError("dopri5: step size underflow", s);
    const bool final_step = h >= s1 - s;
    const double hh = final_step ? s1 - s : h;
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + hh * a21 * k1[i];
    call(s + c2 * hh, tmp, k2);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + hh * (a31 * k1[i] + a32 * k2[i]);
    call(s + c3 * hh, tmp, k3);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + hh * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
    call(s + c4 * hh, tmp, k4);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + hh * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
    call(s + c5 * hh, tmp, k5);
    for (std::size_t i = 0; i < n; ++i) {
      tmp[i] = y[i] + hh * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
    }
    call(s + hh, tmp, k6);
    for (std::size_t i = 0; i < n; ++i) {
      y1[i] = y[i] + hh * (a71 * k1[i] + a73 * k3[i] + a74 * k4[i] + a75 * k5[i] + a76 * k6[i]);
    }
    const double s_next = final_step ? s1 : s + hh;
    call(s_next, y1, k7);
    for (std::size_t i = 0; i < n; ++i) {
      err[i] = hh * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
    }
    const double e = detail::rms_error(err, y, y1, opt.atol, opt.rtol);
    if (!std::isfinite(e)) throw NumericError("dopri5: non-finite state at s=" + std::to_string(s));
    if (e <= 1.0) {
      ++st.accepted;
      std::copy(y1.begin(), y1.end(), y.begin());
      k1.swap(k7);
      s = s_next;
      double factor = e == 0.0 ? opt.max_factor : opt.safety * std::pow(e, -expo) * std::pow(err_old, beta);
      factor = std::clamp(factor, opt.min_factor, opt.max_factor);
      if (last_rejected) factor = std::min(factor, 1.0);
      err_old = std::max(e, 1e-4);
      h = hh * factor;
      last_rejected = false;
    } else {
      ++st.rejected;
      const double factor = std::max(opt.min_factor, opt.safety * std::pow(e, -expo));
      h = hh * std::min(1.0, factor);
      last_rejected = true;
    }
  }
  return st;
}

// Test hook: dz = 1/2 beta(t) (-z) dt integrated from T to 0 through the same
// s = T - t convention as run_ode. Closed form z(0) = z(T) exp(1/2 int_0^T beta).
struct LinearValidation {
  std::vector<double> z0;
  std::vector<double> exact;
  OdeStats stats;
  double max_abs_error = 0.0;
  // max_i |z0_i - exact_i| / (atol + rtol |exact_i|)
  double error_ratio = 0.0;
};

inline LinearValidation linear_validation(std::span<const double> z_end, double atol, double rtol,
                                          const DiffusionSchedule& sched = {}) {
  sched.validate();
  LinearValidation out;
  out.z0.assign(z_end.begin(), z_end.end());
  auto drift = [&](double s, std::span<const double> y, std::span<double> dy) {
    const double b = 0.5 * beta_unchecked(sched, sched.t_end - s);
    for (std::size_t i = 0; i < y.size(); ++i) dy[i] = b * y[i];
  };
  Dopri5Options opt;
  opt.atol = atol;
  opt.rtol = rtol;
  out.stats = dopri5(drift, out.z0, 0.0, sched.t_end, opt);
  const double growth = std::exp(0.5 * beta_integral(sched, sched.t_end));
  for (std::size_t i = 0; i < z_end.size(); ++i) {
    out.exact.push_back(z_end[i] * growth);
    const double e = std::abs(out.z0[i] - out.exact[i]);
    out.max_abs_error = std::max(out.max_abs_error, e);
    out.error_ratio = std::max(out.error_ratio, e / (atol + rtol * std::abs(out.exact[i])));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sampler configuration

struct LdConfig {
  std::size_t n_steps = 100;
  double step_size = 0.01;
  double noise = 0.01;
  bool matched_noise = false;  // noise = sqrt(step_size)
};

struct OdeConfig {
  double atol = 1e-3;
  double rtol = 1e-3;
  bool include_prior_drift = false;  // debug only: adds the prior gradient to the drift
};

struct EulerConfig {
  double step_size = 1e-3;
};

struct PcConfig {
  std::size_t n_steps = 100;
  std::size_t corrector_steps = 1;
  double snr = 0.05;
};

using SamplerVariant = std::variant<LdConfig, OdeConfig, EulerConfig, PcConfig>;

inline std::string sampler_name(const SamplerVariant& v) {
  switch (v.index()) {
    case 0: return "ld";
    case 1: return "ode";
    case 2: return "euler";
    default: return "pc";
  }
}

struct SamplerConfig {
  SamplerVariant variant = OdeConfig{};
  std::uint64_t seed = 0;
  std::size_t chains = 1000;
  DiffusionSchedule schedule;

  void validate() const {
    if (chains == 0) throw ArgumentError("chain count must be positive");
    schedule.validate();
    std::visit(
        [&](const auto& c) {
          using C = std::decay_t<decltype(c)>;
          if constexpr (std::is_same_v<C, LdConfig>) {
            if (!(c.step_size > 0.0) || (!c.matched_noise && !(c.noise > 0.0))) {
              throw ArgumentError("LD step size and noise must be positive");
            }
          } else if constexpr (std::is_same_v<C, OdeConfig>) {
            if (!(c.atol > 0.0) || !(c.rtol > 0.0)) throw ArgumentError("ODE tolerances must be positive");
          } else if constexpr (std::is_same_v<C, EulerConfig>) {
            if (!(c.step_size > 0.0)) throw ArgumentError("Euler step size must be positive");
            const double steps = schedule.t_end / c.step_size;
            if (std::abs(steps - std::round(steps)) > 1e-6 * steps || std::round(steps) < 10) {
              throw ArgumentError("Euler step size must divide t_end into at least 10 steps");
            }
          } else {
            if (c.n_steps == 0 || !(c.snr > 0.0)) throw ArgumentError("PC needs N >= 1 and r > 0");
          }
        },
        variant);
  }
};

struct ChainDiagnostics {
  double final_energy = 0.0;
  std::size_t nfe = 0;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
};

struct SampleBatch {
  RealArray z;  // {chains, latent_dim}
  std::vector<ChainDiagnostics> diagnostics;
  std::string sampler;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;

  std::size_t size() const { return z.rank() == 2 ? z.extent(0) : 0; }
  double mean_nfe() const {
    double s = 0.0;
    for (const auto& d : diagnostics) s += static_cast<double>(d.nfe);
    return diagnostics.empty() ? 0.0 : s / static_cast<double>(diagnostics.size());
  }
};

// ---------------------------------------------------------------------------
// Per-chain kernels. Each writes the final state into z (which holds the
// initial state on entry) and returns its diagnostics.

namespace detail {

inline void check_finite(std::span<const double> z, const char* sampler, std::size_t chain, std::size_t step) {
  for (double v : z) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(sampler) + ": non-finite state in chain " + std::to_string(chain) +
                         " at step " + std::to_string(step));
    }
  }
}

inline ChainDiagnostics run_ld(EnergyEvaluator& ev, const LdConfig& c, Rng& rng, std::span<double> z,
                               std::size_t chain) {
  const double sigma = c.matched_noise ? std::sqrt(c.step_size) : c.noise;
  std::vector<double> g(z.size());
  for (std::size_t k = 0; k < c.n_steps; ++k) {
    ev.value_grad(z, g);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += -0.5 * c.step_size * g[i] + sigma * rng.normal();
    check_finite(z, "ld", chain, k);
  }
  return {0.0, c.n_steps, c.n_steps, 0};
}

// Time runs from t_end down to 0; integrate s = t_end - t forward with the
// drift negated: dz/ds = -1/2 beta(t_end - s) grad E_cond(z).
inline ChainDiagnostics run_ode(EnergyEvaluator& ev, const OdeConfig& c, const DiffusionSchedule& sched,
                                std::span<double> z) {
  const bool prior = c.include_prior_drift;
  // Empty code: the drift is identically zero and z(0) = z(T). Counted as one
  // evaluation.
  if (ev.prior_only() && !prior) return {0.0, 1, 0, 0};
  auto drift = [&](double s, std::span<const double> y, std::span<double> dy) {
    ev.value_grad(y, dy, prior);
    const double b = -0.5 * beta_unchecked(sched, sched.t_end - s);
    for (double& v : dy) v *= b;
  };
  Dopri5Options opt;
  opt.atol = c.atol;
  opt.rtol = c.rtol;
  const auto st = dopri5(drift, z, 0.0, sched.t_end, opt);
  return {0.0, st.nfe, st.accepted, st.rejected};
}

inline ChainDiagnostics run_euler(EnergyEvaluator& ev, const EulerConfig& c, const DiffusionSchedule& sched,
                                  std::span<double> z, std::size_t chain) {
  const auto steps = static_cast<std::size_t>(std::llround(sched.t_end / c.step_size));
  const double h = sched.t_end / static_cast<double>(steps);
  std::vector<double> g(z.size());
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = sched.t_end - static_cast<double>(k) * h;
    ev.value_grad(z, g, false);
    const double b = 0.5 * beta_unchecked(sched, t) * h;
    for (std::size_t i = 0; i < z.size(); ++i) z[i] -= b * g[i];
    check_finite(z, "euler", chain, k);
  }
  return {0.0, steps, steps, 0};
}

// Score of the latent marginal: -z - grad E_cond = -grad E (prior included).
// All chains advance in lockstep: the corrector step size uses the mean score
// and noise norms over the batch, so one small |s| cannot blow up a step.
inline void run_pc_batch(std::vector<EnergyEvaluator>& evs, std::vector<Rng>& rngs, const PcConfig& c,
                         const DiffusionSchedule& sched, RealArray& zs, std::vector<ChainDiagnostics>& diag) {
  const std::size_t n = zs.extent(0), d = zs.extent(1);
  const double dt = sched.t_end / static_cast<double>(c.n_steps);
  RealArray score({n, d}), xi({n, d});
  std::vector<double> score_norm(n), noise_norm(n);
  for (std::size_t k = 0; k < c.n_steps; ++k) {
    const double t = sched.t_end - static_cast<double>(k) * dt;
    for (std::size_t m = 0; m < c.corrector_steps; ++m) {
      parallel_for(n, [&](std::size_t j) {
        auto s = score.row(j);
        evs[j].value_grad(zs.row(j), s);
        for (double& v : s) v = -v;
        rngs[j].fill_normal(xi.row(j));
        score_norm[j] = std::sqrt(squared_norm(s));
        noise_norm[j] = std::sqrt(squared_norm(xi.row(j)));
      });
      double sn = 0.0, nn = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        sn += score_norm[j];
        nn += noise_norm[j];
      }
      const double eps = sn > 0.0 ? 2.0 * std::pow(c.snr * nn / sn, 2) : 0.0;
      const double amp = std::sqrt(2.0 * eps);
      parallel_for(n, [&](std::size_t j) {
        auto z = zs.row(j);
        for (std::size_t i = 0; i < d; ++i) z[i] += eps * score(j, i) + amp * xi(j, i);
      });
    }
    // Reverse VP-SDE Euler-Maruyama step from t to t - dt.
    const double b = beta_unchecked(sched, t);
    const double amp = std::sqrt(b * dt);
    parallel_for(n, [&](std::size_t j) {
      auto z = zs.row(j);
      auto g = score.row(j);
      evs[j].value_grad(z, g);
      for (std::size_t i = 0; i < d; ++i) z[i] += dt * (0.5 * b * z[i] - b * g[i]) + amp * rngs[j].normal();
      check_finite(z, "pc", j, k);
    });
  }
  const std::size_t nfe = c.n_steps * (c.corrector_steps + 1);
  for (auto& x : diag) x = {0.0, nfe, c.n_steps, 0};
}

}  // namespace detail

// Runs every chain of cfg against fn. Chain k draws from stream(seed, k) and,
// without init, starts at z ~ N(0, I) drawn from that stream; with init it
// starts at init row k. Results depend only on (fn, cfg, init). LD, ODE and
// Euler chains are independent of each other; PC chains share the corrector
// step size, so a PC chain also depends on the rest of its batch.
inline SampleBatch run_sampler(const EnergyFunction& fn, const SamplerConfig& cfg,
                               const RealArray* init = nullptr) {
  cfg.validate();
  const std::size_t dz = fn.latent_dim();
  if (init != nullptr && (init->rank() != 2 || init->extent(0) != cfg.chains || init->extent(1) != dz)) {
    throw ArgumentError("initial states must be {chains, latent_dim}");
  }
  const auto start = std::chrono::steady_clock::now();
  SampleBatch out;
  out.z = RealArray({cfg.chains, dz});
  out.diagnostics.resize(cfg.chains);
  out.sampler = sampler_name(cfg.variant);
  out.seed = cfg.seed;
  if (const auto* pc = std::get_if<PcConfig>(&cfg.variant)) {
    std::vector<Rng> rngs;
    std::vector<EnergyEvaluator> evs;
    rngs.reserve(cfg.chains);
    evs.reserve(cfg.chains);
    for (std::size_t k = 0; k < cfg.chains; ++k) {
      rngs.push_back(stream(cfg.seed, k));
      evs.push_back(fn.evaluator(k));
      auto z = out.z.row(k);
      if (init != nullptr) {
        std::copy(init->row(k).begin(), init->row(k).end(), z.begin());
      } else {
        rngs.back().fill_normal(z);
      }
    }
    detail::run_pc_batch(evs, rngs, *pc, cfg.schedule, out.z, out.diagnostics);
    parallel_for(cfg.chains, [&](std::size_t k) { out.diagnostics[k].final_energy = evs[k].value(out.z.row(k)); });
  } else {
    parallel_for(cfg.chains, [&](std::size_t k) {
      Rng rng = stream(cfg.seed, k);
      auto z = out.z.row(k);
      if (init != nullptr) {
        std::copy(init->row(k).begin(), init->row(k).end(), z.begin());
      } else {
        rng.fill_normal(z);
      }
      auto ev = fn.evaluator(k);
      ChainDiagnostics d = std::visit(
          [&](const auto& c) -> ChainDiagnostics {
            using C = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<C, LdConfig>) {
              return detail::run_ld(ev, c, rng, z, k);
            } else if constexpr (std::is_same_v<C, OdeConfig>) {
              return detail::run_ode(ev, c, cfg.schedule, z);
            } else if constexpr (std::is_same_v<C, EulerConfig>) {
              return detail::run_euler(ev, c, cfg.schedule, z, k);
            } else {
              throw std::logic_error("pc runs batched");
            }
          },
          cfg.variant);
      detail::check_finite(z, out.sampler.c_str(), k, d.nfe);
      d.final_energy = ev.value(z);
      d.nfe = std::max<std::size_t>(d.nfe, 1);
      out.diagnostics[k] = d;
    });
  }
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

inline SampleBatch sample_ld(const EnergyFunction& fn, const LdConfig& c, std::uint64_t seed, std::size_t chains,
                             const RealArray* init = nullptr) {
  return run_sampler(fn, SamplerConfig{c, seed, chains, {}}, init);
}

inline SampleBatch sample_ode(const EnergyFunction& fn, const OdeConfig& c, const DiffusionSchedule& sched,
                              std::uint64_t seed, std::size_t chains, const RealArray* init = nullptr) {
  return run_sampler(fn, SamplerConfig{c, seed, chains, sched}, init);
}

inline SampleBatch sample_euler(const EnergyFunction& fn, double step_size, const DiffusionSchedule& sched,
                                std::uint64_t seed, std::size_t chains, const RealArray* init = nullptr) {
  return run_sampler(fn, SamplerConfig{EulerConfig{step_size}, seed, chains, sched}, init);
}

inline SampleBatch sample_pc(const EnergyFunction& fn, const PcConfig& c, const DiffusionSchedule& sched,
                             std::uint64_t seed, std::size_t chains, const RealArray* init = nullptr) {
  return run_sampler(fn, SamplerConfig{c, seed, chains, sched}, init);
}

}  // namespace lace
