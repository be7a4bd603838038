#pragma once

// Ground truth for checking samplers: exact rejection sampling from
// p(z) e^{-E_cond(z)}, normalized grid densities in 2-D, total variation,
// and central finite differences.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <vector>

#include "lace/csv.hpp"
#include "lace/energy.hpp"
#include "lace/errors.hpp"
#include "lace/parallel.hpp"
#include "lace/rng.hpp"

namespace lace {

// ---------------------------------------------------------------------------
// Rejection sampling

// Upper bound on e^{-E} for a node: 1 per leaf with non-negative weight,
// products under AND, e^beta b1 + b2 under OR (folded left).
inline double rejection_bound(const ExprNode& n) {
  switch (n.kind) {
    case NodeKind::Leaf:
      if (n.weight < 0.0) throw CapabilityError("rejection sampling needs non-negative leaf weights");
      return 1.0;
    case NodeKind::And: {
      double b = 1.0;
      for (const auto& c : n.children) b *= rejection_bound(c);
      return b;
    }
    case NodeKind::Or: {
      double b = rejection_bound(n.children[0]);
      for (std::size_t k = 1; k < n.children.size(); ++k) b = std::exp(n.beta) * b + rejection_bound(n.children[k]);
      return b;
    }
    case NodeKind::Not:
      throw CapabilityError(
          "rejection sampling has no finite bound for NOT expressions; use the grid oracle instead");
  }
  return 1.0;
}

inline double rejection_bound(const EnergyExpr& e) { return e.root ? rejection_bound(*e.root) : 1.0; }

struct RejectionResult {
  RealArray z;  // {count, latent_dim}
  std::size_t proposals = 0;
  double acceptance_rate = 0.0;
};

inline constexpr std::size_t kRejectionChunk = 1 << 14;
inline constexpr std::size_t kRejectionChunksPerRound = 16;
inline constexpr std::size_t kRejectionMinProposals = 100000000;
inline constexpr double kRejectionMinRate = 1e-6;

// Proposes z ~ N(0, I) and accepts with probability e^{-E_cond(z)} / M. Work
// is split into fixed chunks (chunk k uses stream seed + k) processed in
// rounds, so the output does not depend on the thread count.
inline RejectionResult rejection_sample(const EnergyFunction& fn, std::size_t count, std::uint64_t seed) {
  if (fn.proximity()) throw CapabilityError("rejection sampling does not support proximity terms");
  if (count == 0) throw ArgumentError("rejection_sample: count must be positive");
  const double bound = rejection_bound(fn.expr());
  const double log_bound = std::log(bound);
  const std::size_t dz = fn.latent_dim();
  RejectionResult res;
  std::vector<double> accepted;
  std::size_t next_chunk = 0;
  while (accepted.size() / dz < count) {
    std::vector<std::vector<double>> parts(kRejectionChunksPerRound);
    parallel_for(kRejectionChunksPerRound, [&](std::size_t j) {
      const std::size_t chunk = next_chunk + j;
      Rng rng = stream(seed, chunk);
      auto ev = fn.evaluator();
      std::vector<double> z(dz);
      for (std::size_t r = 0; r < kRejectionChunk; ++r) {
        rng.fill_normal(z);
        const double u = rng.uniform();
        const double log_accept = -ev.value(z, false) - log_bound;
        if (std::log(u) < log_accept) parts[j].insert(parts[j].end(), z.begin(), z.end());
      }
    });
    next_chunk += kRejectionChunksPerRound;
    for (auto& p : parts) {
      const std::size_t need = count * dz - std::min(count * dz, accepted.size());
      accepted.insert(accepted.end(), p.begin(), p.begin() + static_cast<std::ptrdiff_t>(std::min(need, p.size())));
      res.proposals += kRejectionChunk;
      if (accepted.size() / dz >= count) break;
    }
    const double rate = static_cast<double>(accepted.size() / dz) / static_cast<double>(res.proposals);
    if (res.proposals >= kRejectionMinProposals && rate < kRejectionMinRate) {
      throw NumericError("rejection sampling infeasible: acceptance rate " + format_double(rate) + " after " +
                         std::to_string(res.proposals) + " proposals");
    }
  }
  res.acceptance_rate = static_cast<double>(count) / static_cast<double>(res.proposals);
  res.z = RealArray({count, dz}, std::move(accepted));
  return res;
}

// Acceptance rate alone, measured over exactly `proposals` draws.
inline double rejection_acceptance_rate(const EnergyFunction& fn, std::size_t proposals, std::uint64_t seed) {
  const double log_bound = std::log(rejection_bound(fn.expr()));
  const std::size_t dz = fn.latent_dim();
  const std::size_t chunks = (proposals + kRejectionChunk - 1) / kRejectionChunk;
  std::vector<std::size_t> hits(chunks, 0);
  parallel_for(chunks, [&](std::size_t k) {
    Rng rng = stream(seed, k);
    auto ev = fn.evaluator();
    std::vector<double> z(dz);
    const std::size_t n = std::min(kRejectionChunk, proposals - k * kRejectionChunk);
    for (std::size_t r = 0; r < n; ++r) {
      rng.fill_normal(z);
      if (std::log(rng.uniform()) < -ev.value(z, false) - log_bound) ++hits[k];
    }
  });
  std::size_t total = 0;
  for (auto h : hits) total += h;
  return static_cast<double>(total) / static_cast<double>(proposals);
}

// ---------------------------------------------------------------------------
// Grids

struct GridSpec {
  double lo = -4.0;
  double hi = 4.0;
  std::size_t resolution = 128;

  double cell_width() const { return (hi - lo) / static_cast<double>(resolution); }
  double center(std::size_t i) const { return lo + (static_cast<double>(i) + 0.5) * cell_width(); }
  void validate() const {
    if (!(hi > lo) || resolution == 0) throw ArgumentError("grid needs hi > lo and positive resolution");
  }
  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

// Cell (i, j) covers z1 in bin i and z2 in bin j; prob[i * resolution + j].
struct GridDensity {
  GridSpec grid;
  std::vector<double> prob;
  std::size_t dropped = 0;  // histogram samples outside the grid

  double at(std::size_t i, std::size_t j) const { return prob[i * grid.resolution + j]; }
};

// Normalized e^{-E(z)} (prior included) at cell centers. With subdivisions
// k > 1 each cell's mass is the sum over a k x k lattice of sub-cell centers,
// which keeps coarse grids from smearing sharp classifier boundaries.
inline GridDensity grid_conditional_density(const EnergyFunction& fn, const GridSpec& grid = {},
                                            std::size_t subdivisions = 1) {
  grid.validate();
  if (fn.latent_dim() != 2) throw CapabilityError("grid oracle needs latent_dim = 2");
  if (subdivisions == 0) throw ArgumentError("grid subdivisions must be positive");
  const GridSpec fine{grid.lo, grid.hi, grid.resolution * subdivisions};
  const std::size_t n = fine.resolution;
  std::vector<double> log_p(n * n);
  parallel_for(n, [&](std::size_t i) {
    auto ev = fn.evaluator();
    double z[2];
    z[0] = fine.center(i);
    for (std::size_t j = 0; j < n; ++j) {
      z[1] = fine.center(j);
      log_p[i * n + j] = -ev.value(z);
    }
  });
  const double m = *std::max_element(log_p.begin(), log_p.end());
  if (!std::isfinite(m)) throw NumericError("grid density: energy is not finite on the grid");
  const std::size_t r = grid.resolution;
  GridDensity d{grid, std::vector<double>(r * r, 0.0), 0};
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double p = std::exp(log_p[i * n + j] - m);
      d.prob[(i / subdivisions) * r + j / subdivisions] += p;
      total += p;
    }
  }
  for (double& p : d.prob) p /= total;
  return d;
}

// Normalized histogram of the samples that fall inside the grid.
inline GridDensity histogram(const RealArray& z, const GridSpec& grid = {}) {
  grid.validate();
  if (z.rank() != 2 || z.extent(1) != 2) throw CapabilityError("histogram needs 2-D latent samples");
  const std::size_t n = grid.resolution;
  GridDensity d{grid, std::vector<double>(n * n, 0.0), 0};
  const double w = grid.cell_width();
  std::size_t inside = 0;
  for (std::size_t r = 0; r < z.extent(0); ++r) {
    const double a = (z(r, 0) - grid.lo) / w, b = (z(r, 1) - grid.lo) / w;
    if (!(a >= 0.0 && a < static_cast<double>(n) && b >= 0.0 && b < static_cast<double>(n))) {
      ++d.dropped;
      continue;
    }
    d.prob[static_cast<std::size_t>(a) * n + static_cast<std::size_t>(b)] += 1.0;
    ++inside;
  }
  if (inside == 0) throw ArgumentError("histogram: no samples inside the grid");
  for (double& p : d.prob) p /= static_cast<double>(inside);
  return d;
}

inline double tv_distance(const GridDensity& a, const GridDensity& b) {
  if (!(a.grid == b.grid) || a.prob.size() != b.prob.size()) throw ArgumentError("tv_distance: grid mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < a.prob.size(); ++k) s += std::abs(a.prob[k] - b.prob[k]);
  return 0.5 * s;
}

// Mass of {z_axis > 0} (cells whose center lies on the positive side).
inline double half_plane_mass(const GridDensity& d, std::size_t axis) {
  const std::size_t n = d.grid.resolution;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (d.grid.center(axis == 0 ? i : j) > 0.0) s += d.at(i, j);
    }
  }
  return s;
}

// Rows z1,z2,prob.
inline void write_grid_csv(std::ostream& out, const GridDensity& d) {
  CsvWriter csv(out);
  csv.header({"z1", "z2", "prob"});
  const std::size_t n = d.grid.resolution;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      csv.row({format_double(d.grid.center(i)), format_double(d.grid.center(j)), format_double(d.at(i, j))});
    }
  }
}

// ---------------------------------------------------------------------------
// Finite differences

inline std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& field,
                                            std::span<const double> z, double h = 1e-5) {
  if (!(h > 0.0)) throw ArgumentError("finite_diff_grad: h must be positive");
  std::vector<double> p(z.begin(), z.end());
  std::vector<double> g(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = z[i] + h;
    const double fp = field(p);
    p[i] = z[i] - h;
    const double fm = field(p);
    p[i] = z[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace lace
