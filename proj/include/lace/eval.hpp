#pragma once

// Controllability (ACC), disentangled edit strength (DES) and data-space
// identity drift.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lace/csv.hpp"
#include "lace/errors.hpp"
#include "lace/ndmath.hpp"
#include "lace/rng.hpp"
#include "lace/worldgen.hpp"

namespace lace {

struct AccScore {
  std::vector<std::optional<double>> per_attribute;  // absent when no sample targets it
  double aggregate = 0.0;                            // mean over present attributes
};

// Truth labels of g(z) for every row of z.
inline RealArray truth_labels(const RealArray& z, const GeneratorModel& g, const TruthOracle& truth) {
  const std::size_t n = z.extent(0), na = truth.spec().size();
  RealArray out({n, na});
  std::vector<double> x(g.data_dim());
  MlpTape tape;
  for (std::size_t r = 0; r < n; ++r) {
    g.apply(z.row(r), x, tape);
    const auto c = truth.labels(x);
    std::copy(c.begin(), c.end(), out.row(r).begin());
  }
  return out;
}

// targets: one code per sample. Discrete: fraction of exact matches;
// continuous: mean of 1 - |c_hat - c|.
inline AccScore acc_score(const RealArray& labels, const std::vector<AttributeCode>& targets,
                          const AttributeSpec& spec) {
  const std::size_t n = labels.extent(0);
  if (targets.size() != n) throw ArgumentError("acc_score: one target code per sample required");
  std::vector<double> sum(spec.size(), 0.0);
  std::vector<std::size_t> count(spec.size(), 0);
  for (std::size_t r = 0; r < n; ++r) {
    const auto& code = targets[r];
    if (code.size() != spec.size()) throw ArgumentError("acc_score: code width mismatch");
    for (std::size_t i = 0; i < spec.size(); ++i) {
      if (!code[i]) continue;
      const double c_hat = labels(r, i);
      sum[i] += spec[i].is_discrete() ? (c_hat == *code[i] ? 1.0 : 0.0) : 1.0 - std::abs(c_hat - *code[i]);
      ++count[i];
    }
  }
  AccScore s;
  s.per_attribute.resize(spec.size());
  double agg = 0.0;
  std::size_t present = 0;
  for (std::size_t i = 0; i < spec.size(); ++i) {
    if (count[i] == 0) continue;
    s.per_attribute[i] = sum[i] / static_cast<double>(count[i]);
    agg += *s.per_attribute[i];
    ++present;
  }
  if (present == 0) throw ArgumentError("acc_score: no attribute has a target");
  s.aggregate = agg / static_cast<double>(present);
  return s;
}

inline AccScore acc_score(const RealArray& z, const std::vector<AttributeCode>& targets, const TruthOracle& truth,
                          const GeneratorModel& g) {
  return acc_score(truth_labels(z, g, truth), targets, truth.spec());
}

// Same code for every sample.
inline AccScore acc_score(const RealArray& z, const AttributeCode& target, const TruthOracle& truth,
                          const GeneratorModel& g) {
  return acc_score(z, std::vector<AttributeCode>(z.extent(0), target), truth, g);
}

// Codes drawn uniformly: categories uniform over [0, m), continuous values
// uniform on [0, 1]. Row k comes from stream(seed, k).
inline RealArray uniform_targets(const AttributeSpec& spec, std::size_t n, std::uint64_t seed) {
  RealArray out({n, spec.size()});
  for (std::size_t r = 0; r < n; ++r) {
    Rng rng = stream(seed, r);
    for (std::size_t i = 0; i < spec.size(); ++i) {
      out(r, i) = spec[i].is_discrete() ? static_cast<double>(rng.index(spec[i].num_categories)) : rng.uniform();
    }
  }
  return out;
}

inline std::vector<AttributeCode> codes_from_rows(const RealArray& targets) {
  std::vector<AttributeCode> codes(targets.extent(0));
  for (std::size_t r = 0; r < codes.size(); ++r) {
    for (double v : targets.row(r)) codes[r].push_back(v);
  }
  return codes;
}

// ---------------------------------------------------------------------------
// DES

// delta_j = (ACC_j - ACC0_j) / (1 - ACC0_j), or the raw difference when
// ACC0_j = 1.
inline std::vector<double> edit_deltas(std::span<const double> before, std::span<const double> after) {
  if (before.size() != after.size() || before.empty()) throw ArgumentError("des: ACC vectors must match");
  std::vector<double> d(before.size());
  for (std::size_t j = 0; j < before.size(); ++j) {
    const double a0 = before[j], a1 = after[j];
    if (!(a0 >= 0.0 && a0 <= 1.0 && a1 >= 0.0 && a1 <= 1.0)) throw ArgumentError("des: ACC values must lie in [0, 1]");
    d[j] = a0 == 1.0 ? a1 - a0 : (a1 - a0) / (1.0 - a0);
  }
  return d;
}

// DES_i = delta_i - max_{j != i} |delta_j|.
inline double des_score(std::span<const double> before, std::span<const double> after, std::size_t i) {
  const auto d = edit_deltas(before, after);
  if (i >= d.size()) throw ArgumentError("des: edit index out of range");
  double worst = 0.0;
  for (std::size_t j = 0; j < d.size(); ++j) {
    if (j != i) worst = std::max(worst, std::abs(d[j]));
  }
  return d[i] - worst;
}

// ---------------------------------------------------------------------------
// Identity drift

// Mean |g(after) - g(before)| over the mean pairwise |g(z_a) - g(z_b)| of the
// before batch.
inline double id_drift(const RealArray& before, const RealArray& after, const GeneratorModel& g) {
  if (before.shape() != after.shape() || before.rank() != 2) throw ArgumentError("id_drift: batch shapes differ");
  const std::size_t n = before.extent(0);
  if (n < 2) throw ArgumentError("id_drift: need at least two samples");
  const RealArray xb = generator_apply(g, before), xa = generator_apply(g, after);
  const std::size_t dx = xb.extent(1);
  auto dist = [&](std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < dx; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    return std::sqrt(s);
  };
  double moved = 0.0;
  for (std::size_t r = 0; r < n; ++r) moved += dist(xa.row(r), xb.row(r));
  moved /= static_cast<double>(n);
  double pair = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) pair += dist(xb.row(a), xb.row(b));
  }
  pair /= static_cast<double>(n * (n - 1) / 2);
  if (!(pair > 0.0)) throw NumericError("id_drift: batch has no spread");
  return moved / pair;
}

// ---------------------------------------------------------------------------
// Reports

struct EditStageReport {
  std::size_t stage = 0;
  std::size_t attr = 0;
  std::vector<double> acc_before;
  std::vector<double> acc_after;
  double des = 0.0;
  double id_drift = 0.0;
  double mean_nfe = 0.0;
};

struct EvalReport {
  AccScore acc;
  std::size_t samples = 0;
  std::vector<EditStageReport> edits;
  std::optional<double> des_aggregate;
  std::optional<double> id_drift_total;
  std::optional<double> tv;
  std::optional<double> mean_nfe;
  nlohmann::ordered_json config;
};

inline nlohmann::ordered_json report_json(const EvalReport& r, const AttributeSpec& spec) {
  nlohmann::ordered_json j;
  j["samples"] = r.samples;
  nlohmann::ordered_json acc;
  for (std::size_t i = 0; i < spec.size(); ++i) {
    if (i < r.acc.per_attribute.size() && r.acc.per_attribute[i]) acc[spec[i].name] = *r.acc.per_attribute[i];
  }
  j["acc"] = std::move(acc);
  j["acc_aggregate"] = r.acc.aggregate;
  if (r.tv) j["tv"] = *r.tv;
  if (r.mean_nfe) j["mean_nfe"] = *r.mean_nfe;
  if (!r.edits.empty()) {
    nlohmann::ordered_json edits = nlohmann::ordered_json::array();
    for (const auto& e : r.edits) {
      nlohmann::ordered_json s;
      s["stage"] = e.stage;
      s["attribute"] = spec[e.attr].name;
      s["acc_before"] = e.acc_before;
      s["acc_after"] = e.acc_after;
      s["des"] = e.des;
      s["id_drift"] = e.id_drift;
      s["mean_nfe"] = e.mean_nfe;
      edits.push_back(std::move(s));
    }
    j["edits"] = std::move(edits);
  }
  if (r.des_aggregate) j["des_aggregate"] = *r.des_aggregate;
  if (r.id_drift_total) j["id_drift"] = *r.id_drift_total;
  j["config"] = r.config;
  return j;
}

// Flat row for sweep tables: acc_<attr>..., acc, tv, nfe (empty when absent).
inline std::vector<std::string> report_csv_header(const AttributeSpec& spec) {
  std::vector<std::string> h;
  for (const auto& a : spec.attributes()) h.push_back("acc_" + a.name);
  for (const char* k : {"acc", "tv", "nfe", "des", "id_drift"}) h.emplace_back(k);
  return h;
}

inline std::vector<std::string> report_csv_row(const EvalReport& r, const AttributeSpec& spec) {
  std::vector<std::string> row;
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  for (std::size_t i = 0; i < spec.size(); ++i) {
    row.push_back(i < r.acc.per_attribute.size() ? opt(r.acc.per_attribute[i]) : std::string());
  }
  row.push_back(format_double(r.acc.aggregate));
  row.push_back(opt(r.tv));
  row.push_back(opt(r.mean_nfe));
  row.push_back(opt(r.des_aggregate));
  row.push_back(opt(r.id_drift_total));
  return row;
}

}  // namespace lace
