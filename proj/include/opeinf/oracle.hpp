#pragma once

// Brute-force leave-one-out: refit the configured estimator without one
// unit and difference the value estimates. Transitions are the unit for
// FQE estimators, whole trajectories for importance sampling. This module
// knows no influence formula; it only calls estimate_value().

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "opeinf/pipeline.hpp"

namespace opeinf {

enum class OracleStatus { ok, undefined_after_removal };

struct OracleResult {
  std::string unit_id;
  double v_hat_full = 0.0;
  double v_hat_without = 0.0;
  double influence = 0.0;
  OracleStatus status = OracleStatus::ok;
  std::string note;
};

struct OracleRun {
  std::vector<OracleResult> results;
  bool truncated = false;
  std::size_t units_total = 0;
};

inline constexpr std::size_t kDefaultOracleBudget = 10000;

namespace detail {

inline Dataset remove_unit(const Dataset& ds, const AnalysisConfig& config, const std::string& id) {
  if (is_trajectory_estimator(config.estimator)) {
    ds.trajectory(id);  // throws not_found
    return ds.without_trajectory(id);
  }
  return ds.without(ds.index_of(id));
}

inline OracleResult refit_without(const Dataset& ds, const AnalysisConfig& config,
                                  const AnalysisContext& ctx, const std::string& id,
                                  double v_full) {
  OracleResult r;
  r.unit_id = id;
  r.v_hat_full = v_full;
  const bool whole_dataset =
      is_trajectory_estimator(config.estimator) ? ds.trajectories().size() == 1 : ds.size() == 1;
  if (whole_dataset) {
    r.status = OracleStatus::undefined_after_removal;
    r.note = "removal empties the dataset";
    return r;
  }
  try {
    r.v_hat_without = estimate_value(remove_unit(ds, config, id), config, ctx);
    r.influence = r.v_hat_without - r.v_hat_full;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::undefined && e.kind() != ErrorKind::unidentifiable) throw;
    r.status = OracleStatus::undefined_after_removal;
    r.note = e.what();
  }
  return r;
}

inline std::vector<std::string> unit_ids(const Dataset& ds, const AnalysisConfig& config) {
  std::vector<std::string> ids;
  if (is_trajectory_estimator(config.estimator)) {
    for (const auto& t : ds.trajectories()) ids.push_back(t.id);
  } else {
    for (const auto& t : ds.transitions()) ids.push_back(t.id);
  }
  return ids;
}

}  // namespace detail

inline OracleResult brute_force_influence(const Dataset& ds, const AnalysisConfig& raw_config,
                                          const AnalysisContext& ctx, const std::string& unit_id) {
  const AnalysisConfig config = resolve(raw_config, ds);
  return detail::refit_without(ds, config, ctx, unit_id, estimate_value(ds, config, ctx));
}

/// One result per unit, in dataset order; stops after `budget` refits and
/// marks the run truncated.
inline OracleRun brute_force_all(const Dataset& ds, const AnalysisConfig& raw_config,
                                 const AnalysisContext& ctx,
                                 std::size_t budget = kDefaultOracleBudget) {
  const AnalysisConfig config = resolve(raw_config, ds);
  const double v_full = estimate_value(ds, config, ctx);
  const auto ids = detail::unit_ids(ds, config);
  OracleRun run;
  run.units_total = ids.size();
  for (const auto& id : ids) {
    if (run.results.size() >= budget) {
      run.truncated = true;
      break;
    }
    run.results.push_back(detail::refit_without(ds, config, ctx, id, v_full));
  }
  return run;
}

// ---------------------------------------------------------------------------
// Closed form versus oracle

struct ValidationRow {
  std::string id;
  std::optional<double> closed_form;
  std::optional<double> oracle;
  double abs_deviation = 0.0;
  double rel_deviation = 0.0;
  bool status_agrees = true;
};

struct ValidationSummary {
  std::vector<ValidationRow> rows;
  double max_abs = 0.0;
  double max_rel = 0.0;
  std::vector<double> abs_quantiles;  // 0, 0.5, 0.9, 0.99, 1
  std::size_t top_k = 5;
  std::size_t top_k_overlap = 0;
  bool signs_agree_on_overlap = true;
  std::size_t status_mismatches = 0;
  std::size_t compared = 0;
  bool truncated = false;
};

namespace detail {

inline std::vector<std::string> top_by_magnitude(
    const std::vector<std::pair<std::string, double>>& values, std::size_t k) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(values[a].second) > std::abs(values[b].second);
  });
  std::vector<std::string> out;
  for (std::size_t n = 0; n < std::min(k, order.size()); ++n) out.push_back(values[order[n]].first);
  return out;
}

inline double quantile(std::vector<double> xs, double q) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  const double pos = q * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  return xs[lo] + (pos - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

}  // namespace detail

/// Skipped units are left out of the comparison; an undefined unit must be
/// undefined on both sides.
inline ValidationSummary compare_with_oracle(const InfluenceReport& report, const OracleRun& oracle,
                                             std::size_t top_k = 5) {
  ValidationSummary s;
  s.top_k = top_k;
  s.truncated = oracle.truncated;
  std::vector<std::pair<std::string, double>> closed_vals, oracle_vals;
  std::map<std::string, double> closed_map, oracle_map;
  std::vector<double> deviations;
  for (const auto& o : oracle.results) {
    const UnitInfluence* u = report.find(o.unit_id);
    if (u == nullptr || u->status == UnitStatus::skipped) continue;
    ValidationRow row;
    row.id = o.unit_id;
    const bool c_ok = u->status == UnitStatus::ok;
    const bool o_ok = o.status == OracleStatus::ok;
    if (c_ok) row.closed_form = u->influence;
    if (o_ok) row.oracle = o.influence;
    row.status_agrees = c_ok == o_ok;
    if (!row.status_agrees) ++s.status_mismatches;
    if (c_ok && o_ok) {
      row.abs_deviation = std::abs(u->influence - o.influence);
      row.rel_deviation = row.abs_deviation / std::max(std::abs(o.influence), 1e-12);
      s.max_abs = std::max(s.max_abs, row.abs_deviation);
      s.max_rel = std::max(s.max_rel, row.rel_deviation);
      deviations.push_back(row.abs_deviation);
      closed_vals.emplace_back(o.unit_id, u->influence);
      oracle_vals.emplace_back(o.unit_id, o.influence);
      closed_map[o.unit_id] = u->influence;
      oracle_map[o.unit_id] = o.influence;
      ++s.compared;
    }
    s.rows.push_back(std::move(row));
  }
  for (double q : {0.0, 0.5, 0.9, 0.99, 1.0}) s.abs_quantiles.push_back(detail::quantile(deviations, q));
  const auto top_c = detail::top_by_magnitude(closed_vals, top_k);
  const auto top_o = detail::top_by_magnitude(oracle_vals, top_k);
  for (const auto& id : top_c) {
    if (std::find(top_o.begin(), top_o.end(), id) == top_o.end()) continue;
    ++s.top_k_overlap;
    const double a = closed_map[id], b = oracle_map[id];
    if ((a > 0) != (b > 0) && a != 0.0 && b != 0.0) s.signs_agree_on_overlap = false;
  }
  return s;
}

inline Json to_json(const ValidationSummary& s) {
  Json j;
  j["compared"] = s.compared;
  j["max_abs_deviation"] = s.max_abs;
  j["max_rel_deviation"] = s.max_rel;
  j["abs_deviation_quantiles"] = {{"q0", s.abs_quantiles[0]}, {"q50", s.abs_quantiles[1]},
                                  {"q90", s.abs_quantiles[2]}, {"q99", s.abs_quantiles[3]},
                                  {"q100", s.abs_quantiles[4]}};
  j["top_k"] = s.top_k;
  j["top_k_overlap"] = s.top_k_overlap;
  j["signs_agree_on_overlap"] = s.signs_agree_on_overlap;
  j["status_mismatches"] = s.status_mismatches;
  j["truncated"] = s.truncated;
  return j;
}

}  // namespace opeinf
