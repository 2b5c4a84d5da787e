#pragma once

#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "opeinf/core.hpp"

namespace opeinf {

enum class UnitKind { transition, trajectory };

enum class UnitStatus {
  ok,
  undefined,       // removal leaves the estimator undefined (empty D0*, N = 1, ...)
  skipped,         // not computed: neighbor-count cutoff
  unidentifiable,  // linear model singular after removal
};

inline const char* to_string(UnitKind k) {
  return k == UnitKind::transition ? "transition" : "trajectory";
}

inline const char* to_string(UnitStatus s) {
  switch (s) {
    case UnitStatus::ok: return "ok";
    case UnitStatus::undefined: return "undefined";
    case UnitStatus::skipped: return "skipped";
    case UnitStatus::unidentifiable: return "unidentifiable";
  }
  return "?";
}

struct UnitInfluence {
  std::string id;
  UnitStatus status = UnitStatus::ok;
  double influence = 0.0;             // I_j, meaningful only when status == ok
  std::optional<double> normalized;   // |I_j| / |v_hat|, absent when v_hat == 0
  bool flagged = false;
  bool dead_end = false;
  std::string note;
};

struct InfluenceReport {
  UnitKind unit_kind = UnitKind::transition;
  EstimatorKind estimator = EstimatorKind::kernel_fqe;
  double v_hat = 0.0;
  double threshold = 0.05;
  /// Threshold actually applied to |I_j| when v_hat == 0 (threshold * v_max).
  std::optional<double> absolute_threshold;
  std::vector<UnitInfluence> units;

  const UnitInfluence* find(const std::string& id) const {
    for (const auto& u : units) {
      if (u.id == id) return &u;
    }
    return nullptr;
  }

  std::vector<std::string> flags() const {
    std::vector<std::string> out;
    for (const auto& u : units) {
      if (u.flagged) out.push_back(u.id);
    }
    return out;
  }

  std::vector<std::string> dead_ends() const {
    std::vector<std::string> out;
    for (const auto& u : units) {
      if (u.dead_end) out.push_back(u.id);
    }
    return out;
  }

  std::vector<std::string> skipped_by_cutoff() const {
    std::vector<std::string> out;
    for (const auto& u : units) {
      if (u.status == UnitStatus::skipped) out.push_back(u.id);
    }
    return out;
  }

  /// Score used for ordering: normalized influence, or |I_j| when v_hat == 0.
  double score(const UnitInfluence& u) const {
    if (u.status != UnitStatus::ok) return 0.0;
    return u.normalized ? *u.normalized : std::abs(u.influence);
  }
};

/// Fills normalized influences and flags. With v_hat == 0 the normalized
/// value is undefined and flags compare |I_j| against threshold * v_max
/// (v_max defaults to 1).
inline void apply_threshold(InfluenceReport& report, double threshold,
                            std::optional<double> v_max) {
  report.threshold = threshold;
  const bool zero_value = report.v_hat == 0.0;
  report.absolute_threshold.reset();
  if (zero_value) report.absolute_threshold = threshold * v_max.value_or(1.0);
  for (auto& u : report.units) {
    u.normalized.reset();
    u.flagged = false;
    if (u.status != UnitStatus::ok) continue;
    if (zero_value) {
      u.flagged = std::abs(u.influence) > *report.absolute_threshold;
    } else {
      u.normalized = std::abs(u.influence) / std::abs(report.v_hat);
      u.flagged = *u.normalized > threshold;
    }
  }
}

inline Json to_json(const UnitInfluence& u, UnitKind kind) {
  Json j;
  j["id"] = u.id;
  j["unit_kind"] = to_string(kind);
  j["status"] = to_string(u.status);
  j["influence"] = u.status == UnitStatus::ok ? Json(u.influence) : Json(nullptr);
  j["normalized_influence"] = u.normalized ? Json(*u.normalized) : Json(nullptr);
  j["flag"] = u.flagged;
  j["dead_end"] = u.dead_end;
  j["skipped"] = u.status == UnitStatus::skipped;
  if (!u.note.empty()) j["note"] = u.note;
  return j;
}

/// One JSON record per unit, line-delimited.
inline void write_report(std::ostream& out, const InfluenceReport& report) {
  for (const auto& u : report.units) out << to_json(u, report.unit_kind).dump() << '\n';
}

inline Json report_summary(const InfluenceReport& report) {
  Json j;
  j["estimator"] = to_string(report.estimator);
  j["unit_kind"] = to_string(report.unit_kind);
  j["v_hat"] = report.v_hat;
  j["threshold"] = report.threshold;
  j["absolute_threshold"] =
      report.absolute_threshold ? Json(*report.absolute_threshold) : Json(nullptr);
  j["units"] = report.units.size();
  j["flags"] = report.flags();
  j["dead_ends"] = report.dead_ends();
  j["skipped_by_cutoff"] = report.skipped_by_cutoff().size();
  return j;
}

}  // namespace opeinf
