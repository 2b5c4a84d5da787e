#pragma once

// Expert review session: versioned datasets, verdicts on flagged units,
// field-level corrections and recompute.

#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "opeinf/fingerprint.hpp"
#include "opeinf/pipeline.hpp"

namespace opeinf {

enum class Decision { representative, artefact_remove, artefact_correct };

inline const char* to_string(Decision d) {
  switch (d) {
    case Decision::representative: return "representative";
    case Decision::artefact_remove: return "artefact_remove";
    case Decision::artefact_correct: return "artefact_correct";
  }
  return "?";
}

inline Decision parse_decision(const std::string& s) {
  if (s == "representative") return Decision::representative;
  if (s == "artefact_remove") return Decision::artefact_remove;
  if (s == "artefact_correct") return Decision::artefact_correct;
  throw Error(ErrorKind::parse, "unknown decision '" + s + "'");
}

/// One field-level edit of one transition.
///
/// Settable fields: reward, action, behavior_prob, is_terminal, and single
/// components of state / next_state (with `index`). A `shift` on the action
/// field moves the action `shift` steps within the trajectory and writes
/// `fill` into the vacated step.
struct Patch {
  std::optional<std::string> target;  // transition id; defaults to the verdict's unit
  std::string field;
  std::optional<std::size_t> index;
  Json value;
  std::optional<long long> shift;
  std::optional<ActionId> fill;
};

inline Json to_json(const Patch& p) {
  Json j;
  if (p.target) j["target"] = *p.target;
  j["field"] = p.field;
  if (p.index) j["index"] = *p.index;
  if (!p.value.is_null()) j["value"] = p.value;
  if (p.shift) j["shift"] = *p.shift;
  if (p.fill) j["fill"] = *p.fill;
  return j;
}

inline Patch patch_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorKind::parse, "patch must be a JSON object");
  Patch p;
  try {
    p.field = j.at("field").get<std::string>();
    if (j.contains("target")) p.target = j["target"].get<std::string>();
    if (j.contains("index")) p.index = j["index"].get<std::size_t>();
    if (j.contains("value")) p.value = j["value"];
    if (j.contains("shift")) p.shift = j["shift"].get<long long>();
    if (j.contains("fill")) p.fill = j["fill"].get<ActionId>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, std::string("malformed patch: ") + e.what());
  }
  return p;
}

struct Verdict {
  std::string unit_id;
  Decision decision = Decision::representative;
  std::vector<Patch> correction;
  std::string note;

  void validate() const {
    if (unit_id.empty()) throw Error(ErrorKind::parse, "verdict needs a unit_id");
    const bool correcting = decision == Decision::artefact_correct;
    if (correcting && correction.empty()) {
      throw Error(ErrorKind::precondition, "artefact_correct requires a correction");
    }
    if (!correcting && !correction.empty()) {
      throw Error(ErrorKind::precondition, "a correction is only allowed with artefact_correct");
    }
  }
};

inline Json to_json(const Verdict& v) {
  Json j;
  j["unit_id"] = v.unit_id;
  j["decision"] = to_string(v.decision);
  Json patches = Json::array();
  for (const auto& p : v.correction) patches.push_back(to_json(p));
  j["correction"] = patches;
  j["note"] = v.note;
  return j;
}

inline Verdict verdict_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorKind::parse, "verdict must be a JSON object");
  Verdict v;
  try {
    v.unit_id = j.at("unit_id").get<std::string>();
    v.decision = parse_decision(j.at("decision").get<std::string>());
    if (auto it = j.find("correction"); it != j.end() && !it->is_null()) {
      if (!it->is_array()) throw Error(ErrorKind::parse, "correction must be an array of patches");
      for (const auto& p : *it) v.correction.push_back(patch_from_json(p));
    }
    if (auto it = j.find("note"); it != j.end() && !it->is_null()) v.note = it->get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, std::string("malformed verdict: ") + e.what());
  }
  return v;
}

// ---------------------------------------------------------------------------
// Edits

namespace detail {

inline std::size_t patch_target(const Dataset& ds, const Patch& p, const std::string& unit,
                                UnitKind kind) {
  std::string id = p.target.value_or(unit);
  if (kind == UnitKind::trajectory && !p.target) {
    throw Error(ErrorKind::precondition, "patches on trajectory units must name a target transition");
  }
  if (!ds.contains(id)) throw Error(ErrorKind::not_found, "patch target '" + id + "' does not exist");
  const std::size_t n = ds.index_of(id);
  const std::string& traj = kind == UnitKind::trajectory ? unit : ds[ds.index_of(unit)].trajectory_id;
  if (ds[n].trajectory_id != traj) {
    throw Error(ErrorKind::precondition, "patch target '" + id + "' is outside the reviewed trajectory");
  }
  return n;
}

template <typename T>
T patch_value(const Patch& p) {
  if (p.value.is_null()) throw Error(ErrorKind::parse, "patch on '" + p.field + "' needs a value");
  try {
    return p.value.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorKind::parse, "patch value for '" + p.field + "' has the wrong type");
  }
}

inline void apply_patch(std::vector<Transition>& ts, const Dataset& ds, const Patch& p,
                        const std::string& unit, UnitKind kind) {
  const std::size_t n = patch_target(ds, p, unit, kind);
  Transition& t = ts[n];
  if (p.field == "action" && p.shift) {
    const auto& members = ds.trajectory(t.trajectory_id).members;
    const long long dest = static_cast<long long>(t.step_index) + *p.shift;
    if (dest < 0 || dest >= static_cast<long long>(members.size())) {
      throw Error(ErrorKind::precondition, "action shift leaves trajectory '" + t.trajectory_id + "'");
    }
    const ActionId moved = t.action;
    t.action = p.fill.value_or(0);
    ts[members[static_cast<std::size_t>(dest)]].action = moved;
    return;
  }
  if (p.field == "reward") {
    t.reward = patch_value<double>(p);
  } else if (p.field == "action") {
    t.action = patch_value<ActionId>(p);
  } else if (p.field == "behavior_prob") {
    const double b = patch_value<double>(p);
    if (!(b > 0.0 && b <= 1.0)) throw Error(ErrorKind::precondition, "behavior_prob must lie in (0,1]");
    t.behavior_prob = b;
  } else if (p.field == "is_terminal") {
    t.is_terminal = patch_value<bool>(p);
  } else if (p.field == "state" || p.field == "next_state") {
    auto& vec = p.field == "state" ? t.state : t.next_state;
    if (!p.index) throw Error(ErrorKind::parse, "patch on '" + p.field + "' needs an index");
    if (*p.index >= vec.size()) {
      throw Error(ErrorKind::not_found, p.field + "[" + std::to_string(*p.index) + "] does not exist");
    }
    vec[*p.index] = patch_value<double>(p);
  } else if (p.field == "id" || p.field == "trajectory_id" || p.field == "step_index" ||
             p.field == "is_initial") {
    throw Error(ErrorKind::precondition, "field '" + p.field + "' is structural and cannot be patched");
  } else {
    throw Error(ErrorKind::not_found, "no field '" + p.field + "' on transitions");
  }
}

/// Removes one transition. Later steps of its trajectory become a new,
/// non-initial trajectory `<id>.r<n>` so step indices stay consecutive.
inline Dataset remove_transition(const Dataset& ds, const std::string& id) {
  const std::size_t gone = ds.index_of(id);
  const Transition& removed = ds[gone];
  std::string piece = removed.trajectory_id + ".r1";
  for (int n = 2; ds.has_trajectory(piece); ++n) piece = removed.trajectory_id + ".r" + std::to_string(n);
  std::vector<Transition> out;
  out.reserve(ds.size() - 1);
  for (std::size_t m = 0; m < ds.size(); ++m) {
    if (m == gone) continue;
    Transition t = ds[m];
    if (t.trajectory_id == removed.trajectory_id && t.step_index > removed.step_index) {
      t.trajectory_id = piece;
      t.step_index -= removed.step_index + 1;
      t.is_initial = false;
    }
    out.push_back(std::move(t));
  }
  if (out.empty()) throw Error(ErrorKind::precondition, "cannot remove the only transition");
  return Dataset(std::move(out));
}

}  // namespace detail

/// Dataset after applying `verdict` to `ds`; `kind` is the unit kind of the
/// report the verdict refers to. Representative verdicts return ds itself.
inline Dataset apply_verdict(const Dataset& ds, const Verdict& verdict, UnitKind kind) {
  verdict.validate();
  switch (verdict.decision) {
    case Decision::representative:
      return ds;
    case Decision::artefact_remove: {
      if (kind == UnitKind::trajectory) {
        if (ds.trajectories().size() == 1) throw Error(ErrorKind::precondition, "cannot remove the only trajectory");
        return ds.without_trajectory(verdict.unit_id);
      }
      return detail::remove_transition(ds, verdict.unit_id);
    }
    case Decision::artefact_correct: {
      std::vector<Transition> ts = ds.transitions();
      for (const auto& p : verdict.correction) detail::apply_patch(ts, ds, p, verdict.unit_id, kind);
      Dataset out(std::move(ts));
      out.validate_trajectories();
      return out;
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Session

struct DatasetVersion {
  std::size_t id = 0;
  std::optional<std::size_t> parent;
  std::optional<std::size_t> created_by;  // audit sequence number
  Dataset dataset;
  std::string fingerprint;
  AnalysisResult analysis;
};

struct AuditEntry {
  std::size_t seq = 0;
  std::size_t version = 0;  // version the verdict was given on
  Verdict verdict;
  std::optional<std::size_t> created_version;
};

inline Json to_json(const AuditEntry& e) {
  Json j;
  j["seq"] = e.seq;
  j["version"] = e.version;
  j["verdict"] = to_json(e.verdict);
  j["created_version"] = e.created_version ? Json(*e.created_version) : Json(nullptr);
  return j;
}

struct SubmitResult {
  std::size_t seq = 0;
  std::optional<std::size_t> created_version;
};

class ReviewSession {
 public:
  ReviewSession(Dataset ds, AnalysisConfig config, AnalysisContext ctx)
      : config_(std::move(config)), ctx_(std::move(ctx)) {
    config_.validate();
    push_version(std::move(ds), std::nullopt, std::nullopt);
  }

  std::size_t latest() const {
    std::shared_lock lock(mutex_);
    return versions_.size() - 1;
  }

  std::size_t version_count() const {
    std::shared_lock lock(mutex_);
    return versions_.size();
  }

  /// Copy of one version (dataset + analysis).
  DatasetVersion version(std::size_t v) const {
    std::shared_lock lock(mutex_);
    return at(v);
  }

  std::vector<AuditEntry> audit_log() const {
    std::shared_lock lock(mutex_);
    return audit_;
  }

  const AnalysisConfig& config() const noexcept { return config_; }

  Json versions_json() const {
    std::shared_lock lock(mutex_);
    Json list = Json::array();
    for (const auto& v : versions_) {
      Json j;
      j["version"] = v.id;
      j["parent"] = v.parent ? Json(*v.parent) : Json(nullptr);
      j["created_by"] = v.created_by ? Json(*v.created_by) : Json(nullptr);
      j["fingerprint"] = v.fingerprint;
      j["transitions"] = v.dataset.size();
      j["v_hat"] = v.analysis.report.v_hat;
      j["outcome"] = to_string(v.analysis.diagnosis.outcome);
      j["flags"] = v.analysis.diagnosis.flagged.size();
      list.push_back(std::move(j));
    }
    Json out;
    out["latest"] = versions_.size() - 1;
    out["versions"] = std::move(list);
    return out;
  }

  /// Presentation entries in descending normalized influence, each with its
  /// +-2 step context.
  Json flags_json(std::size_t v) const {
    std::shared_lock lock(mutex_);
    const auto& ver = at(v);
    const auto& report = ver.analysis.report;
    Json entries = Json::array();
    for (const auto& e : ver.analysis.diagnosis.presentation) {
      Json j = unit_fields(ver, e.presented);
      j["presented"] = e.presented;
      j["covered"] = e.covered;
      j["score"] = e.score;
      j["verdict"] = verdict_json(v, e.presented);
      if (report.unit_kind == UnitKind::transition) j["context"] = context_json(ver, e.presented);
      entries.push_back(std::move(j));
    }
    Json out;
    out["version"] = v;
    out["unit_kind"] = to_string(report.unit_kind);
    out["outcome"] = to_string(ver.analysis.diagnosis.outcome);
    out["v_hat"] = report.v_hat;
    out["validation"] = validation_locked(v);
    out["entries"] = std::move(entries);
    return out;
  }

  Json status_json(std::size_t v) const {
    std::shared_lock lock(mutex_);
    const auto& ver = at(v);
    Json out;
    out["version"] = v;
    out["latest"] = versions_.size() - 1;
    out["fingerprint"] = ver.fingerprint;
    out["outcome"] = to_string(ver.analysis.diagnosis.outcome);
    out["v_hat"] = ver.analysis.report.v_hat;
    out["flagged"] = ver.analysis.diagnosis.flagged;
    out["dead_ends"] = ver.analysis.diagnosis.dead_ends;
    out["validation"] = validation_locked(v);
    out["warnings"] = ver.analysis.warnings;
    Json verdicts = Json::array();
    for (const auto& e : audit_) {
      if (e.version == v) verdicts.push_back(to_json(e));
    }
    out["verdicts"] = std::move(verdicts);
    // Chain of versions from the original dataset to v.
    std::vector<std::size_t> chain{v};
    while (versions_[chain.back()].parent) chain.push_back(*versions_[chain.back()].parent);
    Json history = Json::array();
    for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
      const auto& h = versions_[*it];
      Json j;
      j["version"] = h.id;
      j["v_hat"] = h.analysis.report.v_hat;
      j["outcome"] = to_string(h.analysis.diagnosis.outcome);
      j["fingerprint"] = h.fingerprint;
      j["cause"] = h.created_by ? to_json(audit_[*h.created_by]) : Json(nullptr);
      history.push_back(std::move(j));
    }
    out["history"] = std::move(history);
    return out;
  }

  Json transition_json(const std::string& id, std::size_t v) const {
    std::shared_lock lock(mutex_);
    const auto& ver = at(v);
    if (!ver.dataset.contains(id)) {
      throw Error(ErrorKind::not_found, "unknown transition id '" + id + "' in version " + std::to_string(v));
    }
    Json out;
    out["version"] = v;
    out["transition"] = record_with_report(ver, id);
    out["context"] = context_json(ver, id);
    return out;
  }

  /// "none" without flags, "expert-validated" when every flag of version v
  /// has a representative verdict, "pending" otherwise.
  std::string validation(std::size_t v) const {
    std::shared_lock lock(mutex_);
    at(v);
    return validation_locked(v);
  }

  /// Records a verdict on the latest version; edits create and analyze a new
  /// version. Mutations are serialized by an exclusive lock.
  SubmitResult submit(std::size_t v, const Verdict& verdict) {
    verdict.validate();
    std::unique_lock lock(mutex_);
    const auto& ver = at(v);
    if (v + 1 != versions_.size()) {
      throw Error(ErrorKind::conflict, "version " + std::to_string(v) + " is not the latest (" +
                                           std::to_string(versions_.size() - 1) + ")");
    }
    const auto* unit = ver.analysis.report.find(verdict.unit_id);
    if (!unit) throw Error(ErrorKind::not_found, "unknown unit '" + verdict.unit_id + "'");
    if (!unit->flagged) {
      throw Error(ErrorKind::conflict, "unit '" + verdict.unit_id + "' is not flagged in version " +
                                           std::to_string(v));
    }
    for (const auto& e : audit_) {
      if (e.version == v && e.verdict.unit_id == verdict.unit_id) {
        throw Error(ErrorKind::conflict, "unit '" + verdict.unit_id + "' already has a verdict in version " +
                                             std::to_string(v));
      }
    }
    AuditEntry entry{audit_.size(), v, verdict, std::nullopt};
    if (verdict.decision != Decision::representative) {
      Dataset edited = apply_verdict(ver.dataset, verdict, ver.analysis.report.unit_kind);
      push_version(std::move(edited), v, entry.seq);
      entry.created_version = versions_.size() - 1;
    }
    audit_.push_back(entry);
    return {entry.seq, entry.created_version};
  }

  /// Rebuilds the latest dataset from version 0 and the audit log.
  Dataset replay() const {
    std::shared_lock lock(mutex_);
    Dataset ds = versions_.front().dataset;
    for (const auto& e : audit_) {
      if (!e.created_version) continue;
      ds = apply_verdict(ds, e.verdict, versions_[e.version].analysis.report.unit_kind);
    }
    return ds;
  }

 private:
  const DatasetVersion& at(std::size_t v) const {
    if (v >= versions_.size()) throw Error(ErrorKind::not_found, "unknown version " + std::to_string(v));
    return versions_[v];
  }

  void push_version(Dataset ds, std::optional<std::size_t> parent, std::optional<std::size_t> created_by) {
    DatasetVersion ver;
    ver.id = versions_.size();
    ver.parent = parent;
    ver.created_by = created_by;
    ver.fingerprint = fingerprint(ds);
    ver.analysis = analyze(ds, config_, ctx_);
    ver.analysis.kernel.reset();  // not needed after the report is built
    ver.dataset = std::move(ds);
    versions_.push_back(std::move(ver));
  }

  std::string validation_locked(std::size_t v) const {
    const auto& flagged = versions_[v].analysis.diagnosis.flagged;
    if (flagged.empty()) return "none";
    for (const auto& id : flagged) {
      const bool ok = std::any_of(audit_.begin(), audit_.end(), [&](const AuditEntry& e) {
        return e.version == v && e.verdict.unit_id == id && e.verdict.decision == Decision::representative;
      });
      if (!ok) return "pending";
    }
    return "expert-validated";
  }

  Json verdict_json(std::size_t v, const std::string& unit) const {
    for (const auto& e : audit_) {
      if (e.version == v && e.verdict.unit_id == unit) {
        Json j = to_json(e);
        if (e.verdict.decision == Decision::representative) j["annotation"] = "validated";
        return j;
      }
    }
    return nullptr;
  }

  static Json unit_fields(const DatasetVersion& ver, const std::string& unit) {
    const auto* u = ver.analysis.report.find(unit);
    Json j = u ? to_json(*u, ver.analysis.report.unit_kind) : Json::object();
    j.erase("id");
    return j;
  }

  static Json record_with_report(const DatasetVersion& ver, const std::string& id) {
    Json j = to_json_record(ver.dataset[ver.dataset.index_of(id)]);
    const auto& report = ver.analysis.report;
    const std::string unit =
        report.unit_kind == UnitKind::transition ? id : ver.dataset[ver.dataset.index_of(id)].trajectory_id;
    const Json fields = unit_fields(ver, unit);
    for (const auto& [k, value] : fields.items()) j[k] = value;
    return j;
  }

  static Json context_json(const DatasetVersion& ver, const std::string& id) {
    Json list = Json::array();
    for (const auto& c : context_window(ver.dataset, id)) {
      Json j = record_with_report(ver, c);
      j["focus"] = c == id;
      list.push_back(std::move(j));
    }
    return list;
  }

  AnalysisConfig config_;
  AnalysisContext ctx_;
  mutable std::shared_mutex mutex_;
  std::vector<DatasetVersion> versions_;
  std::vector<AuditEntry> audit_;
};

}  // namespace opeinf
