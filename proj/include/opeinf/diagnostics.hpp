#pragma once

// Three-way decision on an influence report (reliable / needs expert review
// / unevaluatable) and collapsing of flagged runs so that an expert sees
// only the last transition of each consecutive flagged sequence.

#include <algorithm>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "opeinf/influence_report.hpp"
#include "opeinf/kernel_fqe.hpp"

namespace opeinf {

enum class Outcome { Reliable, NeedsExpertReview, Unevaluatable };

inline const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::Reliable: return "Reliable";
    case Outcome::NeedsExpertReview: return "NeedsExpertReview";
    case Outcome::Unevaluatable: return "Unevaluatable";
  }
  return "?";
}

enum class CollapseMode {
  syntactic,  // adjacent flagged step indices in one trajectory
  semantic,   // additionally require the later step to neighbor the earlier one's (x', pi_e(x'))
};

struct PresentationEntry {
  std::string presented;
  std::vector<std::string> covered;
  double score = 0.0;
};

struct Diagnosis {
  Outcome outcome = Outcome::Reliable;
  std::vector<std::string> flagged;    // descending score
  std::vector<std::string> dead_ends;
  std::vector<PresentationEntry> presentation;
};

namespace detail {

/// Flagged ids ordered by descending score, ties by (trajectory, step).
inline std::vector<std::string> ordered_flags(const InfluenceReport& report, const Dataset* ds) {
  struct Row {
    double score;
    std::string traj;
    std::size_t step;
    std::string id;
  };
  std::vector<Row> rows;
  for (const auto& u : report.units) {
    if (!u.flagged) continue;
    Row r{report.score(u), u.id, 0, u.id};
    if (ds && report.unit_kind == UnitKind::transition) {
      const Transition& t = (*ds)[ds->index_of(u.id)];
      r.traj = t.trajectory_id;
      r.step = t.step_index;
    }
    rows.push_back(std::move(r));
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.score != b.score) return a.score > b.score;
    return std::tie(a.traj, a.step) < std::tie(b.traj, b.step);
  });
  std::vector<std::string> out;
  for (auto& r : rows) out.push_back(std::move(r.id));
  return out;
}

}  // namespace detail

/// Groups flagged transitions by trajectory; each maximal run of consecutive
/// step indices is presented by its last member and covers the others.
/// Entries are ordered by the presented member's score.
inline std::vector<PresentationEntry> collapse_sequences(
    const std::vector<std::string>& flagged, const Dataset& ds,
    const std::map<std::string, double>& scores = {}, CollapseMode mode = CollapseMode::syntactic,
    const NeighborGraph* graph = nullptr) {
  if (mode == CollapseMode::semantic && graph == nullptr) {
    throw Error(ErrorKind::precondition, "semantic collapsing needs the neighbor graph");
  }
  std::map<std::string, std::vector<std::size_t>> by_traj;
  for (const auto& id : flagged) by_traj[ds[ds.index_of(id)].trajectory_id].push_back(ds.index_of(id));

  std::vector<PresentationEntry> out;
  for (auto& [traj, members] : by_traj) {
    std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
      return ds[a].step_index < ds[b].step_index;
    });
    std::vector<std::size_t> run;
    auto flush = [&] {
      if (run.empty()) return;
      PresentationEntry e;
      e.presented = ds[run.back()].id;
      for (std::size_t k = 0; k + 1 < run.size(); ++k) e.covered.push_back(ds[run[k]].id);
      if (auto it = scores.find(e.presented); it != scores.end()) e.score = it->second;
      out.push_back(std::move(e));
      run.clear();
    };
    for (std::size_t m : members) {
      bool extends = !run.empty() && ds[m].step_index == ds[run.back()].step_index + 1;
      if (extends && mode == CollapseMode::semantic) {
        extends = graph->M_prime.coeff(static_cast<Eigen::Index>(run.back()),
                                       static_cast<Eigen::Index>(m)) != 0.0;
      }
      if (!extends) flush();
      run.push_back(m);
    }
    flush();
  }
  std::stable_sort(out.begin(), out.end(), [&](const PresentationEntry& a, const PresentationEntry& b) {
    if (a.score != b.score) return a.score > b.score;
    const Transition& ta = ds[ds.index_of(a.presented)];
    const Transition& tb = ds[ds.index_of(b.presented)];
    return std::tie(ta.trajectory_id, ta.step_index) < std::tie(tb.trajectory_id, tb.step_index);
  });
  return out;
}

inline Diagnosis diagnose(const InfluenceReport& report, const Dataset& ds,
                          CollapseMode mode = CollapseMode::syntactic,
                          const NeighborGraph* graph = nullptr) {
  Diagnosis d;
  d.flagged = detail::ordered_flags(report, report.unit_kind == UnitKind::transition ? &ds : nullptr);
  std::map<std::string, double> scores;
  for (const auto& u : report.units) {
    if (u.flagged) scores[u.id] = report.score(u);
  }
  for (const auto& id : d.flagged) {
    const UnitInfluence* u = report.find(id);
    if (u && u->dead_end) d.dead_ends.push_back(id);
  }
  if (report.unit_kind == UnitKind::trajectory) {
    for (const auto& id : d.flagged) d.presentation.push_back({id, {}, scores[id]});
  } else {
    d.presentation = collapse_sequences(d.flagged, ds, scores, mode, graph);
  }
  if (!d.dead_ends.empty()) {
    d.outcome = Outcome::Unevaluatable;
  } else if (!d.flagged.empty()) {
    d.outcome = Outcome::NeedsExpertReview;
  }
  return d;
}

/// Ids of the same trajectory within +-radius steps of `id`, in step order.
inline std::vector<std::string> context_window(const Dataset& ds, const std::string& id,
                                               std::size_t radius = 2) {
  const Transition& t = ds[ds.index_of(id)];
  std::vector<std::string> out;
  for (std::size_t m : ds.trajectory(t.trajectory_id).members) {
    const Transition& o = ds[m];
    const std::size_t lo = t.step_index >= radius ? t.step_index - radius : 0;
    if (o.step_index >= lo && o.step_index <= t.step_index + radius) out.push_back(o.id);
  }
  return out;
}

inline Json to_json(const Diagnosis& d, const Dataset* ds, UnitKind kind) {
  Json j;
  j["outcome"] = to_string(d.outcome);
  j["flagged"] = d.flagged;
  j["dead_ends"] = d.dead_ends;
  Json entries = Json::array();
  for (const auto& e : d.presentation) {
    Json je;
    je["presented"] = e.presented;
    je["covered"] = e.covered;
    je["score"] = e.score;
    if (ds && kind == UnitKind::transition) je["context"] = context_window(*ds, e.presented);
    entries.push_back(std::move(je));
  }
  j["presentation"] = std::move(entries);
  return j;
}

}  // namespace opeinf
