#pragma once

// Domain types shared by every estimator: transitions, datasets, evaluation
// policies, the state-action metric and the analysis configuration.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace opeinf {

using ActionId = int;
using StateVector = std::vector<double>;
using Json = nlohmann::ordered_json;

enum class ErrorKind {
  parse,
  invariant,
  precondition,
  not_found,
  unidentifiable,
  undefined,
  conflict,  // request clashes with the current session state
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct Transition {
  std::string id;
  std::string trajectory_id;
  std::size_t step_index = 0;
  StateVector state;
  ActionId action = 0;
  double reward = 0.0;
  StateVector next_state;
  std::optional<double> behavior_prob;
  bool is_initial = false;
  bool is_terminal = false;

  bool operator==(const Transition&) const = default;
};

/// Immutable, validated collection of transitions with trajectory linkage.
///
/// Construction checks id uniqueness, a common state dimension and the
/// behavior-probability range. Trajectory structure (consecutive step
/// indices, initial flags only at step 0) is checked by
/// validate_trajectories(), which load_dataset() and the generators call;
/// leave-one-out copies produced by without() skip it because removing a
/// mid-trajectory transition legitimately leaves a gap.
class Dataset {
 public:
  struct Trajectory {
    std::string id;
    std::vector<std::size_t> members;  // indices, ordered by step_index
  };

  Dataset() = default;

  explicit Dataset(std::vector<Transition> transitions)
      : transitions_(std::move(transitions)) {
    if (transitions_.empty()) {
      throw Error(ErrorKind::invariant, "dataset must contain at least one transition");
    }
    dim_ = transitions_.front().state.size();
    std::unordered_map<std::string, std::size_t> traj_pos;
    for (std::size_t n = 0; n < transitions_.size(); ++n) {
      const Transition& t = transitions_[n];
      if (t.state.size() != dim_ || t.next_state.size() != dim_) {
        throw Error(ErrorKind::invariant,
                    "state dimension mismatch for transition '" + t.id + "' (expected " +
                        std::to_string(dim_) + ")");
      }
      if (t.action < 0) {
        throw Error(ErrorKind::invariant, "negative action for transition '" + t.id + "'");
      }
      if (t.behavior_prob && !(*t.behavior_prob > 0.0 && *t.behavior_prob <= 1.0)) {
        throw Error(ErrorKind::invariant,
                    "behavior_prob outside (0,1] for transition '" + t.id + "'");
      }
      if (!index_.emplace(t.id, n).second) {
        throw Error(ErrorKind::invariant, "duplicate transition id '" + t.id + "'");
      }
      action_count_ = std::max(action_count_, static_cast<std::size_t>(t.action) + 1);
      auto [it, inserted] = traj_pos.emplace(t.trajectory_id, trajectories_.size());
      if (inserted) trajectories_.push_back({t.trajectory_id, {}});
      trajectories_[it->second].members.push_back(n);
    }
    for (auto& traj : trajectories_) {
      std::stable_sort(traj.members.begin(), traj.members.end(),
                       [this](std::size_t a, std::size_t b) {
                         return transitions_[a].step_index < transitions_[b].step_index;
                       });
      traj_index_.emplace(traj.id, &traj - trajectories_.data());
    }
  }


  std::size_t size() const noexcept { return transitions_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t action_count() const noexcept { return action_count_; }

  const std::vector<Transition>& transitions() const noexcept { return transitions_; }
  const Transition& operator[](std::size_t n) const { return transitions_[n]; }

  const std::vector<Trajectory>& trajectories() const noexcept { return trajectories_; }

  bool contains(const std::string& id) const { return index_.count(id) != 0; }

  std::size_t index_of(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) {
      throw Error(ErrorKind::not_found, "unknown transition id '" + id + "'");
    }
    return it->second;
  }

  const Trajectory& trajectory(const std::string& trajectory_id) const {
    auto it = traj_index_.find(trajectory_id);
    if (it == traj_index_.end()) {
      throw Error(ErrorKind::not_found, "unknown trajectory id '" + trajectory_id + "'");
    }
    return trajectories_[it->second];
  }

  bool has_trajectory(const std::string& trajectory_id) const {
    return traj_index_.count(trajectory_id) != 0;
  }

  std::size_t longest_trajectory() const {
    std::size_t best = 0;
    for (const auto& t : trajectories_) best = std::max(best, t.members.size());
    return best;
  }

  std::vector<double> rewards() const {
    std::vector<double> r(transitions_.size());
    for (std::size_t n = 0; n < r.size(); ++n) r[n] = transitions_[n].reward;
    return r;
  }

  /// Throws if step indices are not 0,1,2,... within a trajectory or if an
  /// initial flag sits anywhere other than step 0.
  void validate_trajectories() const {
    for (const auto& traj : trajectories_) {
      for (std::size_t s = 0; s < traj.members.size(); ++s) {
        const Transition& t = transitions_[traj.members[s]];
        if (t.step_index != s) {
          throw Error(ErrorKind::invariant, "non-consecutive step_index in trajectory '" +
                                                traj.id + "' at transition '" + t.id + "'");
        }
        if (t.is_initial && s != 0) {
          throw Error(ErrorKind::invariant,
                      "is_initial set on non-initial step for transition '" + t.id + "'");
        }
      }
    }
  }

  Dataset without(std::size_t n) const {
    std::vector<Transition> rest;
    rest.reserve(transitions_.size() - 1);
    for (std::size_t m = 0; m < transitions_.size(); ++m) {
      if (m != n) rest.push_back(transitions_[m]);
    }
    return Dataset(std::move(rest));
  }

  Dataset without_trajectory(const std::string& trajectory_id) const {
    std::vector<Transition> rest;
    for (const auto& t : transitions_) {
      if (t.trajectory_id != trajectory_id) rest.push_back(t);
    }
    return Dataset(std::move(rest));
  }

 private:
  std::vector<Transition> transitions_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<Trajectory> trajectories_;
  std::unordered_map<std::string, std::size_t> traj_index_;
  std::size_t dim_ = 0;
  std::size_t action_count_ = 0;
};

// ---------------------------------------------------------------------------
// Record encoding

inline Json to_json_record(const Transition& t) {
  Json j;
  j["id"] = t.id;
  j["trajectory_id"] = t.trajectory_id;
  j["step_index"] = t.step_index;
  j["state"] = t.state;
  j["action"] = t.action;
  j["reward"] = t.reward;
  j["next_state"] = t.next_state;
  if (t.behavior_prob) j["behavior_prob"] = *t.behavior_prob;
  j["is_initial"] = t.is_initial;
  j["is_terminal"] = t.is_terminal;
  return j;
}

namespace detail {

inline std::string id_field(const Json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  throw Error(ErrorKind::parse, std::string("field '") + key + "' must be a string or integer");
}

}  // namespace detail

inline Transition transition_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorKind::parse, "record is not a JSON object");
  Transition t;
  try {
    t.id = detail::id_field(j, "id");
    t.trajectory_id = detail::id_field(j, "trajectory_id");
    const auto step = j.at("step_index").get<long long>();
    if (step < 0) throw Error(ErrorKind::parse, "step_index must be nonnegative");
    t.step_index = static_cast<std::size_t>(step);
    t.state = j.at("state").get<StateVector>();
    t.action = j.at("action").get<ActionId>();
    t.reward = j.at("reward").get<double>();
    t.next_state = j.at("next_state").get<StateVector>();
    if (auto it = j.find("behavior_prob"); it != j.end() && !it->is_null()) {
      t.behavior_prob = it->get<double>();
    }
    t.is_initial = j.at("is_initial").get<bool>();
    t.is_terminal = j.at("is_terminal").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, e.what());
  }
  return t;
}

inline Dataset parse_dataset(std::istream& in) {
  std::vector<Transition> records;
  std::unordered_map<std::string, std::size_t> seen;
  std::optional<std::size_t> dim;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    Transition t;
    try {
      t = transition_from_json(Json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::parse, where + e.what());
    } catch (const Error& e) {
      throw Error(ErrorKind::parse, where + e.what());
    }
    if (!dim) dim = t.state.size();
    if (t.state.size() != *dim || t.next_state.size() != *dim) {
      throw Error(ErrorKind::invariant, where + "dimension mismatch for transition '" + t.id +
                                            "' (expected " + std::to_string(*dim) + ")");
    }
    if (!seen.emplace(t.id, line_no).second) {
      throw Error(ErrorKind::invariant, where + "duplicate transition id '" + t.id + "'");
    }
    records.push_back(std::move(t));
  }
  if (records.empty()) throw Error(ErrorKind::invariant, "dataset file contains no records");
  Dataset ds(std::move(records));
  ds.validate_trajectories();
  return ds;
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::not_found, "cannot open dataset file '" + path + "'");
  return parse_dataset(in);
}

inline void write_dataset(std::ostream& out, const Dataset& ds) {
  for (const auto& t : ds.transitions()) out << to_json_record(t).dump() << '\n';
}

inline void save_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::not_found, "cannot write dataset file '" + path + "'");
  write_dataset(out, ds);
}

// ---------------------------------------------------------------------------
// Evaluation policy

/// Deterministic map from state to action. Stochastic evaluation policies
/// are not representable.
class EvaluationPolicy {
 public:
  using Fn = std::function<ActionId(std::span<const double>)>;

  EvaluationPolicy(Fn fn, std::string descriptor)
      : fn_(std::make_shared<Fn>(std::move(fn))), descriptor_(std::move(descriptor)) {}

  ActionId operator()(std::span<const double> state) const { return (*fn_)(state); }

  const std::string& descriptor() const noexcept { return descriptor_; }

  static EvaluationPolicy constant(ActionId a) {
    return EvaluationPolicy([a](std::span<const double>) { return a; },
                            "constant:" + std::to_string(a));
  }

  /// Exact-match lookup on state vectors; unmatched states get `fallback`.
  static EvaluationPolicy table(std::map<StateVector, ActionId> entries, ActionId fallback) {
    auto shared = std::make_shared<const std::map<StateVector, ActionId>>(std::move(entries));
    return EvaluationPolicy(
        [shared, fallback](std::span<const double> s) {
          auto it = shared->find(StateVector(s.begin(), s.end()));
          return it == shared->end() ? fallback : it->second;
        },
        "table");
  }

  /// Piecewise-constant rule on one state component: action `below` while
  /// state[dim] < cut, `above` otherwise.
  static EvaluationPolicy threshold(std::size_t dim, double cut, ActionId below, ActionId above) {
    std::ostringstream desc;
    desc << "threshold:" << dim << ':' << cut << ':' << below << ':' << above;
    return EvaluationPolicy(
        [=](std::span<const double> s) { return s[dim] < cut ? below : above; }, desc.str());
  }

  /// Majority vote of the actions of the k nearest reference states
  /// (Euclidean). Ties in the vote go to the smaller action id, ties in
  /// distance to the earlier reference.
  static EvaluationPolicy nearest_neighbor_vote(std::vector<StateVector> states,
                                                std::vector<ActionId> actions, std::size_t k) {
    if (states.empty() || states.size() != actions.size() || k == 0) {
      throw Error(ErrorKind::precondition, "nearest-neighbor policy needs matching nonempty data");
    }
    struct Ref {
      std::vector<StateVector> states;
      std::vector<ActionId> actions;
      ActionId max_action = 0;
    };
    auto ref = std::make_shared<Ref>();
    ref->states = std::move(states);
    ref->actions = std::move(actions);
    ref->max_action = *std::max_element(ref->actions.begin(), ref->actions.end());
    const std::size_t kk = std::min(k, ref->states.size());
    return EvaluationPolicy(
        [ref, kk](std::span<const double> s) {
          std::vector<std::pair<double, std::size_t>> d(ref->states.size());
          for (std::size_t n = 0; n < ref->states.size(); ++n) {
            double acc = 0.0;
            for (std::size_t c = 0; c < s.size(); ++c) {
              const double diff = s[c] - ref->states[n][c];
              acc += diff * diff;
            }
            d[n] = {acc, n};
          }
          std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(kk), d.end());
          std::vector<std::size_t> votes(static_cast<std::size_t>(ref->max_action) + 1, 0);
          for (std::size_t n = 0; n < kk; ++n) ++votes[static_cast<std::size_t>(ref->actions[d[n].second])];
          return static_cast<ActionId>(std::max_element(votes.begin(), votes.end()) - votes.begin());
        },
        "knn:" + std::to_string(k));
  }

  static EvaluationPolicy nearest_neighbor_vote(const Dataset& ds, std::size_t k) {
    std::vector<StateVector> states;
    std::vector<ActionId> actions;
    for (const auto& t : ds.transitions()) {
      states.push_back(t.state);
      actions.push_back(t.action);
    }
    return nearest_neighbor_vote(std::move(states), std::move(actions), k);
  }

 private:
  std::shared_ptr<Fn> fn_;
  std::string descriptor_;
};

/// Parses "constant:A", "threshold:DIM:CUT:BELOW:ABOVE" or "knn:K" (vote of
/// the K nearest states of `ds`).
inline EvaluationPolicy parse_policy(const std::string& spec, const Dataset& ds) {
  std::vector<std::string> parts;
  std::stringstream in(spec);
  for (std::string part; std::getline(in, part, ':');) parts.push_back(part);
  const auto bad = [&] { return Error(ErrorKind::precondition, "cannot parse policy '" + spec + "'"); };
  try {
    if (parts.size() == 2 && parts[0] == "constant") return EvaluationPolicy::constant(std::stoi(parts[1]));
    if (parts.size() == 2 && parts[0] == "knn") {
      return EvaluationPolicy::nearest_neighbor_vote(ds, std::stoul(parts[1]));
    }
    if (parts.size() == 5 && parts[0] == "threshold") {
      const auto dim = std::stoul(parts[1]);
      if (dim >= ds.dim()) throw Error(ErrorKind::precondition, "policy dimension out of range in '" + spec + "'");
      return EvaluationPolicy::threshold(dim, std::stod(parts[2]), std::stoi(parts[3]), std::stoi(parts[4]));
    }
  } catch (const std::logic_error&) {
    throw bad();
  }
  throw bad();
}

// ---------------------------------------------------------------------------
// Metric

/// Weighted Euclidean distance over states; +inf across different actions.
class StateActionMetric {
 public:
  StateActionMetric() = default;
  explicit StateActionMetric(std::vector<double> weights) : weights_(std::move(weights)) {
    for (double w : weights_) {
      if (!(w >= 0.0) || !std::isfinite(w)) {
        throw Error(ErrorKind::precondition, "metric weights must be finite and nonnegative");
      }
    }
  }

  /// Unit weights for dimension d.
  static StateActionMetric euclidean(std::size_t d) {
    return StateActionMetric(std::vector<double>(d, 1.0));
  }

  const std::vector<double>& weights() const noexcept { return weights_; }

  double weight(std::size_t c) const { return weights_.empty() ? 1.0 : weights_[c]; }

  double state_distance(std::span<const double> u, std::span<const double> v) const {
    double acc = 0.0;
    for (std::size_t c = 0; c < u.size(); ++c) {
      const double diff = u[c] - v[c];
      acc += weight(c) * diff * diff;
    }
    return std::sqrt(acc);
  }

  double operator()(std::span<const double> u, ActionId a, std::span<const double> v,
                    ActionId b) const {
    if (a != b) return std::numeric_limits<double>::infinity();
    return state_distance(u, v);
  }

 private:
  std::vector<double> weights_;
};

// ---------------------------------------------------------------------------
// Configuration

enum class EstimatorKind { kernel_fqe, linear_fqe, is, wis, pdis, dr, wdr };

inline const char* to_string(EstimatorKind e) {
  switch (e) {
    case EstimatorKind::kernel_fqe: return "kernel-fqe";
    case EstimatorKind::linear_fqe: return "linear-fqe";
    case EstimatorKind::is: return "is";
    case EstimatorKind::wis: return "wis";
    case EstimatorKind::pdis: return "pdis";
    case EstimatorKind::dr: return "dr";
    case EstimatorKind::wdr: return "wdr";
  }
  return "?";
}

inline EstimatorKind parse_estimator(const std::string& s) {
  for (auto e : {EstimatorKind::kernel_fqe, EstimatorKind::linear_fqe, EstimatorKind::is,
                 EstimatorKind::wis, EstimatorKind::pdis, EstimatorKind::dr, EstimatorKind::wdr}) {
    if (s == to_string(e)) return e;
  }
  throw Error(ErrorKind::precondition, "unknown estimator '" + s + "'");
}

inline bool is_trajectory_estimator(EstimatorKind e) {
  return e != EstimatorKind::kernel_fqe && e != EstimatorKind::linear_fqe;
}

/// How total influence treats a removed unit that is itself in D0*.
enum class SelfRemoval {
  shrink_initial_set,  // v_-j averages over D0* \ {j}; matches the oracle
  fixed_initial_set,   // literal average of I_ij over the full D0*, I_jj := 0
};

struct AnalysisConfig {
  double gamma = 1.0;
  double radius = 0.5;
  std::optional<std::size_t> horizon;  // unset: longest trajectory
  double influence_threshold = 0.05;
  std::optional<double> v_max;
  EstimatorKind estimator = EstimatorKind::kernel_fqe;
  SelfRemoval self_removal = SelfRemoval::shrink_initial_set;
  double ridge = 0.0;  // linear FQE only

  void validate() const {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw Error(ErrorKind::precondition, "gamma must lie in [0,1]");
    if (!(radius > 0.0)) throw Error(ErrorKind::precondition, "radius must be positive");
    if (horizon && *horizon < 1) throw Error(ErrorKind::precondition, "horizon must be >= 1");
    if (!(influence_threshold > 0.0)) {
      throw Error(ErrorKind::precondition, "influence threshold must be positive");
    }
    if (v_max && !(*v_max > 0.0)) throw Error(ErrorKind::precondition, "v_max must be positive");
    if (ridge < 0.0) throw Error(ErrorKind::precondition, "ridge must be nonnegative");
  }

  std::size_t resolved_horizon(const Dataset& ds) const {
    return horizon ? *horizon : std::max<std::size_t>(1, ds.longest_trajectory());
  }
};

inline Json to_json(const AnalysisConfig& c) {
  Json j;
  j["gamma"] = c.gamma;
  j["radius"] = c.radius;
  j["horizon"] = c.horizon ? Json(*c.horizon) : Json(nullptr);
  j["influence_threshold"] = c.influence_threshold;
  j["v_max"] = c.v_max ? Json(*c.v_max) : Json(nullptr);
  j["estimator"] = to_string(c.estimator);
  j["self_removal"] =
      c.self_removal == SelfRemoval::shrink_initial_set ? "shrink-initial-set" : "fixed-initial-set";
  j["ridge"] = c.ridge;
  return j;
}

// ---------------------------------------------------------------------------

/// D0*: initial transitions whose observed action matches the policy.
inline std::vector<std::size_t> initial_eval_set(const Dataset& ds, const EvaluationPolicy& policy) {
  std::vector<std::size_t> out;
  for (std::size_t n = 0; n < ds.size(); ++n) {
    const Transition& t = ds[n];
    if (t.is_initial && t.action == policy(t.state)) out.push_back(n);
  }
  return out;
}

inline std::vector<std::string> initial_eval_ids(const Dataset& ds, const EvaluationPolicy& policy) {
  std::vector<std::string> ids;
  for (std::size_t n : initial_eval_set(ds, policy)) ids.push_back(ds[n].id);
  return ids;
}

}  // namespace opeinf
