#pragma once

// Synthetic generators: a 2-D navigation task with sparsified regions and a
// tumor-growth surrogate with a chemotherapy action.
//
// All coefficients below are fixtures of this library, not estimates of any
// clinical quantity.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "opeinf/core.hpp"

namespace opeinf {

// ---------------------------------------------------------------------------
// Navigation

struct Box {
  double x0, x1, y0, y1;
  bool contains(double x, double y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
};

struct NavigationConfig {
  std::size_t num_trajectories = 60;
  std::size_t trajectory_length = 14;
  double step_length = 1.0;
  double heading = M_PI / 4.0;
  double heading_noise = 0.25;  // stddev per step, radians

  // Gaussian reward bump
  double reward_x = 9.5, reward_y = 9.5;
  double reward_width = 1.5;
  double reward_amplitude = 1.0;

  // Trajectories that turn away from the bump after `wander_turn_step`
  // steps and drift through region III.
  double wanderer_fraction = 0.2;
  std::size_t wander_turn_step = 3;
  double wander_heading = -M_PI / 6.0;

  Box region_dense{0.3, 3.2, 0.3, 3.2};      // I
  Box region_sparse{4.6, 7.4, 4.6, 7.4};     // II
  Box region_off_path{6.0, 14.0, -6.0, 0.0}; // III
  double keep_dense = 1.0;
  double keep_sparse = 0.1;
  double keep_off_path = 1.0;

  std::uint64_t seed = 0;

  void validate() const {
    for (double p : {keep_dense, keep_sparse, keep_off_path, wanderer_fraction}) {
      if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorKind::precondition, "probabilities must lie in [0,1]");
    }
    if (!(reward_width > 0.0)) throw Error(ErrorKind::precondition, "reward width must be positive");
    if (trajectory_length == 0 || num_trajectories == 0) {
      throw Error(ErrorKind::precondition, "navigation needs at least one step");
    }
  }

  double reward(double x, double y) const {
    const double dx = x - reward_x, dy = y - reward_y;
    return reward_amplitude * std::exp(-(dx * dx + dy * dy) / (2.0 * reward_width * reward_width));
  }

  /// 1, 2, 3 for regions I, II, III; 0 outside all boxes.
  int region(double x, double y) const {
    if (region_dense.contains(x, y)) return 1;
    if (region_sparse.contains(x, y)) return 2;
    if (region_off_path.contains(x, y)) return 3;
    return 0;
  }

  double keep_probability(int region_label) const {
    switch (region_label) {
      case 1: return keep_dense;
      case 2: return keep_sparse;
      case 3: return keep_off_path;
      default: return 1.0;
    }
  }
};

struct NavigationData {
  Dataset dataset;
  std::vector<int> regions;  // per transition, aligned with dataset order
};

/// Dropped transitions split a trajectory; each later piece becomes its own
/// trajectory `<id>.s<k>` that is not initial and restarts step indices.
inline NavigationData generate_navigation(const NavigationConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> heading_noise(0.0, config.heading_noise);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<Transition> out;
  std::vector<int> regions;
  const auto wanderers =
      static_cast<std::size_t>(std::round(config.wanderer_fraction * static_cast<double>(config.num_trajectories)));
  for (std::size_t n = 0; n < config.num_trajectories; ++n) {
    const bool wanders = n >= config.num_trajectories - wanderers;
    const std::string base = "nav" + std::to_string(n);
    std::string traj = base;
    std::size_t segment = 0, step_in_segment = 0;
    bool initial_segment = true;
    double x = 0.0, y = 0.0;
    for (std::size_t k = 0; k < config.trajectory_length; ++k) {
      const double mean_heading =
          wanders && k >= config.wander_turn_step ? config.wander_heading : config.heading;
      const double h = mean_heading + heading_noise(rng);
      const double xn = x + config.step_length * std::cos(h);
      const double yn = y + config.step_length * std::sin(h);
      const int label = config.region(x, y);
      const bool keep = unit(rng) < config.keep_probability(label);
      if (keep) {
        Transition t;
        t.id = base + "_" + std::to_string(k);
        t.trajectory_id = traj;
        t.step_index = step_in_segment++;
        t.state = {x, y};
        t.action = 0;
        t.reward = config.reward(x, y);
        t.next_state = {xn, yn};
        t.behavior_prob = 1.0;
        t.is_initial = initial_segment && t.step_index == 0;
        t.is_terminal = k + 1 == config.trajectory_length;
        out.push_back(std::move(t));
        regions.push_back(label);
      } else if (step_in_segment > 0 || initial_segment) {
        initial_segment = false;
        traj = base + ".s" + std::to_string(++segment);
        step_in_segment = 0;
      }
      x = xn;
      y = yn;
    }
  }
  NavigationData data{Dataset(std::move(out)), std::move(regions)};
  data.dataset.validate_trajectories();
  return data;
}

// ---------------------------------------------------------------------------
// Tumor surrogate
//
// State [tumor size T, drug concentration C, toxicity Z, month m]:
//   C' = decay_C C + a
//   T' = T + growth T (1 - T / capacity) - kill C' T + noise
//   Z' = decay_Z Z + (1 - decay_Z) C'
//   m' = m + 1
// Reward r = 1 - T' / capacity - toxicity_cost Z'.

struct TumorConfig {
  std::size_t num_trajectories = 200;
  std::size_t horizon = 30;
  double epsilon = 0.3;     // behavior: epsilon-greedy around the evaluation policy
  double noise = 0.0;       // stddev of the tumor-size noise
  bool stochastic = false;  // noise is applied only when true

  double initial_size = 2.5;
  double initial_spread = 0.3;  // uniform half-width of T0
  double growth = 0.12;
  double capacity = 10.0;
  double kill = 0.12;
  double decay_C = 0.5;
  double decay_Z = 0.8;
  double toxicity_cost = 0.05;

  std::size_t treat_months = 15;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw Error(ErrorKind::precondition, "epsilon must lie in [0,1]");
    if (!(noise >= 0.0)) throw Error(ErrorKind::precondition, "noise must be nonnegative");
    if (horizon == 0 || num_trajectories == 0) throw Error(ErrorKind::precondition, "empty tumor config");
  }

  struct Step {
    StateVector next;
    double reward;
  };

  /// Deterministic part of one step.
  Step predict(std::span<const double> s, ActionId a) const {
    const double T = s[0], C = s[1], Z = s[2], m = s[3];
    const double C2 = decay_C * C + static_cast<double>(a);
    const double T2 = std::max(0.0, T + growth * T * (1.0 - T / capacity) - kill * C2 * T);
    const double Z2 = decay_Z * Z + (1.0 - decay_Z) * C2;
    return {{T2, C2, Z2, m + 1.0}, 1.0 - T2 / capacity - toxicity_cost * Z2};
  }
};

/// Chemo (action 1) for the first `treat_months` months, none afterwards.
inline EvaluationPolicy tumor_policy(const TumorConfig& config) {
  return EvaluationPolicy::threshold(3, static_cast<double>(config.treat_months) - 0.5, 1, 0);
}

/// Months are kept apart by a large weight on the month channel.
inline StateActionMetric tumor_metric() { return StateActionMetric({1.0, 1.0, 1.0, 100.0}); }

inline Dataset generate_tumor(const TumorConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto pi = tumor_policy(config);
  std::vector<Transition> out;
  out.reserve(config.num_trajectories * config.horizon);
  for (std::size_t n = 0; n < config.num_trajectories; ++n) {
    const std::string traj = "pt" + std::to_string(n);
    StateVector s{config.initial_size + config.initial_spread * (2.0 * unit(rng) - 1.0), 0.0, 0.0, 0.0};
    for (std::size_t k = 0; k < config.horizon; ++k) {
      const ActionId target = pi(s);
      const bool explore = unit(rng) < config.epsilon;
      const ActionId a = explore ? (unit(rng) < 0.5 ? 0 : 1) : target;
      auto step = config.predict(s, a);
      if (config.stochastic && config.noise > 0.0) {
        step.next[0] = std::max(0.0, step.next[0] + config.noise * gauss(rng));
        step.reward = 1.0 - step.next[0] / config.capacity - config.toxicity_cost * step.next[2];
      }
      Transition t;
      t.id = traj + "_" + std::to_string(k);
      t.trajectory_id = traj;
      t.step_index = k;
      t.state = s;
      t.action = a;
      t.reward = step.reward;
      t.next_state = step.next;
      t.behavior_prob = a == target ? 1.0 - config.epsilon / 2.0 : config.epsilon / 2.0;
      t.is_initial = k == 0;
      t.is_terminal = k + 1 == config.horizon;
      out.push_back(std::move(t));
      s = std::move(step.next);
    }
  }
  Dataset ds(std::move(out));
  ds.validate_trajectories();
  return ds;
}

/// True when the observed step is within `tolerance` noise standard
/// deviations of the model prediction (a stand-in for an expert confirming
/// that a flagged transition is physiologically plausible).
inline bool tumor_step_plausible(const TumorConfig& config, const Transition& t, double tolerance = 4.0) {
  const auto step = config.predict(t.state, t.action);
  const double sd = config.stochastic ? config.noise : 0.0;
  const double slack = tolerance * sd + 1e-9;
  if (std::abs(step.next[0] - t.next_state[0]) > slack) return false;
  for (std::size_t c = 1; c < 4; ++c) {
    if (std::abs(step.next[c] - t.next_state[c]) > 1e-9) return false;
  }
  const double r = 1.0 - t.next_state[0] / config.capacity - config.toxicity_cost * t.next_state[2];
  return std::abs(r - t.reward) <= 1e-9;
}

/// Adds `spike` to the reward of `count` distinct transitions drawn from the
/// on-policy prefix of trajectories (every earlier action matched the
/// evaluation policy). Returns the dataset and the ids changed.
inline std::pair<Dataset, std::vector<std::string>> inject_reward_spikes(
    const Dataset& ds, const EvaluationPolicy& pi, std::size_t count, double spike, std::uint64_t seed,
    std::size_t min_step = 1, std::size_t max_step = 8) {
  std::vector<std::size_t> candidates;
  for (const auto& traj : ds.trajectories()) {
    for (std::size_t s = 0; s < traj.members.size(); ++s) {
      const Transition& t = ds[traj.members[s]];
      if (t.action != pi(t.state)) break;
      if (s >= min_step && s <= max_step) candidates.push_back(traj.members[s]);
    }
  }
  if (candidates.size() < count) throw Error(ErrorKind::precondition, "not enough on-policy transitions");
  std::mt19937_64 rng(seed);
  std::shuffle(candidates.begin(), candidates.end(), rng);
  candidates.resize(count);
  std::vector<Transition> ts = ds.transitions();
  std::vector<std::string> ids;
  for (std::size_t n : candidates) {
    ts[n].reward += spike;
    ids.push_back(ts[n].id);
  }
  std::sort(ids.begin(), ids.end());
  return {Dataset(std::move(ts)), std::move(ids)};
}

}  // namespace opeinf
