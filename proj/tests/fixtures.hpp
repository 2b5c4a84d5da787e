#pragma once

// Shared dataset builders for the unit tests and the acceptance binary.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "opeinf/opeinf.hpp"

namespace fixtures {

using opeinf::Dataset;
using opeinf::StateVector;
using opeinf::Transition;

inline Transition step(std::string id, std::string traj, std::size_t k, StateVector x, int a, double r,
                       StateVector xn, bool terminal = false,
                       std::optional<double> pb = std::nullopt) {
  Transition t;
  t.id = std::move(id);
  t.trajectory_id = std::move(traj);
  t.step_index = k;
  t.state = std::move(x);
  t.action = a;
  t.reward = r;
  t.next_state = std::move(xn);
  t.behavior_prob = pb;
  t.is_initial = k == 0;
  t.is_terminal = terminal;
  return t;
}

/// Three transitions 0 -> 1 -> 2 -> 3 with reward 1 on the last step.
inline Dataset chain3(bool terminal = true) {
  return Dataset({step("t1", "traj", 0, {0}, 0, 0, {1}), step("t2", "traj", 1, {1}, 0, 0, {2}),
                  step("t3", "traj", 2, {2}, 0, 1, {3}, terminal)});
}

inline opeinf::AnalysisConfig chain3_config() {
  opeinf::AnalysisConfig c;
  c.gamma = 1.0;
  c.radius = 0.5;
  c.horizon = 3;
  return c;
}

/// `copies` identical CHAIN3 trajectories (ids suffixed by copy number).
inline Dataset chain3_copies(std::size_t copies) {
  std::vector<Transition> out;
  const Dataset base = chain3();
  for (std::size_t c = 0; c < copies; ++c) {
    for (auto t : base.transitions()) {
      t.id += "_" + std::to_string(c);
      t.trajectory_id += "_" + std::to_string(c);
      out.push_back(std::move(t));
    }
  }
  return Dataset(std::move(out));
}

/// Trajectories of random length with two actions and random behavior
/// probabilities; evaluated against the constant policy 0.
inline Dataset random_is_dataset(std::uint64_t seed, std::size_t max_trajectories = 50,
                                 std::size_t max_horizon = 10, double match_prob = 0.7) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> n_traj(2, max_trajectories);
  std::uniform_int_distribution<std::size_t> len(1, max_horizon);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  const std::size_t n = n_traj(rng);
  std::vector<Transition> out;
  for (std::size_t m = 0; m < n; ++m) {
    const std::string traj = "T" + std::to_string(m);
    // The first trajectory is on-policy and of full length so that every
    // weighted normalizer is positive on the full dataset.
    const std::size_t L = m == 0 ? max_horizon : len(rng);
    double x = noise(rng);
    for (std::size_t k = 0; k < L; ++k) {
      const int a = m == 0 || unit(rng) < match_prob ? 0 : 1;
      const double pb = 0.1 + 0.9 * unit(rng);
      const double xn = x + 0.5 * noise(rng);
      out.push_back(step(traj + "_" + std::to_string(k), traj, k, {x}, a, noise(rng), {xn}, k + 1 == L, pb));
      x = xn;
    }
  }
  return Dataset(std::move(out));
}

inline opeinf::ValueBaselines random_baselines(std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  const double a = coef(rng), b = coef(rng), c = coef(rng), d = coef(rng);
  return {[=](std::span<const double> s, int act) { return a * std::sin(s[0]) + b * act + c; },
          [=](std::span<const double> s) { return d * std::cos(s[0]) + c; }};
}

/// Random trajectories in R^d with actions in {0, .., A-1}; the features
/// [x, onehot(a)] give a well-conditioned linear model for d + A <= 8.
inline Dataset random_linear_dataset(std::uint64_t seed, std::size_t n_target, std::size_t d,
                                     std::size_t actions) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_int_distribution<int> act(0, static_cast<int>(actions) - 1);
  std::uniform_int_distribution<std::size_t> len(2, 8);
  std::vector<Transition> out;
  std::size_t m = 0;
  while (out.size() < n_target) {
    const std::string traj = "L" + std::to_string(m++);
    const std::size_t L = std::min(len(rng), n_target - out.size());
    StateVector x(d);
    for (auto& v : x) v = noise(rng);
    for (std::size_t k = 0; k < L; ++k) {
      StateVector xn(d);
      for (std::size_t c = 0; c < d; ++c) xn[c] = 0.8 * x[c] + 0.5 * noise(rng);
      out.push_back(step(traj + "_" + std::to_string(k), traj, k, x, act(rng), noise(rng), xn, k + 1 == L));
      x = xn;
    }
  }
  return Dataset(std::move(out));
}

/// Short random walks on a line with small spacing so that neighborhoods
/// overlap; all actions 0 except a fraction of off-policy first steps.
inline Dataset random_overlap_dataset(std::uint64_t seed, std::size_t n_target, double step_sd = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> len(2, 6);
  std::vector<Transition> out;
  std::size_t m = 0;
  while (out.size() < n_target) {
    const std::string traj = "R" + std::to_string(m++);
    const std::size_t L = std::min(len(rng), n_target - out.size());
    double x = 0.3 * noise(rng);
    for (std::size_t k = 0; k < L; ++k) {
      const double xn = x + 0.5 + step_sd * noise(rng);
      const double r = std::exp(-(x - 2.0) * (x - 2.0)) + 0.1 * noise(rng);
      out.push_back(step(traj + "_" + std::to_string(k), traj, k, {x}, 0, r, {xn}, k + 1 == L));
      x = xn;
    }
  }
  return Dataset(std::move(out));
}

/// Disjoint-neighborhood tree: a root trajectory plus branches that start
/// from distinct states, every state isolated under radius 0.5.
inline Dataset disjoint_tree(std::uint64_t seed, std::size_t branches) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> reward(-1.0, 2.0);
  std::uniform_int_distribution<std::size_t> len(1, 5);
  std::vector<Transition> out;
  for (std::size_t b = 0; b < branches; ++b) {
    const std::string traj = "B" + std::to_string(b);
    const double base = 100.0 * static_cast<double>(b);
    const std::size_t L = len(rng);
    for (std::size_t k = 0; k < L; ++k) {
      const double x = base + static_cast<double>(k);
      const bool last = k + 1 == L;
      // Branches 1 mod 4 end at a non-terminal unvisited state; branches
      // 3 mod 4 merge into the root state of branch 0.
      const double xn = last && b % 4 == 3 ? 0.0 : x + 1.0;
      out.push_back(step(traj + "_" + std::to_string(k), traj, k, {x}, 0, reward(rng), {xn},
                         last && b % 2 == 0));
    }
  }
  return Dataset(std::move(out));
}

/// Two- and three-step trajectories whose steps pile up around integer
/// positions, so that later steps have many dependents. Rewards lie in
/// [0, 1]; with gamma 0.5 the value is bounded by 1.75.
inline Dataset clustered_dataset(std::uint64_t seed, std::size_t n_target = 100) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Transition> out;
  std::size_t m = 0;
  while (out.size() < n_target) {
    const std::string traj = "C" + std::to_string(m++);
    const std::size_t L = 2 + rng() % 2;
    double x = 0.2 * unit(rng);
    for (std::size_t k = 0; k < L && out.size() < n_target; ++k) {
      const double xn = x + 1.0 + 0.6 * (unit(rng) - 0.5);
      const double r = unit(rng) < 0.05 ? 1.0 : 0.5 * unit(rng);
      out.push_back(step(traj + "_" + std::to_string(k), traj, k, {x}, 0, r, {xn}, k + 1 == L));
      x = xn;
    }
  }
  return Dataset(std::move(out));
}

}  // namespace fixtures
