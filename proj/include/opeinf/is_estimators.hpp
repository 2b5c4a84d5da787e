#pragma once

// Importance-sampling estimators (IS, WIS, PDIS, DR, WDR) and exact
// trajectory-level leave-one-out influence from cached aggregates.
//
// Trajectories shorter than the longest one are padded with absorbing
// steps: ratio 1 (weight carried), zero reward, zero baselines.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "opeinf/core.hpp"
#include "opeinf/influence_report.hpp"

namespace opeinf {

struct ValueBaselines {
  std::function<double(std::span<const double>, ActionId)> q_tilde;
  std::function<double(std::span<const double>)> v_tilde;

  static ValueBaselines zero() {
    return {[](std::span<const double>, ActionId) { return 0.0; },
            [](std::span<const double>) { return 0.0; }};
  }
};

struct TrajectoryWeights {
  struct Trajectory {
    std::string id;
    std::size_t length = 0;
    std::vector<double> ratio;    // rho_t, padded to horizon
    std::vector<double> weight;   // w_{0:t}
    std::vector<double> reward;   // r_t
    std::vector<double> q_tilde;  // q~(x_t, a_t)
    std::vector<double> v_tilde;  // v~(x_t)
    double ret = 0.0;             // g = sum_t gamma^t r_t

    double final_weight() const { return weight.empty() ? 0.0 : weight.back(); }
    /// w_{0:t-1}, with the empty product at t = 0.
    double weight_before(std::size_t t) const { return t == 0 ? 1.0 : weight[t - 1]; }
  };

  double gamma = 1.0;
  std::size_t horizon = 0;  // T: longest trajectory
  bool has_baselines = false;
  std::vector<Trajectory> trajectories;

  // Cached aggregates.
  double W = 0.0;                 // sum_n w_{0:T}
  std::vector<double> W_t;        // sum_n w_{0:t}
  std::vector<double> A, B, Cv;   // per-step weighted means of r, q~, v~
  std::vector<double> per_trajectory_is, per_trajectory_pdis, per_trajectory_dr;
  std::size_t longest = 0, second_longest = 0;

  std::size_t size() const noexcept { return trajectories.size(); }

  /// W_{t-1} with W_{-1} = N.
  double W_before(std::size_t t) const {
    return t == 0 ? static_cast<double>(trajectories.size()) : W_t[t - 1];
  }

  std::size_t index_of(const std::string& trajectory_id) const {
    for (std::size_t n = 0; n < trajectories.size(); ++n) {
      if (trajectories[n].id == trajectory_id) return n;
    }
    throw Error(ErrorKind::not_found, "unknown trajectory id '" + trajectory_id + "'");
  }
};

inline TrajectoryWeights compute_weights(const Dataset& ds, const EvaluationPolicy& policy,
                                         double gamma,
                                         const std::optional<ValueBaselines>& baselines = {}) {
  TrajectoryWeights tw;
  tw.gamma = gamma;
  tw.has_baselines = baselines.has_value();
  tw.horizon = ds.longest_trajectory();
  const std::size_t T = tw.horizon;
  for (const auto& traj : ds.trajectories()) {
    TrajectoryWeights::Trajectory tr;
    tr.id = traj.id;
    tr.length = traj.members.size();
    tr.ratio.assign(T, 1.0);
    tr.weight.assign(T, 0.0);
    tr.reward.assign(T, 0.0);
    tr.q_tilde.assign(T, 0.0);
    tr.v_tilde.assign(T, 0.0);
    double w = 1.0, discount = 1.0;
    for (std::size_t t = 0; t < T; ++t) {
      if (t < tr.length) {
        const Transition& step = ds[traj.members[t]];
        if (!step.behavior_prob) {
          throw Error(ErrorKind::precondition,
                      "missing behavior_prob for transition '" + step.id + "'");
        }
        tr.ratio[t] = step.action == policy(step.state) ? 1.0 / *step.behavior_prob : 0.0;
        tr.reward[t] = step.reward;
        if (baselines) {
          tr.q_tilde[t] = baselines->q_tilde(step.state, step.action);
          tr.v_tilde[t] = baselines->v_tilde(step.state);
        }
        tr.ret += discount * step.reward;
      }
      w *= tr.ratio[t];
      tr.weight[t] = w;
      discount *= gamma;
    }
    tw.trajectories.push_back(std::move(tr));
  }

  const std::size_t N = tw.trajectories.size();
  tw.W_t.assign(T, 0.0);
  tw.A.assign(T, 0.0);
  tw.B.assign(T, 0.0);
  tw.Cv.assign(T, 0.0);
  tw.per_trajectory_is.resize(N);
  tw.per_trajectory_pdis.resize(N);
  tw.per_trajectory_dr.resize(N);
  for (std::size_t n = 0; n < N; ++n) {
    const auto& tr = tw.trajectories[n];
    for (std::size_t t = 0; t < T; ++t) tw.W_t[t] += tr.weight[t];
    tw.W += tr.final_weight();
    double pdis = 0.0, dr = 0.0, discount = 1.0;
    for (std::size_t t = 0; t < T; ++t) {
      pdis += tr.weight[t] * discount * tr.reward[t];
      dr += discount * (tr.weight[t] * tr.reward[t] - tr.weight[t] * tr.q_tilde[t] +
                        tr.weight_before(t) * tr.v_tilde[t]);
      discount *= gamma;
    }
    tw.per_trajectory_is[n] = tr.final_weight() * tr.ret;
    tw.per_trajectory_pdis[n] = pdis;
    tw.per_trajectory_dr[n] = dr;
    if (tr.length >= tw.longest) {
      tw.second_longest = tw.longest;
      tw.longest = tr.length;
    } else if (tr.length > tw.second_longest) {
      tw.second_longest = tr.length;
    }
  }
  for (std::size_t t = 0; t < T; ++t) {
    double a = 0.0, b = 0.0, c = 0.0;
    for (const auto& tr : tw.trajectories) {
      a += tr.weight[t] * tr.reward[t];
      b += tr.weight[t] * tr.q_tilde[t];
      c += tr.weight_before(t) * tr.v_tilde[t];
    }
    tw.A[t] = tw.W_t[t] > 0.0 ? a / tw.W_t[t] : 0.0;
    tw.B[t] = tw.W_t[t] > 0.0 ? b / tw.W_t[t] : 0.0;
    tw.Cv[t] = tw.W_before(t) > 0.0 ? c / tw.W_before(t) : 0.0;
  }
  return tw;
}

namespace detail {

inline double mean(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

inline void require_baselines(const TrajectoryWeights& tw, EstimatorKind method) {
  if (!tw.has_baselines) {
    throw Error(ErrorKind::precondition,
                std::string("estimator ") + to_string(method) + " requires value baselines");
  }
}

}  // namespace detail

inline double estimate(EstimatorKind method, const TrajectoryWeights& tw) {
  if (tw.size() == 0) throw Error(ErrorKind::precondition, "no trajectories");
  switch (method) {
    case EstimatorKind::is: return detail::mean(tw.per_trajectory_is);
    case EstimatorKind::pdis: return detail::mean(tw.per_trajectory_pdis);
    case EstimatorKind::dr:
      detail::require_baselines(tw, method);
      return detail::mean(tw.per_trajectory_dr);
    case EstimatorKind::wis: {
      if (!(tw.W > 0.0)) throw Error(ErrorKind::undefined, "all trajectory weights zero");
      double s = 0.0;
      for (const auto& tr : tw.trajectories) s += tr.final_weight() * tr.ret;
      return s / tw.W;
    }
    case EstimatorKind::wdr: {
      detail::require_baselines(tw, method);
      double v = 0.0, discount = 1.0;
      for (std::size_t t = 0; t < tw.horizon; ++t) {
        if (!(tw.W_t[t] > 0.0)) {
          throw Error(ErrorKind::undefined,
                      "all trajectory weights zero at step " + std::to_string(t));
        }
        v += discount * (tw.A[t] - tw.B[t] + tw.Cv[t]);
        discount *= tw.gamma;
      }
      return v;
    }
    default:
      throw Error(ErrorKind::precondition, "not an importance-sampling estimator");
  }
}

/// I_j = v_{-j} - v in O(1) (O(T) for WDR) from the cached aggregates, or
/// nullopt when the estimator is undefined after removing trajectory j.
inline std::optional<double> trajectory_influence(EstimatorKind method, std::size_t j,
                                                  const TrajectoryWeights& tw, double v_hat) {
  const std::size_t N = tw.size();
  if (N < 2) return std::nullopt;
  const double n1 = static_cast<double>(N - 1);
  const auto& tr = tw.trajectories[j];
  switch (method) {
    case EstimatorKind::is: return (v_hat - tw.per_trajectory_is[j]) / n1;
    case EstimatorKind::pdis: return (v_hat - tw.per_trajectory_pdis[j]) / n1;
    case EstimatorKind::dr:
      detail::require_baselines(tw, method);
      return (v_hat - tw.per_trajectory_dr[j]) / n1;
    case EstimatorKind::wis: {
      const double wj = tr.final_weight();
      const double rest = tw.W - wj;
      if (wj == 0.0) return 0.0;
      if (!(rest > 0.0)) return std::nullopt;
      return wj / rest * (v_hat - tr.ret);
    }
    case EstimatorKind::wdr: {
      detail::require_baselines(tw, method);
      // Steps at or beyond the longest remaining trajectory vanish from the
      // estimate once j is removed.
      const std::size_t remaining =
          tr.length == tw.longest ? tw.second_longest : tw.longest;
      double influence = 0.0, discount = 1.0;
      for (std::size_t t = 0; t < tw.horizon; ++t) {
        if (t >= remaining) {
          influence -= discount * (tw.A[t] - tw.B[t] + tw.Cv[t]);
        } else {
          const double wj = tr.weight[t];
          const double rest = tw.W_t[t] - wj;
          const double wj_prev = tr.weight_before(t);
          const double rest_prev = tw.W_before(t) - wj_prev;
          if ((wj > 0.0 && !(rest > 0.0)) || (wj_prev > 0.0 && !(rest_prev > 0.0))) {
            return std::nullopt;
          }
          // Remaining weight must stay positive even where j carries none.
          if (!(rest > 0.0)) return std::nullopt;
          const double c = wj > 0.0 ? wj / rest : 0.0;
          const double c_prev = wj_prev > 0.0 ? wj_prev / rest_prev : 0.0;
          influence += discount * (c * (tw.A[t] - tr.reward[t]) - c * (tw.B[t] - tr.q_tilde[t]) +
                                   c_prev * (tw.Cv[t] - tr.v_tilde[t]));
        }
        discount *= tw.gamma;
      }
      return influence;
    }
    default:
      throw Error(ErrorKind::precondition, "not an importance-sampling estimator");
  }
}

inline InfluenceReport is_influence_report(EstimatorKind method, const TrajectoryWeights& tw,
                                           const AnalysisConfig& config) {
  InfluenceReport report;
  report.unit_kind = UnitKind::trajectory;
  report.estimator = method;
  report.v_hat = estimate(method, tw);
  for (std::size_t j = 0; j < tw.size(); ++j) {
    UnitInfluence u;
    u.id = tw.trajectories[j].id;
    if (auto value = trajectory_influence(method, j, tw, report.v_hat)) {
      u.influence = *value;
    } else {
      u.status = UnitStatus::undefined;
      u.note = tw.size() < 2 ? "single trajectory" : "estimator undefined after removal";
    }
    report.units.push_back(std::move(u));
  }
  apply_threshold(report, config.influence_threshold, config.v_max);
  return report;
}

}  // namespace opeinf
