#pragma once

// Linear least-squares FQE, q(x, a) = psi(x, a)^T w, with
//   C = Psi^T Psi - gamma Psi^T Psi_p,   w = C^{-1} Psi^T r,
// where row i of Psi_p is psi(x'_i, pi_e(x'_i)) (zero for terminal rows).
// Leave-one-out weights come from two Sherman-Morrison updates of C^{-1}.

#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "opeinf/core.hpp"
#include "opeinf/influence_report.hpp"

namespace opeinf {

class FeatureMap {
 public:
  using Fn = std::function<Eigen::VectorXd(std::span<const double>, ActionId)>;

  FeatureMap(Fn fn, std::size_t dim, std::string descriptor)
      : fn_(std::move(fn)), dim_(dim), descriptor_(std::move(descriptor)) {}

  Eigen::VectorXd operator()(std::span<const double> state, ActionId action) const {
    Eigen::VectorXd v = fn_(state, action);
    if (static_cast<std::size_t>(v.size()) != dim_) {
      throw Error(ErrorKind::precondition, "feature map returned wrong dimension");
    }
    return v;
  }

  std::size_t dim() const noexcept { return dim_; }
  const std::string& descriptor() const noexcept { return descriptor_; }

  static FeatureMap constant() {
    return FeatureMap([](std::span<const double>, ActionId) { return Eigen::VectorXd::Ones(1); },
                      1, "constant");
  }

  /// [x, onehot(a)]
  static FeatureMap state_action(std::size_t state_dim, std::size_t action_count) {
    return FeatureMap(
        [=](std::span<const double> x, ActionId a) {
          Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(state_dim + action_count));
          for (std::size_t c = 0; c < state_dim; ++c) v[static_cast<Eigen::Index>(c)] = x[c];
          if (a >= 0 && static_cast<std::size_t>(a) < action_count) {
            v[static_cast<Eigen::Index>(state_dim + static_cast<std::size_t>(a))] = 1.0;
          }
          return v;
        },
        state_dim + action_count, "state-action");
  }

  /// [x_c, x_c x_d (c <= d), onehot(a)]
  static FeatureMap polynomial2(std::size_t state_dim, std::size_t action_count) {
    const std::size_t quad = state_dim * (state_dim + 1) / 2;
    const std::size_t dim = state_dim + quad + action_count;
    return FeatureMap(
        [=](std::span<const double> x, ActionId a) {
          Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
          Eigen::Index k = 0;
          for (std::size_t c = 0; c < state_dim; ++c) v[k++] = x[c];
          for (std::size_t c = 0; c < state_dim; ++c) {
            for (std::size_t d = c; d < state_dim; ++d) v[k++] = x[c] * x[d];
          }
          if (a >= 0 && static_cast<std::size_t>(a) < action_count) {
            v[k + a] = 1.0;
          }
          return v;
        },
        dim, "poly2");
  }

  /// One-hot over an explicit list of (state, action) keys; unknown pairs
  /// map to the zero vector.
  static FeatureMap tabular(std::vector<std::pair<StateVector, ActionId>> keys) {
    auto table = std::make_shared<std::map<std::pair<StateVector, ActionId>, Eigen::Index>>();
    for (const auto& k : keys) table->emplace(k, static_cast<Eigen::Index>(table->size()));
    const std::size_t dim = table->size();
    return FeatureMap(
        [table, dim](std::span<const double> x, ActionId a) {
          Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
          auto it = table->find({StateVector(x.begin(), x.end()), a});
          if (it != table->end()) v[it->second] = 1.0;
          return v;
        },
        dim, "tabular");
  }

  /// Tabular features over the distinct (x, a) pairs of a dataset.
  static FeatureMap tabular(const Dataset& ds) {
    std::vector<std::pair<StateVector, ActionId>> keys;
    for (const auto& t : ds.transitions()) keys.emplace_back(t.state, t.action);
    return tabular(std::move(keys));
  }

 private:
  Fn fn_;
  std::size_t dim_;
  std::string descriptor_;
};

struct LinearModel {
  Eigen::MatrixXd Psi;
  Eigen::MatrixXd Psi_p;
  Eigen::MatrixXd C;
  Eigen::MatrixXd C_inv;
  Eigen::VectorXd Psi_t_r;  // cached Psi^T r
  Eigen::VectorXd w;
  Eigen::VectorXd rewards;
  std::vector<std::size_t> d0star;
  double gamma = 1.0;
  double v_hat = 0.0;
  std::string feature_descriptor;

  double q(std::size_t i) const { return Psi.row(static_cast<Eigen::Index>(i)).dot(w); }
};

inline constexpr double kMaxConditionNumber = 1e12;

namespace detail {

/// Throws when C is singular or worse conditioned than kMaxConditionNumber,
/// naming the feature directions spanned by the near-null singular vectors.
inline void check_identifiable(const Eigen::MatrixXd& C) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(C, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  const double smax = s.size() ? s[0] : 0.0;
  const double smin = s.size() ? s[s.size() - 1] : 0.0;
  if (smax > 0.0 && smin > 0.0 && smax / smin <= kMaxConditionNumber) return;
  std::ostringstream msg;
  msg << "model unidentifiable: condition number "
      << (smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity())
      << " exceeds " << kMaxConditionNumber << "; deficient feature directions:";
  for (Eigen::Index k = 0; k < s.size(); ++k) {
    if (smax > 0.0 && s[k] > smax / kMaxConditionNumber) continue;
    const Eigen::VectorXd v = svd.matrixV().col(k);
    msg << " [";
    bool first = true;
    for (Eigen::Index c = 0; c < v.size(); ++c) {
      if (std::abs(v[c]) < 1e-6) continue;
      msg << (first ? "" : ", ") << "f" << c << ":" << v[c];
      first = false;
    }
    msg << "]";
  }
  throw Error(ErrorKind::unidentifiable, msg.str());
}

}  // namespace detail

inline LinearModel fit_linear_fqe(const Dataset& ds, const FeatureMap& features,
                                  const EvaluationPolicy& policy, double gamma,
                                  double ridge = 0.0) {
  const auto n = static_cast<Eigen::Index>(ds.size());
  const auto d = static_cast<Eigen::Index>(features.dim());
  LinearModel m;
  m.gamma = gamma;
  m.feature_descriptor = features.descriptor();
  m.Psi.resize(n, d);
  m.Psi_p = Eigen::MatrixXd::Zero(n, d);
  m.rewards.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Transition& t = ds[static_cast<std::size_t>(i)];
    m.Psi.row(i) = features(t.state, t.action).transpose();
    if (!t.is_terminal) m.Psi_p.row(i) = features(t.next_state, policy(t.next_state)).transpose();
    m.rewards[i] = t.reward;
  }
  m.C = m.Psi.transpose() * m.Psi - gamma * (m.Psi.transpose() * m.Psi_p);
  if (ridge > 0.0) m.C += ridge * Eigen::MatrixXd::Identity(d, d);
  detail::check_identifiable(m.C);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(m.C);
  m.C_inv = lu.inverse();
  m.Psi_t_r = m.Psi.transpose() * m.rewards;
  m.w = lu.solve(m.Psi_t_r);
  m.d0star = initial_eval_set(ds, policy);
  if (m.d0star.empty()) throw Error(ErrorKind::undefined, "policy not represented in initial data");
  double sum = 0.0;
  for (std::size_t i : m.d0star) sum += m.q(i);
  m.v_hat = sum / static_cast<double>(m.d0star.size());
  return m;
}

inline constexpr double kUpdateDenominatorTolerance = 1e-12;

/// w_{-j} via B_j = (C - psi psi^T)^{-1} and
/// C_{-j}^{-1} = (B_j^{-1} + gamma psi psi_p^T)^{-1}, or nullopt when either
/// denominator vanishes (removal makes the model unidentifiable).
inline std::optional<Eigen::VectorXd> weights_without(const LinearModel& m, std::size_t j) {
  const auto row = static_cast<Eigen::Index>(j);
  const Eigen::VectorXd psi = m.Psi.row(row).transpose();
  const Eigen::VectorXd psi_p = m.Psi_p.row(row).transpose();
  const Eigen::VectorXd c_psi = m.C_inv * psi;
  const Eigen::RowVectorXd psi_c = psi.transpose() * m.C_inv;
  const double den1 = 1.0 - psi.dot(c_psi);
  if (std::abs(den1) < kUpdateDenominatorTolerance) return std::nullopt;
  const Eigen::MatrixXd B = m.C_inv + (c_psi * psi_c) / den1;
  const Eigen::VectorXd b_psi = B * psi;
  const Eigen::RowVectorXd psi_p_b = psi_p.transpose() * B;
  const double den2 = 1.0 + m.gamma * psi_p_b.dot(psi);
  if (std::abs(den2) < kUpdateDenominatorTolerance) return std::nullopt;
  const Eigen::MatrixXd C_minus_inv = B - m.gamma * (b_psi * psi_p_b) / den2;
  return C_minus_inv * (m.Psi_t_r - m.rewards[row] * psi);
}

/// I_{i,j} = psi_i^T (w_{-j} - w) for each requested i.
inline std::optional<std::vector<std::pair<std::size_t, double>>> linear_influence(
    const LinearModel& m, std::size_t j, const std::vector<std::size_t>& i_set) {
  auto w_minus = weights_without(m, j);
  if (!w_minus) return std::nullopt;
  const Eigen::VectorXd delta = *w_minus - m.w;
  std::vector<std::pair<std::size_t, double>> out;
  out.reserve(i_set.size());
  for (std::size_t i : i_set) {
    out.emplace_back(i, m.Psi.row(static_cast<Eigen::Index>(i)).dot(delta));
  }
  return out;
}

inline InfluenceReport linear_influence_report(const Dataset& ds, const AnalysisConfig& config,
                                               const LinearModel& m) {
  InfluenceReport report;
  report.unit_kind = UnitKind::transition;
  report.estimator = EstimatorKind::linear_fqe;
  report.v_hat = m.v_hat;
  const auto d = m.Psi.cols();
  Eigen::VectorXd psi_sum = Eigen::VectorXd::Zero(d);
  std::vector<bool> in_d0(ds.size(), false);
  for (std::size_t i : m.d0star) {
    psi_sum += m.Psi.row(static_cast<Eigen::Index>(i)).transpose();
    in_d0[i] = true;
  }
  const double n0 = static_cast<double>(m.d0star.size());
  for (std::size_t j = 0; j < ds.size(); ++j) {
    UnitInfluence u;
    u.id = ds[j].id;
    const bool self = in_d0[j];
    if (self && config.self_removal == SelfRemoval::shrink_initial_set && m.d0star.size() == 1) {
      u.status = UnitStatus::undefined;
      u.note = "removal empties the initial evaluation set";
    } else if (auto w_minus = weights_without(m, j)) {
      if (!self) {
        u.influence = psi_sum.dot(*w_minus - m.w) / n0;
      } else if (config.self_removal == SelfRemoval::fixed_initial_set) {
        const Eigen::VectorXd psi_j = m.Psi.row(static_cast<Eigen::Index>(j)).transpose();
        u.influence = (psi_sum - psi_j).dot(*w_minus - m.w) / n0;
      } else {
        const Eigen::VectorXd psi_j = m.Psi.row(static_cast<Eigen::Index>(j)).transpose();
        u.influence = (psi_sum - psi_j).dot(*w_minus) / (n0 - 1.0) - m.v_hat;
      }
    } else {
      u.status = UnitStatus::unidentifiable;
      u.note = "removal makes model unidentifiable";
    }
    report.units.push_back(std::move(u));
  }
  apply_threshold(report, config.influence_threshold, config.v_max);
  return report;
}

inline Json to_json(const LinearModel& m) {
  Json j;
  j["w"] = std::vector<double>(m.w.data(), m.w.data() + m.w.size());
  j["feature_map"] = m.feature_descriptor;
  j["gamma"] = m.gamma;
  j["v_hat"] = m.v_hat;
  return j;
}

}  // namespace opeinf
