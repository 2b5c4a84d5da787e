#pragma once

// Closed-form leave-one-out influence for kernel FQE.
//
// Removing tau_j changes q_i directly when j is a neighbor of (x_i, a_i),
// and indirectly through every k whose (x'_k, pi_e(x'_k)) neighborhood
// contains j; the change in q'_k enters q_i like a change gamma*dq'_k of
// r_k, i.e. through Phi_ik. When j is the sole neighbor of k', q'_k drops
// to zero.

#include <cassert>
#include <optional>
#include <vector>

#include "opeinf/influence_report.hpp"
#include "opeinf/kernel_fqe.hpp"

namespace opeinf {

class KernelInfluence {
 public:
  KernelInfluence(const Dataset& ds, const NeighborGraph& graph, const FQEResult& fqe,
                  const std::vector<std::size_t>& d0star, double gamma, std::size_t horizon,
                  SelfRemoval self_removal = SelfRemoval::shrink_initial_set)
      : ds_(ds),
        g_(graph),
        fqe_(fqe),
        d0star_(d0star),
        gamma_(gamma),
        self_removal_(self_removal),
        rows_(graph, gamma, horizon),
        in_d0_(ds.size(), false) {
    for (std::size_t i : d0star_) in_d0_[i] = true;
    phi_sum_ = rows_.summed(d0star_);
  }

  /// r_j + gamma q'_j: the value tau_j contributes to any neighborhood.
  double target(std::size_t j) const {
    return ds_[j].reward + gamma_ * fqe_.q_hat_prime[idx(j)];
  }

  /// Change of q'_k when j leaves the neighborhood of (x'_k, pi_e(x'_k)).
  double next_value_shift(std::size_t k, std::size_t j) const {
    const int n = g_.next_counts[k];
    if (n > 1) return (fqe_.q_hat_prime[idx(k)] - target(j)) / (n - 1);
    return -fqe_.q_hat_prime[idx(k)];
  }

  /// I_{i,j} for i != j.
  double individual(std::size_t i, std::size_t j) {
    if (i == j) throw Error(ErrorKind::precondition, "individual influence requires i != j");
    double value = direct_term(i, j);
    const Eigen::VectorXd& phi = rows_.row(i);
    for (SparseColMatrix::InnerIterator e(g_.M_prime_by_column, idx(j)); e; ++e) {
      const auto k = static_cast<std::size_t>(e.row());
      value += gamma_ * phi[idx(k)] * next_value_shift(k, j);
    }
    return value;
  }

  /// I_j, or nullopt when removing j empties D0*.
  std::optional<double> total(std::size_t j) {
    const bool self = in_d0_[j];
    const double n0 = static_cast<double>(d0star_.size());
    if (self && self_removal_ == SelfRemoval::shrink_initial_set && d0star_.size() == 1) {
      return std::nullopt;
    }

    // sum over i in D0* \ {j} of I_ij
    double direct = 0.0;
    for (SparseRowMatrix::InnerIterator e(g_.M, idx(j)); e; ++e) {
      const auto i = static_cast<std::size_t>(e.col());
      if (i != j && in_d0_[i]) direct += direct_term(i, j);
    }
    double mediated = 0.0;
    for (SparseColMatrix::InnerIterator e(g_.M_prime_by_column, idx(j)); e; ++e) {
      const auto k = static_cast<std::size_t>(e.row());
      double weight = phi_sum_[idx(k)];
      if (self) weight -= rows_.row(j)[idx(k)];
      mediated += gamma_ * weight * next_value_shift(k, j);
    }
    const double sum = direct + mediated;

    if (!self) return sum / n0;
    if (self_removal_ == SelfRemoval::fixed_initial_set) return sum / n0;
    // mean over D0*\{j} of (q_i + I_ij) minus v_hat
    return (fqe_.v_hat - fqe_.q_hat[idx(j)] + sum) / (n0 - 1.0);
  }

  /// (i, I_ij) for every i in D0* other than j.
  std::vector<std::pair<std::size_t, double>> per_initial(std::size_t j) {
    std::vector<std::pair<std::size_t, double>> out;
    for (std::size_t i : d0star_) {
      if (i != j) out.emplace_back(i, individual(i, j));
    }
    return out;
  }

 private:
  static Eigen::Index idx(std::size_t n) { return static_cast<Eigen::Index>(n); }

  double direct_term(std::size_t i, std::size_t j) const {
    if (!g_.neighbors(i, j)) return 0.0;
    const int n = g_.counts[i];
    // i and j are distinct neighbors of (x_i, a_i), so N_i >= 2.
    assert(n >= 2);
    if (n < 2) throw Error(ErrorKind::invariant, "neighbor count below 2 for distinct neighbor");
    return (fqe_.q_hat[idx(i)] - target(j)) / (n - 1);
  }

  const Dataset& ds_;
  const NeighborGraph& g_;
  const FQEResult& fqe_;
  const std::vector<std::size_t>& d0star_;
  double gamma_;
  SelfRemoval self_removal_;
  PropagationRows rows_;
  std::vector<bool> in_d0_;
  Eigen::VectorXd phi_sum_;
};

/// N*_{j',c} = v_max / (|v_hat| * threshold), or nullopt when the cutoff is
/// not applicable (no v_max or v_hat == 0).
inline std::optional<double> neighbor_cutoff(const AnalysisConfig& config, double v_hat) {
  if (!config.v_max || v_hat == 0.0) return std::nullopt;
  return *config.v_max / (std::abs(v_hat) * config.influence_threshold);
}

/// Influence of every transition on v_hat. With v_max configured,
/// transitions with N*_{j'} >= N*_{j',c} are skipped.
inline InfluenceReport kernel_influence_report(const Dataset& ds, const AnalysisConfig& config,
                                               const KernelFit& fit) {
  InfluenceReport report;
  report.unit_kind = UnitKind::transition;
  report.estimator = EstimatorKind::kernel_fqe;
  report.v_hat = fit.fqe.v_hat;
  KernelInfluence engine(ds, fit.graph, fit.fqe, fit.d0star, config.gamma, fit.horizon,
                         config.self_removal);
  const auto cutoff = neighbor_cutoff(config, fit.fqe.v_hat);
  report.units.reserve(ds.size());
  for (std::size_t j = 0; j < ds.size(); ++j) {
    UnitInfluence u;
    u.id = ds[j].id;
    if (cutoff && static_cast<double>(fit.graph.reverse_counts[j]) >= *cutoff) {
      u.status = UnitStatus::skipped;
    } else if (auto value = engine.total(j)) {
      u.influence = *value;
    } else {
      u.status = UnitStatus::undefined;
      u.note = "removal empties the initial evaluation set";
    }
    report.units.push_back(std::move(u));
  }
  apply_threshold(report, config.influence_threshold, config.v_max);
  for (std::size_t j = 0; j < ds.size(); ++j) {
    auto& u = report.units[j];
    u.dead_end = u.flagged && fit.graph.next_counts[j] == 0 && !ds[j].is_terminal;
  }
  return report;
}

}  // namespace opeinf
