#pragma once

// Nearest-neighbor fitted Q-evaluation in sparse matrix form.
//
// q'_t = (sum_{s=1..t} gamma^{s-1} M'^s) r   = Phi'_t r
// q_t  = M (sum_{s=1..t} (gamma M')^{s-1}) r = Phi_t r
//
// M averages over neighbors of (x_i, a_i); M' averages over neighbors of
// (x'_i, pi_e(x'_i)). Every transition neighbors itself, so rows of M sum
// to one; rows of M' sum to one or are empty (terminal or dead end).

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "opeinf/core.hpp"

namespace opeinf {

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using SparseColMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor>;

struct NeighborGraph {
  SparseRowMatrix M;
  SparseRowMatrix M_prime;
  SparseColMatrix M_prime_by_column;  // same values, column access for N*_{j'}
  std::vector<int> counts;            // N_i
  std::vector<int> next_counts;       // N_{i'}
  std::vector<int> reverse_counts;    // N*_{j'}: #k with Delta_{k'j}
  std::vector<ActionId> next_actions; // pi_e(x'_i)

  std::size_t size() const noexcept { return counts.size(); }

  bool neighbors(std::size_t i, std::size_t j) const { return M.coeff(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) != 0.0; }
};

namespace detail {

/// Exact radius search over (state, action) points under a weighted
/// Euclidean metric. Uses a uniform grid of cell width `radius` in scaled
/// coordinates when the dimension is small, brute force otherwise.
class RadiusIndex {
 public:
  static constexpr std::size_t kMaxGridDim = 6;

  RadiusIndex(const Dataset& ds, const StateActionMetric& metric, double radius)
      : ds_(ds), metric_(metric), radius_(radius), dim_(ds.dim()) {
    scale_.resize(dim_);
    for (std::size_t c = 0; c < dim_; ++c) scale_[c] = std::sqrt(metric.weight(c));
    use_grid_ = dim_ <= kMaxGridDim;
    if (use_grid_) {
      for (std::size_t n = 0; n < ds.size(); ++n) {
        cells_[key(ds[n].state, ds[n].action)].push_back(n);
      }
    }
  }

  /// Indices j with d((query, action), (x_j, a_j)) < radius, ascending.
  std::vector<std::size_t> query(std::span<const double> query, ActionId action) const {
    std::vector<std::size_t> out;
    auto consider = [&](std::size_t n) {
      const Transition& t = ds_[n];
      if (t.action == action && metric_.state_distance(query, t.state) < radius_) {
        out.push_back(n);
      }
    };
    if (!use_grid_) {
      for (std::size_t n = 0; n < ds_.size(); ++n) consider(n);
      return out;
    }
    const Key base = key(query, action);
    Key probe = base;
    std::size_t combos = 1;
    for (std::size_t c = 0; c < dim_; ++c) combos *= 3;
    for (std::size_t combo = 0; combo < combos; ++combo) {
      std::size_t rest = combo;
      for (std::size_t c = 0; c < dim_; ++c) {
        probe.cell[c] = base.cell[c] + static_cast<std::int64_t>(rest % 3) - 1;
        rest /= 3;
      }
      auto it = cells_.find(probe);
      if (it == cells_.end()) continue;
      for (std::size_t n : it->second) consider(n);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  struct Key {
    ActionId action = 0;
    std::array<std::int64_t, kMaxGridDim> cell{};
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept {
      std::size_t h = std::hash<int>{}(k.action);
      for (auto c : k.cell) h = h * 1000003u ^ std::hash<std::int64_t>{}(c);
      return h;
    }
  };

  Key key(std::span<const double> s, ActionId a) const {
    Key k;
    k.action = a;
    for (std::size_t c = 0; c < dim_; ++c) {
      k.cell[c] = static_cast<std::int64_t>(std::floor(s[c] * scale_[c] / radius_));
    }
    return k;
  }

  const Dataset& ds_;
  const StateActionMetric& metric_;
  double radius_;
  std::size_t dim_;
  std::vector<double> scale_;
  bool use_grid_ = false;
  std::unordered_map<Key, std::vector<std::size_t>, KeyHash> cells_;
};

inline SparseRowMatrix row_normalized(std::size_t n,
                                      const std::vector<std::vector<std::size_t>>& rows) {
  std::vector<Eigen::Triplet<double>> triplets;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double w = rows[i].empty() ? 0.0 : 1.0 / static_cast<double>(rows[i].size());
    for (std::size_t j : rows[i]) {
      triplets.emplace_back(static_cast<int>(i), static_cast<int>(j), w);
    }
  }
  SparseRowMatrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  m.setFromTriplets(triplets.begin(), triplets.end());
  m.makeCompressed();
  return m;
}

}  // namespace detail

/// Builds M and M'. Distances exactly equal to the radius are not
/// neighbors. Terminal transitions get an empty M' row regardless of
/// geometry.
inline NeighborGraph build_neighbor_graph(const Dataset& ds, const StateActionMetric& metric,
                                          const EvaluationPolicy& policy, double radius) {
  if (!(radius > 0.0)) throw Error(ErrorKind::precondition, "radius must be positive");
  if (!metric.weights().empty() && metric.weights().size() != ds.dim()) {
    throw Error(ErrorKind::precondition, "metric weight count does not match state dimension");
  }
  const std::size_t n = ds.size();
  detail::RadiusIndex index(ds, metric, radius);

  std::vector<std::vector<std::size_t>> rows(n), next_rows(n);
  NeighborGraph g;
  g.counts.resize(n);
  g.next_counts.resize(n);
  g.reverse_counts.assign(n, 0);
  g.next_actions.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Transition& t = ds[i];
    rows[i] = index.query(t.state, t.action);
    g.next_actions[i] = policy(t.next_state);
    if (!t.is_terminal) next_rows[i] = index.query(t.next_state, g.next_actions[i]);
    g.counts[i] = static_cast<int>(rows[i].size());
    g.next_counts[i] = static_cast<int>(next_rows[i].size());
    for (std::size_t j : next_rows[i]) ++g.reverse_counts[j];
  }
  g.M = detail::row_normalized(n, rows);
  g.M_prime = detail::row_normalized(n, next_rows);
  g.M_prime_by_column = SparseColMatrix(g.M_prime);
  g.M_prime_by_column.makeCompressed();
  return g;
}

struct PropagationMatrices {
  Eigen::MatrixXd Phi;
  Eigen::MatrixXd Phi_prime;
};

/// Dense Phi_T and Phi'_T via Phi'_t = M' + gamma M' Phi'_{t-1},
/// Phi_T = M (I + gamma Phi'_{T-1}).
inline PropagationMatrices compute_propagation(const NeighborGraph& g, double gamma,
                                               std::size_t horizon,
                                               std::size_t max_dense = 2000) {
  if (horizon < 1) throw Error(ErrorKind::precondition, "horizon must be >= 1");
  const auto n = static_cast<Eigen::Index>(g.size());
  if (g.size() > max_dense) {
    throw Error(ErrorKind::precondition,
                "dense propagation matrices limited to N <= " + std::to_string(max_dense) +
                    "; use PropagationRows");
  }
  Eigen::MatrixXd prev = Eigen::MatrixXd::Zero(n, n);  // Phi'_{t-1}
  Eigen::MatrixXd cur = Eigen::MatrixXd(g.M_prime);   // Phi'_1
  for (std::size_t t = 2; t <= horizon; ++t) {
    prev = cur;
    cur = Eigen::MatrixXd(g.M_prime) + gamma * (g.M_prime * prev);
  }
  if (horizon == 1) prev.setZero();
  PropagationMatrices out;
  out.Phi = g.M * (Eigen::MatrixXd::Identity(n, n) + gamma * prev);
  out.Phi_prime = std::move(cur);
  return out;
}

/// Rows of Phi_T computed on demand by sparse row-vector propagation:
/// phi_i = e_i^T M sum_{s=0}^{T-1} (gamma M')^s. Costs O(T * nnz) per row.
class PropagationRows {
 public:
  PropagationRows(const NeighborGraph& g, double gamma, std::size_t horizon)
      : g_(g), gamma_(gamma), horizon_(horizon) {}

  const Eigen::VectorXd& row(std::size_t i) {
    auto it = cache_.find(i);
    if (it != cache_.end()) return it->second;
    Eigen::VectorXd seed = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g_.size()));
    for (SparseRowMatrix::InnerIterator e(g_.M, static_cast<Eigen::Index>(i)); e; ++e) {
      seed[e.col()] = e.value();
    }
    return cache_.emplace(i, propagate(seed)).first->second;
  }

  /// sum_{i in rows} phi_i, in one propagation pass.
  Eigen::VectorXd summed(const std::vector<std::size_t>& rows) const {
    Eigen::VectorXd seed = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g_.size()));
    for (std::size_t i : rows) {
      for (SparseRowMatrix::InnerIterator e(g_.M, static_cast<Eigen::Index>(i)); e; ++e) {
        seed[e.col()] += e.value();
      }
    }
    return propagate(seed);
  }

 private:
  Eigen::VectorXd propagate(const Eigen::VectorXd& seed) const {
    Eigen::VectorXd acc = seed;
    Eigen::VectorXd v = seed;
    for (std::size_t s = 1; s < horizon_; ++s) {
      // row vector times M'
      Eigen::VectorXd next = gamma_ * (g_.M_prime.transpose() * v);
      v.swap(next);
      acc += v;
    }
    return acc;
  }

  const NeighborGraph& g_;
  double gamma_;
  std::size_t horizon_;
  std::unordered_map<std::size_t, Eigen::VectorXd> cache_;
};

struct FQEResult {
  Eigen::VectorXd q_hat;
  Eigen::VectorXd q_hat_prime;
  double v_hat = 0.0;
  std::vector<std::string> warnings;
};

/// Iterates q'_t = M'(r + gamma q'_{t-1}) for t = 1..T and returns
/// q = M(r + gamma q'_{T-1}), q' = q'_T and the mean of q over d0star.
inline FQEResult run_kernel_fqe(const NeighborGraph& g, const std::vector<double>& rewards,
                                const std::vector<std::size_t>& d0star, double gamma,
                                std::size_t horizon) {
  if (d0star.empty()) {
    throw Error(ErrorKind::undefined, "policy not represented in initial data");
  }
  if (horizon < 1) throw Error(ErrorKind::precondition, "horizon must be >= 1");
  if (rewards.size() != g.size()) throw Error(ErrorKind::precondition, "reward vector size mismatch");
  const Eigen::Map<const Eigen::VectorXd> r(rewards.data(), static_cast<Eigen::Index>(rewards.size()));
  Eigen::VectorXd prev = Eigen::VectorXd::Zero(r.size());
  Eigen::VectorXd cur = g.M_prime * r;
  for (std::size_t t = 2; t <= horizon; ++t) {
    prev = cur;
    Eigen::VectorXd target = r + gamma * prev;
    cur = g.M_prime * target;
  }
  if (horizon == 1) prev.setZero();
  FQEResult out;
  if (gamma > 0.0 && (cur - prev).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + cur.cwiseAbs().maxCoeff())) {
    out.warnings.push_back("q' has not converged after " + std::to_string(horizon) +
                           " iterations; closed-form influence assumes the fixed point");
  }
  Eigen::VectorXd target = r + gamma * prev;
  out.q_hat = g.M * target;
  out.q_hat_prime = std::move(cur);
  double sum = 0.0;
  for (std::size_t i : d0star) sum += out.q_hat[static_cast<Eigen::Index>(i)];
  out.v_hat = sum / static_cast<double>(d0star.size());
  return out;
}

/// Builds the graph and runs FQE with the configured (or default) horizon.
struct KernelFit {
  NeighborGraph graph;
  FQEResult fqe;
  std::vector<std::size_t> d0star;
  std::size_t horizon = 1;
};

inline KernelFit fit_kernel_fqe(const Dataset& ds, const StateActionMetric& metric,
                                const EvaluationPolicy& policy, const AnalysisConfig& config) {
  KernelFit fit;
  fit.horizon = config.resolved_horizon(ds);
  fit.graph = build_neighbor_graph(ds, metric, policy, config.radius);
  fit.d0star = initial_eval_set(ds, policy);
  fit.fqe = run_kernel_fqe(fit.graph, ds.rewards(), fit.d0star, config.gamma, fit.horizon);
  if (fit.horizon < ds.longest_trajectory()) {
    fit.fqe.warnings.push_back("horizon " + std::to_string(fit.horizon) +
                               " is shorter than the longest trajectory (" +
                               std::to_string(ds.longest_trajectory()) + ")");
  }
  return fit;
}

/// Value estimate of an arbitrary (x, a) from a fitted kernel FQE: the mean
/// of r_k + gamma q'_k over the data neighbors of (x, a), zero without
/// neighbors. Used as a DR/WDR baseline.
class KernelValueFunction {
 public:
  KernelValueFunction(const Dataset& ds, const StateActionMetric& metric, double radius,
                      const FQEResult& fqe, double gamma)
      : ds_(std::make_shared<Dataset>(ds)),
        metric_(metric),
        radius_(radius) {
    targets_.resize(ds.size());
    for (std::size_t n = 0; n < ds.size(); ++n) {
      targets_[n] = ds[n].reward + gamma * fqe.q_hat_prime[static_cast<Eigen::Index>(n)];
    }
  }

  double operator()(std::span<const double> state, ActionId action) const {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t n = 0; n < ds_->size(); ++n) {
      if (metric_((*ds_)[n].state, (*ds_)[n].action, state, action) < radius_) {
        sum += targets_[n];
        ++count;
      }
    }
    return count == 0 ? 0.0 : sum / static_cast<double>(count);
  }

 private:
  std::shared_ptr<Dataset> ds_;
  StateActionMetric metric_;
  double radius_;
  std::vector<double> targets_;
};

}  // namespace opeinf
