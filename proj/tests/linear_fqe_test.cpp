#include <gtest/gtest.h>

#include "fixtures.hpp"

using namespace opeinf;

namespace {

Dataset three_rewards() {
  return Dataset({fixtures::step("a", "A", 0, {0}, 0, 0, {0}, true),
                  fixtures::step("b", "B", 0, {0}, 0, 1, {0}, true),
                  fixtures::step("c", "C", 0, {0}, 0, 2, {0}, true)});
}

/// w_{-j} by explicit refit on the dataset without row j.
Eigen::VectorXd refit_without(const LinearModel& m, std::size_t j) {
  const auto n = m.Psi.rows();
  Eigen::MatrixXd psi(n - 1, m.Psi.cols()), psi_p(n - 1, m.Psi.cols());
  Eigen::VectorXd r(n - 1);
  for (Eigen::Index i = 0, k = 0; i < n; ++i) {
    if (i == static_cast<Eigen::Index>(j)) continue;
    psi.row(k) = m.Psi.row(i);
    psi_p.row(k) = m.Psi_p.row(i);
    r[k++] = m.rewards[i];
  }
  const Eigen::MatrixXd C = psi.transpose() * psi - m.gamma * psi.transpose() * psi_p;
  return C.inverse() * (psi.transpose() * r);
}

}  // namespace

TEST(LinearFQE, ConstantFeatureMeanReward) {
  const auto m = fit_linear_fqe(three_rewards(), FeatureMap::constant(), EvaluationPolicy::constant(0), 0.0);
  EXPECT_NEAR(m.w[0], 1.0, 1e-14);
  const auto influence = linear_influence(m, 2, {0, 1});
  ASSERT_TRUE(influence.has_value());
  EXPECT_NEAR((*weights_without(m, 2))[0], 0.5, 1e-14);
  for (const auto& [i, v] : *influence) EXPECT_NEAR(v, -0.5, 1e-14);
}

TEST(LinearFQE, ZeroRewardsZeroWeights) {
  auto ts = fixtures::random_linear_dataset(2, 40, 3, 2).transitions();
  for (auto& t : ts) t.reward = 0.0;
  const auto m = fit_linear_fqe(Dataset(ts), FeatureMap::state_action(3, 2), EvaluationPolicy::constant(0), 0.9);
  EXPECT_EQ(m.w.cwiseAbs().maxCoeff(), 0.0);
}

TEST(LinearFQE, OneHotReproducesKernelChain3) {
  const Dataset ds = fixtures::chain3();
  const auto m = fit_linear_fqe(ds, FeatureMap::tabular(ds), EvaluationPolicy::constant(0), 1.0);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(m.q(i), 1.0, 1e-12);
  EXPECT_NEAR(m.v_hat, 1.0, 1e-12);
}

TEST(LinearFQE, OneHotMatchesKernelOnDisjointTree) {
  const Dataset ds = fixtures::disjoint_tree(5, 8);
  AnalysisConfig config;
  config.gamma = 0.8;
  config.horizon = 4 * ds.longest_trajectory();
  const auto kernel = fit_kernel_fqe(ds, StateActionMetric(), EvaluationPolicy::constant(0), config);
  const auto m = fit_linear_fqe(ds, FeatureMap::tabular(ds), EvaluationPolicy::constant(0), 0.8);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_NEAR(m.q(i), kernel.fqe.q_hat[static_cast<Eigen::Index>(i)], 1e-10);
  }
}

TEST(LinearFQE, NormalEquationResidual) {
  const Dataset ds = fixtures::random_linear_dataset(3, 120, 4, 3);
  const auto m = fit_linear_fqe(ds, FeatureMap::state_action(4, 3), EvaluationPolicy::threshold(1, 0.0, 0, 2), 0.9);
  EXPECT_LE((m.C * m.w - m.Psi_t_r).norm(), 1e-8 * m.Psi_t_r.norm());
}

TEST(LinearFQE, RankOneUpdatesMatchRefit) {
  const Dataset ds = fixtures::random_linear_dataset(4, 50, 2, 2);
  const auto m = fit_linear_fqe(ds, FeatureMap::state_action(2, 2), EvaluationPolicy::constant(1), 0.9);
  ASSERT_EQ(m.Psi.cols(), 4);
  for (std::size_t j = 0; j < ds.size(); ++j) {
    const auto fast = weights_without(m, j);
    ASSERT_TRUE(fast.has_value());
    const Eigen::VectorXd slow = refit_without(m, j);
    EXPECT_LE((*fast - slow).norm(), 1e-8 * slow.norm());
  }
}

TEST(LinearFQE, ZeroFeatureRowHasNoInfluence) {
  auto ts = fixtures::random_linear_dataset(5, 30, 2, 2).transitions();
  ts[7].state = {0.0, 0.0};
  ts[7].action = 5;  // outside the one-hot range: psi_j = 0
  const Dataset ds(ts);
  const auto m = fit_linear_fqe(ds, FeatureMap::state_action(2, 2), EvaluationPolicy::constant(0), 0.5);
  EXPECT_EQ(m.Psi.row(7).norm(), 0.0);
  const auto w = weights_without(m, 7);
  ASSERT_TRUE(w.has_value());
  // psi_p of row 7 may be nonzero, but with psi_j = 0 both updates vanish.
  EXPECT_LE((*w - m.w).norm(), 1e-12);
}

TEST(LinearFQE, UnidentifiableNamesDirections) {
  // Second feature is always zero.
  const FeatureMap features(
      [](std::span<const double> x, ActionId) {
        Eigen::VectorXd v(2);
        v << x[0], 0.0;
        return v;
      },
      2, "degenerate");
  try {
    fit_linear_fqe(three_rewards(), features, EvaluationPolicy::constant(0), 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::unidentifiable);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("model unidentifiable"), std::string::npos) << msg;
    EXPECT_NE(msg.find("f1"), std::string::npos) << msg;
  }
}

TEST(LinearFQE, SoleSupportRemovalIsUnidentifiable) {
  const Dataset ds = fixtures::chain3();
  const auto m = fit_linear_fqe(ds, FeatureMap::tabular(ds), EvaluationPolicy::constant(0), 1.0);
  EXPECT_FALSE(weights_without(m, 1).has_value());
  AnalysisConfig config = fixtures::chain3_config();
  config.estimator = EstimatorKind::linear_fqe;
  const auto report = linear_influence_report(ds, config, m);
  EXPECT_EQ(report.find("t2")->status, UnitStatus::unidentifiable);
  EXPECT_EQ(report.find("t1")->status, UnitStatus::undefined);
}

TEST(LinearFQE, ReportMatchesOracle) {
  for (double gamma : {0.0, 0.5, 0.9, 1.0}) {
    const Dataset ds = fixtures::random_linear_dataset(6, 80, 3, 2);
    AnalysisConfig config;
    config.gamma = gamma;
    config.estimator = EstimatorKind::linear_fqe;
    AnalysisContext ctx;
    ctx.policy = EvaluationPolicy::threshold(0, 0.0, 0, 1);
    const auto result = analyze(ds, config, ctx);
    const auto oracle = brute_force_all(ds, config, ctx);
    for (const auto& o : oracle.results) {
      ASSERT_EQ(o.status, OracleStatus::ok);
      const auto* u = result.report.find(o.unit_id);
      EXPECT_LE(std::abs(u->influence - o.influence), 1e-8 * std::max(1e-12, std::abs(o.influence)) + 1e-12)
          << o.unit_id << " gamma " << gamma;
    }
  }
}

TEST(LinearFQE, PolynomialFeaturesDimension) {
  const auto f = FeatureMap::polynomial2(2, 2);
  EXPECT_EQ(f.dim(), 2u + 3u + 2u);
  const Eigen::VectorXd v = f(StateVector{2.0, 3.0}, 1);
  EXPECT_EQ(v[2], 4.0);
  EXPECT_EQ(v[3], 6.0);
  EXPECT_EQ(v[4], 9.0);
  EXPECT_EQ(v[6], 1.0);
}

TEST(LinearFQE, ModelExport) {
  const auto m = fit_linear_fqe(three_rewards(), FeatureMap::constant(), EvaluationPolicy::constant(0), 0.0);
  const Json j = to_json(m);
  EXPECT_EQ(j["feature_map"], "constant");
  EXPECT_NEAR(j["w"][0].get<double>(), 1.0, 1e-14);
}
