#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "opeinf/reproduce.hpp"

using namespace opeinf;

TEST(Navigation, NoiselessStraightDiagonal) {
  NavigationConfig config;
  config.heading_noise = 0.0;
  config.keep_dense = config.keep_sparse = config.keep_off_path = 1.0;
  config.wanderer_fraction = 0.0;
  const auto data = generate_navigation(config);
  EXPECT_EQ(data.dataset.size(), config.num_trajectories * config.trajectory_length);
  for (const auto& t : data.dataset.transitions()) {
    EXPECT_NEAR(t.state[0], t.state[1], 1e-12);
    EXPECT_NEAR(std::hypot(t.next_state[0] - t.state[0], t.next_state[1] - t.state[1]), 1.0, 1e-12);
    EXPECT_EQ(t.action, 0);
  }
}

TEST(Navigation, SparseRegionKeepsAboutTenPercent) {
  NavigationConfig full;
  full.keep_sparse = 1.0;
  full.seed = 11;
  NavigationConfig sparse = full;
  sparse.keep_sparse = 0.1;
  const auto count = [](const NavigationData& d) {
    return static_cast<double>(std::count(d.regions.begin(), d.regions.end(), 2));
  };
  const double n = count(generate_navigation(full));
  const double k = count(generate_navigation(sparse));
  ASSERT_GT(n, 50.0);
  // Same seed, same geometry: k ~ Binomial(n, 0.1).
  EXPECT_LE(std::abs(k - 0.1 * n), 4.0 * std::sqrt(n * 0.1 * 0.9));
}

TEST(Navigation, RewardDependsOnStateOnly) {
  NavigationConfig config;
  const auto data = generate_navigation(config);
  for (const auto& t : data.dataset.transitions()) {
    EXPECT_DOUBLE_EQ(t.reward, config.reward(t.state[0], t.state[1]));
  }
}

TEST(Navigation, SplitPiecesAreNotInitial) {
  NavigationConfig config;
  config.seed = 3;
  const auto data = generate_navigation(config);
  std::size_t pieces = 0;
  for (const auto& traj : data.dataset.trajectories()) {
    const Transition& first = data.dataset[traj.members.front()];
    const bool piece = traj.id.find(".s") != std::string::npos;
    pieces += piece;
    EXPECT_EQ(first.is_initial, !piece) << traj.id;
  }
  EXPECT_GT(pieces, 0u);
  EXPECT_EQ(data.regions.size(), data.dataset.size());
}

TEST(Navigation, SeedDeterminism) {
  NavigationConfig config;
  config.seed = 42;
  EXPECT_EQ(generate_navigation(config).dataset.transitions(), generate_navigation(config).dataset.transitions());
  NavigationConfig other = config;
  other.seed = 43;
  EXPECT_NE(generate_navigation(config).dataset.transitions(), generate_navigation(other).dataset.transitions());
}

TEST(Navigation, RejectsBadConfig) {
  NavigationConfig config;
  config.keep_sparse = 1.5;
  EXPECT_THROW(generate_navigation(config), Error);
  config.keep_sparse = 0.1;
  config.reward_width = 0.0;
  EXPECT_THROW(generate_navigation(config), Error);
}

TEST(Navigation, RegionOrderingOnFewSeeds) {
  const auto study = run_navigation_study(NavigationConfig{}, navigation_analysis_config(), 10);
  EXPECT_GE(study.sparse_to_dense(), 2.0);
  EXPECT_LE(study.off_path_to_dense(), 0.05);
  EXPECT_TRUE(study.warnings.empty());
  const Json j = to_json(study);
  EXPECT_GT(j["regions"]["II_sparse"]["count"].get<std::size_t>(), 0u);
}

TEST(Tumor, OnPolicyWhenEpsilonZero) {
  TumorConfig config;
  config.epsilon = 0.0;
  config.num_trajectories = 20;
  const Dataset ds = generate_tumor(config);
  const auto pi = tumor_policy(config);
  double mean_return = 0.0;
  for (const auto& t : ds.transitions()) {
    EXPECT_EQ(t.action, pi(t.state));
    EXPECT_EQ(*t.behavior_prob, 1.0);
    mean_return += t.reward;
  }
  mean_return /= static_cast<double>(config.num_trajectories);
  AnalysisConfig analysis = tumor_analysis_config();
  AnalysisContext ctx;
  ctx.policy = pi;
  ctx.metric = tumor_metric();
  EXPECT_NEAR(estimate_value(ds, analysis, ctx), mean_return, 1e-2 * mean_return);
  analysis.estimator = EstimatorKind::is;
  EXPECT_NEAR(estimate_value(ds, analysis, ctx), mean_return, 1e-12 * mean_return);
}

TEST(Tumor, PolicySwitchesAtMonthFifteen) {
  const auto pi = tumor_policy(TumorConfig{});
  EXPECT_EQ(pi(StateVector{2.0, 0.0, 0.0, 14.0}), 1);
  EXPECT_EQ(pi(StateVector{2.0, 0.0, 0.0, 15.0}), 0);
}

TEST(Tumor, OverlapGrowsAsEpsilonShrinks) {
  double previous = 0.0;
  for (double eps : {0.9, 0.5, 0.1, 0.01}) {
    TumorConfig config;
    config.epsilon = eps;
    config.num_trajectories = 50;
    const Dataset ds = generate_tumor(config);
    const auto pi = tumor_policy(config);
    double match = 0.0;
    for (const auto& t : ds.transitions()) match += t.action == pi(t.state);
    match /= static_cast<double>(ds.size());
    EXPECT_GT(match, previous);
    previous = match;
  }
  EXPECT_GT(previous, 0.98);
}

TEST(Tumor, ShapeAndDeterminism) {
  TumorConfig config;
  config.num_trajectories = 4;
  config.stochastic = true;
  config.noise = 0.1;
  const Dataset ds = generate_tumor(config);
  EXPECT_EQ(ds.size(), 4u * 30u);
  EXPECT_EQ(ds.dim(), 4u);
  EXPECT_EQ(ds.longest_trajectory(), 30u);
  for (const auto& traj : ds.trajectories()) {
    EXPECT_TRUE(ds[traj.members.back()].is_terminal);
    EXPECT_TRUE(ds[traj.members.front()].is_initial);
  }
  EXPECT_EQ(ds.transitions(), generate_tumor(config).transitions());
}

TEST(Tumor, PlausibilityCheck) {
  TumorConfig config;
  config.num_trajectories = 10;
  config.stochastic = true;
  config.noise = 0.05;
  const Dataset ds = generate_tumor(config);
  for (const auto& t : ds.transitions()) EXPECT_TRUE(tumor_step_plausible(config, t)) << t.id;
  Transition bad = ds[3];
  bad.next_state[0] += 1.0;
  EXPECT_FALSE(tumor_step_plausible(config, bad));
}

TEST(Tumor, SpikesLandOnPolicyPrefix) {
  TumorConfig config;
  config.num_trajectories = 30;
  const Dataset ds = generate_tumor(config);
  const auto pi = tumor_policy(config);
  const auto [spiked, ids] = inject_reward_spikes(ds, pi, 4, 10.0, 1);
  ASSERT_EQ(ids.size(), 4u);
  for (const auto& id : ids) {
    const std::size_t n = spiked.index_of(id);
    EXPECT_DOUBLE_EQ(spiked[n].reward, ds[n].reward + 10.0);
    const auto& trajs = spiked.trajectories();
    const auto& traj = *std::find_if(trajs.begin(), trajs.end(),
                                     [&](const auto& tr) { return tr.id == spiked[n].trajectory_id; });
    for (std::size_t s = 0; s <= spiked[n].step_index; ++s) {
      const Transition& t = spiked[traj.members[s]];
      EXPECT_EQ(t.action, pi(t.state));
    }
    EXPECT_FALSE(tumor_step_plausible(config, spiked[n]));
  }
  EXPECT_THROW(inject_reward_spikes(ds, pi, 100000, 1.0, 1), Error);
}

TEST(TumorCases, FourOutcomes) {
  const auto cases = tumor_cases();
  ASSERT_EQ(cases.size(), 4u);
  const Outcome expected[] = {Outcome::Reliable, Outcome::Unevaluatable, Outcome::NeedsExpertReview,
                              Outcome::NeedsExpertReview};
  for (std::size_t c = 0; c < cases.size(); ++c) {
    const auto r = run_tumor_case(cases[c], tumor_analysis_config());
    EXPECT_EQ(r.analysis.diagnosis.outcome, expected[c]) << cases[c].name;
    EXPECT_TRUE(r.as_expected()) << to_json(r).dump();
  }
}

TEST(MethodComparison, TopSetsDiffer) {
  const auto methods = compare_is_methods(method_comparison_tumor());
  ASSERT_EQ(methods.size(), 3u);
  for (const auto& m : methods) EXPECT_EQ(m.top.size(), 5u);
  EXPECT_TRUE(top_sets_differ(methods));
  EXPECT_TRUE(to_json(methods)["top_sets_differ"].get<bool>());
}
