#include <gtest/gtest.h>

#include "fixtures.hpp"

using namespace opeinf;

namespace {

AnalysisContext ctx0() {
  AnalysisContext ctx;
  ctx.policy = EvaluationPolicy::constant(0);
  return ctx;
}

InfluenceReport report_with(const std::vector<std::pair<std::string, double>>& influences, double v_hat) {
  InfluenceReport r;
  r.unit_kind = UnitKind::transition;
  r.v_hat = v_hat;
  for (const auto& [id, value] : influences) {
    UnitInfluence u;
    u.id = id;
    u.influence = value;
    r.units.push_back(u);
  }
  apply_threshold(r, 0.05, std::nullopt);
  return r;
}

}  // namespace

TEST(Diagnose, DenseCopiesReliable) {
  const auto result = analyze(fixtures::chain3_copies(50), fixtures::chain3_config(), ctx0());
  EXPECT_EQ(result.diagnosis.outcome, Outcome::Reliable);
  EXPECT_TRUE(result.diagnosis.flagged.empty());
}

TEST(Diagnose, OpenEndIsDeadEnd) {
  const auto result = analyze(fixtures::chain3(false), fixtures::chain3_config(), ctx0());
  EXPECT_EQ(result.diagnosis.outcome, Outcome::Unevaluatable);
  EXPECT_EQ(result.diagnosis.dead_ends, std::vector<std::string>{"t3"});
}

TEST(Diagnose, TerminalEndNeedsReview) {
  const auto result = analyze(fixtures::chain3(true), fixtures::chain3_config(), ctx0());
  EXPECT_EQ(result.diagnosis.outcome, Outcome::NeedsExpertReview);
  EXPECT_EQ(result.diagnosis.flagged, (std::vector<std::string>{"t2", "t3"}));
  EXPECT_TRUE(result.diagnosis.dead_ends.empty());
}

TEST(Collapse, Chain3Run) {
  const Dataset ds = fixtures::chain3();
  const auto p = collapse_sequences({"t2", "t3"}, ds);
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0].presented, "t3");
  EXPECT_EQ(p[0].covered, std::vector<std::string>{"t2"});
}

TEST(Collapse, Singleton) {
  const auto p = collapse_sequences({"t2"}, fixtures::chain3());
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0].presented, "t2");
  EXPECT_TRUE(p[0].covered.empty());
}

TEST(Collapse, TwoTrajectories) {
  const Dataset ds = fixtures::chain3_copies(2);
  const auto p = collapse_sequences({"t2_0", "t2_1"}, ds);
  EXPECT_EQ(p.size(), 2u);
}

TEST(Collapse, GapSplitsRun) {
  const auto p = collapse_sequences({"t1", "t3"}, fixtures::chain3());
  EXPECT_EQ(p.size(), 2u);
}

TEST(Collapse, SemanticModeNeedsGraphAndLink) {
  const Dataset ds = fixtures::chain3();
  EXPECT_THROW(collapse_sequences({"t2", "t3"}, ds, {}, CollapseMode::semantic), Error);
  const auto g = build_neighbor_graph(ds, StateActionMetric(), EvaluationPolicy::constant(0), 0.5);
  EXPECT_EQ(collapse_sequences({"t2", "t3"}, ds, {}, CollapseMode::semantic, &g).size(), 1u);
  // Break the link: t2 now leads somewhere t3 is not.
  auto ts = ds.transitions();
  ts[1].next_state = {7.0};
  const Dataset broken(ts);
  const auto gb = build_neighbor_graph(broken, StateActionMetric(), EvaluationPolicy::constant(0), 0.5);
  EXPECT_EQ(collapse_sequences({"t2", "t3"}, broken, {}, CollapseMode::semantic, &gb).size(), 2u);
  EXPECT_EQ(collapse_sequences({"t2", "t3"}, broken).size(), 1u);
}

TEST(Collapse, EveryFlagAppearsOnce) {
  const Dataset ds = fixtures::random_overlap_dataset(3, 60);
  std::vector<std::string> flagged;
  for (std::size_t n = 0; n < ds.size(); n += 2) flagged.push_back(ds[n].id);
  for (std::size_t n = 1; n < ds.size(); n += 7) flagged.push_back(ds[n].id);
  std::sort(flagged.begin(), flagged.end());
  flagged.erase(std::unique(flagged.begin(), flagged.end()), flagged.end());
  std::vector<std::string> seen;
  for (const auto& e : collapse_sequences(flagged, ds)) {
    seen.push_back(e.presented);
    seen.insert(seen.end(), e.covered.begin(), e.covered.end());
  }
  std::sort(seen.begin(), seen.end());
  EXPECT_EQ(seen, flagged);
}

TEST(Collapse, PresentedDominatesCoveredOnChains) {
  // Removing the last flagged step of a run moves v_hat at least as much as
  // removing any covered step.
  const Dataset ds = fixtures::chain3();
  const auto config = fixtures::chain3_config();
  const auto result = analyze(ds, config, ctx0());
  for (const auto& entry : result.diagnosis.presentation) {
    const double presented = std::abs(brute_force_influence(ds, config, ctx0(), entry.presented).influence);
    for (const auto& c : entry.covered) {
      EXPECT_GE(presented + 1e-12, std::abs(brute_force_influence(ds, config, ctx0(), c).influence));
    }
  }
}

TEST(Diagnose, OrderingByScoreThenPosition) {
  const Dataset ds = fixtures::chain3_copies(2);
  const auto r = report_with({{"t1_0", 0.0}, {"t2_0", 0.3}, {"t3_0", 0.2}, {"t1_1", 0.0}, {"t2_1", 0.3},
                              {"t3_1", 0.5}},
                             1.0);
  const auto d = diagnose(r, ds);
  EXPECT_EQ(d.flagged, (std::vector<std::string>{"t3_1", "t2_0", "t2_1", "t3_0"}));
  ASSERT_EQ(d.presentation.size(), 2u);
  EXPECT_EQ(d.presentation[0].presented, "t3_1");
  EXPECT_EQ(d.presentation[1].presented, "t3_0");
}

TEST(Diagnose, FlagsAntitoneInThreshold) {
  const Dataset ds = fixtures::random_overlap_dataset(5, 60);
  AnalysisConfig config;
  config.radius = 0.2;
  std::size_t previous = ds.size() + 1;
  for (double threshold : {0.001, 0.01, 0.05, 0.2}) {
    config.influence_threshold = threshold;
    const auto d = analyze(ds, config, ctx0()).diagnosis;
    EXPECT_LE(d.flagged.size(), previous);
    previous = d.flagged.size();
  }
}

TEST(Diagnose, TrajectoryReportsPassThrough) {
  InfluenceReport r = report_with({{"A", 1.0}, {"B", 0.5}}, 1.0);
  r.unit_kind = UnitKind::trajectory;
  const auto d = diagnose(r, fixtures::chain3());
  ASSERT_EQ(d.presentation.size(), 2u);
  EXPECT_EQ(d.presentation[0].presented, "A");
  EXPECT_EQ(d.outcome, Outcome::NeedsExpertReview);
}

TEST(ContextWindow, TruncatedAtStart) {
  const Dataset ds = fixtures::chain3();
  EXPECT_EQ(context_window(ds, "t1"), (std::vector<std::string>{"t1", "t2", "t3"}));
  const Dataset longer = fixtures::random_overlap_dataset(1, 40);
  for (const auto& t : longer.transitions()) {
    const auto w = context_window(longer, t.id);
    EXPECT_LE(w.size(), 5u);
    EXPECT_NE(std::find(w.begin(), w.end(), t.id), w.end());
  }
}

TEST(DiagnosisJson, HasContext) {
  const Dataset ds = fixtures::chain3();
  const auto result = analyze(ds, fixtures::chain3_config(), ctx0());
  const Json j = to_json(result.diagnosis, &ds, UnitKind::transition);
  EXPECT_EQ(j["outcome"], "NeedsExpertReview");
  EXPECT_EQ(j["presentation"][0]["presented"], "t3");
  EXPECT_EQ(j["presentation"][0]["context"].size(), 3u);
}
