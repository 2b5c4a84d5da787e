#pragma once

// Experiment drivers on the synthetic domains: per-region influence
// distributions on navigation, the four tumor cases, and the comparison of
// importance-sampling methods on one tumor dataset.

#include <algorithm>
#include <array>
#include <string>
#include <vector>

#include "opeinf/domains.hpp"
#include "opeinf/pipeline.hpp"

namespace opeinf {

namespace detail {

inline double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  return 0.5 * (*mid + *std::max_element(v.begin(), mid));
}

inline double quantile_of(std::vector<double> v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Navigation regions

struct RegionStats {
  std::vector<double> abs_influence;  // pooled over seeds

  double median() const { return detail::median_of(abs_influence); }
};

struct NavigationStudy {
  std::size_t seeds = 0;
  std::array<RegionStats, 4> regions;  // index 0 = outside every box
  std::vector<std::string> warnings;    // distinct warnings seen across seeds

  double sparse_to_dense() const { return regions[2].median() / regions[1].median(); }
  double off_path_to_dense() const { return regions[3].median() / regions[1].median(); }
};

inline AnalysisConfig navigation_analysis_config() {
  AnalysisConfig config;
  config.gamma = 1.0;
  config.radius = 0.5;
  config.horizon = 40;
  return config;
}

inline NavigationStudy run_navigation_study(NavigationConfig base, const AnalysisConfig& config,
                                            std::size_t seeds, std::uint64_t first_seed = 0) {
  NavigationStudy study;
  study.seeds = seeds;
  AnalysisContext ctx;
  for (std::size_t s = 0; s < seeds; ++s) {
    base.seed = first_seed + s;
    const auto data = generate_navigation(base);
    const auto result = analyze(data.dataset, config, ctx);
    for (const auto& w : result.warnings) {
      if (std::find(study.warnings.begin(), study.warnings.end(), w) == study.warnings.end()) {
        study.warnings.push_back(w);
      }
    }
    for (std::size_t n = 0; n < data.dataset.size(); ++n) {
      const auto& unit = result.report.units[n];
      study.regions[static_cast<std::size_t>(data.regions[n])].abs_influence.push_back(std::abs(unit.influence));
    }
  }
  return study;
}

inline Json to_json(const NavigationStudy& study) {
  static const char* names[] = {"outside", "I_dense", "II_sparse", "III_off_path"};
  Json j;
  j["seeds"] = study.seeds;
  Json regions = Json::object();
  for (std::size_t r = 0; r < 4; ++r) {
    const auto& v = study.regions[r].abs_influence;
    Json e;
    e["count"] = v.size();
    if (!v.empty()) {
      e["median_abs_influence"] = study.regions[r].median();
      e["q10"] = detail::quantile_of(v, 0.1);
      e["q90"] = detail::quantile_of(v, 0.9);
      e["max"] = *std::max_element(v.begin(), v.end());
    }
    regions[names[r]] = e;
  }
  j["regions"] = regions;
  j["ratio_II_over_I"] = study.sparse_to_dense();
  j["ratio_III_over_I"] = study.off_path_to_dense();
  j["warnings"] = study.warnings;
  return j;
}

// ---------------------------------------------------------------------------
// Tumor cases

enum class CaseKind { reliable, dead_end, validated_flags, outlier_flags };

inline const char* to_string(CaseKind k) {
  switch (k) {
    case CaseKind::reliable: return "reliable";
    case CaseKind::dead_end: return "dead_end";
    case CaseKind::validated_flags: return "validated_flags";
    case CaseKind::outlier_flags: return "outlier_flags";
  }
  return "?";
}

struct TumorCase {
  std::string name;
  CaseKind kind;
  TumorConfig tumor;
  std::size_t spikes = 0;
  double spike_size = 0.0;
};

inline AnalysisConfig tumor_analysis_config() {
  AnalysisConfig config;
  config.gamma = 1.0;
  config.radius = 0.3;
  config.influence_threshold = 0.05;
  return config;
}

/// ε = 0.3 throughout. Seeds are part of each case: small data sets land in
/// different regimes depending on which actions the behavior policy drew.
inline std::vector<TumorCase> tumor_cases() {
  std::vector<TumorCase> cases;
  TumorConfig large;
  large.num_trajectories = 200;
  large.seed = 0;
  cases.push_back({"case1_large_deterministic", CaseKind::reliable, large});

  TumorConfig small;
  small.num_trajectories = 5;
  small.seed = 0;
  cases.push_back({"case2_small_deterministic", CaseKind::dead_end, small});

  TumorConfig noisy;
  noisy.num_trajectories = 20;
  noisy.stochastic = true;
  noisy.noise = 0.2;
  noisy.seed = 2;
  cases.push_back({"case3_stochastic", CaseKind::validated_flags, noisy});

  cases.push_back({"case4_outliers", CaseKind::outlier_flags, large, 3, 500.0});
  return cases;
}

struct TumorCaseResult {
  TumorCase spec;
  Dataset dataset;
  AnalysisResult analysis;
  std::vector<std::string> injected;        // sorted
  std::vector<std::string> implausible;     // flagged ids failing the model check

  /// Whether the outcome has the shape the case calls for.
  bool as_expected() const {
    const auto& d = analysis.diagnosis;
    switch (spec.kind) {
      case CaseKind::reliable:
        return d.outcome == Outcome::Reliable;
      case CaseKind::dead_end:
        return d.outcome == Outcome::Unevaluatable && !d.dead_ends.empty();
      case CaseKind::validated_flags:
        return d.outcome == Outcome::NeedsExpertReview && d.dead_ends.empty() && !d.flagged.empty() &&
               implausible.empty();
      case CaseKind::outlier_flags: {
        auto flagged = d.flagged;
        std::sort(flagged.begin(), flagged.end());
        return d.outcome == Outcome::NeedsExpertReview && flagged == injected;
      }
    }
    return false;
  }
};

inline TumorCaseResult run_tumor_case(const TumorCase& spec, const AnalysisConfig& config) {
  const auto policy = tumor_policy(spec.tumor);
  Dataset ds = generate_tumor(spec.tumor);
  std::vector<std::string> injected;
  if (spec.spikes > 0) {
    auto spiked = inject_reward_spikes(ds, policy, spec.spikes, spec.spike_size, spec.tumor.seed);
    ds = std::move(spiked.first);
    injected = std::move(spiked.second);
  }
  AnalysisContext ctx;
  ctx.policy = policy;
  ctx.metric = tumor_metric();
  auto analysis = analyze(ds, config, ctx);
  std::vector<std::string> implausible;
  for (const auto& id : analysis.diagnosis.flagged) {
    if (!tumor_step_plausible(spec.tumor, ds[ds.index_of(id)])) implausible.push_back(id);
  }
  return {spec, std::move(ds), std::move(analysis), std::move(injected), std::move(implausible)};
}

inline Json to_json(const TumorCaseResult& r) {
  const auto& d = r.analysis.diagnosis;
  Json j;
  j["name"] = r.spec.name;
  j["kind"] = to_string(r.spec.kind);
  j["num_trajectories"] = r.spec.tumor.num_trajectories;
  j["stochastic"] = r.spec.tumor.stochastic;
  j["noise"] = r.spec.tumor.noise;
  j["epsilon"] = r.spec.tumor.epsilon;
  j["seed"] = r.spec.tumor.seed;
  j["v_hat"] = r.analysis.report.v_hat;
  j["outcome"] = to_string(d.outcome);
  j["flagged"] = d.flagged;
  j["dead_ends"] = d.dead_ends;
  j["injected"] = r.injected;
  j["implausible_flags"] = r.implausible;
  j["as_expected"] = r.as_expected();
  return j;
}

// ---------------------------------------------------------------------------
// Importance-sampling method comparison

struct MethodTopK {
  EstimatorKind method;
  double v_hat = 0.0;
  std::vector<std::string> top;  // by |I_j| descending, ties by id
  std::vector<double> influences;
};

inline TumorConfig method_comparison_tumor() {
  TumorConfig config;
  config.num_trajectories = 100;
  config.epsilon = 0.1;
  config.seed = 7;
  return config;
}

inline std::vector<MethodTopK> compare_is_methods(const TumorConfig& tumor, double gamma = 1.0,
                                                  std::size_t k = 5) {
  const Dataset ds = generate_tumor(tumor);
  AnalysisContext ctx;
  ctx.policy = tumor_policy(tumor);
  std::vector<MethodTopK> out;
  for (auto method : {EstimatorKind::is, EstimatorKind::wis, EstimatorKind::pdis}) {
    AnalysisConfig config;
    config.gamma = gamma;
    config.estimator = method;
    const auto result = analyze(ds, config, ctx);
    std::vector<const UnitInfluence*> units;
    for (const auto& u : result.report.units) {
      if (u.status == UnitStatus::ok) units.push_back(&u);
    }
    std::sort(units.begin(), units.end(), [](const UnitInfluence* a, const UnitInfluence* b) {
      const double x = std::abs(a->influence), y = std::abs(b->influence);
      return x != y ? x > y : a->id < b->id;
    });
    MethodTopK m;
    m.method = method;
    m.v_hat = result.report.v_hat;
    for (const auto* u : units) m.influences.push_back(u->influence);
    for (std::size_t n = 0; n < std::min(k, units.size()); ++n) m.top.push_back(units[n]->id);
    out.push_back(std::move(m));
  }
  return out;
}

/// True when at least two methods disagree on the top-k set.
inline bool top_sets_differ(const std::vector<MethodTopK>& methods) {
  for (std::size_t a = 0; a < methods.size(); ++a) {
    for (std::size_t b = a + 1; b < methods.size(); ++b) {
      auto x = methods[a].top, y = methods[b].top;
      std::sort(x.begin(), x.end());
      std::sort(y.begin(), y.end());
      if (x != y) return true;
    }
  }
  return false;
}

inline Json to_json(const std::vector<MethodTopK>& methods) {
  Json j = Json::object();
  for (const auto& m : methods) {
    Json e;
    e["v_hat"] = m.v_hat;
    e["top5"] = m.top;
    e["median_abs_influence"] = detail::median_of([&] {
      std::vector<double> a;
      for (double v : m.influences) a.push_back(std::abs(v));
      return a;
    }());
    e["influences"] = m.influences;
    j[to_string(m.method)] = e;
  }
  j["top_sets_differ"] = top_sets_differ(methods);
  return j;
}

}  // namespace opeinf
