#pragma once

// Estimator dispatch: value estimate, influence report and diagnosis for
// whichever estimator the configuration names.

#include <optional>
#include <string>
#include <vector>

#include "opeinf/diagnostics.hpp"
#include "opeinf/is_estimators.hpp"
#include "opeinf/kernel_fqe.hpp"
#include "opeinf/kernel_influence.hpp"
#include "opeinf/linear_fqe.hpp"

namespace opeinf {

struct AnalysisContext {
  EvaluationPolicy policy = EvaluationPolicy::constant(0);
  StateActionMetric metric;
  std::optional<FeatureMap> features;       // linear FQE; default [x, onehot(a)]
  std::optional<ValueBaselines> baselines;  // DR / WDR
  CollapseMode collapse = CollapseMode::syntactic;

  FeatureMap feature_map(const Dataset& ds) const {
    return features ? *features : FeatureMap::state_action(ds.dim(), ds.action_count());
  }
};

struct AnalysisResult {
  InfluenceReport report;
  Diagnosis diagnosis;
  std::vector<std::string> warnings;
  std::size_t horizon = 0;
  std::optional<KernelFit> kernel;
};

/// Pins the horizon to the full dataset's default so that leave-one-out
/// refits use the same number of iterations.
inline AnalysisConfig resolve(const AnalysisConfig& config, const Dataset& ds) {
  AnalysisConfig out = config;
  out.horizon = config.resolved_horizon(ds);
  return out;
}

/// v_hat of the configured estimator. Throws Error(undefined) when the
/// estimator has no value on this dataset.
inline double estimate_value(const Dataset& ds, const AnalysisConfig& config,
                             const AnalysisContext& ctx) {
  switch (config.estimator) {
    case EstimatorKind::kernel_fqe:
      return fit_kernel_fqe(ds, ctx.metric, ctx.policy, config).fqe.v_hat;
    case EstimatorKind::linear_fqe:
      return fit_linear_fqe(ds, ctx.feature_map(ds), ctx.policy, config.gamma, config.ridge).v_hat;
    default: {
      const auto tw = compute_weights(ds, ctx.policy, config.gamma, ctx.baselines);
      return estimate(config.estimator, tw);
    }
  }
}

inline AnalysisResult analyze(const Dataset& ds, const AnalysisConfig& raw_config,
                              const AnalysisContext& ctx) {
  raw_config.validate();
  const AnalysisConfig config = resolve(raw_config, ds);
  AnalysisResult out;
  out.horizon = *config.horizon;
  switch (config.estimator) {
    case EstimatorKind::kernel_fqe: {
      out.kernel = fit_kernel_fqe(ds, ctx.metric, ctx.policy, config);
      out.warnings = out.kernel->fqe.warnings;
      out.report = kernel_influence_report(ds, config, *out.kernel);
      out.diagnosis = diagnose(out.report, ds, ctx.collapse, &out.kernel->graph);
      break;
    }
    case EstimatorKind::linear_fqe: {
      const auto model =
          fit_linear_fqe(ds, ctx.feature_map(ds), ctx.policy, config.gamma, config.ridge);
      out.report = linear_influence_report(ds, config, model);
      out.diagnosis = diagnose(out.report, ds);
      break;
    }
    default: {
      const auto tw = compute_weights(ds, ctx.policy, config.gamma, ctx.baselines);
      out.report = is_influence_report(config.estimator, tw, config);
      out.diagnosis = diagnose(out.report, ds);
      break;
    }
  }
  return out;
}

}  // namespace opeinf
