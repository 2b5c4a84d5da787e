// opeinf: command-line driver for influence analysis of off-policy evaluation.
//
//   opeinf analyze DATA.jsonl [options]      exit 0 Reliable, 2 NeedsExpertReview, 3 Unevaluatable, 1 error
//   opeinf validate DATA.jsonl [options]     closed form vs leave-one-out refits
//   opeinf reproduce fig2|cases|fig4         synthetic experiments
//   opeinf generate navigation|tumor         write a synthetic dataset

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "opeinf/opeinf.hpp"
#include "opeinf/review_server.hpp"

namespace fs = std::filesystem;
using namespace opeinf;

namespace {

constexpr const char* kVersion = "0.1.0";

struct AnalysisFlags {
  std::string dataset;
  std::string estimator = "kernel-fqe";
  double gamma = 1.0;
  double radius = 0.5;
  std::optional<std::size_t> horizon;
  double threshold = 0.05;
  std::optional<double> vmax;
  std::string policy = "constant:0";
  std::vector<double> weights;
  std::string baseline = "zero";
  std::string self_removal = "shrink";
  std::string collapse = "syntactic";
  double ridge = 0.0;
  std::string out = ".";
};

void add_analysis_options(CLI::App* cmd, AnalysisFlags& f) {
  cmd->add_option("dataset", f.dataset, "Dataset in JSON Lines record encoding")->required()->check(CLI::ExistingFile);
  cmd->add_option("--estimator", f.estimator, "kernel-fqe, linear-fqe, is, wis, pdis, dr, wdr")
      ->capture_default_str();
  cmd->add_option("--gamma", f.gamma, "Discount factor in [0,1]")->capture_default_str();
  cmd->add_option("--radius", f.radius, "Kernel neighborhood radius R")->capture_default_str();
  cmd->add_option("--horizon", f.horizon, "FQE iterations (default: longest trajectory)");
  cmd->add_option("--threshold", f.threshold, "Flag threshold on |I_j| / |v_hat|")->capture_default_str();
  cmd->add_option("--vmax", f.vmax, "Upper bound on |value|; enables the influence cutoff");
  cmd->add_option("--policy", f.policy, "constant:A | threshold:DIM:CUT:BELOW:ABOVE | knn:K")
      ->capture_default_str();
  cmd->add_option("--weights", f.weights, "Per-component state metric weights")->delimiter(',');
  cmd->add_option("--baseline", f.baseline, "DR/WDR baselines: zero or kernel")
      ->check(CLI::IsMember({"zero", "kernel"}))
      ->capture_default_str();
  cmd->add_option("--self-removal", f.self_removal, "shrink or fixed initial set")
      ->check(CLI::IsMember({"shrink", "fixed"}))
      ->capture_default_str();
  cmd->add_option("--collapse", f.collapse, "syntactic or semantic sequence collapsing")
      ->check(CLI::IsMember({"syntactic", "semantic"}))
      ->capture_default_str();
  cmd->add_option("--ridge", f.ridge, "Ridge term for linear FQE")->capture_default_str();
  cmd->add_option("--out", f.out, "Output directory")->capture_default_str();
}

struct Prepared {
  Dataset dataset;
  AnalysisConfig config;
  AnalysisContext ctx;
};

Prepared prepare(const AnalysisFlags& f) {
  Dataset ds = load_dataset(f.dataset);
  AnalysisConfig config;
  config.estimator = parse_estimator(f.estimator);
  config.gamma = f.gamma;
  config.radius = f.radius;
  config.horizon = f.horizon;
  config.influence_threshold = f.threshold;
  config.v_max = f.vmax;
  config.ridge = f.ridge;
  config.self_removal = f.self_removal == "fixed" ? SelfRemoval::fixed_initial_set : SelfRemoval::shrink_initial_set;
  config.validate();

  AnalysisContext ctx;
  ctx.policy = parse_policy(f.policy, ds);
  if (!f.weights.empty()) {
    if (f.weights.size() != ds.dim()) {
      throw Error(ErrorKind::precondition, "--weights has " + std::to_string(f.weights.size()) +
                                               " entries but states have dimension " + std::to_string(ds.dim()));
    }
    ctx.metric = StateActionMetric(f.weights);
  }
  ctx.collapse = f.collapse == "semantic" ? CollapseMode::semantic : CollapseMode::syntactic;
  if (config.estimator == EstimatorKind::dr || config.estimator == EstimatorKind::wdr) {
    if (f.baseline == "kernel") {
      const auto fit = fit_kernel_fqe(ds, ctx.metric, ctx.policy, config);
      const auto q = std::make_shared<KernelValueFunction>(ds, ctx.metric, config.radius, fit.fqe, config.gamma);
      const auto pi = ctx.policy;
      ctx.baselines = ValueBaselines{[q](std::span<const double> x, ActionId a) { return (*q)(x, a); },
                                     [q, pi](std::span<const double> x) { return (*q)(x, pi(x)); }};
    } else {
      ctx.baselines = ValueBaselines::zero();
    }
  }
  return {std::move(ds), std::move(config), std::move(ctx)};
}

Json config_snapshot(const AnalysisFlags& f, const Prepared& p, std::size_t horizon) {
  Json j;
  j["estimator"] = to_string(p.config.estimator);
  j["gamma"] = p.config.gamma;
  j["radius"] = p.config.radius;
  j["horizon"] = horizon;
  j["horizon_source"] = f.horizon ? "flag" : "longest trajectory";
  j["threshold"] = p.config.influence_threshold;
  j["v_max"] = p.config.v_max ? Json(*p.config.v_max) : Json(nullptr);
  j["policy"] = p.ctx.policy.descriptor();
  j["metric_weights"] = p.ctx.metric.weights();
  j["baseline"] = f.baseline;
  j["self_removal"] = f.self_removal;
  j["collapse"] = f.collapse;
  j["ridge"] = p.config.ridge;
  return j;
}

std::string sidecar(const std::string& dataset_path, const std::string& suffix) {
  return fs::path(dataset_path).replace_extension().string() + suffix;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::not_found, "cannot write '" + path.string() + "'");
  out << text;
}

Json output_entry(const fs::path& path) {
  return Json{{"file", path.filename().string()}, {"sha256", sha256_hex(read_file(path))}};
}

Json manifest(const std::string& command, const Json& config, const Dataset& ds, const std::string& dataset_path,
              const std::vector<fs::path>& outputs, double seconds) {
  Json j;
  j["tool"] = "opeinf";
  j["version"] = kVersion;
  j["command"] = command;
  j["config"] = config;
  j["dataset"] = {{"path", dataset_path},
                  {"fingerprint", fingerprint(ds)},
                  {"transitions", ds.size()},
                  {"trajectories", ds.trajectories().size()}};
  Json outs = Json::array();
  for (const auto& p : outputs) outs.push_back(output_entry(p));
  j["outputs"] = outs;
  j["timing_seconds"] = seconds;
  return j;
}

int exit_code(Outcome o) {
  switch (o) {
    case Outcome::Reliable: return 0;
    case Outcome::NeedsExpertReview: return 2;
    case Outcome::Unevaluatable: return 3;
  }
  return 1;
}

double elapsed(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

int cmd_analyze(const AnalysisFlags& f, std::optional<int> serve_port) {
  const auto start = std::chrono::steady_clock::now();
  const Prepared p = prepare(f);
  const auto result = analyze(p.dataset, p.config, p.ctx);
  const fs::path dir(f.out);
  fs::create_directories(dir);

  std::ostringstream report;
  write_report(report, result.report);
  write_text(dir / "report.jsonl", report.str());

  Json diagnosis = to_json(result.diagnosis, &p.dataset, result.report.unit_kind);
  diagnosis["summary"] = report_summary(result.report);
  diagnosis["warnings"] = result.warnings;
  write_text(dir / "diagnosis.json", diagnosis.dump(2) + "\n");

  const Json config = config_snapshot(f, p, result.horizon);
  const Json m = manifest("analyze", config, p.dataset, f.dataset, {dir / "report.jsonl", dir / "diagnosis.json"},
                          elapsed(start));
  write_text(dir / "manifest.json", m.dump(2) + "\n");

  for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
  std::cout << "v_hat " << std::setprecision(10) << result.report.v_hat << '\n'
            << "outcome " << to_string(result.diagnosis.outcome) << '\n'
            << "flagged " << result.diagnosis.flagged.size() << " dead_ends " << result.diagnosis.dead_ends.size()
            << '\n';
  for (const auto& e : result.diagnosis.presentation) {
    const auto* u = result.report.find(e.presented);
    std::cout << "  " << e.presented << "  score " << e.score;
    if (u && u->dead_end) std::cout << "  dead-end";
    if (!e.covered.empty()) std::cout << "  covers " << e.covered.size();
    std::cout << '\n';
  }
  std::cout << "wrote " << (dir / "report.jsonl").string() << ", diagnosis.json, manifest.json\n";

  if (serve_port) {
    ReviewSession session(p.dataset, p.config, p.ctx);
    ReviewServer server(session);
    std::cout << "review service on http://127.0.0.1:" << *serve_port << std::endl;
    server.run("127.0.0.1", *serve_port);
  }
  return exit_code(result.diagnosis.outcome);
}

int cmd_validate(const AnalysisFlags& f, std::size_t budget, std::size_t top_k) {
  const auto start = std::chrono::steady_clock::now();
  const Prepared p = prepare(f);
  const auto result = analyze(p.dataset, p.config, p.ctx);
  const auto oracle = brute_force_all(p.dataset, p.config, p.ctx, budget);
  const auto summary = compare_with_oracle(result.report, oracle, top_k);
  const fs::path dir(f.out);
  fs::create_directories(dir);

  std::ostringstream csv;
  csv << std::setprecision(17) << "id,closed_form,oracle,abs_deviation,rel_deviation,status_agrees\n";
  std::cout << std::left << std::setw(24) << "unit" << std::setw(24) << "closed form" << std::setw(24) << "oracle"
            << "abs dev\n";
  for (const auto& r : summary.rows) {
    const auto show = [](const std::optional<double>& v) {
      std::ostringstream s;
      if (v) s << std::setprecision(12) << *v; else s << "undefined";
      return s.str();
    };
    csv << r.id << ',';
    if (r.closed_form) csv << *r.closed_form;
    csv << ',';
    if (r.oracle) csv << *r.oracle;
    csv << ',' << r.abs_deviation << ',' << r.rel_deviation << ','
        << (r.status_agrees ? "true" : "false") << '\n';
    std::cout << std::setw(24) << r.id << std::setw(24) << show(r.closed_form) << std::setw(24) << show(r.oracle)
              << std::setprecision(3) << r.abs_deviation << '\n';
  }
  write_text(dir / "validation.csv", csv.str());
  Json j = to_json(summary);
  j["v_hat"] = result.report.v_hat;
  j["units_total"] = oracle.units_total;
  write_text(dir / "validation.json", j.dump(2) + "\n");
  const Json m = manifest("validate", config_snapshot(f, p, result.horizon), p.dataset, f.dataset,
                          {dir / "validation.csv", dir / "validation.json"}, elapsed(start));
  write_text(dir / "manifest.json", m.dump(2) + "\n");

  std::cout << std::setprecision(6) << "max abs deviation " << summary.max_abs << ", max rel deviation "
            << summary.max_rel << ", top-" << summary.top_k << " overlap " << summary.top_k_overlap
            << (summary.signs_agree_on_overlap ? "" : " (signs disagree)") << ", status mismatches "
            << summary.status_mismatches << '\n';
  if (summary.truncated) {
    std::cout << "partial: oracle budget reached after " << oracle.results.size() << " of " << oracle.units_total
              << " units\n";
  }
  return 0;
}

int cmd_reproduce(const std::string& what, std::size_t seeds, std::uint64_t seed, const std::string& out) {
  const fs::path dir(out);
  fs::create_directories(dir);
  std::cout << std::setprecision(6);
  if (what == "fig2") {
    const auto study = run_navigation_study(NavigationConfig{}, navigation_analysis_config(), seeds, seed);
    static const char* names[] = {"outside", "I", "II", "III"};
    std::ostringstream csv;
    csv << std::setprecision(17) << "region,abs_influence\n";
    for (std::size_t r = 0; r < 4; ++r) {
      for (double v : study.regions[r].abs_influence) csv << names[r] << ',' << v << '\n';
    }
    write_text(dir / "fig2_influence.csv", csv.str());
    write_text(dir / "fig2_summary.json", to_json(study).dump(2) + "\n");
    for (std::size_t r = 1; r < 4; ++r) {
      std::cout << "region " << names[r] << ": n=" << study.regions[r].abs_influence.size()
                << " median |I| = " << study.regions[r].median() << '\n';
    }
    std::cout << "II/I = " << study.sparse_to_dense() << ", III/I = " << study.off_path_to_dense() << '\n';
    return 0;
  }
  if (what == "cases") {
    Json all = Json::array();
    std::ostringstream csv;
    csv << "case,outcome,flagged,dead_ends,as_expected\n";
    for (const auto& spec : tumor_cases()) {
      const auto r = run_tumor_case(spec, tumor_analysis_config());
      all.push_back(to_json(r));
      csv << spec.name << ',' << to_string(r.analysis.diagnosis.outcome) << ','
          << r.analysis.diagnosis.flagged.size() << ',' << r.analysis.diagnosis.dead_ends.size() << ','
          << (r.as_expected() ? "true" : "false") << '\n';
      std::cout << std::left << std::setw(28) << spec.name << std::setw(20) << to_string(r.analysis.diagnosis.outcome)
                << "flags " << r.analysis.diagnosis.flagged.size() << ", dead ends "
                << r.analysis.diagnosis.dead_ends.size() << (r.as_expected() ? "" : "  (unexpected)") << '\n';
    }
    write_text(dir / "cases.csv", csv.str());
    write_text(dir / "cases.json", all.dump(2) + "\n");
    return 0;
  }
  if (what == "fig4") {
    const auto methods = compare_is_methods(method_comparison_tumor());
    const Dataset ds = generate_tumor(method_comparison_tumor());
    std::ostringstream csv;
    csv << std::setprecision(17) << "method,trajectory_id,influence\n";
    for (const auto& m : methods) {
      AnalysisConfig config;
      config.estimator = m.method;
      AnalysisContext ctx;
      ctx.policy = tumor_policy(method_comparison_tumor());
      const auto result = analyze(ds, config, ctx);
      for (const auto& u : result.report.units) {
        csv << to_string(m.method) << ',' << u.id << ',';
        if (u.status == UnitStatus::ok) csv << u.influence;
        csv << '\n';
      }
      std::cout << std::left << std::setw(6) << to_string(m.method) << "v_hat " << std::setw(12) << m.v_hat << "top-5:";
      for (const auto& id : m.top) std::cout << ' ' << id;
      std::cout << '\n';
    }
    write_text(dir / "fig4_influence.csv", csv.str());
    write_text(dir / "fig4_summary.json", to_json(methods).dump(2) + "\n");
    std::cout << "top-5 sets differ: " << (top_sets_differ(methods) ? "yes" : "no") << '\n';
    return 0;
  }
  throw Error(ErrorKind::precondition, "unknown reproduction '" + what + "'");
}

struct GenerateFlags {
  std::string domain;
  std::uint64_t seed = 0;
  std::optional<std::size_t> trajectories;
  std::optional<double> epsilon;
  std::optional<double> noise;
  std::optional<int> tumor_case;
  std::string out;
};

int cmd_generate(const GenerateFlags& g) {
  if (g.domain == "navigation") {
    NavigationConfig config;
    config.seed = g.seed;
    if (g.trajectories) config.num_trajectories = *g.trajectories;
    if (g.noise) config.heading_noise = *g.noise;
    const auto data = generate_navigation(config);
    save_dataset(g.out, data.dataset);
    std::ostringstream csv;
    csv << "id,region\n";
    for (std::size_t n = 0; n < data.dataset.size(); ++n) csv << data.dataset[n].id << ',' << data.regions[n] << '\n';
    write_text(sidecar(g.out, ".regions.csv"), csv.str());
    std::cout << "wrote " << data.dataset.size() << " transitions to " << g.out << " (regions in " << sidecar(g.out, ".regions.csv")
              << ")\n";
    return 0;
  }
  TumorCase spec{"custom", CaseKind::reliable, TumorConfig{}};
  if (g.tumor_case) {
    const auto cases = tumor_cases();
    if (*g.tumor_case < 1 || *g.tumor_case > static_cast<int>(cases.size())) {
      throw Error(ErrorKind::precondition, "--case must be 1..4");
    }
    spec = cases[static_cast<std::size_t>(*g.tumor_case - 1)];
  } else {
    spec.tumor.seed = g.seed;
  }
  if (g.trajectories) spec.tumor.num_trajectories = *g.trajectories;
  if (g.epsilon) spec.tumor.epsilon = *g.epsilon;
  if (g.noise) {
    spec.tumor.noise = *g.noise;
    spec.tumor.stochastic = *g.noise > 0.0;
  }
  Dataset ds = generate_tumor(spec.tumor);
  if (spec.spikes > 0) {
    auto [spiked, ids] =
        inject_reward_spikes(ds, tumor_policy(spec.tumor), spec.spikes, spec.spike_size, spec.tumor.seed);
    ds = std::move(spiked);
    std::ostringstream list;
    for (const auto& id : ids) list << id << '\n';
    write_text(sidecar(g.out, ".injected.txt"), list.str());
  }
  save_dataset(g.out, ds);
  std::cout << "wrote " << ds.size() << " transitions to " << g.out
            << "\nanalyze with: --policy " << tumor_policy(spec.tumor).descriptor() << " --weights 1,1,1,100 --radius "
            << tumor_analysis_config().radius << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exact influence functions for off-policy evaluation"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  AnalysisFlags analyze_flags;
  std::optional<int> serve_port;
  auto* analyze_cmd = app.add_subcommand("analyze", "Estimate, compute influences and diagnose");
  add_analysis_options(analyze_cmd, analyze_flags);
  analyze_cmd->add_option("--serve", serve_port, "Then serve the review API on this localhost port");

  AnalysisFlags validate_flags;
  std::size_t budget = kDefaultOracleBudget;
  std::size_t top_k = 5;
  auto* validate_cmd = app.add_subcommand("validate", "Compare closed-form influences with removal refits");
  add_analysis_options(validate_cmd, validate_flags);
  validate_cmd->add_option("--oracle-budget", budget, "Maximum number of refits")->capture_default_str();
  validate_cmd->add_option("--top-k", top_k, "Size of the top set compared")->capture_default_str();

  std::string figure;
  std::size_t seeds = 200;
  std::uint64_t reproduce_seed = 0;
  std::string reproduce_out = ".";
  auto* reproduce_cmd = app.add_subcommand("reproduce", "Run a synthetic experiment");
  reproduce_cmd->add_option("figure", figure, "fig2, cases or fig4")
      ->required()
      ->check(CLI::IsMember({"fig2", "cases", "fig4"}));
  reproduce_cmd->add_option("--seeds", seeds, "Navigation seeds for fig2")->capture_default_str();
  reproduce_cmd->add_option("--seed", reproduce_seed, "First navigation seed for fig2")->capture_default_str();
  reproduce_cmd->add_option("--out", reproduce_out, "Output directory")->capture_default_str();

  GenerateFlags gen;
  auto* generate_cmd = app.add_subcommand("generate", "Write a synthetic dataset");
  generate_cmd->add_option("domain", gen.domain, "navigation or tumor")
      ->required()
      ->check(CLI::IsMember({"navigation", "tumor"}));
  generate_cmd->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();
  generate_cmd->add_option("--trajectories", gen.trajectories, "Number of trajectories");
  generate_cmd->add_option("--epsilon", gen.epsilon, "Tumor behavior exploration rate");
  generate_cmd->add_option("--noise", gen.noise, "Tumor size noise / navigation heading noise");
  generate_cmd->add_option("--case", gen.tumor_case, "Tumor case preset 1..4");
  generate_cmd->add_option("--out", gen.out, "Output dataset path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*analyze_cmd) return cmd_analyze(analyze_flags, serve_port);
    if (*validate_cmd) return cmd_validate(validate_flags, budget, top_k);
    if (*reproduce_cmd) return cmd_reproduce(figure, seeds, reproduce_seed, reproduce_out);
    if (*generate_cmd) return cmd_generate(gen);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
