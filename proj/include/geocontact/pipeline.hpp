#pragma once

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "geocontact/config.hpp"
#include "geocontact/fields.hpp"
#include "geocontact/gait.hpp"
#include "geocontact/io.hpp"
#include "geocontact/planner.hpp"

namespace geocontact {

inline constexpr double kRemainderWarnRatio = 0.2;
inline constexpr const char* kCacheDirEnv = "GEOCONTACT_CACHE_DIR";

struct RunOptions {
  bool use_cache = true;
  unsigned workers = default_worker_count();
  std::ostream* log = &std::cout;
  std::ostream* warn = &std::cerr;
};

inline std::filesystem::path cache_directory(const PipelineConfig& cfg) {
  if (const char* env = std::getenv(kCacheDirEnv); env != nullptr && *env != '\0') return env;
  return cfg.paths.cache_dir;
}

inline std::filesystem::path field_cache_path(const PipelineConfig& cfg) {
  return cache_directory(cfg) / ("fields-" + fields_key(cfg) + ".bin");
}

// ---------------------------------------------------------------------------
// fields

struct FieldsRun {
  ConnectionFieldSet fields;
  PotentialStack stack;
  std::string key;
  bool from_cache = false;
};

/// Loads the connection fields and potentials from the cache, or computes
/// and stores them. A damaged cache file is reported and recomputed.
inline FieldsRun run_fields(const PipelineConfig& cfg, const RunOptions& opt = {}) {
  FieldsRun run;
  run.key = fields_key(cfg);
  const auto path = field_cache_path(cfg);
  if (opt.use_cache && std::filesystem::exists(path)) {
    try {
      decode_field_cache(read_file(path), run.key, run.fields, run.stack);
      run.from_cache = true;
      return run;
    } catch (const CacheCorrupt& e) {
      *opt.warn << "warning: corrupted field cache " << path.string() << " (" << e.what() << "); recomputing\n";
    } catch (const Error& e) {
      *opt.warn << "warning: unreadable field cache " << path.string() << " (" << e.what() << "); recomputing\n";
    }
  }
  const auto patterns = cfg.patterns();
  run.fields = evaluate_connection_grid(cfg.model(), patterns, cfg.grid, cfg.force_model(), {}, opt.workers);
  run.stack = build_potential_stack(run.fields, cfg.hodge, opt.workers);
  if (opt.use_cache) write_file_atomic(path, encode_field_cache(run.key, run.fields, run.stack));
  return run;
}

inline nlohmann::json fields_summary_json(const PipelineConfig& cfg, const FieldsRun& run) {
  double ratio[2] = {0, 0};
  for (int d = 0; d < 2; ++d)
    for (double r : run.stack.remainder_ratio[d]) ratio[d] = std::max(ratio[d], r);
  return {{"schema", kFieldsSummarySchema},
          {"config_hash", config_hash(cfg)},
          {"fields_key", run.key},
          {"n_patterns", run.fields.patterns.size()},
          {"grid", {{"r_max", cfg.grid.r_max}, {"resolution", cfg.grid.resolution}}},
          {"remainder_ratio", {{"x", ratio[0]}, {"y", ratio[1]}}}};
}

/// Runs the fields stage and writes fields_summary.json and fields.csv.
inline FieldsRun cmd_fields(const PipelineConfig& cfg, const RunOptions& opt = {}) {
  FieldsRun run = run_fields(cfg, opt);
  const double ratio = run.stack.max_remainder_ratio();
  *opt.log << fmt::format("fields: {} patterns on a {}x{} grid ({})\n", run.fields.patterns.size(),
                          cfg.grid.resolution, cfg.grid.resolution, run.from_cache ? "cache hit" : "computed");
  *opt.log << fmt::format("fields: divergence-free / curl-free magnitude ratio {:.4f}\n", ratio);
  if (ratio > kRemainderWarnRatio)
    *opt.warn << fmt::format("warning: divergence-free remainder ratio {:.3f} exceeds {}\n", ratio,
                             kRemainderWarnRatio);
  const std::filesystem::path out = cfg.paths.out_dir;
  write_file_atomic(out / "fields_summary.json", fields_summary_json(cfg, run).dump(2) + "\n");
  write_file_atomic(out / "fields.csv", fields_csv(run.fields, run.stack));
  return run;
}

// ---------------------------------------------------------------------------
// plan

inline PlanArtifact run_plan(const PipelineConfig& cfg, const FieldsRun& fields) {
  const ShapeCycle cycle = cfg.cycle();
  PlanArtifact a;
  a.plan = plan_gait_sequence(fields.stack, cycle, cfg.planner.direction, cfg.planner.k_set, cfg.planner.lambda,
                              cfg.planner.method);
  a.patterns = fields.stack.patterns;
  a.gait = assemble_gait(cycle, a.plan.solution, a.patterns);
  a.k_set = cfg.planner.k_set;
  a.body_length = cfg.robot.body_length();
  a.config_hash = config_hash(cfg);
  a.fields_key = fields.key;
  return a;
}

inline PlanArtifact cmd_plan(const PipelineConfig& cfg, const RunOptions& opt = {}) {
  const FieldsRun fields = run_fields(cfg, opt);
  PlanArtifact a = run_plan(cfg, fields);
  const PlanSolution& s = a.plan.solution;
  *opt.log << fmt::format("plan: direction {} method {} K {} displacement {:.6f} BL score {:.6g}\n",
                          to_string(a.plan.direction), to_string(a.plan.method), s.switch_count,
                          s.displacement / a.body_length, s.score);
  write_file_atomic(std::filesystem::path(cfg.paths.out_dir) / "plan.json", plan_to_json(a).dump(2) + "\n");
  return a;
}

// ---------------------------------------------------------------------------
// simulate

inline SimulationResult run_simulate(const PipelineConfig& cfg, const GaitPlan& gait, bool compose) {
  SimulationOptions so;
  so.substeps_per_arc = cfg.sim.substeps;
  so.cycles = cfg.sim.cycles;
  const RobotModel model = cfg.model();
  for (const auto& ph : gait.phases)
    if (ph.pattern.n_legs() != cfg.robot.n_legs())
      throw ConfigError("gait patterns do not match the robot's leg count");
  return compose ? compose_and_simulate(model, gait, cfg.force_model(), so)
                 : simulate(model, gait, cfg.force_model(), so);
}

/// Simulates the gait in `plan_json` (or plans first when it is empty) and
/// writes trajectory.csv and metrics.json.
inline SimulationResult cmd_simulate(const PipelineConfig& cfg, const std::string& plan_path,
                                     const RunOptions& opt = {}) {
  std::string plan_text;
  if (plan_path.empty()) {
    plan_text = plan_to_json(cmd_plan(cfg, opt)).dump(2) + "\n";
  } else {
    try {
      plan_text = read_file(plan_path);
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }
  nlohmann::json pj;
  try {
    pj = nlohmann::json::parse(plan_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("plan file is not valid JSON: ") + e.what());
  }
  const GaitPlan gait = gait_from_plan_json(pj);
  const SimulationResult r = run_simulate(cfg, gait, cfg.sim.compose);
  const std::filesystem::path out = cfg.paths.out_dir;
  write_file_atomic(out / "trajectory.csv", trajectory_csv(r.trajectory));
  const auto metrics = metrics_to_json(r, config_hash(cfg), to_hex(fnv1a(pj.dump())), cfg.sim.compose,
                                       cfg.sim.cycles, cfg.sim.substeps);
  write_file_atomic(out / "metrics.json", metrics.dump(2) + "\n");
  *opt.log << fmt::format("simulate: {} rows, dx {:.6f} BL/cyc, dy {:.6f} BL/cyc, dtheta {:.6f} rad/cyc{}\n",
                          r.trajectory.samples.size(), r.metrics.delta_x, r.metrics.delta_y, r.metrics.delta_theta,
                          cfg.sim.compose ? " (composed)" : "");
  return r;
}

// ---------------------------------------------------------------------------
// verify

struct SuiteResult {
  std::string name;
  bool passed = false;
  double worst = 0;  // largest observed violation
  std::string detail;
};

struct VerifyReport {
  std::uint64_t seed = 0;
  int trials = 0;
  std::vector<SuiteResult> suites;
  bool all_passed() const {
    for (const auto& s : suites)
      if (!s.passed) return false;
    return true;
  }
};

namespace detail {

inline WeightTensor random_additive_tensor(std::mt19937_64& rng, int n, int m) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> table(static_cast<std::size_t>(n) * m);
  for (double& v : table) v = u(rng);
  return WeightTensor::from_site_potentials(n, m, table);
}

// Adds independent noise to every off-diagonal entry, which destroys both
// anti-symmetry and additivity.
inline void break_additivity(std::mt19937_64& rng, WeightTensor& d) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < d.patterns(); ++i)
    for (int j = 0; j < d.sites(); ++j)
      for (int l = 0; l < d.sites(); ++l)
        if (j != l) d(i, j, l) += u(rng);
}

}  // namespace detail

struct VerifyOptions {
  std::uint64_t seed = 1;
  int trials = 200;
  bool inject_nonadditive = false;  // negative control for the duality suite
  int symmetry_samples = 20;
};

/// Randomized solver and model checks. Deterministic for a fixed seed.
inline VerifyReport run_verify(const PipelineConfig& cfg, const VerifyOptions& vo) {
  if (vo.trials < 1) throw ArgumentError("verify: trials must be >= 1");
  VerifyReport rep;
  rep.seed = vo.seed;
  rep.trials = vo.trials;
  constexpr int kM = 8, kN = 4;

  {
    std::mt19937_64 rng(vo.seed);
    std::uniform_real_distribution<double> lam(0.0, 0.5);
    SuiteResult dual{"duality", true, 0, ""};
    SuiteResult count{"wall-count", true, 0, ""};
    int failures = 0;
    for (int t = 0; t < vo.trials; ++t) {
      WeightTensor d = detail::random_additive_tensor(rng, kN, kM);
      const double lambda = lam(rng);
      if (vo.inject_nonadditive) detail::break_additivity(rng, d);
      const PottsInstance inst = PottsInstance::unchecked(d, lambda);
      const PlanSolution brute = brute_force_potts(inst);
      const PlanSolution walls = domain_wall_search(build_ising_dual(inst), up_to_k(kM), lambda);
      const double rel = std::abs(walls.score - brute.score) / std::max(1.0, std::abs(brute.score));
      dual.worst = std::max(dual.worst, rel);
      if (rel > 1e-9) ++failures;
      double expected = 0;
      for (int k : up_to_k(kM)) expected += k == 0 ? 1.0 : binomial(kM, k);
      if (static_cast<double>(walls.configurations) != expected) {
        count.passed = false;
        count.worst = std::max(count.worst, std::abs(static_cast<double>(walls.configurations) - expected));
      }
    }
    dual.passed = failures == 0;
    dual.detail = fmt::format("{} of {} instances disagree{}", failures, vo.trials,
                              vo.inject_nonadditive ? " (non-additive weights injected)" : "");
    count.detail = "domain-wall configurations equal the binomial sum";
    rep.suites.push_back(dual);
    rep.suites.push_back(count);
  }

  {
    std::mt19937_64 rng(vo.seed + 1);
    SuiteResult greedy{"greedy", true, 0, ""};
    int failures = 0;
    for (int t = 0; t < vo.trials; ++t) {
      const PottsInstance inst(detail::random_additive_tensor(rng, kN, kM), 0.0);
      const double diff = std::abs(greedy_plan(inst).score - brute_force_potts(inst).score);
      greedy.worst = std::max(greedy.worst, diff);
      if (diff != 0.0) ++failures;
    }
    greedy.passed = failures == 0;
    greedy.detail = fmt::format("{} of {} instances differ from brute force at lambda 0", failures, vo.trials);
    rep.suites.push_back(greedy);
  }

  {
    std::mt19937_64 rng(vo.seed + 2);
    SuiteResult w{"weights", true, 0, ""};
    for (int t = 0; t < vo.trials; ++t) {
      const WeightTensor d = detail::random_additive_tensor(rng, 6, 10);
      w.worst = std::max({w.worst, d.antisymmetry_error(), d.additivity_error()});
      const IsingDual dual = build_ising_dual(PottsInstance(d, 0.0));
      for (int j = 0; j < 10; ++j) {
        w.worst = std::max(w.worst, std::abs(dual.J(j, j)));
        for (int l = 0; l < 10; ++l) w.worst = std::max(w.worst, std::max(0.0, -(dual.J(j, l) + dual.J(l, j))));
      }
    }
    w.passed = w.worst < 1e-12;
    w.detail = "anti-symmetry, additivity, J(j,j) = 0 and J(j,l) + J(l,j) >= 0";
    rep.suites.push_back(w);
  }

  {
    std::mt19937_64 rng(vo.seed + 3);
    SuiteResult sym{"symmetry", true, 0, ""};
    const RobotModel model = cfg.model();
    const ForceModel fm = cfg.force_model();
    const auto patterns = cfg.patterns();
    std::uniform_int_distribution<std::size_t> pick_pattern(0, patterns.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_node(0, cfg.grid.size() - 1);
    const int samples = std::min(vo.trials, vo.symmetry_samples);
    for (int t = 0; t < samples; ++t) {
      const ContactPattern p = patterns[pick_pattern(rng)];
      const ShapePoint r = cfg.grid.point(pick_node(rng));
      const auto a = local_connection(model, r, p, fm).matrix;
      const auto b = local_connection(model, -r, flip_contralateral(p), fm).matrix;
      const auto e = connection_symmetry_error(a, b);
      sym.worst = std::max({sym.worst, e[0], e[1], e[2]});
    }
    sym.passed = sym.worst < 1e-6;
    sym.detail = fmt::format("{} mirrored (pattern, node) pairs on the configured model", samples);
    rep.suites.push_back(sym);
  }
  return rep;
}

inline nlohmann::json verify_to_json(const VerifyReport& r, const std::string& config_hash) {
  nlohmann::json suites = nlohmann::json::array();
  for (const auto& s : r.suites)
    suites.push_back({{"name", s.name}, {"passed", s.passed}, {"worst", s.worst}, {"detail", s.detail}});
  return {{"schema", kVerifySchema},
          {"config_hash", config_hash},
          {"seed", r.seed},
          {"trials", r.trials},
          {"passed", r.all_passed()},
          {"suites", suites}};
}

/// Runs the suites, writes verify.json and throws VerificationError when any
/// suite fails.
inline VerifyReport cmd_verify(const PipelineConfig& cfg, const VerifyOptions& vo, const RunOptions& opt = {}) {
  const VerifyReport rep = run_verify(cfg, vo);
  for (const auto& s : rep.suites)
    *opt.log << fmt::format("verify: {:<10} {}  worst {:.3g}  {}\n", s.name, s.passed ? "PASS" : "FAIL", s.worst,
                            s.detail);
  write_file_atomic(std::filesystem::path(cfg.paths.out_dir) / "verify.json",
                    verify_to_json(rep, config_hash(cfg)).dump(2) + "\n");
  if (!rep.all_passed()) throw VerificationError("verification failed");
  return rep;
}

}  // namespace geocontact
