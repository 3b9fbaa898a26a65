#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "geocontact/pipeline.hpp"

using namespace geocontact;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kSource = GEOCONTACT_SOURCE_DIR;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("geocontact-" + tag + "-" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

struct Quiet {
  std::ostringstream log, warn;
  RunOptions opt(bool cache = true) {
    RunOptions o;
    o.use_cache = cache;
    o.log = &log;
    o.warn = &warn;
    return o;
  }
};

// Small-grid variant of a shipped config that writes under `dir`.
PipelineConfig small(const std::string& file, const fs::path& dir, int resolution = 7) {
  PipelineConfig c = load_config((kSource / "configs" / file).string());
  c.grid.resolution = resolution;
  c.paths.cache_dir = (dir / "cache").string();
  c.paths.out_dir = (dir / "out").string();
  return c;
}

json read_json(const fs::path& p) { return json::parse(read_file(p)); }

int run_cli(const std::string& args) {
  const char* exe = std::getenv("GEOCONTACT_CLI");
  if (exe == nullptr) return -1;
  const std::string cmd = std::string("\"") + exe + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

}  // namespace

// ---------------------------------------------------------------------------
// configuration

TEST(Config, ShippedConfigsLoadAndRoundTrip) {
  for (const char* name : {"hexapod_forward.json", "hexapod_sideways.json", "centipede_sideways.json"}) {
    const PipelineConfig c = load_config((kSource / "configs" / name).string());
    const PipelineConfig back = config_from_json(to_json(c));
    EXPECT_EQ(config_hash(back), config_hash(c)) << name;
    EXPECT_EQ(to_json(back), to_json(c)) << name;
  }
  const PipelineConfig cen = load_config((kSource / "configs" / "centipede_sideways.json").string());
  EXPECT_EQ(cen.patterns().size(), 794u);
  EXPECT_EQ(cen.planner.direction, Direction::y);
}

TEST(Config, HashIgnoresKeyOrderDefaultsAndPaths) {
  const json a = json::parse(R"({"schema":"geocontact.config/1","sim":{"cycles":2,"substeps":40},
                                 "planner":{"lambda":0.1,"direction":"y"}})");
  const json b = json::parse(R"({"planner":{"direction":"y","lambda":0.1},
                                 "sim":{"substeps":40,"cycles":2,"compose":false},
                                 "paths":{"out_dir":"elsewhere"},"schema":"geocontact.config/1"})");
  EXPECT_EQ(config_hash(config_from_json(a)), config_hash(config_from_json(b)));
  json c = a;
  c["sim"]["cycles"] = 3;
  EXPECT_NE(config_hash(config_from_json(a)), config_hash(config_from_json(c)));
}

TEST(Config, FieldsKeyTracksOnlyFieldInputs) {
  PipelineConfig a = PipelineConfig::hexapod();
  PipelineConfig b = a;
  b.planner.lambda = 0.3;
  b.sim.cycles = 4;
  EXPECT_EQ(fields_key(a), fields_key(b));
  b.grid.resolution = 11;
  EXPECT_NE(fields_key(a), fields_key(b));
}

TEST(Config, RejectsBadInput) {
  auto bad = [](const std::string& text) {
    EXPECT_THROW(config_from_json(json::parse(text)), ConfigError) << text;
  };
  bad(R"({"schema":"geocontact.config/1","robot":{"n_segment":3}})");
  bad(R"({"schema":"geocontact.config/1","extra":1})");
  bad(R"({"schema":"geocontact.config/0"})");
  bad(R"({"robot":{}})");
  bad(R"({"schema":"geocontact.config/1","sim":{"substeps":"many"}})");
  bad(R"({"schema":"geocontact.config/1","sim":{"substeps":5}})");
  bad(R"({"schema":"geocontact.config/1","planner":{"k_set":[1]}})");
  bad(R"({"schema":"geocontact.config/1","planner":{"method":"annealing"}})");
  bad(R"({"schema":"geocontact.config/1","grid":{"resolution":8}})");
  bad(R"({"schema":"geocontact.config/1","sampling":{"amplitude":2.0}})");
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

// ---------------------------------------------------------------------------
// fields

TEST(Fields, CacheHitOnRerun) {
  TempDir dir("cache");
  const PipelineConfig cfg = small("hexapod_forward.json", dir.path);
  Quiet q;
  const FieldsRun first = cmd_fields(cfg, q.opt());
  EXPECT_FALSE(first.from_cache);
  EXPECT_TRUE(fs::exists(field_cache_path(cfg)));
  EXPECT_NE(q.log.str().find("computed"), std::string::npos);
  const FieldsRun second = cmd_fields(cfg, q.opt());
  EXPECT_TRUE(second.from_cache);
  EXPECT_NE(q.log.str().find("cache hit"), std::string::npos);
  EXPECT_EQ(first.fields.values, second.fields.values);
  for (int d = 0; d < 2; ++d) EXPECT_EQ(first.stack.potential[d], second.stack.potential[d]);

  const json summary = read_json(fs::path(cfg.paths.out_dir) / "fields_summary.json");
  EXPECT_EQ(summary["schema"], kFieldsSummarySchema);
  EXPECT_EQ(summary["n_patterns"], 40);
  EXPECT_EQ(summary["config_hash"], config_hash(cfg));
}

TEST(Fields, CorruptedCacheIsRecomputedWithWarning) {
  TempDir dir("corrupt");
  const PipelineConfig cfg = small("hexapod_forward.json", dir.path);
  Quiet q;
  const FieldsRun clean = run_fields(cfg, q.opt());
  const fs::path path = field_cache_path(cfg);
  std::string bytes = read_file(path);
  bytes[bytes.size() / 2] ^= 0x5a;
  write_text(path, bytes);

  const FieldsRun again = run_fields(cfg, q.opt());
  EXPECT_FALSE(again.from_cache);
  EXPECT_NE(q.warn.str().find("corrupted field cache"), std::string::npos);
  EXPECT_EQ(again.fields.values, clean.fields.values);
  EXPECT_TRUE(run_fields(cfg, q.opt()).from_cache);  // rewritten intact

  write_text(path, "GCF");  // truncated
  EXPECT_FALSE(run_fields(cfg, q.opt()).from_cache);
}

TEST(Fields, EnvironmentOverridesCacheDirectory) {
  TempDir dir("env");
  PipelineConfig cfg = small("hexapod_forward.json", dir.path);
  ::setenv(kCacheDirEnv, (dir.path / "from-env").c_str(), 1);
  const fs::path p = field_cache_path(cfg);
  ::unsetenv(kCacheDirEnv);
  EXPECT_EQ(p.parent_path(), dir.path / "from-env");
  EXPECT_EQ(field_cache_path(cfg).parent_path(), dir.path / "cache");
}

TEST(Fields, CentipedeReportsAllPatterns) {
  TempDir dir("centipede");
  const PipelineConfig cfg = small("centipede_sideways.json", dir.path, 5);
  Quiet q;
  cmd_fields(cfg, q.opt(false));
  EXPECT_NE(q.log.str().find("794 patterns"), std::string::npos) << q.log.str();
  EXPECT_FALSE(fs::exists(field_cache_path(cfg)));
}

// ---------------------------------------------------------------------------
// plan

TEST(Plan, SmokeConfigsWriteValidJson) {
  const std::pair<const char*, int> cases[] = {
      {"hexapod_forward.json", 9}, {"hexapod_sideways.json", 9}, {"centipede_sideways.json", 5}};
  for (const auto& [name, res] : cases) {
    TempDir dir("plan");
    const PipelineConfig cfg = small(name, dir.path, res);
    Quiet q;
    const PlanArtifact a = cmd_plan(cfg, q.opt());
    const json j = read_json(fs::path(cfg.paths.out_dir) / "plan.json");
    EXPECT_EQ(j["schema"], kPlanSchema) << name;
    EXPECT_EQ(j["config_hash"], config_hash(cfg));
    EXPECT_EQ(j["direction"], to_string(cfg.planner.direction));
    EXPECT_EQ(j["n_patterns"], cfg.patterns().size());
    const auto& s = j["solution"];
    EXPECT_EQ(s["assignment"].size(), static_cast<std::size_t>(cfg.sampling.M));
    EXPECT_TRUE(cfg.planner.k_set.count(s["K"].get<int>()));
    EXPECT_EQ(s["walls"].size(), s["K"].get<std::size_t>());
    EXPECT_DOUBLE_EQ(s["score"].get<double>(), a.plan.solution.score);
    EXPECT_NE(q.log.str().find("K " + std::to_string(a.plan.solution.switch_count)), std::string::npos);

    const GaitPlan g = gait_from_plan_json(j);
    EXPECT_EQ(g.expand(), a.gait.expand()) << name;
  }
}

TEST(Plan, GreedyMatchesBruteOnReducedInstance) {
  TempDir dir("reduced");
  const PipelineConfig cfg = small("hexapod_forward.json", dir.path);
  Quiet q;
  PotentialStack stack = run_fields(cfg, q.opt(false)).stack;
  stack.patterns.resize(4);
  for (int d = 0; d < 2; ++d) {
    stack.potential[d].resize(4);
    stack.divergence_free[d].resize(4);
    stack.remainder_ratio[d].resize(4);
  }
  const ShapeCycle cycle = sample_shape_cycle(cfg.basis, 6, cfg.sampling.amplitude);
  for (Direction dir : {Direction::x, Direction::y}) {
    const auto g = plan_gait_sequence(stack, cycle, dir, up_to_k(6), 0.0, PlanMethod::greedy);
    const auto b = plan_gait_sequence(stack, cycle, dir, up_to_k(6), 0.0, PlanMethod::brute);
    const auto w = plan_gait_sequence(stack, cycle, dir, up_to_k(6), 0.0, PlanMethod::domain_wall);
    EXPECT_NEAR(g.solution.score, b.solution.score, 1e-12);
    EXPECT_NEAR(w.solution.score, b.solution.score, 1e-12);
  }
}

TEST(Plan, OnlyUniformAllowedScoresZero) {
  TempDir dir("k0");
  PipelineConfig cfg = small("hexapod_forward.json", dir.path);
  cfg.planner.k_set = {0};
  Quiet q;
  const PlanArtifact a = cmd_plan(cfg, q.opt());
  EXPECT_EQ(a.plan.solution.score, 0.0);
  EXPECT_EQ(a.plan.solution.switch_count, 0);
  EXPECT_EQ(a.gait.phases.size(), 1u);
}

// ---------------------------------------------------------------------------
// simulate

TEST(Simulate, RowCountAndArtifacts) {
  TempDir dir("sim");
  PipelineConfig cfg = small("hexapod_forward.json", dir.path);
  cfg.sim.substeps = 12;
  cfg.sim.cycles = 2;
  Quiet q;
  const SimulationResult r = cmd_simulate(cfg, "", q.opt());
  EXPECT_EQ(r.trajectory.samples.size(), 2u * 24u * 12u);
  const std::string csv = read_file(fs::path(cfg.paths.out_dir) / "trajectory.csv");
  EXPECT_EQ(csv.rfind("tau,x,y,theta,pattern_id\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 2 * 24 * 12);
  const json m = read_json(fs::path(cfg.paths.out_dir) / "metrics.json");
  EXPECT_EQ(m["schema"], kMetricsSchema);
  EXPECT_EQ(m["rows"], 2 * 24 * 12);
  EXPECT_EQ(m["config_hash"], config_hash(cfg));
  EXPECT_DOUBLE_EQ(m["delta_x"].get<double>(), r.metrics.delta_x);
}

TEST(Simulate, SavedPlanIsReplayed) {
  TempDir dir("replay");
  PipelineConfig cfg = small("hexapod_forward.json", dir.path);
  cfg.sim.substeps = 12;
  Quiet q;
  const SimulationResult direct = cmd_simulate(cfg, "", q.opt());
  const SimulationResult replay = cmd_simulate(cfg, (fs::path(cfg.paths.out_dir) / "plan.json").string(), q.opt());
  EXPECT_EQ(direct.metrics.delta_x, replay.metrics.delta_x);
  EXPECT_EQ(direct.metrics.delta_y, replay.metrics.delta_y);
  EXPECT_THROW(cmd_simulate(cfg, (dir.path / "missing.json").string(), q.opt()), ConfigError);
  write_text(dir.path / "bad.json", "{\"schema\": \"other\"}");
  EXPECT_THROW(cmd_simulate(cfg, (dir.path / "bad.json").string(), q.opt()), ConfigError);
}

TEST(Simulate, ZeroAmplitudeGivesZeroMetrics) {
  TempDir dir("zero");
  PipelineConfig cfg = small("hexapod_forward.json", dir.path);
  cfg.sampling.amplitude = 0.0;
  cfg.sim.substeps = 10;
  Quiet q;
  const SimulationResult r = cmd_simulate(cfg, "", q.opt());
  EXPECT_EQ(r.metrics.delta_x, 0.0);
  EXPECT_EQ(r.metrics.delta_y, 0.0);
  EXPECT_EQ(r.metrics.delta_theta, 0.0);
}

TEST(Simulate, ComposedPairDoublesForwardDisplacement) {
  TempDir dir("compose");
  PipelineConfig cfg = small("hexapod_forward.json", dir.path, 15);
  cfg.sim.substeps = 40;
  Quiet q;
  const SimulationResult single = cmd_simulate(cfg, "", q.opt());
  cfg.sim.compose = true;
  const SimulationResult pair = cmd_simulate(cfg, "", q.opt());
  EXPECT_GT(single.metrics.delta_x, 0.0);
  EXPECT_NEAR(pair.metrics.delta_x, 2 * single.metrics.delta_x, 0.05 * 2 * single.metrics.delta_x);
  EXPECT_EQ(pair.trajectory.samples.size(), 2 * single.trajectory.samples.size());
  EXPECT_EQ(read_json(fs::path(cfg.paths.out_dir) / "metrics.json")["composed"], true);
}

// ---------------------------------------------------------------------------
// verify

TEST(Verify, DefaultSeedPasses) {
  TempDir dir("verify");
  PipelineConfig cfg = small("hexapod_forward.json", dir.path);
  Quiet q;
  const VerifyReport rep = cmd_verify(cfg, VerifyOptions{}, q.opt());
  EXPECT_TRUE(rep.all_passed());
  EXPECT_EQ(rep.suites.size(), 5u);
  const json j = read_json(fs::path(cfg.paths.out_dir) / "verify.json");
  EXPECT_EQ(j["schema"], kVerifySchema);
  EXPECT_EQ(j["passed"], true);
  EXPECT_EQ(j["trials"], 200);
}

TEST(Verify, InjectedNonAdditiveWeightsFail) {
  TempDir dir("inject");
  PipelineConfig cfg = small("hexapod_forward.json", dir.path);
  VerifyOptions vo;
  vo.trials = 50;
  vo.inject_nonadditive = true;
  const VerifyReport rep = run_verify(cfg, vo);
  EXPECT_FALSE(rep.all_passed());
  EXPECT_FALSE(rep.suites[0].passed);
  Quiet q;
  EXPECT_THROW(cmd_verify(cfg, vo, q.opt()), VerificationError);
  EXPECT_NE(q.log.str().find("FAIL"), std::string::npos);
}

TEST(Verify, ZeroTrialsIsAnArgumentError) {
  VerifyOptions vo;
  vo.trials = 0;
  EXPECT_THROW(run_verify(PipelineConfig::hexapod(), vo), ArgumentError);
}

TEST(Verify, SeedDeterminesReport) {
  VerifyOptions vo;
  vo.trials = 30;
  const PipelineConfig cfg = PipelineConfig::hexapod();
  EXPECT_EQ(verify_to_json(run_verify(cfg, vo), "h"), verify_to_json(run_verify(cfg, vo), "h"));
}

// ---------------------------------------------------------------------------
// the executable

class Binary : public ::testing::Test {
 protected:
  void SetUp() override {
    if (std::getenv("GEOCONTACT_CLI") == nullptr) GTEST_SKIP() << "GEOCONTACT_CLI is not set";
    dir_ = std::make_unique<TempDir>("bin");
    config_ = dir_->path / "small.json";
    json j = to_json(small("hexapod_forward.json", dir_->path));
    j["sim"]["substeps"] = 12;
    write_text(config_, j.dump(2));
    ::setenv(kCacheDirEnv, (dir_->path / "cache").c_str(), 1);
  }
  void TearDown() override {
    ::unsetenv(kCacheDirEnv);
    dir_.reset();
  }
  std::string with_config(const std::string& rest) const { return "--config \"" + config_.string() + "\" " + rest; }

  std::unique_ptr<TempDir> dir_;
  fs::path config_;
};

TEST_F(Binary, ExitCodes) {
  EXPECT_EQ(run_cli(with_config("verify --trials 20")), 0);
  EXPECT_EQ(run_cli(with_config("verify --trials 20 --inject-nonadditive")), 4);
  EXPECT_EQ(run_cli(with_config("verify --trials 0")), 2);
  EXPECT_EQ(run_cli("--config /nonexistent.json fields"), 2);
  EXPECT_EQ(run_cli(with_config("--method annealing plan")), 2);
  EXPECT_EQ(run_cli(with_config("--k-set 0,1 plan")), 2);
  EXPECT_EQ(run_cli(with_config("--k-set two plan")), 2);
  EXPECT_EQ(run_cli(with_config("simulate --plan /nonexistent/plan.json")), 2);
  EXPECT_EQ(run_cli("bogus-subcommand"), 2);
  EXPECT_EQ(run_cli(""), 2);

  const fs::path broken = dir_->path / "broken.json";
  write_text(broken, R"({"schema":"geocontact.config/1","robot":{"wheels":4}})");
  EXPECT_EQ(run_cli("--config \"" + broken.string() + "\" fields"), 2);
}

TEST_F(Binary, FlagsOverrideConfig) {
  const fs::path out = dir_->path / "flags";
  ASSERT_EQ(run_cli(with_config("--out \"" + out.string() + "\" --direction y --method greedy --lambda 0 plan")), 0);
  const json j = read_json(out / "plan.json");
  EXPECT_EQ(j["direction"], "y");
  EXPECT_EQ(j["method"], "greedy");
  ASSERT_EQ(run_cli(with_config("--out \"" + out.string() + "\" --k-set 0 plan")), 0);
  EXPECT_EQ(read_json(out / "plan.json")["solution"]["K"], 0);
}

TEST_F(Binary, RunIsByteIdenticalAcrossInvocations) {
  const fs::path a = dir_->path / "a", b = dir_->path / "b";
  ASSERT_EQ(run_cli(with_config("--out \"" + a.string() + "\" run --trials 20")), 0);
  ASSERT_EQ(run_cli(with_config("--out \"" + b.string() + "\" --no-cache run --trials 20")), 0);
  int compared = 0;
  for (const char* f :
       {"fields_summary.json", "fields.csv", "plan.json", "trajectory.csv", "metrics.json", "verify.json"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(read_file(a / f), read_file(b / f)) << f;
    ++compared;
  }
  EXPECT_EQ(compared, 6);
}
