// Command-line front end: fields, plan, simulate, verify and run (all four).

#include <exception>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "geocontact/pipeline.hpp"

namespace gc = geocontact;

namespace {

enum Exit { kOk = 0, kConfig = 2, kNumerical = 3, kVerification = 4 };

std::set<int> parse_k_set(const std::string& text) {
  std::set<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    int k = 0;
    try {
      k = std::stoi(item, &used);
    } catch (const std::exception&) {
      throw gc::ArgumentError("--k-set: '" + item + "' is not an integer");
    }
    if (used != item.size()) throw gc::ArgumentError("--k-set: '" + item + "' is not an integer");
    out.insert(k);
  }
  if (out.empty()) throw gc::ArgumentError("--k-set: empty list");
  return out;
}

struct Overrides {
  std::string config_path;
  std::string out_dir;
  std::string direction;
  std::string method;
  std::string k_set;
  double lambda = -1;
  int substeps = 0;
  int cycles = 0;
  bool compose = false;
  bool no_cache = false;
};

gc::PipelineConfig resolve(const Overrides& o) {
  gc::PipelineConfig cfg = o.config_path.empty() ? gc::PipelineConfig::hexapod() : gc::load_config(o.config_path);
  if (!o.out_dir.empty()) cfg.paths.out_dir = o.out_dir;
  if (!o.direction.empty()) cfg.planner.direction = gc::parse_direction(o.direction);
  if (!o.method.empty()) cfg.planner.method = gc::parse_method(o.method);
  if (!o.k_set.empty()) cfg.planner.k_set = parse_k_set(o.k_set);
  if (o.lambda >= 0) cfg.planner.lambda = o.lambda;
  if (o.substeps > 0) cfg.sim.substeps = o.substeps;
  if (o.cycles > 0) cfg.sim.cycles = o.cycles;
  if (o.compose) cfg.sim.compose = true;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contact-sequence planning for planar multi-legged locomotors"};
  app.require_subcommand(1);

  Overrides o;
  std::uint64_t seed = 1;
  int trials = 200;
  bool inject = false;
  std::string plan_path;

  app.add_option("--config", o.config_path, "JSON pipeline config (built-in hexapod when omitted)");
  app.add_option("--out", o.out_dir, "Output directory");
  app.add_flag("--no-cache", o.no_cache, "Neither read nor write the field cache");
  app.add_option("--direction", o.direction, "Optimized displacement direction")->check(CLI::IsMember({"x", "y"}));
  app.add_option("--method", o.method, "Planner")->check(CLI::IsMember({"greedy", "domain-wall", "brute"}));
  app.add_option("--k-set", o.k_set, "Comma-separated switch counts, e.g. 0,2,3,4,5,6");
  app.add_option("--lambda", o.lambda, "Switch penalty")->check(CLI::NonNegativeNumber);

  auto* fields = app.add_subcommand("fields", "Compute or load connection fields and potentials");
  auto* plan = app.add_subcommand("plan", "Plan a contact sequence and write plan.json");
  auto* sim = app.add_subcommand("simulate", "Simulate a planned gait");
  sim->add_option("--plan", plan_path, "Plan JSON (plans first when omitted)");
  sim->add_flag("--compose", o.compose, "Append the anti-symmetric gait as one super-cycle");
  sim->add_option("--substeps", o.substeps, "Integration substeps per cycle step")->check(CLI::PositiveNumber);
  sim->add_option("--cycles", o.cycles, "Number of cycles")->check(CLI::PositiveNumber);
  auto* verify = app.add_subcommand("verify", "Randomized solver and symmetry checks");
  verify->add_option("--seed", seed, "RNG seed");
  verify->add_option("--trials", trials, "Random instances per suite");
  verify->add_flag("--inject-nonadditive", inject, "Negative control: corrupt the weights fed to the duality check");
  auto* run = app.add_subcommand("run", "fields, plan, simulate and verify in one go");
  run->add_option("--seed", seed, "RNG seed");
  run->add_option("--trials", trials, "Random instances per suite");
  run->add_flag("--compose", o.compose, "Simulate the composed super-cycle");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    const gc::PipelineConfig cfg = resolve(o);
    gc::RunOptions ro;
    ro.use_cache = !o.no_cache;
    const gc::VerifyOptions vo{seed, trials, inject};
    if (*fields) {
      gc::cmd_fields(cfg, ro);
    } else if (*plan) {
      gc::cmd_plan(cfg, ro);
    } else if (*sim) {
      gc::cmd_simulate(cfg, plan_path, ro);
    } else if (*verify) {
      gc::cmd_verify(cfg, vo, ro);
    } else if (*run) {
      gc::cmd_fields(cfg, ro);
      gc::cmd_simulate(cfg, "", ro);
      gc::cmd_verify(cfg, vo, ro);
    }
    return kOk;
  } catch (const gc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const gc::ArgumentError& e) {
    std::cerr << "argument error: " << e.what() << '\n';
    return kConfig;
  } catch (const gc::VerificationError& e) {
    std::cerr << "verification failure: " << e.what() << '\n';
    return kVerification;
  } catch (const gc::Error& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumerical;
  }
}
