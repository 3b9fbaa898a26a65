#pragma once

#include <cstdint>
#include <fstream>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "geocontact/common.hpp"
#include "geocontact/fields.hpp"
#include "geocontact/model.hpp"
#include "geocontact/planner.hpp"

namespace geocontact {

inline constexpr const char* kConfigSchema = "geocontact.config/1";

struct SamplingConfig {
  std::string kind = "circle";
  int M = 24;
  double amplitude = kDefaultJointLimit;
};

struct ContactFilter {
  int min_stance = 3;
  bool exclude_unilateral = true;
};

struct PlannerConfig {
  Direction direction = Direction::x;
  PlanMethod method = PlanMethod::domain_wall;
  std::set<int> k_set = up_to_k(6);
  double lambda = 0.0;
};

struct SimConfig {
  int substeps = 100;
  int cycles = 1;
  bool compose = false;
};

struct PathsConfig {
  std::string cache_dir = ".geocontact-cache";
  std::string out_dir = "out";
};

/// Everything one pipeline run depends on.
struct PipelineConfig {
  RobotSpec robot;
  ShapeBasis basis;
  GridSpec grid;
  HodgeBoundary hodge = HodgeBoundary::tangential;
  SamplingConfig sampling;
  ContactFilter contact_filter;
  PlannerConfig planner;
  SimConfig sim;
  PathsConfig paths;

  static PipelineConfig hexapod() { return {}; }

  static PipelineConfig centipede() {
    PipelineConfig c;
    const RobotModel m = RobotModel::centipede();
    c.robot = m.spec;
    c.basis = m.basis;
    c.grid.resolution = 21;
    c.contact_filter = {8, false};
    c.planner.direction = Direction::y;
    return c;
  }

  RobotModel model() const { return {robot, basis}; }
  ForceModel force_model() const { return ForceModel::from(robot); }
  std::vector<ContactPattern> patterns() const {
    return enumerate_contact_patterns(robot.n_legs(), contact_filter.min_stance, contact_filter.exclude_unilateral);
  }
  ShapeCycle cycle() const { return sample_shape_cycle(basis, sampling.M, sampling.amplitude); }

  /// Throws ConfigError on the first violated rule.
  void validate() const;
};

// ---------------------------------------------------------------------------
// JSON mapping

namespace detail {

using nlohmann::json;

inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || item.key() == a;
    if (!known) throw ConfigError(where + ": unknown key '" + item.key() + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

inline Direction parse_direction(const std::string& s) {
  if (s == "x") return Direction::x;
  if (s == "y") return Direction::y;
  throw ConfigError("direction must be 'x' or 'y', got '" + s + "'");
}

inline PlanMethod parse_method(const std::string& s) {
  if (s == "greedy") return PlanMethod::greedy;
  if (s == "domain-wall") return PlanMethod::domain_wall;
  if (s == "brute") return PlanMethod::brute;
  throw ConfigError("method must be greedy, domain-wall or brute, got '" + s + "'");
}

inline HodgeBoundary parse_boundary(const std::string& s) {
  if (s == "tangential") return HodgeBoundary::tangential;
  if (s == "normal_flux") return HodgeBoundary::normal_flux;
  throw ConfigError("hodge_boundary must be 'tangential' or 'normal_flux', got '" + s + "'");
}

inline const char* boundary_name(HodgeBoundary b) {
  return b == HodgeBoundary::tangential ? "tangential" : "normal_flux";
}

}  // namespace detail

inline PlanMethod parse_method(const std::string& s) {
  try {
    return detail::parse_method(s);
  } catch (const ConfigError& e) {
    throw ArgumentError(e.what());
  }
}

inline Direction parse_direction(const std::string& s) {
  try {
    return detail::parse_direction(s);
  } catch (const ConfigError& e) {
    throw ArgumentError(e.what());
  }
}

/// Canonical JSON form. Keys are sorted by the container, so dumps are
/// independent of the order keys appeared in the source file.
inline nlohmann::json to_json(const PipelineConfig& c) {
  nlohmann::json basis = {{"kind", c.basis.kind == BasisKind::direct ? "direct" : "sinusoidal"}};
  if (c.basis.kind == BasisKind::sinusoidal) {
    basis["spatial_frequency"] = c.basis.spatial_frequency;
    if (!c.basis.stations.empty()) basis["stations"] = c.basis.stations;
  }
  return {
      {"schema", kConfigSchema},
      {"robot",
       {{"n_segments", c.robot.n_segments},
        {"segment_length", c.robot.segment_length},
        {"lateral_offset", c.robot.lateral_offset},
        {"leg_length", c.robot.leg_length},
        {"mass", c.robot.mass},
        {"friction_mu", c.robot.friction_mu},
        {"friction_regularization", c.robot.friction_regularization},
        {"anisotropy_ratio", c.robot.anisotropy_ratio}}},
      {"basis", basis},
      {"grid", {{"r_max", c.grid.r_max}, {"resolution", c.grid.resolution}}},
      {"hodge_boundary", detail::boundary_name(c.hodge)},
      {"sampling", {{"kind", c.sampling.kind}, {"M", c.sampling.M}, {"amplitude", c.sampling.amplitude}}},
      {"contact_filter",
       {{"min_stance", c.contact_filter.min_stance}, {"exclude_unilateral", c.contact_filter.exclude_unilateral}}},
      {"planner",
       {{"direction", to_string(c.planner.direction)},
        {"method", to_string(c.planner.method)},
        {"k_set", std::vector<int>(c.planner.k_set.begin(), c.planner.k_set.end())},
        {"lambda", c.planner.lambda}}},
      {"sim", {{"substeps", c.sim.substeps}, {"cycles", c.sim.cycles}, {"compose", c.sim.compose}}},
      {"paths", {{"cache_dir", c.paths.cache_dir}, {"out_dir", c.paths.out_dir}}},
  };
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline PipelineConfig config_from_json(const nlohmann::json& j) {
  using detail::read;
  detail::check_keys(j, "config", {"schema", "robot", "basis", "grid", "hodge_boundary", "sampling",
                                   "contact_filter", "planner", "sim", "paths"});
  if (!j.contains("schema") || !j["schema"].is_string() || j["schema"].get<std::string>() != kConfigSchema)
    throw ConfigError(std::string("config: 'schema' must be \"") + kConfigSchema + "\"");

  PipelineConfig c;
  if (j.contains("robot")) {
    const auto& r = j["robot"];
    detail::check_keys(r, "robot", {"n_segments", "segment_length", "lateral_offset", "leg_length", "mass",
                                    "friction_mu", "friction_regularization", "anisotropy_ratio"});
    read(r, "n_segments", c.robot.n_segments, "robot");
    read(r, "segment_length", c.robot.segment_length, "robot");
    read(r, "lateral_offset", c.robot.lateral_offset, "robot");
    read(r, "leg_length", c.robot.leg_length, "robot");
    read(r, "mass", c.robot.mass, "robot");
    read(r, "friction_mu", c.robot.friction_mu, "robot");
    read(r, "friction_regularization", c.robot.friction_regularization, "robot");
    read(r, "anisotropy_ratio", c.robot.anisotropy_ratio, "robot");
  }
  if (j.contains("basis")) {
    const auto& b = j["basis"];
    detail::check_keys(b, "basis", {"kind", "spatial_frequency", "stations"});
    std::string kind = "direct";
    read(b, "kind", kind, "basis");
    if (kind == "direct") {
      c.basis = ShapeBasis::direct();
    } else if (kind == "sinusoidal") {
      c.basis = ShapeBasis::sinusoidal(1.0);
      read(b, "spatial_frequency", c.basis.spatial_frequency, "basis");
      read(b, "stations", c.basis.stations, "basis");
    } else {
      throw ConfigError("basis.kind must be 'direct' or 'sinusoidal'");
    }
  }
  if (j.contains("grid")) {
    detail::check_keys(j["grid"], "grid", {"r_max", "resolution"});
    read(j["grid"], "r_max", c.grid.r_max, "grid");
    read(j["grid"], "resolution", c.grid.resolution, "grid");
  }
  if (j.contains("hodge_boundary")) {
    std::string b;
    read(j, "hodge_boundary", b, "config");
    c.hodge = detail::parse_boundary(b);
  }
  if (j.contains("sampling")) {
    detail::check_keys(j["sampling"], "sampling", {"kind", "M", "amplitude"});
    read(j["sampling"], "kind", c.sampling.kind, "sampling");
    read(j["sampling"], "M", c.sampling.M, "sampling");
    read(j["sampling"], "amplitude", c.sampling.amplitude, "sampling");
  }
  if (j.contains("contact_filter")) {
    detail::check_keys(j["contact_filter"], "contact_filter", {"min_stance", "exclude_unilateral"});
    read(j["contact_filter"], "min_stance", c.contact_filter.min_stance, "contact_filter");
    read(j["contact_filter"], "exclude_unilateral", c.contact_filter.exclude_unilateral, "contact_filter");
  }
  if (j.contains("planner")) {
    const auto& p = j["planner"];
    detail::check_keys(p, "planner", {"direction", "method", "k_set", "lambda"});
    std::string s;
    if (p.contains("direction")) {
      read(p, "direction", s, "planner");
      c.planner.direction = detail::parse_direction(s);
    }
    if (p.contains("method")) {
      read(p, "method", s, "planner");
      c.planner.method = detail::parse_method(s);
    }
    if (p.contains("k_set")) {
      std::vector<int> ks;
      read(p, "k_set", ks, "planner");
      c.planner.k_set = {ks.begin(), ks.end()};
    }
    read(p, "lambda", c.planner.lambda, "planner");
  }
  if (j.contains("sim")) {
    detail::check_keys(j["sim"], "sim", {"substeps", "cycles", "compose"});
    read(j["sim"], "substeps", c.sim.substeps, "sim");
    read(j["sim"], "cycles", c.sim.cycles, "sim");
    read(j["sim"], "compose", c.sim.compose, "sim");
  }
  if (j.contains("paths")) {
    detail::check_keys(j["paths"], "paths", {"cache_dir", "out_dir"});
    read(j["paths"], "cache_dir", c.paths.cache_dir, "paths");
    read(j["paths"], "out_dir", c.paths.out_dir, "paths");
  }
  c.validate();
  return c;
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

inline void PipelineConfig::validate() const {
  try {
    robot.validate();
    grid.validate();
    (void)basis.matrix(robot.n_joints());
    require(grid.resolution >= 5, "grid.resolution must be >= 5");
    require(sampling.kind == "circle", "sampling.kind must be 'circle'");
    require(sampling.M >= 3, "sampling.M must be >= 3");
    require(sampling.amplitude >= 0 && sampling.amplitude <= kDefaultJointLimit + 1e-12,
            "sampling.amplitude must lie in [0, pi/3]");
    require(sampling.amplitude <= grid.r_max + 1e-12, "sampling.amplitude must not exceed grid.r_max");
    require(robot.n_legs() <= 30, "at most 15 segments can be enumerated");
    require(contact_filter.min_stance >= 1 && contact_filter.min_stance <= robot.n_legs(),
            "contact_filter.min_stance must lie in [1, n_legs]");
    require(!planner.k_set.empty(), "planner.k_set must not be empty");
    for (int k : planner.k_set)
      require(k == 0 || (k >= 2 && k <= sampling.M), "planner.k_set entries must lie in {0, 2, ..., M}");
    require(planner.lambda >= 0 && std::isfinite(planner.lambda), "planner.lambda must be finite and >= 0");
    require(sim.substeps >= 10, "sim.substeps must be >= 10");
    require(sim.cycles >= 1, "sim.cycles must be >= 1");
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
}

/// Hash of the canonical config, output paths excluded. Stable under key
/// reordering and explicit-vs-default spelling.
inline std::string config_hash(const PipelineConfig& c) {
  nlohmann::json j = to_json(c);
  j.erase("paths");
  return to_hex(fnv1a(j.dump()));
}

/// Hash of everything the connection fields and potentials depend on.
inline std::string fields_key(const PipelineConfig& c) {
  const nlohmann::json full = to_json(c);
  const nlohmann::json j = {{"robot", full["robot"]},
                            {"basis", full["basis"]},
                            {"grid", full["grid"]},
                            {"hodge_boundary", full["hodge_boundary"]},
                            {"contact_filter", full["contact_filter"]},
                            {"solver", {{"tolerance", SolverOptions{}.tolerance},
                                        {"max_iterations", SolverOptions{}.max_iterations},
                                        {"probe_speed", SolverOptions{}.probe_speed}}}};
  return to_hex(fnv1a(j.dump()));
}

}  // namespace geocontact
