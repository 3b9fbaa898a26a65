#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <fmt/format.h>
#include <json.hpp>

#include "geocontact/common.hpp"
#include "geocontact/fields.hpp"
#include "geocontact/gait.hpp"
#include "geocontact/planner.hpp"

namespace geocontact {

inline constexpr const char* kPlanSchema = "geocontact.plan/1";
inline constexpr const char* kMetricsSchema = "geocontact.metrics/1";
inline constexpr const char* kVerifySchema = "geocontact.verify/1";
inline constexpr const char* kFieldsSummarySchema = "geocontact.fields/1";

/// Writes `content` to a sibling temporary file and renames it into place, so
/// readers never observe a partial file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error("short write to '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Plans

inline nlohmann::json cycle_to_json(const ShapeCycle& c) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : c.points) pts.push_back({p.x(), p.y()});
  return {{"M", c.size()}, {"phase", c.phase}, {"points", pts}};
}

inline ShapeCycle cycle_from_json(const nlohmann::json& j) {
  ShapeCycle c;
  c.phase = j.at("phase").get<std::vector<double>>();
  for (const auto& p : j.at("points")) c.points.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
  if (c.points.size() < 3 || c.points.size() != c.phase.size())
    throw ConfigError("gait cycle: need M >= 3 points with one phase each");
  for (std::size_t i = 1; i < c.phase.size(); ++i)
    if (!(c.phase[i] > c.phase[i - 1])) throw ConfigError("gait cycle: phases must be strictly increasing");
  return c;
}

inline nlohmann::json gait_to_json(const GaitPlan& g) {
  nlohmann::json phases = nlohmann::json::array();
  for (const auto& ph : g.phases)
    phases.push_back({{"start", ph.start},
                      {"steps", ph.steps},
                      {"pattern_mask", ph.pattern.mask()},
                      {"pattern_label", ph.pattern.label()}});
  return {{"traversal", g.traversal == Traversal::forward ? "forward" : "reverse"},
          {"cycle", cycle_to_json(g.cycle)},
          {"phases", phases}};
}

inline GaitPlan gait_from_json(const nlohmann::json& j, int n_legs) {
  GaitPlan g;
  g.cycle = cycle_from_json(j.at("cycle"));
  const std::string trav = j.at("traversal").get<std::string>();
  if (trav != "forward" && trav != "reverse") throw ConfigError("gait: traversal must be forward or reverse");
  g.traversal = trav == "forward" ? Traversal::forward : Traversal::reverse;
  int covered = 0;
  for (const auto& ph : j.at("phases")) {
    GaitPhase p;
    p.start = ph.at("start").get<int>();
    p.steps = ph.at("steps").get<int>();
    p.pattern = ContactPattern(ph.at("pattern_mask").get<std::uint64_t>(), n_legs);
    if (p.steps < 1 || p.start < 0 || p.start >= static_cast<int>(g.cycle.size()))
      throw ConfigError("gait: phase out of range");
    covered += p.steps;
    g.phases.push_back(p);
  }
  if (covered != static_cast<int>(g.cycle.size())) throw ConfigError("gait: phases must cover the cycle exactly once");
  return g;
}

struct PlanArtifact {
  GaitSequencePlan plan;
  GaitPlan gait;
  std::vector<ContactPattern> patterns;  // the planner's state list
  std::set<int> k_set;
  double body_length = 0;
  std::string config_hash;
  std::string fields_key;
};

inline nlohmann::json plan_to_json(const PlanArtifact& a) {
  const PlanSolution& s = a.plan.solution;
  nlohmann::json used = nlohmann::json::array();
  std::set<int> seen(s.assignment.begin(), s.assignment.end());
  for (int i : seen)
    used.push_back({{"index", i}, {"mask", a.patterns[i].mask()}, {"label", a.patterns[i].label()}});
  return {{"schema", kPlanSchema},
          {"config_hash", a.config_hash},
          {"fields_key", a.fields_key},
          {"direction", to_string(a.plan.direction)},
          {"method", to_string(a.plan.method)},
          {"lambda", a.plan.lambda},
          {"k_set", std::vector<int>(a.k_set.begin(), a.k_set.end())},
          {"n_legs", a.patterns.front().n_legs()},
          {"n_patterns", a.patterns.size()},
          {"body_length", a.body_length},
          {"solution",
           {{"assignment", s.assignment},
            {"walls", s.walls},
            {"K", s.switch_count},
            {"displacement", s.displacement},
            {"displacement_bl", s.displacement / a.body_length},
            {"score", s.score},
            {"configurations", s.configurations}}},
          {"patterns", used},
          {"gait", gait_to_json(a.gait)}};
}

inline GaitPlan gait_from_plan_json(const nlohmann::json& j) {
  if (!j.contains("schema") || j["schema"] != kPlanSchema)
    throw ConfigError(std::string("plan file: 'schema' must be \"") + kPlanSchema + "\"");
  try {
    return gait_from_json(j.at("gait"), j.at("n_legs").get<int>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("plan file is malformed: ") + e.what());
  } catch (const ArgumentError& e) {
    throw ConfigError(std::string("plan file is malformed: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Simulation output

/// One row per substep: tau, x, y, theta, pattern_id (the stance bitmask).
inline std::string trajectory_csv(const Trajectory& t) {
  std::string out = "tau,x,y,theta,pattern_id\n";
  out.reserve(out.size() + t.samples.size() * 80);
  for (const auto& s : t.samples)
    fmt::format_to(std::back_inserter(out), "{},{},{},{},{}\n", s.tau, s.pose.x, s.pose.y, s.pose.theta,
                   s.pattern.mask());
  return out;
}

inline nlohmann::json metrics_to_json(const SimulationResult& r, const std::string& config_hash,
                                      const std::string& plan_hash, bool composed, int cycles, int substeps) {
  const Pose end = r.trajectory.final_pose();
  return {{"schema", kMetricsSchema},
          {"config_hash", config_hash},
          {"plan_hash", plan_hash},
          {"composed", composed},
          {"cycles", cycles},
          {"substeps_per_arc", substeps},
          {"rows", r.trajectory.samples.size()},
          {"delta_x", r.metrics.delta_x},
          {"delta_y", r.metrics.delta_y},
          {"delta_theta", r.metrics.delta_theta},
          {"per_cycle", {{"x", r.per_cycle.x}, {"y", r.per_cycle.y}, {"theta", r.per_cycle.theta}}},
          {"final_pose", {{"x", end.x}, {"y", end.y}, {"theta", end.theta}}}};
}

// ---------------------------------------------------------------------------
// Field export

/// Connection rows and potentials per (pattern, node).
inline std::string fields_csv(const ConnectionFieldSet& f, const PotentialStack& s) {
  std::string out = "pattern,pattern_mask,r1,r2,Ax_1,Ax_2,Ay_1,Ay_2,Atheta_1,Atheta_2,Px,Py\n";
  const std::size_t nodes = f.grid.size();
  out.reserve(out.size() + f.patterns.size() * nodes * 200);
  for (std::size_t p = 0; p < f.patterns.size(); ++p) {
    for (std::size_t k = 0; k < nodes; ++k) {
      const ShapePoint r = f.grid.point(k);
      const ConnectionMatrix& a = f.at(p, k);
      fmt::format_to(std::back_inserter(out), "{},{},{},{},{},{},{},{},{},{},{},{}\n", p, f.patterns[p].mask(),
                     r.x(), r.y(), a(0, 0), a(0, 1), a(1, 0), a(1, 1), a(2, 0), a(2, 1), s.potential[0][p][k],
                     s.potential[1][p][k]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Binary field cache
//
// Layout: 8-byte magic, u32 version, u32 zero, u64 payload size, u64 FNV-1a
// of the payload, payload. Host byte order; the version is bumped on any
// layout change.

inline constexpr char kCacheMagic[8] = {'G', 'C', 'F', 'I', 'E', 'L', 'D', 'S'};
inline constexpr std::uint32_t kCacheVersion = 1;

class CacheCorrupt : public Error {
public:
  using Error::Error;
};

namespace detail {

class ByteWriter {
public:
  template <class T>
  void put(const T& v) {
    buf_.append(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void put_doubles(const double* p, std::size_t n) { buf_.append(reinterpret_cast<const char*>(p), n * sizeof(double)); }
  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    buf_ += s;
  }
  std::string& str() { return buf_; }

private:
  std::string buf_;
};

class ByteReader {
public:
  explicit ByteReader(std::string_view data) : data_(data) {}
  template <class T>
  T get() {
    T v;
    take(&v, sizeof(T));
    return v;
  }
  void get_doubles(double* p, std::size_t n) { take(p, n * sizeof(double)); }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    if (n > data_.size() - pos_) throw CacheCorrupt("cache: truncated string");
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }

private:
  void take(void* dst, std::size_t n) {
    if (n > data_.size() - pos_) throw CacheCorrupt("cache: truncated payload");
    std::memcpy(dst, data_.data() + pos_, n);
    pos_ += n;
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_field_cache(const std::string& key, const ConnectionFieldSet& f, const PotentialStack& s) {
  detail::ByteWriter w;
  w.put_string(key);
  w.put(static_cast<std::int32_t>(f.grid.resolution));
  w.put(f.grid.r_max);
  const int n_legs = f.patterns.front().n_legs();
  w.put(static_cast<std::int32_t>(n_legs));
  w.put(static_cast<std::uint64_t>(f.patterns.size()));
  for (const auto& p : f.patterns) w.put(p.mask());
  for (const auto& a : f.values) w.put_doubles(a.data(), 6);
  for (int d = 0; d < 2; ++d) {
    for (std::size_t p = 0; p < f.patterns.size(); ++p) {
      w.put_doubles(s.potential[d][p].data(), s.potential[d][p].size());
      for (const auto& v : s.divergence_free[d][p]) w.put_doubles(v.data(), 2);
      w.put(s.remainder_ratio[d][p]);
    }
  }
  const std::string& payload = w.str();
  detail::ByteWriter file;
  file.str().append(kCacheMagic, sizeof kCacheMagic);
  file.put(kCacheVersion);
  file.put(std::uint32_t{0});
  file.put(static_cast<std::uint64_t>(payload.size()));
  Fnv1a h;
  h.update(payload.data(), payload.size());
  file.put(h.digest());
  file.str() += payload;
  return std::move(file.str());
}

/// Throws CacheCorrupt on any integrity problem, including a key mismatch.
inline void decode_field_cache(const std::string& bytes, const std::string& key, ConnectionFieldSet& f,
                               PotentialStack& s) {
  constexpr std::size_t header = sizeof kCacheMagic + 4 + 4 + 8 + 8;
  if (bytes.size() < header || std::memcmp(bytes.data(), kCacheMagic, sizeof kCacheMagic) != 0)
    throw CacheCorrupt("cache: bad magic");
  detail::ByteReader hr(std::string_view(bytes).substr(sizeof kCacheMagic, header - sizeof kCacheMagic));
  if (hr.get<std::uint32_t>() != kCacheVersion) throw CacheCorrupt("cache: unsupported version");
  (void)hr.get<std::uint32_t>();
  const auto size = hr.get<std::uint64_t>();
  const auto checksum = hr.get<std::uint64_t>();
  if (size != bytes.size() - header) throw CacheCorrupt("cache: size mismatch");
  Fnv1a h;
  h.update(bytes.data() + header, size);
  if (h.digest() != checksum) throw CacheCorrupt("cache: checksum mismatch");

  detail::ByteReader r(std::string_view(bytes).substr(header));
  if (r.get_string() != key) throw CacheCorrupt("cache: key mismatch");
  GridSpec grid;
  grid.resolution = r.get<std::int32_t>();
  grid.r_max = r.get<double>();
  try {
    grid.validate();
  } catch (const ArgumentError&) {
    throw CacheCorrupt("cache: invalid grid");
  }
  const int n_legs = r.get<std::int32_t>();
  const auto n_patterns = r.get<std::uint64_t>();
  if (n_patterns == 0 || n_patterns > (std::uint64_t{1} << 30)) throw CacheCorrupt("cache: bad pattern count");
  f = {};
  f.grid = grid;
  for (std::uint64_t i = 0; i < n_patterns; ++i) {
    try {
      f.patterns.emplace_back(r.get<std::uint64_t>(), n_legs);
    } catch (const ArgumentError&) {
      throw CacheCorrupt("cache: bad pattern");
    }
  }
  const std::size_t nodes = grid.size();
  f.values.resize(n_patterns * nodes);
  for (auto& a : f.values) r.get_doubles(a.data(), 6);
  s = {};
  s.grid = grid;
  s.patterns = f.patterns;
  for (int d = 0; d < 2; ++d) {
    s.potential[d].resize(n_patterns);
    s.divergence_free[d].resize(n_patterns);
    s.remainder_ratio[d].resize(n_patterns);
    for (std::size_t p = 0; p < n_patterns; ++p) {
      s.potential[d][p].resize(nodes);
      r.get_doubles(s.potential[d][p].data(), nodes);
      s.divergence_free[d][p].resize(nodes);
      for (auto& v : s.divergence_free[d][p]) r.get_doubles(v.data(), 2);
      s.remainder_ratio[d][p] = r.get<double>();
    }
  }
  if (!r.done()) throw CacheCorrupt("cache: trailing bytes");
}

}  // namespace geocontact
