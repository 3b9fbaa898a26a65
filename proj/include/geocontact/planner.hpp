#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "geocontact/common.hpp"
#include "geocontact/fields.hpp"
#include "geocontact/weights.hpp"

namespace geocontact {

// All solvers maximize score = displacement - lambda * switches. The
// corresponding spin-model ground-state energy is -score.

/// Cyclic Potts instance: M sites (cycle steps), N states (contact patterns).
class PottsInstance {
public:
  /// Validates anti-symmetry and additivity of `d` (relative tolerance 1e-9).
  PottsInstance(WeightTensor d, double lambda) : PottsInstance(std::move(d), lambda, true) {}

  /// Skips the weight checks. Only for negative controls that need a
  /// deliberately broken tensor.
  static PottsInstance unchecked(WeightTensor d, double lambda) { return PottsInstance(std::move(d), lambda, false); }

  int sites() const noexcept { return d_.sites(); }
  int states() const noexcept { return d_.patterns(); }
  double lambda() const noexcept { return lambda_; }
  const WeightTensor& weights() const noexcept { return d_; }

private:
  PottsInstance(WeightTensor d, double lambda, bool check) : d_(std::move(d)), lambda_(lambda) {
    require(lambda >= 0 && std::isfinite(lambda), "PottsInstance: lambda must be finite and >= 0");
    require(d_.sites() >= 2 && d_.patterns() >= 1, "PottsInstance: empty weight tensor");
    if (check) {
      const double tol = 1e-9 * std::max(1.0, d_.max_abs());
      if (d_.antisymmetry_error() > tol) throw ArgumentError("PottsInstance: weights are not anti-symmetric");
      if (d_.additivity_error() > tol) throw ArgumentError("PottsInstance: weights are not additive");
    }
  }

  WeightTensor d_;
  double lambda_;
};

struct PlanSolution {
  std::vector<int> assignment;  // pattern index per cycle step
  int switch_count = 0;
  double displacement = 0;
  double score = 0;
  std::vector<int> walls;        // steps j with assignment[j-1] != assignment[j]
  std::uint64_t configurations = 0;  // candidates examined by the solver
};

struct ScoreBreakdown {
  double displacement = 0;
  int switch_count = 0;
  double score = 0;
};

inline int count_switches(const std::vector<int>& assignment) {
  const std::size_t m = assignment.size();
  int k = 0;
  for (std::size_t j = 0; j < m; ++j) k += assignment[j] != assignment[(j + 1) % m];
  return k;
}

inline std::vector<int> wall_positions(const std::vector<int>& assignment) {
  const std::size_t m = assignment.size();
  std::vector<int> walls;
  for (std::size_t j = 0; j < m; ++j)
    if (assignment[(j + m - 1) % m] != assignment[j]) walls.push_back(static_cast<int>(j));
  return walls;
}

inline ScoreBreakdown potts_score(const PottsInstance& inst, const std::vector<int>& assignment) {
  require(static_cast<int>(assignment.size()) == inst.sites(), "potts_score: assignment length must equal M");
  for (int s : assignment) require(s >= 0 && s < inst.states(), "potts_score: pattern index out of range");
  ScoreBreakdown out;
  for (int j = 0; j < inst.sites(); ++j) out.displacement += inst.weights().step(assignment[j], j);
  out.switch_count = count_switches(assignment);
  out.score = out.displacement - inst.lambda() * out.switch_count;
  return out;
}

namespace detail {

inline PlanSolution finish(const PottsInstance& inst, std::vector<int> assignment, std::uint64_t configurations) {
  PlanSolution s;
  const ScoreBreakdown b = potts_score(inst, assignment);
  s.displacement = b.displacement;
  s.switch_count = b.switch_count;
  s.score = b.score;
  s.walls = wall_positions(assignment);
  s.assignment = std::move(assignment);
  s.configurations = configurations;
  return s;
}

}  // namespace detail

/// Each step independently takes the pattern with the largest step weight
/// (lowest index on ties). Optimal when lambda = 0.
inline PlanSolution greedy_plan(const PottsInstance& inst) {
  std::vector<int> assignment(static_cast<std::size_t>(inst.sites()), 0);
  for (int j = 0; j < inst.sites(); ++j) {
    double best = inst.weights().step(0, j);
    for (int i = 1; i < inst.states(); ++i) {
      const double v = inst.weights().step(i, j);
      if (v > best) {
        best = v;
        assignment[j] = i;
      }
    }
  }
  return detail::finish(inst, std::move(assignment), static_cast<std::uint64_t>(inst.sites()) * inst.states());
}

inline constexpr double kBruteForceLimit = 1e7;

/// Exhaustive N^M enumeration in lexicographic order; the first maximal
/// assignment wins.
inline PlanSolution brute_force_potts(const PottsInstance& inst) {
  const int m = inst.sites();
  const int n = inst.states();
  if (std::pow(static_cast<double>(n), m) > kBruteForceLimit)
    throw CapacityError("brute_force_potts: N^M = " + std::to_string(n) + "^" + std::to_string(m) +
                        " exceeds the 1e7 limit");
  const WeightTensor& d = inst.weights();
  std::vector<int> a(static_cast<std::size_t>(m), 0);
  std::vector<int> best;
  double best_score = -std::numeric_limits<double>::infinity();
  std::uint64_t visited = 0;
  while (true) {
    ++visited;
    double disp = 0;
    int switches = 0;
    for (int j = 0; j < m; ++j) {
      disp += d.step(a[j], j);
      switches += a[j] != a[(j + 1) % m];
    }
    const double score = disp - inst.lambda() * switches;
    if (score > best_score) {
      best_score = score;
      best = a;
    }
    int pos = m - 1;
    while (pos >= 0 && ++a[pos] == n) a[pos--] = 0;
    if (pos < 0) break;
  }
  return detail::finish(inst, std::move(best), visited);
}

/// Long-range Ising couplings J(j, l) = max_i d(i, j, l) with the maximizing
/// pattern (lowest index on ties).
struct IsingDual {
  int sites = 0;
  std::vector<double> coupling;
  std::vector<int> argmax_pattern;

  double J(int j, int l) const noexcept { return coupling[static_cast<std::size_t>(j) * sites + l]; }
  int best_pattern(int j, int l) const noexcept { return argmax_pattern[static_cast<std::size_t>(j) * sites + l]; }
};

inline IsingDual build_ising_dual(const PottsInstance& inst) {
  const int m = inst.sites();
  IsingDual dual;
  dual.sites = m;
  dual.coupling.assign(static_cast<std::size_t>(m) * m, 0.0);
  dual.argmax_pattern.assign(static_cast<std::size_t>(m) * m, 0);
  for (int j = 0; j < m; ++j) {
    for (int l = 0; l < m; ++l) {
      double best = inst.weights()(0, j, l);
      int arg = 0;
      for (int i = 1; i < inst.states(); ++i) {
        const double v = inst.weights()(i, j, l);
        if (v > best) {
          best = v;
          arg = i;
        }
      }
      dual.coupling[static_cast<std::size_t>(j) * m + l] = best;
      dual.argmax_pattern[static_cast<std::size_t>(j) * m + l] = arg;
    }
  }
  return dual;
}

inline double binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  double r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return std::round(r);
}

/// Exhaustive search over cyclic domain-wall placements.
///
/// For K walls at sites w_1 < ... < w_K the segment [w_k, w_{k+1}) is held by
/// the pattern maximizing d(i, w_k, w_{k+1}), contributing J(w_k, w_{k+1});
/// the last segment wraps to w_1. The energy of a placement is
/// sum J - lambda K. K = 0 is the uniform assignment (score 0). When two
/// neighbouring segments pick the same pattern the reconstructed assignment
/// has fewer switches; the returned score is always re-evaluated from the
/// assignment itself.
inline PlanSolution domain_wall_search(const IsingDual& dual, const std::set<int>& k_set, double lambda) {
  const int m = dual.sites;
  require(!k_set.empty(), "domain_wall_search: K set is empty");
  require(lambda >= 0, "domain_wall_search: lambda must be >= 0");
  for (int k : k_set) {
    if (k == 1) throw ArgumentError("domain_wall_search: K = 1 is infeasible on a cycle");
    require(k >= 0 && k <= m, "domain_wall_search: K must lie in {0, 2, ..., M}");
    if (binomial(m, k) > kBruteForceLimit)
      throw CapacityError("domain_wall_search: C(" + std::to_string(m) + ", " + std::to_string(k) +
                          ") exceeds the 1e7 limit");
  }

  auto expand = [&](const std::vector<int>& walls) {
    std::vector<int> a(static_cast<std::size_t>(m), 0);
    const std::size_t k = walls.size();
    for (std::size_t s = 0; s < k; ++s) {
      const int from = walls[s];
      const int to = walls[(s + 1) % k];
      const int pattern = dual.best_pattern(from, to);
      int j = from;
      do {
        a[j] = pattern;
        j = (j + 1) % m;
      } while (j != to);
    }
    return a;
  };

  std::vector<int> best_assignment(static_cast<std::size_t>(m), 0);
  double best_energy = -std::numeric_limits<double>::infinity();
  std::uint64_t visited = 0;

  for (int k : k_set) {
    if (k == 0) {
      ++visited;
      const std::vector<int> uniform(static_cast<std::size_t>(m), 0);
      if (0.0 > best_energy || (0.0 == best_energy && uniform < best_assignment)) {
        best_energy = 0.0;
        best_assignment = uniform;
      }
      continue;
    }
    std::vector<int> w(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) w[i] = i;
    while (true) {
      ++visited;
      double energy = -lambda * k;
      for (int s = 0; s < k; ++s) energy += dual.J(w[s], w[(s + 1) % k]);
      if (energy > best_energy) {
        best_energy = energy;
        best_assignment = expand(w);
      } else if (energy == best_energy) {
        auto candidate = expand(w);
        if (candidate < best_assignment) best_assignment = std::move(candidate);
      }
      int pos = k - 1;
      while (pos >= 0 && w[pos] == m - k + pos) --pos;
      if (pos < 0) break;
      ++w[pos];
      for (int i = pos + 1; i < k; ++i) w[i] = w[i - 1] + 1;
    }
  }

  PlanSolution s;
  s.assignment = best_assignment;
  s.walls = wall_positions(best_assignment);
  s.switch_count = static_cast<int>(s.walls.size());
  // Additivity makes every segment sum collapse to one coupling, so the
  // displacement follows from the walls of the final assignment.
  const std::size_t kw = s.walls.size();
  for (std::size_t i = 0; i < kw; ++i) s.displacement += dual.J(s.walls[i], s.walls[(i + 1) % kw]);
  s.score = s.displacement - lambda * s.switch_count;
  s.configurations = visited;
  return s;
}

/// {0, 2, 3, ..., k_max}
inline std::set<int> up_to_k(int k_max) {
  std::set<int> out{0};
  for (int k = 2; k <= k_max; ++k) out.insert(k);
  return out;
}

enum class PlanMethod { greedy, domain_wall, brute };

inline const char* to_string(PlanMethod m) {
  switch (m) {
    case PlanMethod::greedy: return "greedy";
    case PlanMethod::domain_wall: return "domain-wall";
    case PlanMethod::brute: return "brute";
  }
  return "?";
}

struct GaitSequencePlan {
  PlanSolution solution;
  Direction direction = Direction::x;
  PlanMethod method = PlanMethod::domain_wall;
  double lambda = 0;
};

/// Builds the Potts instance for one displacement direction along the cycle
/// and dispatches to the chosen solver. The returned solution is re-scored
/// against the instance.
inline GaitSequencePlan plan_gait_sequence(const PotentialStack& stack, const ShapeCycle& cycle, Direction direction,
                                           const std::set<int>& k_set, double lambda, PlanMethod method) {
  require(direction != Direction::theta, "plan_gait_sequence: direction must be x or y");
  const PottsInstance inst(build_weight_tensor(stack, cycle, direction), lambda);
  PlanSolution raw;
  switch (method) {
    case PlanMethod::greedy: raw = greedy_plan(inst); break;
    case PlanMethod::brute: raw = brute_force_potts(inst); break;
    case PlanMethod::domain_wall: raw = domain_wall_search(build_ising_dual(inst), k_set, lambda); break;
  }
  GaitSequencePlan out;
  out.solution = detail::finish(inst, raw.assignment, raw.configurations);
  out.direction = direction;
  out.method = method;
  out.lambda = lambda;
  return out;
}

}  // namespace geocontact
