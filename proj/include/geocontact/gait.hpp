#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "geocontact/common.hpp"
#include "geocontact/dynamics.hpp"
#include "geocontact/model.hpp"
#include "geocontact/planner.hpp"

namespace geocontact {

enum class Traversal { forward, reverse };

/// A run of consecutive cycle steps [start, start + steps) held in one
/// contact pattern. Step j moves the shape from cycle point j to j+1.
struct GaitPhase {
  int start = 0;
  int steps = 0;
  ContactPattern pattern;
};

struct GaitPlan {
  ShapeCycle cycle;
  std::vector<GaitPhase> phases;
  Traversal traversal = Traversal::forward;

  /// Pattern held on every cycle step.
  std::vector<ContactPattern> expand() const {
    std::vector<ContactPattern> out(cycle.size());
    for (const auto& ph : phases)
      for (int s = 0; s < ph.steps; ++s) out[(ph.start + s) % cycle.size()] = ph.pattern;
    return out;
  }
};

/// Merges runs of equal assignment into phases. Phases start at the walls of
/// the assignment, in cyclic order from the lowest wall.
inline GaitPlan assemble_gait(const ShapeCycle& cycle, const PlanSolution& solution,
                              const std::vector<ContactPattern>& patterns) {
  const int m = static_cast<int>(cycle.size());
  require(static_cast<int>(solution.assignment.size()) == m, "assemble_gait: assignment length must equal M");
  for (int a : solution.assignment)
    require(a >= 0 && static_cast<std::size_t>(a) < patterns.size(), "assemble_gait: pattern index out of range");
  GaitPlan plan;
  plan.cycle = cycle;
  const std::vector<int> walls = wall_positions(solution.assignment);
  if (walls.empty()) {
    plan.phases.push_back({0, m, patterns[solution.assignment[0]]});
    return plan;
  }
  for (std::size_t w = 0; w < walls.size(); ++w) {
    const int start = walls[w];
    const int end = walls[(w + 1) % walls.size()];
    const int steps = ((end - start) % m + m) % m;
    plan.phases.push_back({start, steps == 0 ? m : steps, patterns[solution.assignment[start]]});
  }
  return plan;
}

/// Negated shapes, contralaterally flipped contacts, same traversal.
inline GaitPlan antisymmetric_gait(const GaitPlan& plan) {
  GaitPlan out = plan;
  out.cycle = plan.cycle.negated();
  for (auto& ph : out.phases) ph.pattern = flip_contralateral(ph.pattern);
  return out;
}

inline GaitPlan reversed(const GaitPlan& plan) {
  GaitPlan out = plan;
  out.traversal = plan.traversal == Traversal::forward ? Traversal::reverse : Traversal::forward;
  return out;
}

/// World-frame pose (x, y, theta).
struct Pose {
  double x = 0, y = 0, theta = 0;

  Pose compose(const Pose& rel) const {
    const double c = std::cos(theta), s = std::sin(theta);
    return {x + c * rel.x - s * rel.y, y + s * rel.x + c * rel.y, theta + rel.theta};
  }
  Pose inverse() const {
    const double c = std::cos(theta), s = std::sin(theta);
    return {-(c * x + s * y), -(-s * x + c * y), -theta};
  }
};

struct TrajectorySample {
  double tau = 0;
  Pose pose;
  ContactPattern pattern;
};

/// Pose after every integration substep. The trajectory starts at the
/// identity pose, which is not stored; tau accumulates shape phase and
/// reaches 2 pi times the number of executed gait cycles.
struct Trajectory {
  std::vector<TrajectorySample> samples;
  Pose final_pose() const { return samples.empty() ? Pose{} : samples.back().pose; }
};

/// Displacement per (super-)cycle in the body frame at the cycle start.
struct GaitMetrics {
  double delta_x = 0;      // BL/cyc
  double delta_y = 0;      // BL/cyc
  double delta_theta = 0;  // rad/cyc
};

struct SimulationResult {
  Trajectory trajectory;
  GaitMetrics metrics;
  Pose per_cycle;  // metres and radians
};

struct SimulationOptions {
  int substeps_per_arc = 100;
  int cycles = 1;
  SolverOptions solver;
};

namespace detail {

// One arc of a gait: the shape moves linearly in phase from `from` to `to`.
struct Arc {
  ShapePoint from, to;
  double dtau;
  ContactPattern pattern;
};

inline std::vector<Arc> arcs_of(const GaitPlan& plan) {
  std::vector<Arc> arcs;
  arcs.reserve(plan.cycle.size());
  for (const auto& ph : plan.phases) {
    for (int s = 0; s < ph.steps; ++s) {
      const std::size_t j = static_cast<std::size_t>(ph.start + s);
      arcs.push_back({plan.cycle.at(j), plan.cycle.at(j + 1), plan.cycle.phase_at(j + 1) - plan.cycle.phase_at(j),
                      ph.pattern});
    }
  }
  if (plan.traversal == Traversal::reverse) {
    std::reverse(arcs.begin(), arcs.end());
    for (auto& a : arcs) std::swap(a.from, a.to);
  }
  return arcs;
}

}  // namespace detail

/// Integrates the reconstruction equation over the plans executed back to
/// back as one super-cycle. On every substep the shape velocity is constant;
/// the body velocity xi = A(r) rdot comes from a fresh connection solve at
/// the substep midpoint and is mapped to the world frame at the midpoint
/// heading. Contact switches happen at arc boundaries and move nothing.
inline SimulationResult simulate(const RobotModel& model, std::span<const GaitPlan> plans, const ForceModel& fm,
                                 const SimulationOptions& opts = {}) {
  require(opts.substeps_per_arc >= 10, "simulate: substeps_per_arc must be >= 10");
  require(opts.cycles >= 1, "simulate: cycles must be >= 1");
  require(!plans.empty(), "simulate: no plans");

  std::vector<detail::Arc> arcs;
  for (const auto& p : plans) {
    auto a = detail::arcs_of(p);
    arcs.insert(arcs.end(), a.begin(), a.end());
  }

  SimulationResult out;
  out.trajectory.samples.reserve(arcs.size() * opts.substeps_per_arc * opts.cycles);
  Pose pose;
  Pose cycle_start;
  double tau = 0;
  for (int c = 0; c < opts.cycles; ++c) {
    cycle_start = pose;
    for (std::size_t ai = 0; ai < arcs.size(); ++ai) {
      const auto& arc = arcs[ai];
      const double dt = arc.dtau / opts.substeps_per_arc;
      const ShapeVelocity rdot = (arc.to - arc.from) / arc.dtau;
      for (int s = 0; s < opts.substeps_per_arc; ++s) {
        const double u = (s + 0.5) / opts.substeps_per_arc;
        const ShapePoint mid = arc.from + u * (arc.to - arc.from);
        BodyVelocity xi = BodyVelocity::Zero();
        if (rdot.squaredNorm() > 0) {
          try {
            xi = local_connection(model, mid, arc.pattern, fm, opts.solver)(rdot);
          } catch (const SolverError& e) {
            throw SolverError("simulate: arc " + std::to_string(ai) + ", substep " + std::to_string(s) + ": " +
                                  e.what(),
                              e.residual());
          }
        }
        const double heading = pose.theta + 0.5 * xi.z() * dt;
        const double ch = std::cos(heading), sh = std::sin(heading);
        pose.x += (ch * xi.x() - sh * xi.y()) * dt;
        pose.y += (sh * xi.x() + ch * xi.y()) * dt;
        pose.theta += xi.z() * dt;
        tau += dt;
        out.trajectory.samples.push_back({tau, pose, arc.pattern});
      }
    }
  }
  out.per_cycle = cycle_start.inverse().compose(pose);
  const double bl = model.spec.body_length();
  out.metrics = {out.per_cycle.x / bl, out.per_cycle.y / bl, out.per_cycle.theta};
  return out;
}

inline SimulationResult simulate(const RobotModel& model, const GaitPlan& plan, const ForceModel& fm,
                                 const SimulationOptions& opts = {}) {
  return simulate(model, std::span<const GaitPlan>(&plan, 1), fm, opts);
}

/// Executes the plan followed by its anti-symmetric companion as one
/// super-cycle.
inline SimulationResult compose_and_simulate(const RobotModel& model, const GaitPlan& plan, const ForceModel& fm,
                                             const SimulationOptions& opts = {}) {
  const GaitPlan pair[2] = {plan, antisymmetric_gait(plan)};
  return simulate(model, std::span<const GaitPlan>(pair, 2), fm, opts);
}

}  // namespace geocontact
