#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "geocontact/common.hpp"
#include "geocontact/model.hpp"

namespace geocontact {

/// Body velocity (xi_x, xi_y, xi_theta) in the body frame.
using BodyVelocity = Eigen::Vector3d;
using ShapeVelocity = Eigen::Vector2d;

inline constexpr double kGravity = 9.81;

/// Regularized dry Coulomb friction at the feet. Normal load is shared
/// equally among stance feet.
struct ForceModel {
  double mu = 0.35;
  double regularization_speed = 1e-6;  // m/s
  double anisotropy_ratio = 1.0;
  double mass = 1.0;
  double gravity = kGravity;

  static ForceModel from(const RobotSpec& spec) {
    return {spec.friction_mu, spec.friction_regularization, spec.anisotropy_ratio, spec.mass, kGravity};
  }
};

struct SolverOptions {
  double tolerance = 1e-9;  // on the residual normalized by mu m g (and body length for torque)
  int max_iterations = 100;
  double probe_speed = 0.1;  // rad/s per shape coordinate for connection extraction
};

struct Wrench {
  Eigen::Vector2d force = Eigen::Vector2d::Zero();
  double torque = 0.0;
};

namespace detail {

inline Eigen::Matrix2d drag_metric(const Eigen::Vector2d& tangent, double ratio) {
  const Eigen::Matrix2d tt = tangent * tangent.transpose();
  return tt + ratio * (Eigen::Matrix2d::Identity() - tt);
}

inline double cross(const Eigen::Vector2d& a, const Eigen::Vector2d& b) { return a.x() * b.y() - a.y() * b.x(); }

}  // namespace detail

/// Stance feet of one (shape, pattern) state, with everything the force
/// balance needs precomputed.
class ContactState {
public:
  ContactState(const RobotModel& model, const ShapePoint& shape, const ContactPattern& pattern,
               const ForceModel& fm)
      : fm_(fm), body_length_(model.spec.body_length()) {
    if (pattern.n_legs() != model.spec.n_legs())
      throw ArgumentError("ContactState: pattern leg count does not match the robot");
    if (pattern.stance_count() == 0) throw InfeasibleContactError("no stance legs: force balance is undefined");
    for (auto& foot : foot_positions(model, shape)) {
      if (pattern.stance(foot.leg)) feet_.push_back(std::move(foot));
    }
    load_ = fm.mass * fm.gravity / static_cast<double>(feet_.size());
    metric_.reserve(feet_.size());
    for (const auto& f : feet_) metric_.push_back(detail::drag_metric(f.tangent, fm.anisotropy_ratio));
  }

  const std::vector<FootState>& feet() const noexcept { return feet_; }
  double normal_load() const noexcept { return load_; }
  double body_length() const noexcept { return body_length_; }
  const ForceModel& force_model() const noexcept { return fm_; }

  Eigen::Vector2d foot_velocity(std::size_t i, const BodyVelocity& xi, const ShapeVelocity& rdot) const {
    Eigen::Matrix<double, 5, 1> q;
    q << xi, rdot;
    return feet_[i].jacobian * q;
  }

  Eigen::Vector2d foot_force(std::size_t i, const Eigen::Vector2d& v) const {
    return -fm_.mu * load_ * (metric_[i] * v) / (v.norm() + fm_.regularization_speed);
  }

  Wrench wrench(const BodyVelocity& xi, const ShapeVelocity& rdot) const {
    Wrench w;
    for (std::size_t i = 0; i < feet_.size(); ++i) {
      const Eigen::Vector2d f = foot_force(i, foot_velocity(i, xi, rdot));
      w.force += f;
      w.torque += detail::cross(feet_[i].position, f);
    }
    return w;
  }

  /// Regularized friction dissipation sum_i mu N (|v_i| - eps ln(1 + |v_i|/eps)).
  /// For isotropic friction the balance residual is minus its gradient in xi.
  double dissipation(const BodyVelocity& xi, const ShapeVelocity& rdot) const {
    const double eps = fm_.regularization_speed;
    double total = 0;
    for (std::size_t i = 0; i < feet_.size(); ++i) {
      const double s = foot_velocity(i, xi, rdot).norm();
      total += s - eps * std::log1p(s / eps);
    }
    return fm_.mu * load_ * total;
  }

  ContactState with_force_model(const ForceModel& fm) const {
    ContactState copy = *this;
    copy.fm_ = fm;
    copy.load_ = fm.mass * fm.gravity / static_cast<double>(feet_.size());
    for (std::size_t i = 0; i < feet_.size(); ++i)
      copy.metric_[i] = detail::drag_metric(feet_[i].tangent, fm.anisotropy_ratio);
    return copy;
  }

  /// Force and torque scaled by mu m g and mu m g BL.
  Eigen::Vector3d residual(const BodyVelocity& xi, const ShapeVelocity& rdot) const {
    const Wrench w = wrench(xi, rdot);
    const double scale = fm_.mu * fm_.mass * fm_.gravity;
    return {w.force.x() / scale, w.force.y() / scale, w.torque / (scale * body_length_)};
  }

  /// Exact derivative of `residual` with respect to xi.
  Eigen::Matrix3d residual_jacobian(const BodyVelocity& xi, const ShapeVelocity& rdot) const {
    Eigen::Matrix3d jac = Eigen::Matrix3d::Zero();
    const double eps = fm_.regularization_speed;
    const double c = fm_.mu * load_;
    for (std::size_t i = 0; i < feet_.size(); ++i) {
      const Eigen::Vector2d v = foot_velocity(i, xi, rdot);
      const double s = v.norm();
      Eigen::Matrix2d dfdv = metric_[i] / (s + eps);
      if (s > 0) dfdv -= (metric_[i] * v) * v.transpose() / (s * (s + eps) * (s + eps));
      dfdv *= -c;
      const Eigen::Matrix<double, 2, 3> dvdxi = feet_[i].jacobian.leftCols<3>();
      const Eigen::Matrix<double, 2, 3> dfdxi = dfdv * dvdxi;
      jac.topRows<2>() += dfdxi;
      const Eigen::Vector2d& p = feet_[i].position;
      jac.row(2) += p.x() * dfdxi.row(1) - p.y() * dfdxi.row(0);
    }
    const double scale = fm_.mu * fm_.mass * fm_.gravity;
    jac.topRows<2>() /= scale;
    jac.row(2) /= scale * body_length_;
    return jac;
  }

private:
  ForceModel fm_;
  double body_length_;
  double load_ = 0;
  std::vector<FootState> feet_;
  std::vector<Eigen::Matrix2d> metric_;
};

/// Net ground reaction (force, torque about the body origin) for a given body
/// and shape velocity.
inline Wrench ground_reaction(const RobotModel& model, const ShapePoint& shape, const ContactPattern& pattern,
                              const BodyVelocity& xi, const ShapeVelocity& rdot, const ForceModel& fm) {
  return ContactState(model, shape, pattern, fm).wrench(xi, rdot);
}

namespace detail {

inline BodyVelocity newton_balance(const ContactState& state, const ShapeVelocity& rdot, BodyVelocity xi,
                                   const SolverOptions& opts, double& norm) {
  const bool has_potential = state.force_model().anisotropy_ratio == 1.0;
  Eigen::Vector3d r = state.residual(xi, rdot);
  norm = r.norm();
  double merit = has_potential ? state.dissipation(xi, rdot) : 0.5 * norm * norm;
  for (int it = 0; it < opts.max_iterations && norm >= opts.tolerance; ++it) {
    const Eigen::Matrix3d jac = state.residual_jacobian(xi, rdot);
    const Eigen::Vector3d step = jac.fullPivLu().solve(-r);
    if (!step.allFinite()) break;
    bool accepted = false;
    double t = 1.0;
    for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
      const BodyVelocity trial = xi + t * step;
      const Eigen::Vector3d rt = state.residual(trial, rdot);
      const double nt = rt.norm();
      const double mt = has_potential ? state.dissipation(trial, rdot) : 0.5 * nt * nt;
      // Near the root the merit plateaus at rounding level; a smaller
      // residual then decides.
      if (mt < merit || (mt <= merit * (1 + 1e-14) && nt < norm)) {
        xi = trial;
        r = rt;
        norm = nt;
        merit = mt;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  return xi;
}

}  // namespace detail

/// Damped Newton on the three balance equations, started from xi = 0. Steps
/// are halved until the merit decreases; the merit is the friction
/// dissipation potential when friction is isotropic (its gradient is the
/// balance residual), the squared residual otherwise. If the direct solve
/// stalls, the regularization speed is relaxed and tightened back in stages.
inline BodyVelocity solve_body_velocity(const ContactState& state, const ShapeVelocity& rdot,
                                        const SolverOptions& opts = {}) {
  double norm = 0;
  BodyVelocity xi = detail::newton_balance(state, rdot, BodyVelocity::Zero(), opts, norm);
  if (!(norm < opts.tolerance) || !xi.allFinite()) {
    const double target = state.force_model().regularization_speed;
    double eps = std::max(target, 1e-2 * state.body_length() * std::max(rdot.norm(), 1e-12));
    xi.setZero();
    while (true) {
      ForceModel relaxed = state.force_model();
      relaxed.regularization_speed = eps;
      xi = detail::newton_balance(state.with_force_model(relaxed), rdot, xi, opts, norm);
      if (eps <= target) break;
      eps = std::max(target, eps * 0.1);
    }
  }
  if (!(norm < opts.tolerance) || !xi.allFinite()) {
    throw SolverError("force balance did not converge (normalized residual " + std::to_string(norm) + ")", norm);
  }
  return xi;
}

inline BodyVelocity solve_body_velocity(const RobotModel& model, const ShapePoint& shape,
                                        const ContactPattern& pattern, const ShapeVelocity& rdot,
                                        const ForceModel& fm, const SolverOptions& opts = {}) {
  return solve_body_velocity(ContactState(model, shape, pattern, fm), rdot, opts);
}

/// Local connection A(r) for one contact pattern: xi ~= A rdot.
struct LocalConnection {
  Eigen::Matrix<double, 3, 2> matrix = Eigen::Matrix<double, 3, 2>::Zero();
  ShapePoint shape = ShapePoint::Zero();
  ContactPattern pattern;

  BodyVelocity operator()(const ShapeVelocity& rdot) const { return matrix * rdot; }
};

/// Column k is the balanced body velocity for rdot = probe * e_k, divided by
/// the probe speed.
inline LocalConnection local_connection(const ContactState& state, const ShapePoint& shape,
                                        const ContactPattern& pattern, const SolverOptions& opts = {}) {
  LocalConnection a;
  a.shape = shape;
  a.pattern = pattern;
  for (int k = 0; k < 2; ++k) {
    ShapeVelocity rdot = ShapeVelocity::Zero();
    rdot(k) = opts.probe_speed;
    a.matrix.col(k) = solve_body_velocity(state, rdot, opts) / opts.probe_speed;
  }
  return a;
}

inline LocalConnection local_connection(const RobotModel& model, const ShapePoint& shape,
                                        const ContactPattern& pattern, const ForceModel& fm,
                                        const SolverOptions& opts = {}) {
  return local_connection(ContactState(model, shape, pattern, fm), shape, pattern, opts);
}

}  // namespace geocontact
