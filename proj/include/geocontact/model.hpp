#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "geocontact/common.hpp"

namespace geocontact {

using ShapePoint = Eigen::Vector2d;

inline constexpr double kDefaultJointLimit = std::numbers::pi / 3.0;

/// Planar articulated morphology. Segments form a serial chain joined by
/// bending joints; every segment carries one leg on each side.
struct RobotSpec {
  int n_segments = 3;
  double segment_length = 0.1;     // m
  double lateral_offset = 0.01;    // m, hip distance from the segment midline
  double leg_length = 0.01;        // m, plan-view projection of the leg
  double mass = 1.0;               // kg
  double friction_mu = 0.35;
  double friction_regularization = 1e-6;  // m/s
  double anisotropy_ratio = 1.0;   // perpendicular / parallel drag

  int n_legs() const noexcept { return 2 * n_segments; }
  int n_joints() const noexcept { return n_segments - 1; }
  double body_length() const noexcept { return n_segments * segment_length; }
  double foot_reach() const noexcept { return lateral_offset + leg_length; }

  void validate() const {
    require(n_segments >= 2, "RobotSpec: n_segments must be >= 2");
    require(n_segments <= 31, "RobotSpec: at most 31 segments (62 legs) supported");
    require(segment_length > 0 && lateral_offset > 0 && leg_length > 0 && mass > 0,
            "RobotSpec: lengths and mass must be strictly positive");
    require(friction_mu > 0 && friction_mu <= 2, "RobotSpec: friction_mu must lie in (0, 2]");
    require(friction_regularization > 0, "RobotSpec: friction_regularization must be positive");
    require(anisotropy_ratio > 0, "RobotSpec: anisotropy_ratio must be positive");
  }
};

enum class Side : int { left = 0, right = 1 };

/// Stance/aerial state of every leg. Leg `2*segment + side` maps to bit
/// `2*segment + side` of the mask; left is side 0.
class ContactPattern {
public:
  ContactPattern() = default;
  ContactPattern(std::uint64_t mask, int n_legs) : mask_(mask), n_legs_(n_legs) {
    require(n_legs > 0 && n_legs % 2 == 0 && n_legs <= 62, "ContactPattern: n_legs must be even and in [2, 62]");
    require((mask >> n_legs) == 0, "ContactPattern: mask has bits beyond n_legs");
  }

  static ContactPattern all_stance(int n_legs) {
    return ContactPattern((std::uint64_t{1} << n_legs) - 1, n_legs);
  }

  static constexpr int leg_index(int segment, Side side) noexcept {
    return 2 * segment + static_cast<int>(side);
  }

  std::uint64_t mask() const noexcept { return mask_; }
  int n_legs() const noexcept { return n_legs_; }
  int n_segments() const noexcept { return n_legs_ / 2; }
  bool stance(int leg) const noexcept { return (mask_ >> leg) & 1U; }
  bool stance(int segment, Side side) const noexcept { return stance(leg_index(segment, side)); }
  int stance_count() const noexcept { return std::popcount(mask_); }

  std::vector<bool> to_vector() const {
    std::vector<bool> out(static_cast<std::size_t>(n_legs_));
    for (int i = 0; i < n_legs_; ++i) out[static_cast<std::size_t>(i)] = stance(i);
    return out;
  }

  // "L1 R2 L3" style label, segments numbered from 1.
  std::string label() const {
    std::string out;
    for (int s = 0; s < n_segments(); ++s) {
      for (Side side : {Side::left, Side::right}) {
        if (!stance(s, side)) continue;
        if (!out.empty()) out += ' ';
        out += side == Side::left ? 'L' : 'R';
        out += std::to_string(s + 1);
      }
    }
    return out.empty() ? std::string("-") : out;
  }

  friend bool operator==(const ContactPattern&, const ContactPattern&) = default;

private:
  std::uint64_t mask_ = 0;
  int n_legs_ = 0;
};

inline std::uint64_t side_mask(int n_legs, Side side) {
  std::uint64_t m = 0;
  for (int s = 0; s < n_legs / 2; ++s) m |= std::uint64_t{1} << ContactPattern::leg_index(s, side);
  return m;
}

/// All patterns with at least `min_stance` legs down, optionally dropping
/// patterns whose stance legs all sit on one side. Ascending mask order.
inline std::vector<ContactPattern> enumerate_contact_patterns(int n_legs, int min_stance,
                                                              bool exclude_unilateral) {
  require(n_legs >= 2 && n_legs % 2 == 0, "enumerate_contact_patterns: n_legs must be even and >= 2");
  require(n_legs <= 30, "enumerate_contact_patterns: n_legs above 30 is not enumerable");
  require(min_stance >= 1 && min_stance <= n_legs, "enumerate_contact_patterns: need 1 <= min_stance <= n_legs");
  const std::uint64_t left = side_mask(n_legs, Side::left);
  const std::uint64_t right = side_mask(n_legs, Side::right);
  std::vector<ContactPattern> out;
  const std::uint64_t end = std::uint64_t{1} << n_legs;
  for (std::uint64_t m = 1; m < end; ++m) {
    if (std::popcount(m) < min_stance) continue;
    if (exclude_unilateral && ((m & left) == 0 || (m & right) == 0)) continue;
    out.emplace_back(m, n_legs);
  }
  return out;
}

/// Swaps left/right stance within every segment.
inline ContactPattern flip_contralateral(const ContactPattern& p) {
  const std::uint64_t left = side_mask(p.n_legs(), Side::left);
  const std::uint64_t right = side_mask(p.n_legs(), Side::right);
  const std::uint64_t m = p.mask();
  return ContactPattern(((m & left) << 1) | ((m & right) >> 1), p.n_legs());
}

enum class BasisKind { direct, sinusoidal };

/// Maps the two shape coordinates onto body joint angles.
///
/// `direct` uses the coordinates as the two joint angles. `sinusoidal` maps
/// weights (w1, w2) to alpha_k = w1 sin(2 pi f s_k) + w2 cos(2 pi f s_k), where
/// s_k is the normalized position of joint k along the body. When `stations`
/// is empty, s_k = k / (n_joints + 1).
struct ShapeBasis {
  BasisKind kind = BasisKind::direct;
  double spatial_frequency = 1.0;  // cycles per body length
  std::vector<double> stations;

  static ShapeBasis direct() { return {}; }
  static ShapeBasis sinusoidal(double frequency, std::vector<double> stations = {}) {
    return {BasisKind::sinusoidal, frequency, std::move(stations)};
  }

  double station(int k, int n_joints) const {
    if (stations.empty()) return static_cast<double>(k + 1) / static_cast<double>(n_joints + 1);
    return stations[static_cast<std::size_t>(k)];
  }

  /// n_joints x 2 matrix B with alpha = B r.
  Eigen::MatrixXd matrix(int n_joints) const {
    if (kind == BasisKind::direct) {
      require(n_joints == 2, "ShapeBasis: direct basis requires exactly 2 joints");
      return Eigen::Matrix2d::Identity();
    }
    require(n_joints >= 1, "ShapeBasis: need at least one joint");
    require(stations.empty() || static_cast<int>(stations.size()) == n_joints,
            "ShapeBasis: station count must match joint count");
    Eigen::MatrixXd b(n_joints, 2);
    for (int k = 0; k < n_joints; ++k) {
      const double phase = 2.0 * std::numbers::pi * spatial_frequency * station(k, n_joints);
      b(k, 0) = std::sin(phase);
      b(k, 1) = std::cos(phase);
    }
    return b;
  }
};

inline std::vector<double> joint_angles(const ShapeBasis& basis, const ShapePoint& shape, int n_joints) {
  const Eigen::VectorXd alpha = basis.matrix(n_joints) * shape;
  return {alpha.data(), alpha.data() + alpha.size()};
}

/// Closed loop of shapes visited in increasing phase.
struct ShapeCycle {
  std::vector<ShapePoint> points;
  std::vector<double> phase;  // strictly increasing in [0, 2 pi)

  std::size_t size() const noexcept { return points.size(); }
  const ShapePoint& at(std::size_t j) const { return points[j % points.size()]; }
  // Phase of point j, unwrapped so that at(M) reads 2 pi past at(0).
  double phase_at(std::size_t j) const {
    const std::size_t m = points.size();
    return phase[j % m] + 2.0 * std::numbers::pi * static_cast<double>(j / m);
  }

  ShapeCycle negated() const {
    ShapeCycle out = *this;
    for (auto& p : out.points) p = -p;
    return out;
  }
};

/// Circular prescription r(tau) = amplitude (sin tau, cos tau) at M uniform phases.
inline ShapeCycle sample_shape_cycle([[maybe_unused]] const ShapeBasis& basis, int M, double amplitude,
                                     double joint_limit = kDefaultJointLimit) {
  require(M >= 3, "sample_shape_cycle: M must be >= 3");
  require(amplitude >= 0, "sample_shape_cycle: amplitude must be non-negative");
  // For both bases the largest joint angle along the circle equals the amplitude.
  require(amplitude <= joint_limit + 1e-12, "sample_shape_cycle: amplitude exceeds joint limit");
  ShapeCycle cycle;
  cycle.points.reserve(static_cast<std::size_t>(M));
  cycle.phase.reserve(static_cast<std::size_t>(M));
  for (int j = 0; j < M; ++j) {
    const double tau = 2.0 * std::numbers::pi * j / M;
    cycle.phase.push_back(tau);
    cycle.points.emplace_back(amplitude * std::sin(tau), amplitude * std::cos(tau));
  }
  return cycle;
}

/// Morphology plus the shape parameterization driving it.
struct RobotModel {
  RobotSpec spec;
  ShapeBasis basis;

  static RobotModel hexapod() { return {RobotSpec{}, ShapeBasis::direct()}; }
  static RobotModel centipede() {
    RobotSpec s;
    s.n_segments = 6;
    return {s, ShapeBasis::sinusoidal(2.0)};
  }
};

/// Body-frame kinematics of one foot. Its velocity in the body frame is
/// `jacobian * [xi_x, xi_y, xi_theta, rdot_1, rdot_2]`.
struct FootState {
  int leg = 0;
  Eigen::Vector2d position;
  Eigen::Vector2d tangent;  // unit tangent of the carrying segment
  Eigen::Matrix<double, 2, 5> jacobian;
};

/// Forward kinematics of the chain. The body frame sits at the mean of the
/// segment midpoints with orientation equal to the mean segment angle.
inline std::vector<FootState> foot_positions(const RobotSpec& spec, const ShapeBasis& basis,
                                             const ShapePoint& shape) {
  const int n = spec.n_segments;
  const int nj = spec.n_joints();
  const double L = spec.segment_length;
  const double reach = spec.foot_reach();
  const Eigen::MatrixXd B = basis.matrix(nj);
  const Eigen::VectorXd alpha = B * shape;

  std::vector<double> phi(static_cast<std::size_t>(n), 0.0);
  for (int k = 1; k < n; ++k) phi[k] = phi[k - 1] + alpha(k - 1);
  double phi_mean = 0;
  for (double p : phi) phi_mean += p;
  phi_mean /= n;

  std::vector<Eigen::Vector2d> t(n), tp(n), mid(n);
  Eigen::Vector2d joint = Eigen::Vector2d::Zero();
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  for (int k = 0; k < n; ++k) {
    t[k] = {std::cos(phi[k]), std::sin(phi[k])};
    tp[k] = {-t[k].y(), t[k].x()};
    mid[k] = joint + 0.5 * L * t[k];
    joint += L * t[k];
    center += mid[k];
  }
  center /= n;

  // dmid[k][j]: derivative of midpoint k w.r.t. joint angle j (joint j sits
  // between segments j and j+1, so it moves segments j+1 and beyond).
  std::vector<std::vector<Eigen::Vector2d>> dmid(n, std::vector<Eigen::Vector2d>(nj, Eigen::Vector2d::Zero()));
  std::vector<Eigen::Vector2d> dcenter(nj, Eigen::Vector2d::Zero());
  std::vector<double> dphi_mean(nj);
  for (int j = 0; j < nj; ++j) {
    const int first = j + 1;
    dphi_mean[j] = static_cast<double>(n - first) / n;
    for (int k = first; k < n; ++k) {
      Eigen::Vector2d d = 0.5 * L * tp[k];
      for (int i = first; i < k; ++i) d += L * tp[i];
      dmid[k][j] = d;
      dcenter[j] += d;
    }
    dcenter[j] /= n;
  }

  const Eigen::Rotation2Dd to_body(-phi_mean);
  const Eigen::Matrix2d R = to_body.toRotationMatrix();
  Eigen::Matrix2d perp;
  perp << 0, -1, 1, 0;

  std::vector<FootState> feet;
  feet.reserve(static_cast<std::size_t>(2 * n));
  for (int k = 0; k < n; ++k) {
    for (Side side : {Side::left, Side::right}) {
      const double sign = side == Side::left ? 1.0 : -1.0;
      FootState foot;
      foot.leg = ContactPattern::leg_index(k, side);
      foot.position = R * (mid[k] + sign * reach * tp[k] - center);
      foot.tangent = R * t[k];

      Eigen::Matrix<double, 2, Eigen::Dynamic> dalpha(2, nj);
      for (int j = 0; j < nj; ++j) {
        Eigen::Vector2d df = dmid[k][j];
        if (k >= j + 1) df -= sign * reach * t[k];
        dalpha.col(j) = R * (df - dcenter[j]) - dphi_mean[j] * (perp * foot.position);
      }
      foot.jacobian.leftCols<2>().setIdentity();
      foot.jacobian.col(2) = perp * foot.position;
      foot.jacobian.rightCols<2>() = dalpha * B;
      feet.push_back(foot);
    }
  }
  return feet;
}

inline std::vector<FootState> foot_positions(const RobotModel& model, const ShapePoint& shape) {
  return foot_positions(model.spec, model.basis, shape);
}

}  // namespace geocontact
