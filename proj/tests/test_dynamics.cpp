#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "geocontact/dynamics.hpp"

using namespace geocontact;

namespace {

ContactPattern tripod() { return ContactPattern(0b011001, 6); }  // L1 R2 L3

// Straightforward per-foot summation written against the foot kinematics
// only, as an oracle for ground_reaction.
Wrench reference_wrench(const RobotModel& m, const ShapePoint& r, const ContactPattern& p, const BodyVelocity& xi,
                        const ShapeVelocity& rdot, double mu, double eps, double ratio) {
  const auto feet = foot_positions(m, r);
  const double n = m.spec.mass * 9.81 / p.stance_count();
  Wrench w;
  for (const auto& f : feet) {
    if (!p.stance(f.leg)) continue;
    const double vx = xi(0) - xi(2) * f.position.y() + f.jacobian(0, 3) * rdot(0) + f.jacobian(0, 4) * rdot(1);
    const double vy = xi(1) + xi(2) * f.position.x() + f.jacobian(1, 3) * rdot(0) + f.jacobian(1, 4) * rdot(1);
    const double speed = std::hypot(vx, vy);
    const double tx = f.tangent.x(), ty = f.tangent.y();
    const double vpar = vx * tx + vy * ty;
    const double vperp = -vx * ty + vy * tx;
    const double mx = vpar * tx - ratio * vperp * ty;
    const double my = vpar * ty + ratio * vperp * tx;
    const double fx = -mu * n * mx / (speed + eps);
    const double fy = -mu * n * my / (speed + eps);
    w.force += Eigen::Vector2d(fx, fy);
    w.torque += f.position.x() * fy - f.position.y() * fx;
  }
  return w;
}

}  // namespace

TEST(GroundReaction, ZeroMotionZeroWrench) {
  const RobotModel m = RobotModel::hexapod();
  const auto w = ground_reaction(m, ShapePoint(0.3, 0.2), tripod(), BodyVelocity::Zero(), ShapeVelocity::Zero(),
                                 ForceModel::from(m.spec));
  EXPECT_EQ(w.force.x(), 0.0);
  EXPECT_EQ(w.force.y(), 0.0);
  EXPECT_EQ(w.torque, 0.0);
}

TEST(GroundReaction, StraightForwardDrag) {
  const RobotModel m = RobotModel::hexapod();
  const ForceModel fm = ForceModel::from(m.spec);
  const double v = 0.01;
  const auto w = ground_reaction(m, ShapePoint::Zero(), ContactPattern::all_stance(6), BodyVelocity(v, 0, 0),
                                 ShapeVelocity::Zero(), fm);
  EXPECT_NEAR(w.force.x(), -fm.mu * fm.mass * fm.gravity * v / (v + fm.regularization_speed), 1e-14);
  EXPECT_NEAR(w.force.y(), 0.0, 1e-15);
  EXPECT_NEAR(w.torque, 0.0, 1e-15);
}

TEST(GroundReaction, MatchesPerFootReference) {
  const RobotModel m = RobotModel::hexapod();
  for (double ratio : {1.0, 2.5}) {
    ForceModel fm = ForceModel::from(m.spec);
    fm.anisotropy_ratio = ratio;
    const ShapePoint r(0.6, -0.4);
    const BodyVelocity xi(0.003, -0.002, 0.05);
    const ShapeVelocity rdot(0.1, -0.05);
    const auto w = ground_reaction(m, r, tripod(), xi, rdot, fm);
    const auto ref = reference_wrench(m, r, tripod(), xi, rdot, fm.mu, fm.regularization_speed, ratio);
    EXPECT_NEAR(w.force.x(), ref.force.x(), 1e-13);
    EXPECT_NEAR(w.force.y(), ref.force.y(), 1e-13);
    EXPECT_NEAR(w.torque, ref.torque, 1e-14);
  }
}

TEST(GroundReaction, NoStanceIsInfeasible) {
  const RobotModel m = RobotModel::hexapod();
  EXPECT_THROW(ground_reaction(m, ShapePoint::Zero(), ContactPattern(0, 6), BodyVelocity::Zero(),
                               ShapeVelocity::Zero(), ForceModel::from(m.spec)),
               InfeasibleContactError);
}

TEST(GroundReaction, PerFootForceBounded) {
  const RobotModel m = RobotModel::hexapod();
  const ContactState st(m, ShapePoint(0.2, 0.9), tripod(), ForceModel::from(m.spec));
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0, 0.05);
  for (int t = 0; t < 100; ++t) {
    const BodyVelocity xi(g(rng), g(rng), g(rng));
    const ShapeVelocity rdot(g(rng), g(rng));
    for (std::size_t i = 0; i < st.feet().size(); ++i)
      EXPECT_LE(st.foot_force(i, st.foot_velocity(i, xi, rdot)).norm(), 0.35 * st.normal_load() * (1 + 1e-15));
  }
}

TEST(Balance, AnalyticJacobianMatchesCentralDifferences) {
  const RobotModel m = RobotModel::hexapod();
  for (double ratio : {1.0, 3.0}) {
    ForceModel fm = ForceModel::from(m.spec);
    fm.anisotropy_ratio = ratio;
    const ContactState st(m, ShapePoint(0.5, -0.3), ContactPattern(0b111011, 6), fm);
    const BodyVelocity xi(0.01, -0.004, 0.08);
    const ShapeVelocity rdot(0.1, 0.02);
    const Eigen::Matrix3d jac = st.residual_jacobian(xi, rdot);
    const double h = 1e-7;
    for (int k = 0; k < 3; ++k) {
      BodyVelocity d = BodyVelocity::Zero();
      d(k) = h;
      const Eigen::Vector3d fd = (st.residual(xi + d, rdot) - st.residual(xi - d, rdot)) / (2 * h);
      EXPECT_LT((jac.col(k) - fd).norm(), 1e-6 * std::max(1.0, fd.norm())) << "ratio " << ratio << " col " << k;
    }
  }
}

TEST(Solve, ZeroShapeVelocityGivesZero) {
  const RobotModel m = RobotModel::hexapod();
  const auto xi = solve_body_velocity(m, ShapePoint(0.4, 0.1), tripod(), ShapeVelocity::Zero(),
                                      ForceModel::from(m.spec));
  EXPECT_EQ(xi.norm(), 0.0);
}

TEST(Solve, ResidualBelowToleranceOnRandomStates) {
  const RobotModel m = RobotModel::hexapod();
  const ForceModel fm = ForceModel::from(m.spec);
  const auto patterns = enumerate_contact_patterns(6, 3, true);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, patterns.size() - 1);
  for (int t = 0; t < 200; ++t) {
    const ShapePoint r(u(rng), u(rng));
    const ShapeVelocity rdot(0.1 * u(rng), 0.1 * u(rng));
    const ContactState st(m, r, patterns[pick(rng)], fm);
    const auto xi = solve_body_velocity(st, rdot);
    EXPECT_LT(st.residual(xi, rdot).norm(), 1e-9);
  }
}

TEST(Solve, MirroredProblem) {
  const RobotModel m = RobotModel::hexapod();
  const ForceModel fm = ForceModel::from(m.spec);
  const ShapePoint r(0.5, -0.8);
  const ShapeVelocity rdot(0.07, 0.03);
  for (const auto& p : {tripod(), ContactPattern(0b101110, 6), ContactPattern::all_stance(6)}) {
    const auto a = solve_body_velocity(m, r, p, rdot, fm);
    const auto b = solve_body_velocity(m, -r, flip_contralateral(p), -rdot, fm);
    EXPECT_NEAR(a.x(), b.x(), 1e-9);
    EXPECT_NEAR(a.y(), -b.y(), 1e-9);
    EXPECT_NEAR(a.z(), -b.z(), 1e-9);
  }
}

// Regularization makes near-sticking feet slide at a speed proportional to
// eps, so the balance is speed-homogeneous only up to an O(eps) defect.
TEST(Solve, SpeedHomogeneity) {
  const RobotModel m = RobotModel::hexapod();
  ForceModel fm = ForceModel::from(m.spec);
  fm.regularization_speed = 1e-8;
  const ShapeVelocity rdot(0.1, -0.06);
  for (const auto& p : {tripod(), ContactPattern(0b110111, 6)}) {
    const auto a = solve_body_velocity(m, ShapePoint(0.3, 0.7), p, rdot, fm);
    const auto b = solve_body_velocity(m, ShapePoint(0.3, 0.7), p, 2 * rdot, fm);
    EXPECT_LT((b - 2 * a).norm(), 1e-4 * (2 * a).norm());
  }
}

TEST(Solve, HomogeneityDefectIsLinearInRegularization) {
  const RobotModel m = RobotModel::hexapod();
  const ShapeVelocity rdot(0.1, -0.06);
  auto defect = [&](double eps) {
    ForceModel fm = ForceModel::from(m.spec);
    fm.regularization_speed = eps;
    const auto a = solve_body_velocity(m, ShapePoint(0.3, 0.7), tripod(), rdot, fm);
    const auto b = solve_body_velocity(m, ShapePoint(0.3, 0.7), tripod(), 2 * rdot, fm);
    return (b - 2 * a).norm();
  };
  const double d6 = defect(1e-6), d7 = defect(1e-7);
  EXPECT_NEAR(d6 / d7, 10.0, 0.5);
}

TEST(Solve, Deterministic) {
  const RobotModel m = RobotModel::centipede();
  const ForceModel fm = ForceModel::from(m.spec);
  const ContactPattern p(0b101101111011, 12);
  const auto a = solve_body_velocity(m, ShapePoint(0.2, -0.5), p, ShapeVelocity(0.1, 0.04), fm);
  const auto b = solve_body_velocity(m, ShapePoint(0.2, -0.5), p, ShapeVelocity(0.1, 0.04), fm);
  EXPECT_EQ(a, b);
}

TEST(Solve, NonConvergenceCarriesResidual) {
  const RobotModel m = RobotModel::hexapod();
  SolverOptions opts;
  opts.max_iterations = 0;
  try {
    solve_body_velocity(m, ShapePoint(0.4, 0.4), tripod(), ShapeVelocity(0.1, 0), ForceModel::from(m.spec), opts);
    FAIL() << "expected SolverError";
  } catch (const SolverError& e) {
    EXPECT_GT(e.residual(), 1e-9);
  }
}

TEST(Solve, AnisotropicFrictionConverges) {
  const RobotModel m = RobotModel::hexapod();
  ForceModel fm = ForceModel::from(m.spec);
  fm.anisotropy_ratio = 2.0;
  const ContactState st(m, ShapePoint(0.6, 0.2), ContactPattern(0b111101, 6), fm);
  const ShapeVelocity rdot(0.1, 0.1);
  const auto xi = solve_body_velocity(st, rdot);
  EXPECT_LT(st.residual(xi, rdot).norm(), 1e-9);
}

TEST(Connection, MirrorRelations) {
  const RobotModel m = RobotModel::hexapod();
  const ForceModel fm = ForceModel::from(m.spec);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const auto patterns = enumerate_contact_patterns(6, 3, true);
  for (int t = 0; t < 20; ++t) {
    const ShapePoint r(u(rng), u(rng));
    const auto& p = patterns[static_cast<std::size_t>(t) * 7 % patterns.size()];
    const auto a = local_connection(m, r, p, fm).matrix;
    const auto b = local_connection(m, -r, flip_contralateral(p), fm).matrix;
    EXPECT_LT((a.row(0) + b.row(0)).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LT((a.row(1) - b.row(1)).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LT((a.row(2) - b.row(2)).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(Connection, SelfMirrorPatternAtOrigin) {
  // Fixed point of the mirror map: the x row must vanish.
  const RobotModel m = RobotModel::hexapod();
  const auto a = local_connection(m, ShapePoint::Zero(), ContactPattern::all_stance(6), ForceModel::from(m.spec));
  EXPECT_LT(a.matrix.row(0).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_GT(a.matrix.row(2).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(Connection, ReconstructionOnAxesAndHomogeneity) {
  const RobotModel m = RobotModel::hexapod();
  ForceModel fm = ForceModel::from(m.spec);
  fm.regularization_speed = 1e-8;
  const ShapePoint r(0.4, -0.6);
  const ContactPattern p(0b011011, 6);
  const auto a = local_connection(m, r, p, fm);
  for (int k = 0; k < 2; ++k) {
    for (double c : {0.05, 0.3, -0.2}) {
      ShapeVelocity rdot = ShapeVelocity::Zero();
      rdot(k) = c;
      const auto xi = solve_body_velocity(m, r, p, rdot, fm);
      EXPECT_LT((xi - a(rdot)).norm(), 1e-4 * a(rdot).norm());
    }
  }
  const ShapeVelocity mixed(0.08, -0.05);
  const auto xi = solve_body_velocity(m, r, p, mixed, fm);
  EXPECT_LT((solve_body_velocity(m, r, p, -mixed, fm) + xi).norm(), 1e-9);
  EXPECT_LT((solve_body_velocity(m, r, p, 3 * mixed, fm) - 3 * xi).norm(), 1e-4 * 3 * xi.norm());
}
