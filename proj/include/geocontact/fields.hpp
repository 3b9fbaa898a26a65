#pragma once

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "geocontact/common.hpp"
#include "geocontact/dynamics.hpp"
#include "geocontact/model.hpp"
#include "geocontact/weights.hpp"

namespace geocontact {

/// Square grid over [-r_max, r_max]^2. Nodes are row-major with x fastest.
/// The resolution is odd so the origin is a node and the node set is
/// symmetric under r -> -r.
struct GridSpec {
  double r_max = kDefaultJointLimit;
  int resolution = 31;

  void validate() const {
    require(r_max > 0, "GridSpec: r_max must be positive");
    require(resolution >= 3 && resolution % 2 == 1, "GridSpec: resolution must be odd and >= 3");
  }

  int n() const noexcept { return resolution; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(resolution) * resolution; }
  double step() const noexcept { return 2.0 * r_max / (resolution - 1); }
  double coord(int i) const noexcept {
    // Exactly antisymmetric about the center index.
    const int c = resolution / 2;
    return r_max * static_cast<double>(i - c) / static_cast<double>(c);
  }
  std::size_t node(int ix, int iy) const noexcept {
    return static_cast<std::size_t>(iy) * resolution + static_cast<std::size_t>(ix);
  }
  std::size_t origin() const noexcept { return node(resolution / 2, resolution / 2); }
  /// Node holding -r for the node holding r.
  std::size_t mirror(std::size_t k) const noexcept { return size() - 1 - k; }
  ShapePoint point(std::size_t k) const noexcept {
    const int ix = static_cast<int>(k % resolution);
    const int iy = static_cast<int>(k / resolution);
    return {coord(ix), coord(iy)};
  }
};

using VectorGrid = std::vector<Eigen::Vector2d>;
using ScalarGrid = std::vector<double>;
using ConnectionMatrix = Eigen::Matrix<double, 3, 2>;

enum class Direction { x = 0, y = 1, theta = 2 };

inline const char* to_string(Direction d) {
  switch (d) {
    case Direction::x: return "x";
    case Direction::y: return "y";
    case Direction::theta: return "theta";
  }
  return "?";
}

/// Local connection of every pattern at every grid node, pattern-major.
struct ConnectionFieldSet {
  GridSpec grid;
  std::vector<ContactPattern> patterns;
  std::vector<ConnectionMatrix> values;

  const ConnectionMatrix& at(std::size_t pattern, std::size_t node) const {
    return values[pattern * grid.size() + node];
  }

  /// One connection row (A^x, A^y or A^theta) as a vector field.
  VectorGrid row_field(std::size_t pattern, Direction row) const {
    VectorGrid out(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) out[k] = at(pattern, k).row(static_cast<int>(row)).transpose();
    return out;
  }
};

inline ConnectionFieldSet evaluate_connection_grid(const RobotModel& model, const std::vector<ContactPattern>& patterns,
                                                   const GridSpec& grid, const ForceModel& fm,
                                                   const SolverOptions& opts = {},
                                                   unsigned workers = default_worker_count()) {
  grid.validate();
  require(!patterns.empty(), "evaluate_connection_grid: pattern list is empty");
  ConnectionFieldSet out;
  out.grid = grid;
  out.patterns = patterns;
  out.values.resize(patterns.size() * grid.size());
  const std::size_t nodes = grid.size();
  parallel_for(
      patterns.size(),
      [&](std::size_t p) {
        for (std::size_t k = 0; k < nodes; ++k) {
          const ShapePoint r = grid.point(k);
          try {
            out.values[p * nodes + k] = local_connection(model, r, patterns[p], fm, opts).matrix;
          } catch (const SolverError& e) {
            throw SolverError("pattern " + std::to_string(p) + " [" + patterns[p].label() + "] at node " +
                                  std::to_string(k) + " (" + std::to_string(r.x()) + ", " + std::to_string(r.y()) +
                                  "): " + e.what(),
                              e.residual());
          }
        }
      },
      workers);
  return out;
}

/// Mirror relations between the connection of (pattern, r) and of
/// (flipped pattern, -r): the x row changes sign, the y and theta rows are
/// equal. Returns the largest violation per row.
inline std::array<double, 3> connection_symmetry_error(const ConnectionMatrix& a, const ConnectionMatrix& mirrored) {
  return {(a.row(0) + mirrored.row(0)).cwiseAbs().maxCoeff(), (a.row(1) - mirrored.row(1)).cwiseAbs().maxCoeff(),
          (a.row(2) - mirrored.row(2)).cwiseAbs().maxCoeff()};
}

inline std::size_t pattern_index(const std::vector<ContactPattern>& patterns, const ContactPattern& p) {
  for (std::size_t i = 0; i < patterns.size(); ++i)
    if (patterns[i] == p) return i;
  throw ArgumentError("pattern " + p.label() + " is not in the pattern list");
}

// ---------------------------------------------------------------------------
// Helmholtz-Hodge decomposition

/// How the boundary closes the Poisson problem for the potential.
///
/// `tangential`: Dirichlet values obtained by integrating the tangential
/// component around the boundary, after spreading the net circulation evenly
/// so the boundary integral closes. Gradient fields are recovered exactly and
/// the rigid rotation field maps to a zero potential.
///
/// `normal_flux`: Neumann condition dP/dn = A.n, i.e. the least-squares
/// projection onto gradients; the remainder is tangent to the boundary.
enum class HodgeBoundary { tangential, normal_flux };

struct HodgeResult {
  ScalarGrid potential;       // P, with P(origin) = 0
  VectorGrid curl_free;       // grad P
  VectorGrid divergence_free; // A - grad P
};

/// Centered differences inside, second-order one-sided at the edges.
inline VectorGrid grid_gradient(const ScalarGrid& p, const GridSpec& grid) {
  const int n = grid.n();
  const double h = grid.step();
  VectorGrid g(grid.size());
  auto d = [&](auto value, int i) {
    if (i == 0) return (-3 * value(0) + 4 * value(1) - value(2)) / (2 * h);
    if (i == n - 1) return (3 * value(n - 1) - 4 * value(n - 2) + value(n - 3)) / (2 * h);
    return (value(i + 1) - value(i - 1)) / (2 * h);
  };
  for (int iy = 0; iy < n; ++iy) {
    for (int ix = 0; ix < n; ++ix) {
      const double gx = d([&](int i) { return p[grid.node(i, iy)]; }, ix);
      const double gy = d([&](int i) { return p[grid.node(ix, i)]; }, iy);
      g[grid.node(ix, iy)] = {gx, gy};
    }
  }
  return g;
}

/// Centered-difference divergence at interior nodes (zero on the boundary).
inline ScalarGrid grid_divergence(const VectorGrid& a, const GridSpec& grid) {
  const int n = grid.n();
  const double h = grid.step();
  ScalarGrid div(grid.size(), 0.0);
  for (int iy = 1; iy < n - 1; ++iy)
    for (int ix = 1; ix < n - 1; ++ix)
      div[grid.node(ix, iy)] = (a[grid.node(ix + 1, iy)].x() - a[grid.node(ix - 1, iy)].x() +
                                a[grid.node(ix, iy + 1)].y() - a[grid.node(ix, iy - 1)].y()) /
                               (2 * h);
  return div;
}

/// Five-point Laplacian at interior nodes (zero on the boundary).
inline ScalarGrid grid_laplacian(const ScalarGrid& p, const GridSpec& grid) {
  const int n = grid.n();
  const double h2 = grid.step() * grid.step();
  ScalarGrid lap(grid.size(), 0.0);
  for (int iy = 1; iy < n - 1; ++iy)
    for (int ix = 1; ix < n - 1; ++ix)
      lap[grid.node(ix, iy)] = (p[grid.node(ix + 1, iy)] + p[grid.node(ix - 1, iy)] + p[grid.node(ix, iy + 1)] +
                                p[grid.node(ix, iy - 1)] - 4 * p[grid.node(ix, iy)]) /
                               h2;
  return lap;
}

/// Discrete divergence of the remainder A - grad P in the sense the Poisson
/// problem enforces it: div_c(A) - Lap5(P) at interior nodes.
inline double interior_remainder_divergence(const VectorGrid& field, const ScalarGrid& potential,
                                            const GridSpec& grid) {
  const ScalarGrid div = grid_divergence(field, grid);
  const ScalarGrid lap = grid_laplacian(potential, grid);
  double out = 0;
  for (std::size_t k = 0; k < div.size(); ++k) out = std::max(out, std::abs(div[k] - lap[k]));
  return out;
}

/// Factorizes the Poisson operator of one grid once and decomposes any
/// number of fields sampled on it.
class HelmholtzDecomposer {
public:
  explicit HelmholtzDecomposer(const GridSpec& grid, HodgeBoundary boundary = HodgeBoundary::tangential)
      : grid_(grid), boundary_(boundary) {
    grid.validate();
    require(grid.resolution >= 5, "helmholtz_decompose: resolution must be >= 5");
    const int n = grid.n();
    std::vector<Eigen::Triplet<double>> triplets;
    unknown_.assign(grid.size(), -1);
    int count = 0;
    for (int iy = 0; iy < n; ++iy) {
      for (int ix = 0; ix < n; ++ix) {
        const std::size_t k = grid.node(ix, iy);
        const bool on_boundary = ix == 0 || iy == 0 || ix == n - 1 || iy == n - 1;
        const bool free = boundary == HodgeBoundary::tangential ? !on_boundary : k != grid.origin();
        if (free) unknown_[k] = count++;
      }
    }
    for (int iy = 0; iy < n; ++iy) {
      for (int ix = 0; ix < n; ++ix) {
        const int row = unknown_[grid.node(ix, iy)];
        if (row < 0) continue;
        int degree = 0;
        for (auto [dx, dy] : kNeighbours) {
          const int jx = ix + dx, jy = iy + dy;
          if (jx < 0 || jy < 0 || jx >= n || jy >= n) continue;
          ++degree;
          const int col = unknown_[grid.node(jx, jy)];
          if (col >= 0) triplets.emplace_back(row, col, -1.0);
        }
        triplets.emplace_back(row, row, static_cast<double>(degree));
      }
    }
    Eigen::SparseMatrix<double> op(count, count);
    op.setFromTriplets(triplets.begin(), triplets.end());
    solver_.compute(op);
    if (solver_.info() != Eigen::Success) throw DecompositionError("Poisson operator factorization failed");
  }

  const GridSpec& grid() const noexcept { return grid_; }
  HodgeBoundary boundary() const noexcept { return boundary_; }

  HodgeResult operator()(const VectorGrid& field) const {
    require(field.size() == grid_.size(), "helmholtz_decompose: field does not match the grid");
    const int n = grid_.n();
    const double h = grid_.step();
    ScalarGrid p(grid_.size(), 0.0);
    if (boundary_ == HodgeBoundary::tangential) fill_boundary(field, p);

    // Edge-integrated field a_e = h (A_a + A_b)/2 . e on every grid edge; the
    // right-hand side is its discrete divergence, which reduces to
    // h^2 div_c(A) at interior nodes.
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(solver_.rows());
    for (int iy = 0; iy < n; ++iy) {
      for (int ix = 0; ix < n; ++ix) {
        const std::size_t k = grid_.node(ix, iy);
        const int row = unknown_[k];
        if (row < 0) continue;
        double b = 0;
        for (auto [dx, dy] : kNeighbours) {
          const int jx = ix + dx, jy = iy + dy;
          if (jx < 0 || jy < 0 || jx >= n || jy >= n) continue;
          const std::size_t j = grid_.node(jx, jy);
          const Eigen::Vector2d e(dx, dy);
          // Edge k -> j carries h (A_k + A_j)/2 . e; it enters node k with a minus sign.
          b -= 0.5 * h * (field[k] + field[j]).dot(e);
          if (unknown_[j] < 0) b += p[j];
        }
        rhs(row) = b;
      }
    }
    const Eigen::VectorXd sol = solver_.solve(rhs);
    if (solver_.info() != Eigen::Success || !sol.allFinite())
      throw DecompositionError("Poisson solve failed");
    for (std::size_t k = 0; k < grid_.size(); ++k)
      if (unknown_[k] >= 0) p[k] = sol(unknown_[k]);
    const double gauge = p[grid_.origin()];
    for (double& v : p) v -= gauge;

    HodgeResult out;
    out.curl_free = grid_gradient(p, grid_);
    out.divergence_free.resize(grid_.size());
    for (std::size_t k = 0; k < grid_.size(); ++k) out.divergence_free[k] = field[k] - out.curl_free[k];
    out.potential = std::move(p);
    return out;
  }

private:
  static constexpr std::array<std::pair<int, int>, 4> kNeighbours{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};

  // Counter-clockwise walk of the boundary from the (-r_max, -r_max) corner.
  std::vector<std::size_t> boundary_walk() const {
    const int n = grid_.n();
    std::vector<std::size_t> walk;
    for (int i = 0; i < n - 1; ++i) walk.push_back(grid_.node(i, 0));
    for (int i = 0; i < n - 1; ++i) walk.push_back(grid_.node(n - 1, i));
    for (int i = n - 1; i > 0; --i) walk.push_back(grid_.node(i, n - 1));
    for (int i = n - 1; i > 0; --i) walk.push_back(grid_.node(0, i));
    return walk;
  }

  void fill_boundary(const VectorGrid& field, ScalarGrid& p) const {
    const auto walk = boundary_walk();
    const std::size_t count = walk.size();
    std::vector<double> increment(count);
    double circulation = 0;
    for (std::size_t s = 0; s < count; ++s) {
      const std::size_t a = walk[s], b = walk[(s + 1) % count];
      const Eigen::Vector2d delta = grid_.point(b) - grid_.point(a);
      increment[s] = 0.5 * (field[a] + field[b]).dot(delta);
      circulation += increment[s];
    }
    const double correction = circulation / static_cast<double>(count);
    double value = 0;
    for (std::size_t s = 0; s < count; ++s) {
      p[walk[s]] = value;
      value += increment[s] - correction;
    }
  }

  GridSpec grid_;
  HodgeBoundary boundary_;
  std::vector<int> unknown_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver_;
};

inline HodgeResult helmholtz_decompose(const VectorGrid& field, const GridSpec& grid,
                                       HodgeBoundary boundary = HodgeBoundary::tangential) {
  return HelmholtzDecomposer(grid, boundary)(field);
}

// ---------------------------------------------------------------------------
// Potentials and weights

/// Per pattern and direction (x, y): potential grid with P(origin) = 0 and the
/// divergence-free remainder of the connection row.
struct PotentialStack {
  GridSpec grid;
  std::vector<ContactPattern> patterns;
  std::array<std::vector<ScalarGrid>, 2> potential;
  std::array<std::vector<VectorGrid>, 2> divergence_free;
  std::array<std::vector<double>, 2> remainder_ratio;  // max|div-free| / max|curl-free| per pattern

  const ScalarGrid& potential_grid(std::size_t pattern, Direction d) const {
    require(d != Direction::theta, "PotentialStack holds x and y potentials only");
    return potential[static_cast<int>(d)][pattern];
  }

  double max_remainder_ratio() const {
    double out = 0;
    for (const auto& per_dir : remainder_ratio)
      for (double r : per_dir) out = std::max(out, r);
    return out;
  }
};

inline PotentialStack build_potential_stack(const ConnectionFieldSet& fields,
                                            HodgeBoundary boundary = HodgeBoundary::tangential,
                                            unsigned workers = default_worker_count()) {
  const HelmholtzDecomposer decompose(fields.grid, boundary);
  PotentialStack stack;
  stack.grid = fields.grid;
  stack.patterns = fields.patterns;
  const std::size_t count = fields.patterns.size();
  for (int d = 0; d < 2; ++d) {
    stack.potential[d].resize(count);
    stack.divergence_free[d].resize(count);
    stack.remainder_ratio[d].resize(count);
  }
  parallel_for(
      count,
      [&](std::size_t p) {
        for (int d = 0; d < 2; ++d) {
          HodgeResult h = decompose(fields.row_field(p, static_cast<Direction>(d)));
          double div_max = 0, curl_max = 0;
          for (std::size_t k = 0; k < h.curl_free.size(); ++k) {
            div_max = std::max(div_max, h.divergence_free[k].norm());
            curl_max = std::max(curl_max, h.curl_free[k].norm());
          }
          stack.remainder_ratio[d][p] = curl_max > 0 ? div_max / curl_max : 0.0;
          stack.potential[d][p] = std::move(h.potential);
          stack.divergence_free[d][p] = std::move(h.divergence_free);
        }
      },
      workers);
  return stack;
}

/// Bilinear interpolation of a scalar grid.
inline double interpolate(const ScalarGrid& values, const GridSpec& grid, const ShapePoint& shape) {
  const double tol = 1e-9 * grid.r_max;
  if (!(std::abs(shape.x()) <= grid.r_max + tol && std::abs(shape.y()) <= grid.r_max + tol))
    throw DomainError("shape (" + std::to_string(shape.x()) + ", " + std::to_string(shape.y()) +
                      ") lies outside the grid domain");
  const int n = grid.n();
  const double h = grid.step();
  auto locate = [&](double v, int& i, double& t) {
    double u = std::clamp((v + grid.r_max) / h, 0.0, static_cast<double>(n - 1));
    // Snap rounding noise so node queries return stored values exactly.
    if (std::abs(u - std::round(u)) < 1e-9) u = std::round(u);
    i = std::min(static_cast<int>(std::floor(u)), n - 2);
    t = u - i;
  };
  int ix, iy;
  double tx, ty;
  locate(shape.x(), ix, tx);
  locate(shape.y(), iy, ty);
  const double v00 = values[grid.node(ix, iy)], v10 = values[grid.node(ix + 1, iy)];
  const double v01 = values[grid.node(ix, iy + 1)], v11 = values[grid.node(ix + 1, iy + 1)];
  return (1 - ty) * ((1 - tx) * v00 + tx * v10) + ty * ((1 - tx) * v01 + tx * v11);
}

inline double potential_at(const PotentialStack& stack, std::size_t pattern, Direction d, const ShapePoint& shape) {
  require(pattern < stack.patterns.size(), "potential_at: pattern index out of range");
  return interpolate(stack.potential_grid(pattern, d), stack.grid, shape);
}

/// d(i, j, l) = P_i(r_l) - P_i(r_j): the curl-free line integral from cycle
/// point j to cycle point l under pattern i.
inline WeightTensor build_weight_tensor(const PotentialStack& stack, const ShapeCycle& cycle, Direction d) {
  const int n = static_cast<int>(stack.patterns.size());
  const int m = static_cast<int>(cycle.size());
  std::vector<double> table(static_cast<std::size_t>(n) * m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      table[static_cast<std::size_t>(i) * m + j] = potential_at(stack, static_cast<std::size_t>(i), d, cycle.points[j]);
  return WeightTensor::from_site_potentials(n, m, table);
}

}  // namespace geocontact
