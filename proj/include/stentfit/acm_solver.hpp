#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "stentfit/distance_field.hpp"
#include "stentfit/error.hpp"
#include "stentfit/format.hpp"
#include "stentfit/stent_model.hpp"
#include "stentfit/vec3.hpp"

namespace stentfit {

struct SolverParams {
  double w1 = 1.0;  // d/ds
  double w2 = 1.0;  // d/dt
  double w3 = 0.1;  // d2/ds2
  double w4 = 0.1;  // d2/dt2
  double w5 = 0.1;  // d2/dsdt
  double w_wall = 1.0;
  double w_balloon = 1.0;
  double F_pressure = 0.5;
  double R_trunk = 12.0;
  double R_limb = 7.0;
  double gamma = 1.0;
  int max_iterations = 50;
  double convergence_eps = 1e-3;
  // Turn the wall force into the ring plane, keeping its magnitude, so rings
  // stay at their arc length instead of sliding along sloped walls.
  bool planar_wall_force = false;

  /// Per-term weights in the order S, T, SS, TT, ST.
  std::array<double, 5> term_weights() const { return {w1, w2, w3, w4, w5}; }
  double limit_radius(Segment seg) const { return seg == Segment::Trunk ? R_trunk : R_limb; }

  void validate() const {
    for (double w : {w1, w2, w3, w4, w5, w_wall, w_balloon, F_pressure})
      if (!std::isfinite(w) || w < 0.0) throw Error(ErrorCode::InvalidConfig, "weights must be finite and >= 0");
    if (!std::isfinite(R_trunk) || !std::isfinite(R_limb) || R_trunk <= 0.0 || R_limb <= 0.0)
      throw Error(ErrorCode::RadiusNonPositive, "limit radii must be > 0");
    if (!std::isfinite(gamma) || gamma <= 0.0) throw Error(ErrorCode::SingularSystem, "gamma must be > 0");
    if (max_iterations < 0) throw Error(ErrorCode::InvalidConfig, "max_iterations must be >= 0");
    if (!std::isfinite(convergence_eps) || convergence_eps < 0.0)
      throw Error(ErrorCode::InvalidConfig, "convergence_eps must be >= 0");
  }
};

/// Internal-energy operator A (shared by x, y and z) and the factorization of
/// A + gamma*I.
class StiffnessSystem {
 public:
  using Matrix = Eigen::SparseMatrix<double>;
  using Vector = Eigen::VectorXd;

  StiffnessSystem(Matrix a, std::array<double, 5> weights, double gamma)
      : a_(std::move(a)), weights_(weights), gamma_(gamma), solver_(std::make_shared<Solver>()) {
    Matrix shifted = a_;
    Matrix eye(a_.rows(), a_.cols());
    eye.setIdentity();
    shifted += gamma_ * eye;
    solver_->compute(shifted);
    if (solver_->info() != Eigen::Success) throw Error(ErrorCode::SingularSystem, "factorization of A + gamma*I failed");
  }

  const Matrix& matrix() const { return a_; }
  const std::array<double, 5>& weights() const { return weights_; }
  double gamma() const { return gamma_; }
  std::size_t size() const { return static_cast<std::size_t>(a_.rows()); }

  /// Solves (A + gamma*I) x = b.
  Vector solve(const Vector& b) const {
    Vector x = solver_->solve(b);
    if (solver_->info() != Eigen::Success) throw Error(ErrorCode::SingularSystem, "back substitution failed");
    return x;
  }

  /// Sum over the three coordinates of v_c^T A v_c.
  double energy(const std::vector<Vec3>& v) const {
    double e = 0.0;
    for (int c = 0; c < 3; ++c) {
      const Vector x = component(v, c);
      e += x.dot(a_ * x);
    }
    return e;
  }

  static Vector component(const std::vector<Vec3>& v, int c) {
    Vector x(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) x[static_cast<Eigen::Index>(i)] = v[i][c];
    return x;
  }

 private:
  using Solver = Eigen::SimplicialLDLT<Matrix>;
  Matrix a_;
  std::array<double, 5> weights_;
  double gamma_;
  std::shared_ptr<Solver> solver_;
};

/// A = w1 DsT Ds + w2 DtT Dt + w3 DssT Dss + w4 DttT Dtt + 2 w5 DstT Dst, with
/// the difference operators taken from the energy rows of the stencil table.
inline StiffnessSystem assemble_stiffness(const StentMesh& mesh, const SolverParams& params) {
  params.validate();
  const StencilTable table = derivative_stencils(mesh);
  const auto w = params.term_weights();
  const auto n = static_cast<Eigen::Index>(mesh.grid.vertex_count());
  std::vector<Eigen::Triplet<double>> trip;
  for (int term = 0; term < 5; ++term) {
    const double scale = term == static_cast<int>(Term::ST) ? 2.0 * w[term] : w[term];
    if (scale == 0.0) continue;
    for (const Stencil& row : table.energy[term])
      for (const auto& [i, a] : row.taps)
        for (const auto& [j, b] : row.taps)
          trip.emplace_back(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j), scale * a * b);
  }
  StiffnessSystem::Matrix a(n, n);
  a.setFromTriplets(trip.begin(), trip.end());
  a.makeCompressed();
  return StiffnessSystem(std::move(a), w, params.gamma);
}

// ---------------------------------------------------------------------------
// External forces

struct RingAnchor {
  Vec3 center;
  Vec3 radial;  // outward unit
  Vec3 axis;    // ring plane normal
};

/// Per-vertex anchors from the current ring centroids. The radial direction
/// is taken in the ring plane, whose normal is the centroid-to-centroid
/// direction along the segment; an axial component would let the balloon
/// drag vertices along the tube. A vertex on its ring axis keeps its
/// construction radial direction.
inline std::vector<RingAnchor> ring_anchors(const BifurcatedGrid& grid, const std::vector<Vec3>& v) {
  std::vector<RingAnchor> out(v.size());
  const int nt = grid.n_t();
  std::vector<Vec3> centroid(static_cast<std::size_t>(grid.total_rings()));
  for (int ring = 0; ring < grid.total_rings(); ++ring) {
    Vec3 c{};
    for (int t = 0; t < nt; ++t) c += v[static_cast<std::size_t>(ring * nt + t)];
    centroid[static_cast<std::size_t>(ring)] = c / static_cast<double>(nt);
  }
  for (int ring = 0; ring < grid.total_rings(); ++ring) {
    const Segment seg = grid.segment_of_ring(ring);
    const int s = grid.ring_in_segment(ring);
    const int last = grid.rings(seg) - 1;
    const int lo = grid.ring_id(seg, std::max(s - 1, 0));
    const int hi = grid.ring_id(seg, std::min(s + 1, last));
    Vec3 axis = normalized(centroid[static_cast<std::size_t>(hi)] - centroid[static_cast<std::size_t>(lo)]);
    if (norm(axis) == 0.0 && static_cast<std::size_t>(ring) < grid.ring_tangents.size())
      axis = grid.ring_tangents[static_cast<std::size_t>(ring)];
    const Vec3 c = centroid[static_cast<std::size_t>(ring)];
    for (int t = 0; t < nt; ++t) {
      const std::size_t i = static_cast<std::size_t>(ring * nt + t);
      const Vec3 d = v[i] - c;
      Vec3 u = normalized(d - axis * dot(d, axis));
      if (norm(u) == 0.0 && i < grid.radial.size()) u = grid.radial[i];
      out[i] = {c, u, axis};
    }
  }
  return out;
}

/// F_pressure (R - r) u while r < R, zero otherwise; r is the vertex offset
/// from the anchor along u.
inline Vec3 balloon_force(const Vec3& vertex, const RingAnchor& anchor, double R, const SolverParams& params) {
  const double r = dot(vertex - anchor.center, anchor.radial);
  if (r >= R) return {};
  return anchor.radial * (params.F_pressure * (R - r));
}

inline Vec3 balloon_force(const Vec3& vertex, const RingAnchor& anchor, Segment seg, const SolverParams& params) {
  return balloon_force(vertex, anchor, params.limit_radius(seg), params);
}

/// -w_wall grad D + w_balloon F_balloon. `field` may be null (free space).
inline Vec3 external_force(const Vec3& vertex, const RingAnchor& anchor, Segment seg, const DistanceField* field,
                           const SolverParams& params) {
  Vec3 f{};
  if (field != nullptr && params.w_wall != 0.0) {
    Vec3 g = grad_d(*field, vertex);
    if (params.planar_wall_force) {
      const double mag = norm(g);
      g = normalized(g - anchor.axis * dot(g, anchor.axis)) * mag;
    }
    f -= g * params.w_wall;
  }
  if (params.w_balloon != 0.0) f += balloon_force(vertex, anchor, seg, params) * params.w_balloon;
  return f;
}

/// Sum over vertices of w_wall D(v) + w_balloon F_pressure/2 (R - r)^2 for r < R.
inline double external_energy(const BifurcatedGrid& grid, const std::vector<Vec3>& v,
                              const std::vector<RingAnchor>& anchors, const DistanceField* field,
                              const SolverParams& params) {
  double e = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Segment seg = grid.segment_of_ring(static_cast<int>(i) / grid.n_t());
    if (field != nullptr && params.w_wall != 0.0) e += params.w_wall * sample_trilinear(*field, v[i]);
    const double gap = params.limit_radius(seg) - dot(v[i] - anchors[i].center, anchors[i].radial);
    if (gap > 0.0) e += params.w_balloon * 0.5 * params.F_pressure * gap * gap;
  }
  return e;
}

inline std::vector<Vec3> external_forces(const BifurcatedGrid& grid, const std::vector<Vec3>& v,
                                         const std::vector<RingAnchor>& anchors, const DistanceField* field,
                                         const SolverParams& params) {
  std::vector<Vec3> f(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Segment seg = grid.segment_of_ring(static_cast<int>(i) / grid.n_t());
    f[i] = external_force(v[i], anchors[i], seg, field, params);
  }
  return f;
}

// ---------------------------------------------------------------------------
// Iteration

/// v' = (A + gamma I)^-1 (gamma v + f), per coordinate.
inline std::vector<Vec3> step(const std::vector<Vec3>& state, const StiffnessSystem& system,
                              const std::vector<Vec3>& forces, int iteration = 0) {
  if (state.size() != system.size() || forces.size() != state.size())
    throw Error(ErrorCode::InvalidConfig, "state, force and system sizes differ");
  std::vector<Vec3> next(state.size());
  for (int c = 0; c < 3; ++c) {
    StiffnessSystem::Vector rhs = system.gamma() * StiffnessSystem::component(state, c) +
                                  StiffnessSystem::component(forces, c);
    const StiffnessSystem::Vector x = system.solve(rhs);
    for (std::size_t i = 0; i < state.size(); ++i) next[i][c] = x[static_cast<Eigen::Index>(i)];
  }
  for (std::size_t i = 0; i < next.size(); ++i)
    if (!is_finite(next[i]))
      throw Error(ErrorCode::NonFiniteState,
                  "non-finite vertex " + std::to_string(i) + " at iteration " + std::to_string(iteration));
  return next;
}

struct TraceRecord {
  int iteration = 0;
  double e_int = 0.0;
  double e_ext = 0.0;
  double max_disp = 0.0;
};

using SimulationTrace = std::vector<TraceRecord>;

struct SimulationResult {
  StentMesh mesh;
  SimulationTrace trace;
  bool converged = false;
};

/// Iterates `step` with anchors refreshed from the current ring centroids
/// until the largest displacement drops below convergence_eps or the
/// iteration budget runs out. Reuses `system` when given.
inline SimulationResult run(const StentMesh& mesh, const DistanceField* field, const SolverParams& params,
                            const StiffnessSystem* system = nullptr) {
  params.validate();
  SimulationResult result{mesh, {}, false};
  if (params.max_iterations == 0) return result;
  std::unique_ptr<StiffnessSystem> own;
  if (system == nullptr) {
    own = std::make_unique<StiffnessSystem>(assemble_stiffness(mesh, params));
    system = own.get();
  }
  const BifurcatedGrid& grid = mesh.grid;
  std::vector<Vec3> v = grid.vertices;
  for (int it = 1; it <= params.max_iterations; ++it) {
    const auto anchors = ring_anchors(grid, v);
    const auto forces = external_forces(grid, v, anchors, field, params);
    std::vector<Vec3> next = step(v, *system, forces, it);
    double max_disp = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) max_disp = std::max(max_disp, distance(next[i], v[i]));
    v = std::move(next);
    const auto next_anchors = ring_anchors(grid, v);
    result.trace.push_back({it, system->energy(v), external_energy(grid, v, next_anchors, field, params), max_disp});
    if (max_disp < params.convergence_eps) {
      result.converged = true;
      break;
    }
  }
  result.mesh.grid.vertices = std::move(v);
  return result;
}

inline SimulationResult run(const StentMesh& mesh, const DistanceField& field, const SolverParams& params,
                            const StiffnessSystem* system = nullptr) {
  return run(mesh, &field, params, system);
}

inline constexpr double kExpansionWeightScale = 1e-3;
inline constexpr double kExpansionRadiusFactor = 8.0;
inline constexpr double kExpansionBalloonRatio = 0.75;

/// Measurement configuration: internal weights scaled by 1e-3 and limit radii
/// raised to 8x the lumen radius hint. F_pressure is rescaled so the balloon
/// force at the hint radius is 0.75 of the largest wall force, which stops
/// vertices about half a voxel past the last inside voxel center. The wall
/// force acts in the ring plane.
inline SolverParams expansion_mode(const SolverParams& params, double max_radius_hint) {
  if (!(max_radius_hint > 0.0)) throw Error(ErrorCode::RadiusNonPositive, "radius hint must be > 0");
  SolverParams out = params;
  out.w1 *= kExpansionWeightScale;
  out.w2 *= kExpansionWeightScale;
  out.w3 *= kExpansionWeightScale;
  out.w4 *= kExpansionWeightScale;
  out.w5 *= kExpansionWeightScale;
  const double R = kExpansionRadiusFactor * max_radius_hint;
  out.R_trunk = std::max(out.R_trunk, R);
  out.R_limb = std::max(out.R_limb, R);
  if (out.w_balloon > 0.0 && out.w_wall > 0.0)
    out.F_pressure = kExpansionBalloonRatio * out.w_wall / (out.w_balloon * (out.R_trunk - max_radius_hint));
  out.planar_wall_force = true;
  return out;
}

inline std::string trace_to_csv(const SimulationTrace& trace) {
  std::string out = "iteration,E_int,E_ext,max_disp\n";
  for (const auto& r : trace)
    out += std::to_string(r.iteration) + "," + format_double(r.e_int) + "," + format_double(r.e_ext) + "," +
           format_double(r.max_disp) + "\n";
  return out;
}

}  // namespace stentfit
