#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "stentfit/acm_solver.hpp"
#include "stentfit/centerline.hpp"
#include "stentfit/distance_field.hpp"
#include "stentfit/measurement.hpp"
#include "stentfit/phantom.hpp"
#include "stentfit/segmentation.hpp"
#include "stentfit/skeleton.hpp"
#include "stentfit/stent_model.hpp"

namespace stentfit::testing {

/// Bifurcated phantom with the default shape (trunk 9, peak 25, neck 8,
/// limbs 6 mm) on a 96 x 96 x 128 grid of 1 mm voxels.
inline GridGeometry aaa_grid() {
  GridGeometry g;
  g.dims = {96, 96, 128};
  return g;
}

/// Smaller bifurcated phantom that fits a 64^3 grid.
inline PhantomSpec small_spec() {
  PhantomSpec s;
  s.trunk_radius = 7.0;
  s.trunk_length = 34.0;
  s.aneurysm_peak_radius = 13.0;
  s.aneurysm_center = 16.0;
  s.aneurysm_width = 5.0;
  s.distal_neck_radius = 6.0;
  s.limb_radius = 4.5;
  s.limb_length = 24.0;
  return s;
}

inline GridGeometry cube_grid(int n) {
  GridGeometry g;
  g.dims = {n, n, n};
  return g;
}

/// Straight capped cylinder: axis (cx, cy), z in (z0, z1), intensity 100 inside.
inline VoxelVolume cylinder_volume(const GridGeometry& g, double radius, double cx, double cy, double z0, double z1) {
  VoxelVolume vol(g, 0.0f);
  for (std::size_t idx = 0; idx < vol.size(); ++idx) {
    const Vec3 c = g.center(idx);
    if (std::hypot(c.x - cx, c.y - cy) < radius && c.z > z0 && c.z < z1) vol[idx] = 100.0f;
  }
  return vol;
}

inline Landmarks project_truth_landmarks(const PhantomTruth& t, const Polyline& trunk) {
  return {project_arclength(trunk, t.proximal_site_point), project_arclength(trunk, t.aneurysm_start_point),
          project_arclength(trunk, t.aneurysm_end_point), project_arclength(trunk, t.neck_start_point),
          project_arclength(trunk, t.neck_end_point)};
}

struct CurveDistance {
  double mean = 0.0;       // symmetric mean of point-to-curve distances
  double hausdorff = 0.0;  // symmetric
};

inline CurveDistance curve_distance(const Polyline& a, const Polyline& b) {
  auto one_way = [](const Polyline& from, const Polyline& to, double& mean) {
    double worst = 0.0, sum = 0.0;
    for (const auto& p : from) {
      const double d = distance_to_polyline(to, p);
      worst = std::max(worst, d);
      sum += d;
    }
    mean = sum / static_cast<double>(from.size());
    return worst;
  };
  double m1 = 0.0, m2 = 0.0;
  const double h1 = one_way(a, b, m1);
  const double h2 = one_way(b, a, m2);
  return {0.5 * (m1 + m2), std::max(h1, h2)};
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  const auto dir = std::filesystem::temp_directory_path() /
                   ("stentfit-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Uniform random mask with the given fill probability; at least one inside voxel.
inline BinaryMask random_mask(const GridGeometry& g, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(p);
  BinaryMask m(g, 0);
  for (auto& v : m.data()) v = coin(rng) ? 1 : 0;
  if (count_true(m) == 0) m[0] = 1;
  return m;
}

/// Nearest inside voxel center by exhaustive search.
inline DistanceField brute_force_edt(const BinaryMask& mask) {
  const GridGeometry& g = mask.geometry();
  std::vector<Vec3> inside;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) inside.push_back(g.center(i));
  DistanceField d(g, 0.0);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const Vec3 p = g.center(i);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : inside) best = std::min(best, dot(p - q, p - q));
    d[i] = std::sqrt(best);
  }
  return d;
}

/// Straight tube centerline from z = z_top down to z_top - length, 1 mm samples.
inline CenterlineSet straight_centerline(double length, Vec3 top = {0.0, 0.0, 0.0}) {
  CenterlineSet cl;
  for (int i = 0; i <= static_cast<int>(length); ++i) cl.trunk.push_back(top - Vec3{0.0, 0.0, static_cast<double>(i)});
  cl.bifurcation_point = cl.trunk.back();
  cl.sample_step = 1.0;
  return cl;
}

/// Y-shaped centerline: trunk down the -z axis, limbs at +-30 degrees.
inline CenterlineSet y_centerline(double trunk_length, double limb_length) {
  CenterlineSet cl = straight_centerline(trunk_length);
  const Vec3 b = cl.trunk.back();
  const double sn = 0.5, cs = std::sqrt(3.0) / 2.0;
  for (int i = 0; i <= static_cast<int>(limb_length); ++i) {
    cl.left_limb.push_back(b + Vec3{-sn, 0.0, -cs} * static_cast<double>(i));
    cl.right_limb.push_back(b + Vec3{sn, 0.0, -cs} * static_cast<double>(i));
  }
  return cl;
}

/// Mean in-plane radius of each ring around its centroid.
inline std::vector<double> ring_radii(const StentMesh& mesh) {
  const auto& g = mesh.grid;
  const auto anchors = ring_anchors(g, g.vertices);
  std::vector<double> out;
  for (int ring = 0; ring < g.total_rings(); ++ring) {
    double sum = 0.0;
    for (int t = 0; t < g.n_t(); ++t) {
      const std::size_t i = static_cast<std::size_t>(ring * g.n_t() + t);
      sum += dot(g.vertices[i] - anchors[i].center, anchors[i].radial);
    }
    out.push_back(sum / g.n_t());
  }
  return out;
}

/// Direct discrete internal energy, summed over x, y and z:
///   w1 |v(k+1,t) - v(k,t)|^2 + w2 |v(k,t+1) - v(k,t)|^2 + w3 |v(k-1,t) - 2v(k,t) + v(k+1,t)|^2
///   + w4 |v(k,t-1) - 2v(k,t) + v(k,t+1)|^2 + 2 w5 |v(k,t) - v(k,t+1) - v(k+1,t) + v(k+1,t+1)|^2
/// over every window along each root-to-tip path (trunk rings then one
/// limb's rings). Windows lying entirely in the trunk are counted once.
inline double direct_internal_energy(const BifurcatedGrid& g, const std::vector<Vec3>& v, const SolverParams& p) {
  const int nt = g.n_t();
  const int T = g.trunk_rings();
  const int L = g.limb_rings();
  const int paths = L > 0 ? 2 : 1;
  const int n = T + L;
  double e = 0.0;
  for (int path = 0; path < paths; ++path) {
    auto at = [&](int k, int t) {
      const int ring = k < T ? k : T + path * L + (k - T);
      return v[static_cast<std::size_t>(ring * nt + ((t % nt) + nt) % nt)];
    };
    // count a window spanning rings [k0, k1] once overall when it stays in the trunk
    auto counted = [&](int k1) { return k1 >= T || path == 0; };
    for (int k = 0; k < n; ++k)
      for (int t = 0; t < nt; ++t) {
        if (k + 1 < n && counted(k + 1)) {
          const Vec3 ds = at(k + 1, t) - at(k, t);
          e += p.w1 * dot(ds, ds);
          const Vec3 st = at(k, t) - at(k, t + 1) - at(k + 1, t) + at(k + 1, t + 1);
          e += 2.0 * p.w5 * dot(st, st);
        }
        if (counted(k)) {
          const Vec3 dt = at(k, t + 1) - at(k, t);
          e += p.w2 * dot(dt, dt);
          const Vec3 tt = at(k, t - 1) - at(k, t) * 2.0 + at(k, t + 1);
          e += p.w4 * dot(tt, tt);
        }
        if (k >= 1 && k + 1 < n && counted(k + 1)) {
          const Vec3 ss = at(k - 1, t) - at(k, t) * 2.0 + at(k + 1, t);
          e += p.w3 * dot(ss, ss);
        }
      }
  }
  return e;
}

/// Grid with the given shape and random vertex positions in [-10, 10]^3.
inline StentMesh random_mesh(int n_t, int T, int L, std::mt19937_64& rng) {
  StentMesh mesh;
  mesh.grid = BifurcatedGrid(n_t, T, L);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  for (auto& v : mesh.grid.vertices) v = {u(rng), u(rng), u(rng)};
  mesh.connection = build_connection(mesh.grid);
  return mesh;
}

/// Segment, skeletonize, fit and expand a generated phantom in memory, the
/// same chain the pipeline runs on a volume file.
struct PhantomFit {
  BinaryMask mask;
  CenterlineSet centerlines;
  StentMesh initial;
  SimulationResult simulation;
  SimulationResult expansion;
  MeasurementReport report;
  double tolerance = 0.0;  // voxel diagonal
};

inline PhantomFit fit_phantom(const VoxelVolume& vol, const PhantomTruth& truth, const StentLayout& layout,
                              int expansion_iterations = 100) {
  PhantomFit fit;
  const Vec3 seed = point_at(truth.centerlines.trunk, 0.5 * polyline_length(truth.centerlines.trunk));
  fit.mask = largest_component_cleanup(region_grow(vol, seed, {50.0, 150.0}));
  fit.centerlines = extract_centerlines(thin(fit.mask), fit.mask);
  const DistanceField field = edt(fit.mask);
  fit.initial = build_initial_stent(fit.centerlines, 4.0, 3.0, layout);
  fit.simulation = run(fit.initial, field, SolverParams{});
  SolverParams p = expansion_mode(SolverParams{}, max_inscribed_radius(fit.mask));
  p.max_iterations = expansion_iterations;
  fit.expansion = run(fit.initial, field, p);
  fit.report = measure(fit.expansion.mesh, fit.centerlines, project_truth_landmarks(truth, fit.centerlines.trunk));
  fit.tolerance = vol.geometry().voxel_diagonal();
  fit.report.covered_ostia = ostium_coverage(fit.expansion.mesh, truth.markers, fit.tolerance);
  return fit;
}

/// Largest of one voxel and `rel` of the truth value.
inline double diameter_tolerance(double truth, const GridGeometry& g, double rel = 0.05) {
  return std::max(g.min_spacing(), rel * truth);
}

/// Expanded stent in a radius-8 cylinder along z (64^3 grid, z in (8, 56)).
/// Returns the mean ring diameter over the rings.
inline double cylinder_expansion_diameter() {
  const GridGeometry g = cube_grid(64);
  const VoxelVolume vol = cylinder_volume(g, 8.0, 32.0, 32.0, 8.0, 56.0);
  const BinaryMask mask = region_grow(vol, {32.0, 32.0, 32.0}, {50.0, 150.0});
  CenterlineSet cl = extract_tube_centerline(thin(mask), mask);
  // keep the rings 6 mm clear of both caps
  cl.trunk.resize(cl.trunk.size() - 6);
  StentLayout layout;
  layout.trunk_rings = 20;
  layout.limb_rings = 0;
  layout.trunk_start = 6.0;
  const StentMesh mesh = build_initial_stent(cl, 4.0, 4.0, layout);
  const DistanceField field = edt(mask);
  SolverParams p = expansion_mode(SolverParams{}, max_inscribed_radius(mask));
  p.max_iterations = 100;
  const SimulationResult r = run(mesh, field, p);
  double sum = 0.0;
  for (int s = 0; s < r.mesh.grid.trunk_rings(); ++s) sum += ring_diameter(r.mesh, Segment::Trunk, s);
  return sum / r.mesh.grid.trunk_rings();
}

}  // namespace stentfit::testing
