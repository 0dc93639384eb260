// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>

#include <Eigen/Dense>

#include "support.hpp"

using namespace stentfit;
using namespace stentfit::testing;

namespace {

struct Check {
  bool ok = true;
  std::ostringstream why;

  void require(bool cond, const std::string& what) {
    if (!cond && ok) why << what;
    ok = ok && cond;
  }
};

int failures = 0;

void report(const char* name, const std::function<void(Check&, std::ostringstream&)>& body) {
  Check c;
  std::ostringstream info;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(c, info);
  } catch (const std::exception& e) {
    c.require(false, std::string("exception: ") + e.what());
  }
  const double secs = seconds_since(t0);
  std::printf("%s %-28s %6.2fs  %s%s\n", c.ok ? "PASS" : "FAIL", name, secs, info.str().c_str(),
              c.ok ? "" : ("  [" + c.why.str() + "]").c_str());
  std::fflush(stdout);
  if (!c.ok) ++failures;
}

PhantomSpec aaa_spec(double noise_sigma) {
  PhantomSpec spec;  // trunk 9, peak 25, neck 8, limbs 6
  spec.noise_sigma = noise_sigma;
  spec.noise_seed = 2024;
  MarkerPlacement landing;
  landing.arclength = 10.0;
  landing.angle_deg = 90.0;
  landing.disc_radius = 2.0;
  landing.label = "renal_left";
  MarkerPlacement above;
  above.disc_radius = 2.0;
  above.label = "above_stent";
  spec.markers = {landing, above};
  return spec;
}

struct AaaRun {
  PhantomTruth truth;
  PhantomFit fit;
};

AaaRun run_aaa(double noise_sigma) {
  PhantomSpec spec = aaa_spec(noise_sigma);
  const GridGeometry g = aaa_grid();
  // the second marker sits 30 mm above the proximal end of the lumen
  spec.markers[1].point = PhantomGeometry(spec, g).proximal_point() + Vec3{0.0, 0.0, 30.0};
  auto [vol, truth] = phantom_generate(spec, g);
  return {truth, fit_phantom(vol, truth, StentLayout{})};
}

void check_diameters(Check& c, std::ostringstream& info, const AaaRun& r, double factor) {
  const GridGeometry g = aaa_grid();
  const Diameters& d = r.fit.report.diameters;
  const Diameters& t = r.truth.diameters;
  for (auto [name, got, want] : {std::tuple{"a", d.a, t.a}, {"b", d.b, t.b}, {"c", d.c, t.c}, {"d", d.d, t.d},
                                 {"e", d.e, t.e}, {"f", d.f, t.f}}) {
    const double tol = factor * diameter_tolerance(want, g);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s=%.2f/%.2f ", name, got, want);
    info << buf;
    c.require(std::abs(got - want) <= tol, std::string(name) + " outside tolerance");
  }
}

void check_centerlines(Check& c, std::ostringstream& info, const CenterlineSet& cl, const PhantomTruth& truth,
                       double factor) {
  double worst_mean = 0.0, worst_h = 0.0;
  const std::pair<const Polyline*, const Polyline*> pairs[] = {{&cl.trunk, &truth.centerlines.trunk},
                                                               {&cl.left_limb, &truth.centerlines.left_limb},
                                                               {&cl.right_limb, &truth.centerlines.right_limb}};
  for (const auto& [got, want] : pairs) {
    const CurveDistance d = curve_distance(*got, *want);
    worst_mean = std::max(worst_mean, d.mean);
    worst_h = std::max(worst_h, d.hausdorff);
  }
  const double bif = distance(cl.bifurcation_point, truth.bifurcation_point);
  char buf[96];
  std::snprintf(buf, sizeof buf, "mean %.2f hausdorff %.2f bifurcation %.2f ", worst_mean, worst_h, bif);
  info << buf;
  c.require(worst_mean <= factor * 1.0, "mean distance");
  c.require(worst_h <= factor * 2.0, "hausdorff");
  c.require(bif <= factor * 3.0, "bifurcation");
}

}  // namespace

int main() {
  report("distance_transform_oracle", [](Check& c, std::ostringstream& info) {
    std::mt19937_64 rng(7);
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    for (int n = 0; n < 50; ++n) {
      const BinaryMask m = random_mask(cube_grid(16), 0.02 + 0.4 * (n % 5) / 4.0, rng);
      if (count_true(m) == 0) continue;
      const DistanceField fast = edt(m);
      const DistanceField slow = brute_force_edt(m);
      for (std::size_t i = 0; i < m.size(); ++i) worst = std::max(worst, std::abs(fast[i] - slow[i]));
    }
    const double secs = seconds_since(t0);
    info << "max error " << worst << " in " << secs << " s";
    c.require(worst <= 1e-9, "error");
    c.require(secs < 5.0, "runtime");
  });

  report("stiffness_correctness", [](Check& c, std::ostringstream& info) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> w(0.0, 2.0);
    double worst_rel = 0.0, worst_sym = 0.0, worst_null = 0.0, worst_eig = 0.0;
    for (auto [nt, T, L] : {std::tuple{8, 20, 0}, {8, 10, 5}, {10, 8, 6}, {8, 4, 8}}) {
      SolverParams p;
      p.w1 = w(rng);
      p.w2 = w(rng);
      p.w3 = w(rng);
      p.w4 = w(rng);
      p.w5 = w(rng);
      StentMesh mesh = random_mesh(nt, T, L, rng);
      const StiffnessSystem sys = assemble_stiffness(mesh, p);
      const Eigen::MatrixXd A(sys.matrix());
      const double norm = A.norm();
      for (int trial = 0; trial < 100; ++trial) {
        mesh = random_mesh(nt, T, L, rng);
        const double direct = direct_internal_energy(mesh.grid, mesh.grid.vertices, p);
        worst_rel = std::max(worst_rel, std::abs(sys.energy(mesh.grid.vertices) - direct) / direct);
      }
      worst_sym = std::max(worst_sym, (A - A.transpose()).cwiseAbs().maxCoeff() / norm);
      worst_null = std::max(worst_null, (A * Eigen::VectorXd::Ones(A.rows())).norm() / norm);
      const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(A);
      worst_eig = std::min(worst_eig, eig.eigenvalues().minCoeff() / norm);
    }
    info << "rel " << worst_rel << " sym " << worst_sym << " A1 " << worst_null << " min_eig " << worst_eig;
    c.require(worst_rel <= 1e-10, "energy");
    c.require(worst_sym <= 1e-12, "symmetry");
    c.require(worst_null <= 1e-9, "translation");
    c.require(worst_eig >= -1e-9, "definiteness");
  });

  report("balloon_fixed_point", [](Check& c, std::ostringstream& info) {
    StentLayout layout;
    layout.trunk_rings = 20;
    layout.limb_rings = 0;
    const StentMesh tube = build_initial_stent(straight_centerline(57.0), 4.0, 4.0, layout);
    SolverParams p;
    p.w1 = p.w2 = p.w4 = 0.0;
    p.R_trunk = 10.0;
    p.max_iterations = 500;
    p.convergence_eps = 1e-7;
    const SimulationResult r = run(tube, nullptr, p);
    double worst = 0.0;
    for (double radius : ring_radii(r.mesh)) worst = std::max(worst, std::abs(radius - 10.0));
    info << r.trace.size() << " iterations, worst radius error " << worst << "; ";
    c.require(r.converged, "not converged");
    c.require(worst <= 1e-3, "radius");

    std::mt19937_64 rng(5);
    SolverParams q;
    q.w_wall = q.w_balloon = 0.0;
    q.max_iterations = 60;
    q.convergence_eps = 0.0;
    const StentMesh noisy = random_mesh(12, 26, 13, rng);
    const SimulationResult e = run(noisy, nullptr, q);
    double prev = assemble_stiffness(noisy, q).energy(noisy.grid.vertices);
    bool monotone = true;
    for (const auto& rec : e.trace) {
      monotone = monotone && rec.e_int <= prev * (1.0 + 1e-12);
      prev = rec.e_int;
    }
    info << "E_int " << e.trace.front().e_int << " -> " << e.trace.back().e_int;
    c.require(monotone, "E_int increased");
  });

  report("cylinder_expansion", [](Check& c, std::ostringstream& info) {
    const auto t0 = std::chrono::steady_clock::now();
    const double d = cylinder_expansion_diameter();
    const double secs = seconds_since(t0);
    info << "mean diameter " << d << " mm";
    c.require(std::abs(d - 16.0) <= 0.5, "diameter");
    c.require(secs < 60.0, "runtime");
  });

  const AaaRun clean = run_aaa(0.0);

  report("aaa_measurements", [&](Check& c, std::ostringstream& info) { check_diameters(c, info, clean, 1.0); });

  report("centerline_accuracy", [&](Check& c, std::ostringstream& info) {
    check_centerlines(c, info, clean.fit.centerlines, clean.truth, 1.0);
    const GridGeometry g = cube_grid(48);
    const BinaryMask tube = region_grow(cylinder_volume(g, 6.0, 24.0, 24.0, 4.0, 44.0), {24.0, 24.0, 24.0}, {50.0, 150.0});
    bool raised = false;
    try {
      extract_centerlines(thin(tube), tube);
    } catch (const Error& e) {
      raised = e.code() == ErrorCode::NoBifurcation;
    }
    info << "straight tube NoBifurcation " << (raised ? "yes" : "no");
    c.require(raised, "NoBifurcation not raised");
  });

  report("performance_624_vertices", [](Check& c, std::ostringstream& info) {
    const auto [vol, truth] = phantom_generate(PhantomSpec{}, cube_grid(128));
    const BinaryMask mask = largest_component_cleanup(region_grow(vol, truth.centerlines.trunk[10], {50.0, 150.0}));
    const CenterlineSet cl = extract_centerlines(thin(mask), mask);
    const DistanceField field = edt(mask);
    const StentMesh mesh = build_initial_stent(cl, 4.0, 3.0, StentLayout{});
    const auto t0 = std::chrono::steady_clock::now();
    const StiffnessSystem sys = assemble_stiffness(mesh, SolverParams{});
    const double factor_s = seconds_since(t0);
    SolverParams p;
    p.max_iterations = 50;
    p.convergence_eps = 0.0;
    const auto t1 = std::chrono::steady_clock::now();
    const SimulationResult r = run(mesh, field, p, &sys);
    const double per_it = seconds_since(t1) / static_cast<double>(r.trace.size());
    info << mesh.grid.vertex_count() << " vertices, factorization " << factor_s << " s, iteration " << per_it << " s";
    c.require(mesh.grid.vertex_count() == 624, "vertex count");
    c.require(factor_s < 5.0, "factorization");
    c.require(per_it < 0.1, "iteration");
  });

  report("ostium_coverage", [&](Check& c, std::ostringstream& info) {
    const auto& covered = clean.fit.report.covered_ostia;
    for (const auto& l : covered) info << l << " ";
    c.require(covered == std::vector<std::string>{"renal_left"}, "covered set");
  });

  report("noisy_phantom", [&](Check& c, std::ostringstream& info) {
    const AaaRun noisy = run_aaa(10.0);
    std::size_t differ = 0;
    for (std::size_t i = 0; i < noisy.fit.mask.size(); ++i) differ += noisy.fit.mask[i] != clean.fit.mask[i];
    info << "mask differs from noiseless in " << differ << " voxels; ";
    check_diameters(c, info, noisy, 2.0);
    check_centerlines(c, info, noisy.fit.centerlines, noisy.truth, 2.0);
  });

  std::printf("%d failed\n", failures);
  return failures == 0 ? 0 : 1;
}
