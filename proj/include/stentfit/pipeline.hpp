#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "stentfit/acm_solver.hpp"
#include "stentfit/distance_field.hpp"
#include "stentfit/json_io.hpp"
#include "stentfit/measurement.hpp"
#include "stentfit/segmentation.hpp"
#include "stentfit/skeleton.hpp"
#include "stentfit/stent_model.hpp"
#include "stentfit/volume.hpp"

namespace stentfit {

struct StentConfig {
  StentLayout layout;
  double r0_trunk = 4.0;
  double r0_limb = 3.0;
};

struct ExpansionConfig {
  bool enabled = true;
  int max_iterations = 100;
  std::optional<double> radius_hint;  // default: largest inscribed radius of the mask
};

struct PipelineConfig {
  std::filesystem::path volume;
  std::filesystem::path output_dir = "out";
  Vec3 seed;
  IntensityWindow window{50.0, 150.0};
  bool cleanup = true;
  CenterlineOptions skeleton;
  StentConfig stent;
  SolverParams solver;
  ExpansionConfig expansion;
  std::optional<Landmarks> landmarks;
  std::optional<LandmarkPoints> landmark_points;
  std::vector<OstiumMarker> markers;
  std::optional<double> coverage_tolerance;  // default: voxel diagonal
  bool export_lumen_mesh = true;

  /// Every violated invariant, in a fixed order.
  std::vector<Error> violations() const {
    std::vector<Error> out;
    auto check = [&out](auto&& fn) {
      try {
        fn();
      } catch (const Error& e) {
        out.push_back(e);
      }
    };
    check([&] {
      if (volume.empty()) throw Error(ErrorCode::InvalidConfig, "volume path missing");
    });
    check([&] {
      if (!is_finite(seed)) throw Error(ErrorCode::InvalidConfig, "seed must be finite");
    });
    check([&] {
      if (!(window.lower <= window.upper)) throw Error(ErrorCode::InvalidConfig, "window lower > upper");
    });
    check([&] {
      if (skeleton.prune_length < 0) throw Error(ErrorCode::InvalidConfig, "prune_length must be >= 0");
      if (!(skeleton.sample_step > 0.0)) throw Error(ErrorCode::InvalidConfig, "sample_step must be > 0");
    });
    check([&] {
      if (!(stent.r0_trunk > 0.0)) throw Error(ErrorCode::RadiusNonPositive, "stent r0_trunk must be > 0");
    });
    check([&] {
      if (stent.layout.limb_rings > 0 && !(stent.r0_limb > 0.0))
        throw Error(ErrorCode::RadiusNonPositive, "stent r0_limb must be > 0");
    });
    check([&] { BifurcatedGrid(stent.layout.n_t, stent.layout.trunk_rings, stent.layout.limb_rings); });
    check([&] {
      if (!(stent.layout.trunk_start >= 0.0)) throw Error(ErrorCode::InvalidConfig, "trunk_start must be >= 0");
    });
    check([&] { solver.validate(); });
    check([&] {
      if (expansion.max_iterations < 0) throw Error(ErrorCode::InvalidConfig, "expansion max_iterations must be >= 0");
      if (expansion.radius_hint && !(*expansion.radius_hint > 0.0))
        throw Error(ErrorCode::RadiusNonPositive, "expansion radius_hint must be > 0");
    });
    check([&] {
      if (!expansion.enabled) return;
      if (stent.layout.limb_rings == 0) throw Error(ErrorCode::InvalidConfig, "measurement needs a bifurcated stent");
      if (!landmarks && !landmark_points) throw Error(ErrorCode::InvalidConfig, "measurement needs landmarks");
      if (landmarks && landmark_points)
        throw Error(ErrorCode::InvalidConfig, "give either landmarks or landmark_points, not both");
    });
    check([&] {
      for (const auto& m : markers)
        if (!(m.disc_radius > 0.0)) throw Error(ErrorCode::RadiusNonPositive, "marker disc_radius must be > 0");
    });
    check([&] {
      if (coverage_tolerance && !(*coverage_tolerance >= 0.0))
        throw Error(ErrorCode::InvalidConfig, "coverage_tolerance must be >= 0");
    });
    return out;
  }

  void validate() const {
    const auto v = violations();
    if (!v.empty()) throw v.front();
  }
};

/// Parses a pipeline document. Relative paths resolve against `base_dir`.
inline PipelineConfig pipeline_config_from_json(const Json& j, const std::filesystem::path& base_dir = {}) {
  detail::ObjectReader r(j, "config");
  PipelineConfig c;
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  };
  std::string path;
  if (r.get("volume", path)) c.volume = resolve(path);
  if (r.get("output_dir", path)) c.output_dir = resolve(path);
  else c.output_dir = resolve("out");
  r.require("seed", c.seed);
  if (const Json* w = r.sub("window")) {
    detail::ObjectReader wr(*w, "config.window");
    wr.get("lower", c.window.lower);
    wr.get("upper", c.window.upper);
    wr.finish();
  }
  r.get("cleanup", c.cleanup);
  if (const Json* s = r.sub("skeleton")) {
    detail::ObjectReader sr(*s, "config.skeleton");
    sr.get("prune_length", c.skeleton.prune_length);
    sr.get("sample_step", c.skeleton.sample_step);
    sr.get("junction_fit_length", c.skeleton.junction_fit_length);
    sr.finish();
  }
  if (const Json* s = r.sub("stent")) {
    detail::ObjectReader sr(*s, "config.stent");
    sr.get("n_t", c.stent.layout.n_t);
    sr.get("trunk_rings", c.stent.layout.trunk_rings);
    sr.get("limb_rings", c.stent.layout.limb_rings);
    sr.get("trunk_start", c.stent.layout.trunk_start);
    sr.get("r0_trunk", c.stent.r0_trunk);
    sr.get("r0_limb", c.stent.r0_limb);
    sr.finish();
  }
  if (const Json* s = r.sub("solver")) c.solver = solver_params_from_json(*s, c.solver, "config.solver");
  if (const Json* e = r.sub("expansion")) {
    detail::ObjectReader er(*e, "config.expansion");
    er.get("enabled", c.expansion.enabled);
    er.get("max_iterations", c.expansion.max_iterations);
    double hint = 0.0;
    if (er.get("radius_hint", hint)) c.expansion.radius_hint = hint;
    er.finish();
  }
  if (const Json* lm = r.sub("landmarks")) c.landmarks = landmarks_from_json(*lm, "config.landmarks");
  if (const Json* lp = r.sub("landmark_points")) c.landmark_points = landmark_points_from_json(*lp, "config.landmark_points");
  if (const Json* ms = r.sub("markers")) c.markers = markers_from_json(*ms, "config.markers");
  double tol = 0.0;
  if (r.get("coverage_tolerance", tol)) c.coverage_tolerance = tol;
  r.get("export_lumen_mesh", c.export_lumen_mesh);
  r.finish();
  return c;
}

inline PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  return pipeline_config_from_json(read_json_file(path), path.parent_path());
}

inline Json to_json(const PipelineConfig& c) {
  Json j = {{"volume", c.volume.string()},
            {"output_dir", c.output_dir.string()},
            {"seed", detail::vec_json(c.seed)},
            {"window", {{"lower", c.window.lower}, {"upper", c.window.upper}}},
            {"cleanup", c.cleanup},
            {"skeleton",
             {{"prune_length", c.skeleton.prune_length},
              {"sample_step", c.skeleton.sample_step},
              {"junction_fit_length", c.skeleton.junction_fit_length}}},
            {"stent",
             {{"n_t", c.stent.layout.n_t},
              {"trunk_rings", c.stent.layout.trunk_rings},
              {"limb_rings", c.stent.layout.limb_rings},
              {"trunk_start", c.stent.layout.trunk_start},
              {"r0_trunk", c.stent.r0_trunk},
              {"r0_limb", c.stent.r0_limb}}},
            {"solver", to_json(c.solver)},
            {"expansion", {{"enabled", c.expansion.enabled}, {"max_iterations", c.expansion.max_iterations}}},
            {"export_lumen_mesh", c.export_lumen_mesh}};
  if (c.expansion.radius_hint) j["expansion"]["radius_hint"] = *c.expansion.radius_hint;
  if (c.landmarks) j["landmarks"] = to_json(*c.landmarks);
  if (c.landmark_points) j["landmark_points"] = to_json(*c.landmark_points);
  Json ms = Json::array();
  for (const auto& m : c.markers) ms.push_back(to_json(m));
  j["markers"] = ms;
  if (c.coverage_tolerance) j["coverage_tolerance"] = *c.coverage_tolerance;
  return j;
}

/// Wavefront OBJ of the mask's voxel-face boundary, for context rendering.
inline std::string mask_surface_obj(const BinaryMask& mask) {
  const GridGeometry& g = mask.geometry();
  std::map<std::tuple<int, int, int>, std::size_t> corner_id;
  std::vector<std::tuple<int, int, int>> corners;
  std::string faces;
  auto corner = [&](int i, int j, int k) {
    const auto key = std::make_tuple(i, j, k);
    auto [it, inserted] = corner_id.emplace(key, corners.size() + 1);
    if (inserted) corners.push_back(key);
    return it->second;
  };
  // corner offsets per face, counter-clockwise seen from outside
  static const std::array<std::array<std::array<int, 3>, 4>, 6> kFace{{
      {{{1, 0, 0}, {1, 1, 0}, {1, 1, 1}, {1, 0, 1}}},
      {{{0, 0, 0}, {0, 0, 1}, {0, 1, 1}, {0, 1, 0}}},
      {{{0, 1, 0}, {0, 1, 1}, {1, 1, 1}, {1, 1, 0}}},
      {{{0, 0, 0}, {1, 0, 0}, {1, 0, 1}, {0, 0, 1}}},
      {{{0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}}},
      {{{0, 0, 0}, {0, 1, 0}, {1, 1, 0}, {1, 0, 0}}},
  }};
  static const std::array<Index3, 6> kNormal{{{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}}};
  for (std::size_t idx = 0; idx < mask.size(); ++idx) {
    if (!mask[idx]) continue;
    const Index3 v = g.unravel(idx);
    for (int f = 0; f < 6; ++f) {
      const Index3 n{v.i + kNormal[f].i, v.j + kNormal[f].j, v.k + kNormal[f].k};
      if (g.contains(n) && mask.at(n)) continue;
      faces += "f";
      for (const auto& c : kFace[f]) faces += " " + std::to_string(corner(v.i + c[0], v.j + c[1], v.k + c[2]));
      faces += "\n";
    }
  }
  std::string out = "# stentfit lumen surface\n";
  for (const auto& [i, j, k] : corners) {
    const Vec3 p = g.origin + Vec3{i * g.spacing.x, j * g.spacing.y, k * g.spacing.z};
    out += "v " + format_double(p.x) + " " + format_double(p.y) + " " + format_double(p.z) + "\n";
  }
  return out + "g lumen\n" + faces;
}

/// File names written into the output directory.
namespace artifact {
inline constexpr const char* kMask = "mask.svh";
inline constexpr const char* kCenterlines = "centerlines.json";
inline constexpr const char* kMeshInitial = "mesh_initial.obj";
inline constexpr const char* kMeshFinal = "mesh_final.obj";
inline constexpr const char* kMeshFinalJson = "mesh_final.json";
inline constexpr const char* kTrace = "trace.csv";
inline constexpr const char* kMeshExpanded = "mesh_expanded.obj";
inline constexpr const char* kMeshExpandedJson = "mesh_expanded.json";
inline constexpr const char* kTraceExpansion = "trace_expansion.csv";
inline constexpr const char* kReport = "report.json";
inline constexpr const char* kLumen = "lumen.obj";
}  // namespace artifact

enum class Stage { Segmenting, Skeletonizing, Simulating, Measuring };

inline const char* stage_name(Stage s) {
  switch (s) {
    case Stage::Segmenting: return "segmenting";
    case Stage::Skeletonizing: return "skeletonizing";
    case Stage::Simulating: return "simulating";
    case Stage::Measuring: return "measuring";
  }
  return "?";
}

struct PipelineResult {
  CenterlineSet centerlines;
  StentMesh initial;
  SimulationResult simulation;
  std::optional<SimulationResult> expansion;
  std::optional<MeasurementReport> report;
  std::vector<std::string> covered_ostia;
};

/// Report document: diameters and covered ostia from the expanded mesh, or
/// only the ostia covered by the simulated stent when expansion is off.
inline Json report_json(const PipelineResult& r) {
  Json j;
  if (r.report) j = to_json(*r.report);
  else j = {{"units", "mm"}};
  j["covered_ostia"] = r.covered_ostia;
  return j;
}

/// segment -> thin -> centerlines -> initial stent -> simulate -> (expand ->
/// measure), writing every artifact into cfg.output_dir.
inline PipelineResult run_pipeline(const PipelineConfig& cfg, const std::function<void(Stage)>& progress = {}) {
  cfg.validate();
  auto stage = [&](Stage s) {
    if (progress) progress(s);
  };
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + cfg.output_dir.string());
  const fs::path out = cfg.output_dir;

  stage(Stage::Segmenting);
  const VoxelVolume vol = load_volume(cfg.volume);
  BinaryMask mask = region_grow(vol, cfg.seed, cfg.window);
  if (cfg.cleanup) mask = largest_component_cleanup(mask);
  save_volume(mask, out / artifact::kMask);
  if (cfg.export_lumen_mesh) detail::write_file(out / artifact::kLumen, mask_surface_obj(mask));

  stage(Stage::Skeletonizing);
  PipelineResult res;
  const VoxelSkeleton skel = thin(mask);
  res.centerlines = cfg.stent.layout.limb_rings > 0 ? extract_centerlines(skel, mask, cfg.skeleton)
                                                    : extract_tube_centerline(skel, mask, cfg.skeleton);
  write_json_file(out / artifact::kCenterlines, to_json(res.centerlines));

  stage(Stage::Simulating);
  const DistanceField field = edt(mask);
  res.initial = build_initial_stent(res.centerlines, cfg.stent.r0_trunk, cfg.stent.r0_limb, cfg.stent.layout);
  export_mesh(res.initial, out / artifact::kMeshInitial);
  res.simulation = run(res.initial, field, cfg.solver);
  export_mesh(res.simulation.mesh, out / artifact::kMeshFinal);
  write_json_file(out / artifact::kMeshFinalJson, to_json(res.simulation.mesh));
  detail::write_file(out / artifact::kTrace, trace_to_csv(res.simulation.trace));
  const double tol = cfg.coverage_tolerance ? *cfg.coverage_tolerance : mask.geometry().voxel_diagonal();

  if (cfg.expansion.enabled) {
    stage(Stage::Measuring);
    const double hint = cfg.expansion.radius_hint ? *cfg.expansion.radius_hint : max_inscribed_radius(mask);
    SolverParams p = expansion_mode(cfg.solver, hint);
    p.max_iterations = cfg.expansion.max_iterations;
    res.expansion = run(res.initial, field, p);
    export_mesh(res.expansion->mesh, out / artifact::kMeshExpanded);
    write_json_file(out / artifact::kMeshExpandedJson, to_json(res.expansion->mesh));
    detail::write_file(out / artifact::kTraceExpansion, trace_to_csv(res.expansion->trace));
    const Landmarks lm = cfg.landmarks ? *cfg.landmarks : cfg.landmark_points->project(res.centerlines.trunk);
    res.report = measure(res.expansion->mesh, res.centerlines, lm);
  }
  res.covered_ostia = ostium_coverage(res.expansion ? res.expansion->mesh : res.simulation.mesh, cfg.markers, tol);
  if (res.report) res.report->covered_ostia = res.covered_ostia;
  write_json_file(out / artifact::kReport, report_json(res));
  return res;
}

}  // namespace stentfit
