// stentfit command-line front end.
//
// Exit status: 0 on success, 1 on a domain error (message on stderr),
// 2 on a usage error.

#include <signal.h>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "stentfit/json_io.hpp"
#include "stentfit/phantom.hpp"
#include "stentfit/pipeline.hpp"
#include "stentfit/service.hpp"

namespace fs = std::filesystem;
using namespace stentfit;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitDomain = 1;
constexpr int kExitUsage = 2;

fs::path with_suffix(const fs::path& p, const char* ext) {
  return p.extension() == ext ? p : fs::path(p.string() + ext);
}

Vec3 vec_of(const std::vector<double>& v) { return {v[0], v[1], v[2]}; }

/// Parameter defaults come from an optional pipeline document; stage commands
/// only use the sections they need, so its volume and seed may be placeholders.
PipelineConfig config_or_default(const std::string& path) {
  if (path.empty()) return PipelineConfig{};
  return load_pipeline_config(path);
}

/// Landmarks from a landmark document or from the landmark section of a
/// pipeline document.
std::optional<Landmarks> landmarks_from_file(const fs::path& path, const CenterlineSet& cl) {
  Json j = read_json_file(path);
  if (j.is_object() && j.contains("landmark_points")) j = j["landmark_points"];
  else if (j.is_object() && j.contains("landmarks")) j = j["landmarks"];
  if (j.is_object() && j.contains("proximal_site") && j["proximal_site"].is_array())
    return landmark_points_from_json(j, path.string()).project(cl.trunk);
  return landmarks_from_json(j, path.string());
}

int run_phantom(const std::string& spec_path, const std::string& out, std::string truth) {
  const PhantomDocument doc = phantom_from_json(read_json_file(spec_path));
  const auto [vol, t] = phantom_generate(doc.spec, doc.grid);
  const fs::path header = with_suffix(out, ".svh");
  save_volume(vol, header);
  if (truth.empty()) truth = fs::path(header).replace_extension(".truth.json").string();
  write_json_file(truth, to_json(t));
  std::cout << "wrote " << header.string() << " and " << truth << "\n";
  return kExitOk;
}

int run_segment(const std::string& volume, const std::vector<double>& seed, double lower, double upper, bool no_cleanup,
                const std::string& out) {
  const VoxelVolume vol = load_volume(volume);
  BinaryMask mask = region_grow(vol, vec_of(seed), {lower, upper});
  if (!no_cleanup) mask = largest_component_cleanup(mask);
  save_volume(mask, with_suffix(out, ".svh"));
  std::cout << count_true(mask) << " voxels\n";
  return kExitOk;
}

int run_skeleton(const std::string& mask_path, const std::string& out, const std::string& config, bool tube) {
  const PipelineConfig cfg = config_or_default(config);
  const BinaryMask mask = load_mask(mask_path);
  const VoxelSkeleton skel = thin(mask);
  const CenterlineSet cl = tube ? extract_tube_centerline(skel, mask, cfg.skeleton)
                                : extract_centerlines(skel, mask, cfg.skeleton);
  write_json_file(out, to_json(cl));
  return kExitOk;
}

int run_simulate(const std::string& mask_path, const std::string& cl_path, const std::string& config,
                 const std::string& out_dir, bool expand) {
  const PipelineConfig cfg = config_or_default(config);
  cfg.solver.validate();
  const BinaryMask mask = load_mask(mask_path);
  const CenterlineSet cl = centerlines_from_json(read_json_file(cl_path));
  const DistanceField field = edt(mask);
  const fs::path out(out_dir);
  fs::create_directories(out);
  const StentMesh initial = build_initial_stent(cl, cfg.stent.r0_trunk, cfg.stent.r0_limb, cfg.stent.layout);
  export_mesh(initial, out / artifact::kMeshInitial);
  const SimulationResult sim = run(initial, field, cfg.solver);
  export_mesh(sim.mesh, out / artifact::kMeshFinal);
  write_json_file(out / artifact::kMeshFinalJson, to_json(sim.mesh));
  detail::write_file(out / artifact::kTrace, trace_to_csv(sim.trace));
  if (expand) {
    const double hint = cfg.expansion.radius_hint ? *cfg.expansion.radius_hint : max_inscribed_radius(mask);
    SolverParams p = expansion_mode(cfg.solver, hint);
    p.max_iterations = cfg.expansion.max_iterations;
    const SimulationResult ex = run(initial, field, p);
    export_mesh(ex.mesh, out / artifact::kMeshExpanded);
    write_json_file(out / artifact::kMeshExpandedJson, to_json(ex.mesh));
    detail::write_file(out / artifact::kTraceExpansion, trace_to_csv(ex.trace));
  }
  std::cout << sim.trace.size() << " iterations, converged: " << (sim.converged ? "yes" : "no") << "\n";
  return kExitOk;
}

int run_measure(const std::string& mesh_path, const std::string& cl_path, const std::string& lm_path,
                const std::string& markers_path, double tolerance, const std::string& out) {
  const StentMesh mesh = stent_mesh_from_json(read_json_file(mesh_path));
  const CenterlineSet cl = centerlines_from_json(read_json_file(cl_path));
  MeasurementReport rep = measure(mesh, cl, *landmarks_from_file(lm_path, cl));
  if (!markers_path.empty()) {
    Json m = read_json_file(markers_path);
    if (m.is_object() && m.contains("markers")) m = m["markers"];
    rep.covered_ostia = ostium_coverage(mesh, markers_from_json(m), tolerance);
  }
  write_json_file(out, to_json(rep));
  return kExitOk;
}

int run_pipeline_cmd(const std::string& config) {
  const PipelineConfig cfg = load_pipeline_config(config);
  const PipelineResult res = run_pipeline(cfg, [](Stage s) { std::cerr << stage_name(s) << "\n"; });
  std::cout << report_json(res).dump(2) << "\n";
  return kExitOk;
}

int run_serve(const std::string& config, int port, const std::string& host, std::string workdir) {
  const fs::path cfg_path(config);
  const Json base = read_json_file(cfg_path);
  pipeline_config_from_json(base, cfg_path.parent_path());
  JobManager jobs(base, cfg_path.parent_path(), workdir.empty() ? default_workdir() : fs::path(workdir));

  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  Service service(jobs);
  const int bound = service.bind(host, port);
  service.start_background();
  std::cout << "listening on http://" << host << ":" << bound << std::endl;
  int sig = 0;
  sigwait(&set, &sig);
  service.stop();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stentfit: bifurcated stent graft simulation and AAA measurement"};
  app.require_subcommand(1);

  std::string spec, out, truth;
  auto* phantom = app.add_subcommand("phantom", "Generate a synthetic aorto-iliac phantom volume and its truth document");
  phantom->add_option("--spec", spec, "Phantom document (JSON)")->required();
  phantom->add_option("--out", out, "Output volume path (.svh added when missing)")->required();
  phantom->add_option("--truth", truth, "Truth document path (default <out>.truth.json)");

  std::string volume, mask_out;
  std::vector<double> seed;
  double lower = 50.0, upper = 150.0;
  bool no_cleanup = false;
  auto* segment = app.add_subcommand("segment", "Region-grow the lumen from a seed point");
  segment->add_option("--volume", volume, "Input volume (.svh)")->required();
  segment->add_option("--seed", seed, "Seed point in mm: x y z")->required()->expected(3);
  segment->add_option("--lower", lower, "Lower intensity bound");
  segment->add_option("--upper", upper, "Upper intensity bound");
  segment->add_flag("--no-cleanup", no_cleanup, "Keep all 6-connected components");
  segment->add_option("--out", mask_out, "Output mask (.svh)")->required();

  std::string mask_in, cl_out, config;
  bool tube = false;
  auto* skeleton = app.add_subcommand("skeleton", "Thin a mask and extract trunk and limb centerlines");
  skeleton->add_option("--mask", mask_in, "Lumen mask (.svh)")->required();
  skeleton->add_option("--out", cl_out, "Output centerlines (JSON)")->required();
  skeleton->add_option("--config", config, "Pipeline document providing skeleton parameters");
  skeleton->add_flag("--tube", tube, "Extract a single unbranched centerline");

  std::string sim_mask, sim_cl, sim_config, sim_out;
  bool expand = false;
  auto* simulate = app.add_subcommand("simulate", "Build the initial stent and fit it to the lumen");
  simulate->add_option("--mask", sim_mask, "Lumen mask (.svh)")->required();
  simulate->add_option("--centerlines", sim_cl, "Centerlines (JSON)")->required();
  simulate->add_option("--config", sim_config, "Pipeline document providing stent and solver parameters");
  simulate->add_option("--out", sim_out, "Output directory")->required();
  simulate->add_flag("--expand", expand, "Also run the measurement expansion");

  std::string m_mesh, m_cl, m_lm, m_markers, m_out;
  double m_tol = 1.0;
  auto* meas = app.add_subcommand("measure", "Measure diameters a-f on an expanded mesh");
  meas->add_option("--mesh", m_mesh, "Expanded mesh (JSON)")->required();
  meas->add_option("--centerlines", m_cl, "Centerlines (JSON)")->required();
  meas->add_option("--landmarks", m_lm, "Landmarks as arc lengths or points, or a pipeline document")->required();
  meas->add_option("--markers", m_markers, "Ostium markers (JSON array or pipeline document)");
  meas->add_option("--tolerance", m_tol, "Coverage tolerance in mm");
  meas->add_option("--out", m_out, "Output report (JSON)")->required();

  std::string p_config;
  auto* pipeline = app.add_subcommand("pipeline", "Run segment, skeleton, simulate and measure from one document");
  pipeline->add_option("--config", p_config, "Pipeline document (JSON)")->required();

  std::string s_config, s_host = "127.0.0.1", s_workdir;
  int s_port = 8080;
  auto* serve = app.add_subcommand("serve", "Serve the HTTP job API");
  serve->add_option("--config", s_config, "Base pipeline document (JSON)")->required();
  serve->add_option("--port", s_port, "TCP port (0 picks a free one)")->check(CLI::Range(0, 65535));
  serve->add_option("--host", s_host, "Bind address");
  serve->add_option("--workdir", s_workdir, "Job directory root (default $STENTFIT_WORKDIR or ./stentfit-work)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e, std::cerr, std::cerr);
    std::cerr << app.help();
    return kExitUsage;
  }

  try {
    if (*phantom) return run_phantom(spec, out, truth);
    if (*segment) return run_segment(volume, seed, lower, upper, no_cleanup, mask_out);
    if (*skeleton) return run_skeleton(mask_in, cl_out, config, tube);
    if (*simulate) return run_simulate(sim_mask, sim_cl, sim_config, sim_out, expand);
    if (*meas) return run_measure(m_mesh, m_cl, m_lm, m_markers, m_tol, m_out);
    if (*pipeline) return run_pipeline_cmd(p_config);
    if (*serve) return run_serve(s_config, s_port, s_host, s_workdir);
  } catch (const Error& e) {
    std::cerr << "stentfit: " << e.what() << "\n";
    return kExitDomain;
  } catch (const std::exception& e) {
    std::cerr << "stentfit: " << e.what() << "\n";
    return kExitDomain;
  }
  return kExitUsage;
}
