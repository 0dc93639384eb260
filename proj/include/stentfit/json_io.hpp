#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <set>
#include <string>
#include <vector>

#include "stentfit/acm_solver.hpp"
#include "stentfit/anatomy.hpp"
#include "stentfit/centerline.hpp"
#include "stentfit/error.hpp"
#include "stentfit/measurement.hpp"
#include "stentfit/phantom.hpp"
#include "stentfit/stent_model.hpp"
#include "stentfit/volume.hpp"

namespace stentfit {

using Json = nlohmann::json;

namespace detail {

inline Json vec_json(const Vec3& v) { return Json::array({v.x, v.y, v.z}); }

inline Json polyline_json(const Polyline& line) {
  Json out = Json::array();
  for (const auto& p : line) out.push_back(vec_json(p));
  return out;
}

/// Reads one JSON object, rejecting keys that were never asked for.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) fail("expected an object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  template <class T>
  bool get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return false;
    convert(*it, out, key);
    return true;
  }

  template <class T>
  void require(const char* key, T& out) {
    if (!get(key, out)) fail(std::string("missing key '") + key + "'");
  }

  const Json* sub(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() || it->is_null() ? nullptr : &*it;
  }

  std::string path(const char* key) const { return where_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) fail("unknown key '" + k + "'");
  }

  [[noreturn]] void fail(const std::string& what) const { throw Error(ErrorCode::InvalidConfig, where_ + ": " + what); }

 private:
  void convert(const Json& v, double& out, const char* key) const {
    if (!v.is_number()) fail(std::string("'") + key + "' must be a number");
    out = v.get<double>();
  }
  void convert(const Json& v, int& out, const char* key) const {
    if (!v.is_number_integer()) fail(std::string("'") + key + "' must be an integer");
    out = v.get<int>();
  }
  void convert(const Json& v, std::uint64_t& out, const char* key) const {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
      fail(std::string("'") + key + "' must be a non-negative integer");
    out = v.get<std::uint64_t>();
  }
  void convert(const Json& v, bool& out, const char* key) const {
    if (!v.is_boolean()) fail(std::string("'") + key + "' must be a boolean");
    out = v.get<bool>();
  }
  void convert(const Json& v, std::string& out, const char* key) const {
    if (!v.is_string()) fail(std::string("'") + key + "' must be a string");
    out = v.get<std::string>();
  }
  void convert(const Json& v, Vec3& out, const char* key) const {
    if (!v.is_array() || v.size() != 3 || !v[0].is_number() || !v[1].is_number() || !v[2].is_number())
      fail(std::string("'") + key + "' must be an array of three numbers");
    out = {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
  }
  void convert(const Json& v, std::array<int, 3>& out, const char* key) const {
    if (!v.is_array() || v.size() != 3) fail(std::string("'") + key + "' must be an array of three integers");
    for (int a = 0; a < 3; ++a) {
      if (!v[a].is_number_integer()) fail(std::string("'") + key + "' must be an array of three integers");
      out[a] = v[a].get<int>();
    }
  }
  void convert(const Json& v, Polyline& out, const char* key) const {
    if (!v.is_array()) fail(std::string("'") + key + "' must be an array of points");
    out.clear();
    for (const auto& p : v) {
      Vec3 q;
      convert(p, q, key);
      out.push_back(q);
    }
  }

  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

inline Json parse_json_text(const std::string& text, const std::string& where) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::InvalidConfig, where + ": " + e.what());
  }
}

}  // namespace detail

inline Json read_json_file(const std::filesystem::path& path) {
  return detail::parse_json_text(detail::read_file(path), path.string());
}

inline void write_json_file(const std::filesystem::path& path, const Json& j) {
  detail::write_file(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Anatomy

inline Json to_json(const Landmarks& lm) {
  return {{"proximal_site", lm.proximal_site},
          {"aneurysm_region", {lm.aneurysm_start, lm.aneurysm_end}},
          {"distal_neck_region", {lm.neck_start, lm.neck_end}}};
}

inline Landmarks landmarks_from_json(const Json& j, const std::string& where = "landmarks") {
  detail::ObjectReader r(j, where);
  Landmarks lm;
  r.require("proximal_site", lm.proximal_site);
  auto pair = [&](const char* key, double& lo, double& hi) {
    const Json* v = r.sub(key);
    if (v == nullptr || !v->is_array() || v->size() != 2 || !(*v)[0].is_number() || !(*v)[1].is_number())
      r.fail(std::string("'") + key + "' must be [start, end]");
    lo = (*v)[0].get<double>();
    hi = (*v)[1].get<double>();
  };
  pair("aneurysm_region", lm.aneurysm_start, lm.aneurysm_end);
  pair("distal_neck_region", lm.neck_start, lm.neck_end);
  r.finish();
  return lm;
}

/// Landmarks given as points in mm; they are projected onto a trunk
/// centerline to obtain arc lengths.
struct LandmarkPoints {
  Vec3 proximal_site, aneurysm_start, aneurysm_end, neck_start, neck_end;

  Landmarks project(const Polyline& trunk) const {
    return {project_arclength(trunk, proximal_site), project_arclength(trunk, aneurysm_start),
            project_arclength(trunk, aneurysm_end), project_arclength(trunk, neck_start),
            project_arclength(trunk, neck_end)};
  }
};

inline Json to_json(const LandmarkPoints& p) {
  return {{"proximal_site", detail::vec_json(p.proximal_site)},
          {"aneurysm_region", {detail::vec_json(p.aneurysm_start), detail::vec_json(p.aneurysm_end)}},
          {"distal_neck_region", {detail::vec_json(p.neck_start), detail::vec_json(p.neck_end)}}};
}

inline LandmarkPoints landmark_points_from_json(const Json& j, const std::string& where = "landmark_points") {
  detail::ObjectReader r(j, where);
  LandmarkPoints p;
  r.require("proximal_site", p.proximal_site);
  Polyline pair;
  r.require("aneurysm_region", pair);
  if (pair.size() != 2) r.fail("'aneurysm_region' must hold two points");
  p.aneurysm_start = pair[0];
  p.aneurysm_end = pair[1];
  r.require("distal_neck_region", pair);
  if (pair.size() != 2) r.fail("'distal_neck_region' must hold two points");
  p.neck_start = pair[0];
  p.neck_end = pair[1];
  r.finish();
  return p;
}

inline Json to_json(const Diameters& d) {
  return {{"a", d.a}, {"b", d.b}, {"c", d.c}, {"d", d.d}, {"e", d.e}, {"f", d.f}};
}

inline Json to_json(const OstiumMarker& m) {
  return {{"point", detail::vec_json(m.point)}, {"disc_radius", m.disc_radius}, {"label", m.label}};
}

inline OstiumMarker marker_from_json(const Json& j, const std::string& where = "marker") {
  detail::ObjectReader r(j, where);
  OstiumMarker m;
  r.require("point", m.point);
  r.require("disc_radius", m.disc_radius);
  r.require("label", m.label);
  r.finish();
  return m;
}

inline std::vector<OstiumMarker> markers_from_json(const Json& j, const std::string& where = "markers") {
  if (!j.is_array()) throw Error(ErrorCode::InvalidConfig, where + ": expected an array");
  std::vector<OstiumMarker> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(marker_from_json(j[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

// ---------------------------------------------------------------------------
// Phantom

inline Json to_json(const GridGeometry& g) {
  return {{"dims", {g.dims[0], g.dims[1], g.dims[2]}},
          {"spacing", detail::vec_json(g.spacing)},
          {"origin", detail::vec_json(g.origin)}};
}

/// Phantom document: shape parameters plus the sampling grid.
struct PhantomDocument {
  PhantomSpec spec;
  GridGeometry grid;
};

inline PhantomDocument phantom_from_json(const Json& j) {
  detail::ObjectReader r(j, "phantom");
  PhantomDocument doc;
  PhantomSpec& s = doc.spec;
  r.require("dims", doc.grid.dims);
  r.get("spacing", doc.grid.spacing);
  r.get("origin", doc.grid.origin);
  r.get("trunk_radius", s.trunk_radius);
  r.get("trunk_length", s.trunk_length);
  r.get("aneurysm_peak_radius", s.aneurysm_peak_radius);
  r.get("aneurysm_center", s.aneurysm_center);
  r.get("aneurysm_width", s.aneurysm_width);
  r.get("distal_neck_radius", s.distal_neck_radius);
  r.get("limb_radius", s.limb_radius);
  r.get("limb_length", s.limb_length);
  r.get("limb_half_angle", s.limb_half_angle);
  r.get("inside_intensity", s.inside_intensity);
  r.get("outside_intensity", s.outside_intensity);
  r.get("noise_sigma", s.noise_sigma);
  r.get("noise_seed", s.noise_seed);
  if (const Json* lm = r.sub("landmarks")) s.landmarks = landmarks_from_json(*lm, "phantom.landmarks");
  if (const Json* ms = r.sub("markers")) {
    if (!ms->is_array()) r.fail("'markers' must be an array");
    for (std::size_t i = 0; i < ms->size(); ++i) {
      detail::ObjectReader mr((*ms)[i], "phantom.markers[" + std::to_string(i) + "]");
      MarkerPlacement m;
      Vec3 p;
      if (mr.get("point", p)) m.point = p;
      mr.get("arclength", m.arclength);
      mr.get("angle_deg", m.angle_deg);
      mr.require("disc_radius", m.disc_radius);
      mr.require("label", m.label);
      mr.finish();
      s.markers.push_back(m);
    }
  }
  r.finish();
  return doc;
}

inline Json to_json(const PhantomSpec& s, const GridGeometry& g) {
  Json j = to_json(g);
  j["trunk_radius"] = s.trunk_radius;
  j["trunk_length"] = s.trunk_length;
  j["aneurysm_peak_radius"] = s.aneurysm_peak_radius;
  j["aneurysm_center"] = s.aneurysm_center;
  j["aneurysm_width"] = s.aneurysm_width;
  j["distal_neck_radius"] = s.distal_neck_radius;
  j["limb_radius"] = s.limb_radius;
  j["limb_length"] = s.limb_length;
  j["limb_half_angle"] = s.limb_half_angle;
  j["inside_intensity"] = s.inside_intensity;
  j["outside_intensity"] = s.outside_intensity;
  j["noise_sigma"] = s.noise_sigma;
  j["noise_seed"] = s.noise_seed;
  if (s.landmarks) j["landmarks"] = to_json(*s.landmarks);
  Json ms = Json::array();
  for (const auto& m : s.markers) {
    Json mj = {{"disc_radius", m.disc_radius}, {"label", m.label}};
    if (m.point) mj["point"] = detail::vec_json(*m.point);
    else {
      mj["arclength"] = m.arclength;
      mj["angle_deg"] = m.angle_deg;
    }
    ms.push_back(mj);
  }
  j["markers"] = ms;
  return j;
}

inline Json to_json(const CenterlineSet& cl) {
  return {{"trunk", detail::polyline_json(cl.trunk)},
          {"left_limb", detail::polyline_json(cl.left_limb)},
          {"right_limb", detail::polyline_json(cl.right_limb)},
          {"bifurcation_point", detail::vec_json(cl.bifurcation_point)},
          {"sample_step", cl.sample_step},
          {"units", "mm"}};
}

inline CenterlineSet centerlines_from_json(const Json& j) {
  detail::ObjectReader r(j, "centerlines");
  CenterlineSet cl;
  r.require("trunk", cl.trunk);
  r.get("left_limb", cl.left_limb);
  r.get("right_limb", cl.right_limb);
  r.require("bifurcation_point", cl.bifurcation_point);
  r.require("sample_step", cl.sample_step);
  std::string units = "mm";
  r.get("units", units);
  if (units != "mm") r.fail("units must be mm");
  r.finish();
  return cl;
}

inline Json to_json(const PhantomTruth& t) {
  auto profile = [](const std::vector<std::pair<double, double>>& p) {
    Json out = Json::array();
    for (const auto& [s, r] : p) out.push_back({s, r});
    return out;
  };
  Json markers = Json::array();
  for (const auto& m : t.markers) markers.push_back(to_json(m));
  LandmarkPoints pts{t.proximal_site_point, t.aneurysm_start_point, t.aneurysm_end_point, t.neck_start_point,
                     t.neck_end_point};
  return {{"centerlines", to_json(t.centerlines)},
          {"radius_profile", {{"trunk", profile(t.trunk_profile)},
                              {"left_limb", profile(t.left_profile)},
                              {"right_limb", profile(t.right_profile)}}},
          {"bifurcation_point", detail::vec_json(t.bifurcation_point)},
          {"landmarks", to_json(t.landmarks)},
          {"landmark_points", to_json(pts)},
          {"diameters", to_json(t.diameters)},
          {"markers", markers},
          {"units", "mm"}};
}

// ---------------------------------------------------------------------------
// Solver and mesh

inline Json to_json(const SolverParams& p) {
  return {{"w1", p.w1},
          {"w2", p.w2},
          {"w3", p.w3},
          {"w4", p.w4},
          {"w5", p.w5},
          {"w_wall", p.w_wall},
          {"w_balloon", p.w_balloon},
          {"F_pressure", p.F_pressure},
          {"R_trunk", p.R_trunk},
          {"R_limb", p.R_limb},
          {"gamma", p.gamma},
          {"max_iterations", p.max_iterations},
          {"convergence_eps", p.convergence_eps},
          {"planar_wall_force", p.planar_wall_force}};
}

/// Overlays the keys present in `j` onto `base`; no validation.
inline SolverParams solver_params_from_json(const Json& j, SolverParams p = {}, const std::string& where = "solver") {
  detail::ObjectReader r(j, where);
  r.get("w1", p.w1);
  r.get("w2", p.w2);
  r.get("w3", p.w3);
  r.get("w4", p.w4);
  r.get("w5", p.w5);
  r.get("w_wall", p.w_wall);
  r.get("w_balloon", p.w_balloon);
  r.get("F_pressure", p.F_pressure);
  r.get("R_trunk", p.R_trunk);
  r.get("R_limb", p.R_limb);
  r.get("gamma", p.gamma);
  r.get("max_iterations", p.max_iterations);
  r.get("convergence_eps", p.convergence_eps);
  r.get("planar_wall_force", p.planar_wall_force);
  r.finish();
  return p;
}

inline Json to_json(const StentMesh& m) {
  const auto& g = m.grid;
  return {{"n_t", g.n_t()},
          {"trunk_rings", g.trunk_rings()},
          {"limb_rings", g.limb_rings()},
          {"nominal_radius_trunk", m.nominal_radius_trunk},
          {"nominal_radius_limb", m.nominal_radius_limb},
          {"vertices", detail::polyline_json(g.vertices)},
          {"radial", detail::polyline_json(g.radial)},
          {"ring_centers", detail::polyline_json(g.ring_centers)},
          {"ring_tangents", detail::polyline_json(g.ring_tangents)},
          {"ring_arclength", g.ring_arclength},
          {"units", "mm"}};
}

inline StentMesh stent_mesh_from_json(const Json& j) {
  detail::ObjectReader r(j, "mesh");
  int n_t = 0, trunk = 0, limb = 0;
  r.require("n_t", n_t);
  r.require("trunk_rings", trunk);
  r.require("limb_rings", limb);
  StentMesh m;
  m.grid = BifurcatedGrid(n_t, trunk, limb);
  r.get("nominal_radius_trunk", m.nominal_radius_trunk);
  r.get("nominal_radius_limb", m.nominal_radius_limb);
  auto& g = m.grid;
  r.require("vertices", g.vertices);
  r.require("radial", g.radial);
  r.require("ring_centers", g.ring_centers);
  r.require("ring_tangents", g.ring_tangents);
  const Json* arcs = r.sub("ring_arclength");
  if (arcs == nullptr || !arcs->is_array()) r.fail("'ring_arclength' must be an array");
  for (const auto& a : *arcs) {
    if (!a.is_number()) r.fail("'ring_arclength' must hold numbers");
    g.ring_arclength.push_back(a.get<double>());
  }
  std::string units = "mm";
  r.get("units", units);
  r.finish();
  const auto rings = static_cast<std::size_t>(g.total_rings());
  if (g.vertices.size() != g.vertex_count() || g.radial.size() != g.vertex_count() ||
      g.ring_centers.size() != rings || g.ring_tangents.size() != rings || g.ring_arclength.size() != rings)
    throw Error(ErrorCode::InvalidGrid, "mesh arrays do not match the grid dimensions");
  m.connection = build_connection(g);
  return m;
}

inline Json to_json(const MeasurementReport& rep) {
  auto profile = [](const DiameterProfile& p) {
    Json out = Json::array();
    for (const auto& [s, d] : p) out.push_back({{"arclength", s}, {"diameter", d}});
    return out;
  };
  return {{"units", "mm"},
          {"diameters", to_json(rep.diameters)},
          {"profiles", {{"trunk", profile(rep.trunk_profile)},
                        {"left_limb", profile(rep.left_profile)},
                        {"right_limb", profile(rep.right_profile)}}},
          {"covered_ostia", rep.covered_ostia}};
}

}  // namespace stentfit
