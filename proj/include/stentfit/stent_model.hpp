#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "stentfit/centerline.hpp"
#include "stentfit/error.hpp"
#include "stentfit/format.hpp"
#include "stentfit/vec3.hpp"
#include "stentfit/volume.hpp"

namespace stentfit {

enum class Segment : int { Trunk = 0, Left = 1, Right = 2 };

inline constexpr std::array<Segment, 3> kSegments{Segment::Trunk, Segment::Left, Segment::Right};

inline const char* segment_name(Segment s) {
  switch (s) {
    case Segment::Trunk: return "trunk";
    case Segment::Left: return "left_limb";
    case Segment::Right: return "right_limb";
  }
  return "?";
}

/// Limb index (0 = left, 1 = right) of a limb segment.
inline int limb_index(Segment s) { return static_cast<int>(s) - 1; }
inline Segment limb_segment(int limb) { return limb == 0 ? Segment::Left : Segment::Right; }

/// Quadrilateral grid v(s, t) of three tubes. Vertices are stored trunk first,
/// then left limb, then right limb; within a segment ring-major (s) and
/// angle-minor (t). t is periodic. limb_rings == 0 gives a single tube.
class BifurcatedGrid {
 public:
  BifurcatedGrid() = default;
  BifurcatedGrid(int n_t, int trunk_rings, int limb_rings)
      : n_t_(n_t), trunk_rings_(trunk_rings), limb_rings_(limb_rings) {
    if (n_t < 8 || n_t % 2 != 0) throw Error(ErrorCode::InvalidGrid, "n_t must be even and >= 8");
    if (trunk_rings < 2) throw Error(ErrorCode::InvalidGrid, "trunk needs at least 2 rings");
    if (limb_rings != 0 && limb_rings < 2) throw Error(ErrorCode::InvalidGrid, "limbs need 0 or >= 2 rings");
    vertices.assign(vertex_count(), Vec3{});
  }

  int n_t() const { return n_t_; }
  int trunk_rings() const { return trunk_rings_; }
  int limb_rings() const { return limb_rings_; }
  bool has_limbs() const { return limb_rings_ > 0; }
  int rings(Segment seg) const { return seg == Segment::Trunk ? trunk_rings_ : limb_rings_; }
  int total_rings() const { return trunk_rings_ + 2 * limb_rings_; }
  std::size_t vertex_count() const { return static_cast<std::size_t>(total_rings()) * static_cast<std::size_t>(n_t_); }

  int ring_id(Segment seg, int s) const {
    return seg == Segment::Trunk ? s : trunk_rings_ + limb_index(seg) * limb_rings_ + s;
  }
  std::size_t index(Segment seg, int s, int t) const {
    const int tw = ((t % n_t_) + n_t_) % n_t_;
    return static_cast<std::size_t>(ring_id(seg, s)) * static_cast<std::size_t>(n_t_) + static_cast<std::size_t>(tw);
  }
  Segment segment_of_ring(int ring) const {
    if (ring < trunk_rings_) return Segment::Trunk;
    return (ring - trunk_rings_) < limb_rings_ ? Segment::Left : Segment::Right;
  }
  int ring_in_segment(int ring) const {
    if (ring < trunk_rings_) return ring;
    return (ring - trunk_rings_) % limb_rings_;
  }

  std::vector<Vec3> vertices;

  // Per ring (indexed by ring_id): construction centerline point, unit
  // tangent and arc length along the segment's centerline.
  std::vector<Vec3> ring_centers;
  std::vector<Vec3> ring_tangents;
  std::vector<double> ring_arclength;
  // Per vertex: outward radial unit at construction.
  std::vector<Vec3> radial;

 private:
  int n_t_ = 0;
  int trunk_rings_ = 0;
  int limb_rings_ = 0;
};

/// Cross-junction predecessor map. For limb L, virtual rings s = -1 and s = -2
/// resolve to the trunk's last two rings at the same t; for the trunk,
/// virtual rings s = T and s = T+1 along the path through limb L resolve to
/// that limb's rings 0 and 1. Both limbs share the same trunk predecessors.
struct ConnectionElement {
  // [limb][depth - 1][t]
  std::array<std::array<std::vector<std::size_t>, 2>, 2> limb_predecessor;
  std::array<std::array<std::vector<std::size_t>, 2>, 2> trunk_successor;

  bool empty() const { return limb_predecessor[0][0].empty(); }
};

inline ConnectionElement build_connection(const BifurcatedGrid& grid) {
  ConnectionElement ce;
  if (!grid.has_limbs()) return ce;
  const int T = grid.trunk_rings();
  for (int limb = 0; limb < 2; ++limb) {
    const Segment seg = limb_segment(limb);
    for (int depth = 1; depth <= 2; ++depth) {
      auto& pred = ce.limb_predecessor[limb][depth - 1];
      auto& succ = ce.trunk_successor[limb][depth - 1];
      for (int t = 0; t < grid.n_t(); ++t) {
        pred.push_back(grid.index(Segment::Trunk, T - depth, t));
        succ.push_back(grid.index(seg, depth - 1, t));
      }
    }
  }
  return ce;
}

struct StentMesh {
  BifurcatedGrid grid;
  ConnectionElement connection;
  double nominal_radius_trunk = 0.0;
  double nominal_radius_limb = 0.0;
};

inline void validate_connection(const StentMesh& mesh) {
  const auto& g = mesh.grid;
  if (!g.has_limbs()) return;
  const std::size_t n = g.vertex_count();
  for (int limb = 0; limb < 2; ++limb)
    for (int d = 0; d < 2; ++d) {
      const auto& pred = mesh.connection.limb_predecessor[limb][d];
      const auto& succ = mesh.connection.trunk_successor[limb][d];
      if (pred.size() != static_cast<std::size_t>(g.n_t()) || succ.size() != static_cast<std::size_t>(g.n_t()))
        throw Error(ErrorCode::InvalidConnection, "virtual ring without a full mapping");
      for (std::size_t t = 0; t < pred.size(); ++t) {
        if (pred[t] >= n || succ[t] >= n) throw Error(ErrorCode::InvalidConnection, "mapping to a nonexistent vertex");
        if (g.segment_of_ring(static_cast<int>(pred[t]) / g.n_t()) != Segment::Trunk)
          throw Error(ErrorCode::InvalidConnection, "limb predecessor is not a trunk vertex");
      }
    }
}

/// Real vertex `ds` rings away from (seg, s, t) along the path that continues
/// into limb `path` (0 left, 1 right; ignored when no crossing happens).
/// Returns nullopt beyond the free ends.
inline std::optional<std::size_t> along_s(const StentMesh& mesh, Segment seg, int s, int t, int ds, int path) {
  const auto& g = mesh.grid;
  const int target = s + ds;
  const int nt = g.n_t();
  const std::size_t tw = static_cast<std::size_t>(((t % nt) + nt) % nt);
  if (seg == Segment::Trunk) {
    if (target < 0) return std::nullopt;
    if (target < g.trunk_rings()) return g.index(seg, target, t);
    if (!g.has_limbs()) return std::nullopt;
    const int depth = target - g.trunk_rings() + 1;
    if (path < 0 || path > 1 || depth > 2) throw Error(ErrorCode::InvalidConnection, "trunk virtual ring not mapped");
    const auto& table = mesh.connection.trunk_successor[path][depth - 1];
    if (tw >= table.size()) throw Error(ErrorCode::InvalidConnection, "trunk virtual ring not mapped");
    return table[tw];
  }
  if (target >= g.limb_rings()) return std::nullopt;
  if (target >= 0) return g.index(seg, target, t);
  const int depth = -target;
  const int limb = limb_index(seg);
  if (depth > 2) throw Error(ErrorCode::InvalidConnection, "limb virtual ring not mapped");
  const auto& table = mesh.connection.limb_predecessor[limb][depth - 1];
  if (tw >= table.size()) throw Error(ErrorCode::InvalidConnection, "limb virtual ring not mapped");
  return table[tw];
}

// ---------------------------------------------------------------------------
// Stencils

/// Derivative terms: S = d/ds, T = d/dt, SS, TT, ST (mixed).
enum class Term : int { S = 0, T = 1, SS = 2, TT = 3, ST = 4 };
inline constexpr std::array<Term, 5> kTerms{Term::S, Term::T, Term::SS, Term::TT, Term::ST};

struct Stencil {
  std::size_t center = 0;
  int path = -1;  // limb whose junction crossing the stencil uses, -1 if none
  std::vector<std::pair<std::size_t, double>> taps;

  template <class F>
  auto apply(const F& field) const {
    auto acc = field(taps.front().first) * 0.0;
    for (const auto& [idx, w] : taps) acc += field(idx) * w;
    return acc;
  }
};

/// `energy` holds the difference operators whose squared norms make up the
/// internal energy (forward first differences, centered second differences,
/// forward cross differences; each appears once). `central` holds per-vertex
/// derivative approximations (central where both neighbors exist, one-sided at
/// free ends). Rows that cross the junction exist once per limb path.
struct StencilTable {
  std::array<std::vector<Stencil>, 5> energy;
  std::array<std::vector<Stencil>, 5> central;

  std::vector<const Stencil*> central_at(Term term, std::size_t vertex) const {
    std::vector<const Stencil*> out;
    for (const auto& st : central[static_cast<int>(term)])
      if (st.center == vertex) out.push_back(&st);
    return out;
  }
};

namespace detail {

struct Tap {
  int ds;
  int dt;
  double w;
};

// Emits one stencil per distinct path for the window `taps` anchored at
// (seg, s, t). Windows that stay inside the trunk are emitted once.
inline void emit_window(const StentMesh& mesh, Segment seg, int s, int t, const std::vector<Tap>& taps,
                        std::size_t center, std::vector<Stencil>& out) {
  const auto& g = mesh.grid;
  std::vector<int> paths;
  if (seg != Segment::Trunk) paths = {limb_index(seg)};
  else if (g.has_limbs()) paths = {0, 1};
  else paths = {-1};
  for (int path : paths) {
    Stencil st{center, -1, {}};
    bool ok = true;
    bool crosses = false;
    for (const auto& tap : taps) {
      const auto idx = along_s(mesh, seg, s, t + tap.dt, tap.ds, path);
      if (!idx) {
        ok = false;
        break;
      }
      if (g.segment_of_ring(static_cast<int>(*idx) / g.n_t()) != seg) crosses = true;
      st.taps.emplace_back(*idx, tap.w);
    }
    if (!ok) continue;
    if (seg != Segment::Trunk) {
      st.path = path;
    } else if (crosses) {
      st.path = path;
    } else if (path == 1) {
      continue;  // trunk-only window already emitted for path 0
    }
    out.push_back(std::move(st));
  }
}

}  // namespace detail

inline StencilTable derivative_stencils(const StentMesh& mesh) {
  validate_connection(mesh);
  const auto& g = mesh.grid;
  StencilTable table;
  using detail::Tap;
  const std::vector<Tap> fwd_s{{0, 0, -1.0}, {1, 0, 1.0}};
  const std::vector<Tap> fwd_t{{0, 0, -1.0}, {0, 1, 1.0}};
  const std::vector<Tap> second_s{{-1, 0, 1.0}, {0, 0, -2.0}, {1, 0, 1.0}};
  const std::vector<Tap> second_t{{0, -1, 1.0}, {0, 0, -2.0}, {0, 1, 1.0}};
  const std::vector<Tap> cross_fwd{{0, 0, 1.0}, {0, 1, -1.0}, {1, 0, -1.0}, {1, 1, 1.0}};
  const std::vector<Tap> central_s{{-1, 0, -0.5}, {1, 0, 0.5}};
  const std::vector<Tap> back_s{{-1, 0, -1.0}, {0, 0, 1.0}};
  const std::vector<Tap> central_t{{0, -1, -0.5}, {0, 1, 0.5}};
  const std::vector<Tap> cross_central{{1, 1, 0.25}, {1, -1, -0.25}, {-1, 1, -0.25}, {-1, -1, 0.25}};
  const std::vector<Tap> cross_fwd_s{{1, 1, 0.5}, {1, -1, -0.5}, {0, 1, -0.5}, {0, -1, 0.5}};
  const std::vector<Tap> cross_back_s{{0, 1, 0.5}, {0, -1, -0.5}, {-1, 1, -0.5}, {-1, -1, 0.5}};

  auto& E = table.energy;
  auto& C = table.central;
  for (Segment seg : kSegments) {
    for (int s = 0; s < g.rings(seg); ++s) {
      for (int t = 0; t < g.n_t(); ++t) {
        const std::size_t v = g.index(seg, s, t);
        detail::emit_window(mesh, seg, s, t, fwd_s, v, E[0]);
        detail::emit_window(mesh, seg, s, t, fwd_t, v, E[1]);
        detail::emit_window(mesh, seg, s, t, second_s, v, E[2]);
        detail::emit_window(mesh, seg, s, t, second_t, v, E[3]);
        detail::emit_window(mesh, seg, s, t, cross_fwd, v, E[4]);

        const std::size_t before_s = C[0].size();
        detail::emit_window(mesh, seg, s, t, central_s, v, C[0]);
        if (C[0].size() == before_s) {
          detail::emit_window(mesh, seg, s, t, fwd_s, v, C[0]);
          if (C[0].size() == before_s) detail::emit_window(mesh, seg, s, t, back_s, v, C[0]);
        }
        detail::emit_window(mesh, seg, s, t, central_t, v, C[1]);
        detail::emit_window(mesh, seg, s, t, second_s, v, C[2]);
        detail::emit_window(mesh, seg, s, t, second_t, v, C[3]);
        const std::size_t before_st = C[4].size();
        detail::emit_window(mesh, seg, s, t, cross_central, v, C[4]);
        if (C[4].size() == before_st) {
          detail::emit_window(mesh, seg, s, t, cross_fwd_s, v, C[4]);
          if (C[4].size() == before_st) detail::emit_window(mesh, seg, s, t, cross_back_s, v, C[4]);
        }
      }
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// Initial stent

namespace detail {

// One step of rotation-minimizing frame transport (double reflection).
inline Vec3 transport_normal(const Vec3& x0, const Vec3& t0, const Vec3& n0, const Vec3& x1, const Vec3& t1) {
  const Vec3 v1 = x1 - x0;
  const double c1 = dot(v1, v1);
  Vec3 rl = n0, tl = t0;
  if (c1 > 1e-18) {
    rl = n0 - v1 * (2.0 / c1 * dot(v1, n0));
    tl = t0 - v1 * (2.0 / c1 * dot(v1, t0));
  }
  const Vec3 v2 = t1 - tl;
  const double c2 = dot(v2, v2);
  Vec3 r1 = c2 > 1e-18 ? rl - v2 * (2.0 / c2 * dot(v2, rl)) : rl;
  r1 = normalized(r1 - t1 * dot(r1, t1));
  return r1;
}

inline void place_ring(BifurcatedGrid& g, Segment seg, int s, const Vec3& center, const Vec3& tangent,
                       const Vec3& normal, double radius) {
  const Vec3 binormal = cross(tangent, normal);
  for (int t = 0; t < g.n_t(); ++t) {
    const double a = 2.0 * std::numbers::pi * t / g.n_t();
    const Vec3 u = normal * std::cos(a) + binormal * std::sin(a);
    const std::size_t idx = g.index(seg, s, t);
    g.vertices[idx] = center + u * radius;
    g.radial[idx] = u;
  }
}

}  // namespace detail

struct StentLayout {
  int n_t = 12;
  int trunk_rings = 26;
  int limb_rings = 13;
  double trunk_start = 0.0;  // arc length where the first trunk ring sits
};

/// Tubes of rings along the three centerlines. Trunk rings span
/// [trunk_start, trunk end] uniformly; limb ring k sits at (k+1)/limb_rings of
/// the limb length so the limbs start clear of the trunk's last ring.
inline StentMesh build_initial_stent(const CenterlineSet& cl, double r0_trunk, double r0_limb,
                                     const StentLayout& layout) {
  if (!(r0_trunk > 0.0) || (layout.limb_rings > 0 && !(r0_limb > 0.0)))
    throw Error(ErrorCode::RadiusNonPositive, "initial stent radii must be > 0");
  StentMesh mesh;
  mesh.grid = BifurcatedGrid(layout.n_t, layout.trunk_rings, layout.limb_rings);
  mesh.nominal_radius_trunk = r0_trunk;
  mesh.nominal_radius_limb = r0_limb;
  BifurcatedGrid& g = mesh.grid;
  g.ring_centers.resize(g.total_rings());
  g.ring_tangents.resize(g.total_rings());
  g.ring_arclength.resize(g.total_rings());
  g.radial.resize(g.vertex_count());

  const double step = cl.sample_step > 0.0 ? cl.sample_step : 1.0;
  const double trunk_len = cl.trunk.size() >= 2 ? polyline_length(cl.trunk) : 0.0;
  const double span = trunk_len - layout.trunk_start;
  if (layout.trunk_start < 0.0 || span < (layout.trunk_rings - 1) * step - 1e-9 || span <= 0.0)
    throw Error(ErrorCode::CenterlineTooShort, "trunk centerline too short for the requested rings");
  const Polyline* limbs[2] = {&cl.left_limb, &cl.right_limb};
  if (g.has_limbs()) {
    for (const Polyline* limb : limbs) {
      const double len = limb->size() >= 2 ? polyline_length(*limb) : 0.0;
      if (len < layout.limb_rings * step - 1e-9 || len <= 0.0)
        throw Error(ErrorCode::CenterlineTooShort, "limb centerline too short for the requested rings");
    }
  }

  const double half = 2.0 * step;
  Vec3 prev_x, prev_t, prev_n;
  for (int s = 0; s < g.trunk_rings(); ++s) {
    const double a = layout.trunk_start + span * s / (g.trunk_rings() - 1);
    const Vec3 x = point_at(cl.trunk, a);
    const Vec3 tan = tangent_at(cl.trunk, a, half);
    Vec3 n;
    if (s == 0) {
      // deterministic start: the x axis projected into the ring plane
      n = normalized(Vec3{1, 0, 0} - tan * tan.x);
      if (norm(n) < 0.5) n = normalized(Vec3{0, 1, 0} - tan * tan.y);
    } else {
      n = detail::transport_normal(prev_x, prev_t, prev_n, x, tan);
    }
    const int rid = g.ring_id(Segment::Trunk, s);
    g.ring_centers[rid] = x;
    g.ring_tangents[rid] = tan;
    g.ring_arclength[rid] = a;
    detail::place_ring(g, Segment::Trunk, s, x, tan, n, r0_trunk);
    prev_x = x;
    prev_t = tan;
    prev_n = n;
  }
  if (g.has_limbs()) {
    const Vec3 jx = prev_x, jt = prev_t, jn = prev_n;
    for (int limb = 0; limb < 2; ++limb) {
      const Segment seg = limb_segment(limb);
      const double len = polyline_length(*limbs[limb]);
      Vec3 px = jx, pt = jt, pn = jn;
      for (int s = 0; s < g.limb_rings(); ++s) {
        const double a = len * (s + 1) / g.limb_rings();
        const Vec3 x = point_at(*limbs[limb], a);
        const Vec3 tan = tangent_at(*limbs[limb], a, half);
        const Vec3 n = detail::transport_normal(px, pt, pn, x, tan);
        const int rid = g.ring_id(seg, s);
        g.ring_centers[rid] = x;
        g.ring_tangents[rid] = tan;
        g.ring_arclength[rid] = a;
        detail::place_ring(g, seg, s, x, tan, n, r0_limb);
        px = x;
        pt = tan;
        pn = n;
      }
    }
  }
  mesh.connection = build_connection(g);
  for (const auto& v : g.vertices)
    if (!is_finite(v)) throw Error(ErrorCode::NonFiniteState, "non-finite initial vertex");
  return mesh;
}

// ---------------------------------------------------------------------------
// Export

/// Wavefront OBJ text: vertex lines in storage order, then one quad face set
/// per tube (`g trunk`, `g left_limb`, `g right_limb`). The junction is left
/// open; faces wind (s,t) -> (s,t+1) -> (s+1,t+1) -> (s+1,t).
inline std::string mesh_to_obj(const StentMesh& mesh) {
  const auto& g = mesh.grid;
  std::string out = "# stentfit stent mesh\n";
  for (const auto& v : g.vertices)
    out += "v " + format_double(v.x) + " " + format_double(v.y) + " " + format_double(v.z) + "\n";
  for (Segment seg : kSegments) {
    if (g.rings(seg) == 0) continue;
    out += std::string("g ") + segment_name(seg) + "\n";
    for (int s = 0; s + 1 < g.rings(seg); ++s)
      for (int t = 0; t < g.n_t(); ++t) {
        out += "f " + std::to_string(g.index(seg, s, t) + 1) + " " + std::to_string(g.index(seg, s, t + 1) + 1) +
               " " + std::to_string(g.index(seg, s + 1, t + 1) + 1) + " " +
               std::to_string(g.index(seg, s + 1, t) + 1) + "\n";
      }
  }
  return out;
}

inline void export_mesh(const StentMesh& mesh, const std::filesystem::path& path) {
  detail::write_file(path, mesh_to_obj(mesh));
}

}  // namespace stentfit
