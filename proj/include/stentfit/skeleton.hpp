#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <tuple>
#include <vector>

#include "stentfit/centerline.hpp"
#include "stentfit/error.hpp"
#include "stentfit/segmentation.hpp"
#include "stentfit/volume.hpp"

namespace stentfit {

struct VoxelSkeleton {
  GridGeometry geometry;
  std::vector<std::size_t> voxels;  // sorted linear indices

  BinaryMask to_mask() const {
    BinaryMask m(geometry, 0);
    for (auto v : voxels) m[v] = 1;
    return m;
  }
};

namespace detail {

// 3x3x3 neighborhood, cube index = (dz+1)*9 + (dy+1)*3 + (dx+1); 13 is the center.
struct CubeTables {
  std::array<std::vector<int>, 27> adj26;
  std::array<std::vector<int>, 27> adj6_n18;
  std::array<bool, 27> in_n18{};
  std::array<int, 6> faces{4, 22, 10, 16, 12, 14};

  CubeTables() {
    auto coord = [](int c) { return std::array<int, 3>{c % 3 - 1, (c / 3) % 3 - 1, c / 9 - 1}; };
    for (int a = 0; a < 27; ++a) {
      const auto ca = coord(a);
      const int l1 = std::abs(ca[0]) + std::abs(ca[1]) + std::abs(ca[2]);
      in_n18[a] = a != 13 && l1 <= 2;
      for (int b = 0; b < 27; ++b) {
        if (a == b || a == 13 || b == 13) continue;
        const auto cb = coord(b);
        const int dx = std::abs(ca[0] - cb[0]), dy = std::abs(ca[1] - cb[1]), dz = std::abs(ca[2] - cb[2]);
        if (std::max({dx, dy, dz}) == 1) adj26[a].push_back(b);
        if (dx + dy + dz == 1) adj6_n18[a].push_back(b);
      }
    }
  }
};

inline const CubeTables& cube_tables() {
  static const CubeTables t;
  return t;
}

/// (26, 6) simple-point test on a neighborhood (center ignored).
inline bool is_simple(const std::array<std::uint8_t, 27>& nb) {
  const auto& t = cube_tables();
  std::array<int, 27> stack{};
  // foreground: exactly one 26-component in N26*
  std::array<bool, 27> seen{};
  int components = 0;
  for (int s = 0; s < 27; ++s) {
    if (s == 13 || !nb[s] || seen[s]) continue;
    if (++components > 1) return false;
    int top = 0;
    stack[top++] = s;
    seen[s] = true;
    while (top) {
      const int c = stack[--top];
      for (int n : t.adj26[c])
        if (nb[n] && !seen[n]) {
          seen[n] = true;
          stack[top++] = n;
        }
    }
  }
  if (components != 1) return false;
  // background: exactly one 6-component in N18 that is 6-adjacent to the center
  seen.fill(false);
  components = 0;
  for (int f : t.faces) {
    if (nb[f] || seen[f]) continue;
    if (++components > 1) return false;
    int top = 0;
    stack[top++] = f;
    seen[f] = true;
    while (top) {
      const int c = stack[--top];
      for (int n : t.adj6_n18[c])
        if (t.in_n18[n] && !nb[n] && !seen[n]) {
          seen[n] = true;
          stack[top++] = n;
        }
    }
  }
  return components == 1;
}

/// Mask copy with a one-voxel background border so neighborhood reads never
/// need bounds checks.
class PaddedGrid {
 public:
  explicit PaddedGrid(const GridGeometry& g) : g_(g) {
    px_ = g.dims[0] + 2;
    py_ = g.dims[1] + 2;
    pz_ = g.dims[2] + 2;
    bits_.assign(static_cast<std::size_t>(px_) * py_ * pz_, 0);
    int c = 0;
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) offsets_[c++] = dx + px_ * (dy + py_ * dz);
  }

  std::ptrdiff_t padded(std::size_t idx) const {
    const Index3 v = g_.unravel(idx);
    return (v.i + 1) + static_cast<std::ptrdiff_t>(px_) * ((v.j + 1) + static_cast<std::ptrdiff_t>(py_) * (v.k + 1));
  }
  std::size_t unpadded(std::ptrdiff_t p) const {
    const int i = static_cast<int>(p % px_) - 1;
    const int j = static_cast<int>((p / px_) % py_) - 1;
    const int k = static_cast<int>(p / (static_cast<std::ptrdiff_t>(px_) * py_)) - 1;
    return g_.linear(i, j, k);
  }

  std::uint8_t& operator[](std::ptrdiff_t p) { return bits_[static_cast<std::size_t>(p)]; }
  std::uint8_t operator[](std::ptrdiff_t p) const { return bits_[static_cast<std::size_t>(p)]; }
  std::ptrdiff_t offset(int cube) const { return offsets_[cube]; }

  std::array<std::uint8_t, 27> neighborhood(std::ptrdiff_t p) const {
    std::array<std::uint8_t, 27> nb{};
    for (int c = 0; c < 27; ++c) nb[c] = bits_[static_cast<std::size_t>(p + offsets_[c])];
    return nb;
  }
  int count_neighbors(std::ptrdiff_t p) const {
    int n = 0;
    for (int c = 0; c < 27; ++c)
      if (c != 13 && bits_[static_cast<std::size_t>(p + offsets_[c])]) ++n;
    return n;
  }

 private:
  GridGeometry g_;
  int px_ = 0, py_ = 0, pz_ = 0;
  std::vector<std::uint8_t> bits_;
  std::array<std::ptrdiff_t, 27> offsets_{};
};

}  // namespace detail

/// Topology-preserving curve thinning by directional sub-passes (U, D, N, S,
/// E, W) of simple-border-voxel removal; voxels with a single 26-neighbor are
/// kept as curve endpoints. Candidates are collected on the sub-pass start
/// state and deleted sequentially after re-checking.
inline VoxelSkeleton thin(const BinaryMask& mask) {
  const GridGeometry& g = mask.geometry();
  detail::PaddedGrid grid(g);
  std::vector<std::ptrdiff_t> fg;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) {
      const auto p = grid.padded(i);
      grid[p] = 1;
      fg.push_back(p);
    }
  if (fg.empty()) throw Error(ErrorCode::EmptyMask, "cannot thin an empty mask");

  // face neighbor cube indices for +z, -z, +y, -y, +x, -x
  constexpr std::array<int, 6> kDirections{22, 4, 16, 10, 14, 12};
  // Candidates are visited by parity subfield ((i, j, k) mod 2), then index.
  // Voxels of one subfield are never 26-adjacent, so one deletion cannot make
  // another voxel of the same subfield deletable and a one-voxel-thick slab
  // is not eaten along its length.
  auto subfield = [&](std::ptrdiff_t p) {
    const Index3 v = g.unravel(grid.unpadded(p));
    return (v.i & 1) | ((v.j & 1) << 1) | ((v.k & 1) << 2);
  };
  std::vector<std::pair<int, std::ptrdiff_t>> candidates;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int dir : kDirections) {
      candidates.clear();
      const auto off = grid.offset(dir);
      for (auto p : fg) {
        if (grid[p + off]) continue;
        if (grid.count_neighbors(p) <= 1) continue;
        if (detail::is_simple(grid.neighborhood(p))) candidates.emplace_back(subfield(p), p);
      }
      std::sort(candidates.begin(), candidates.end());
      for (auto [field, p] : candidates) {
        if (grid.count_neighbors(p) <= 1) continue;
        if (!detail::is_simple(grid.neighborhood(p))) continue;
        grid[p] = 0;
        changed = true;
      }
      if (!candidates.empty())
        fg.erase(std::remove_if(fg.begin(), fg.end(), [&](std::ptrdiff_t p) { return !grid[p]; }), fg.end());
    }
  }
  VoxelSkeleton skel;
  skel.geometry = g;
  for (auto p : fg) skel.voxels.push_back(grid.unpadded(p));
  std::sort(skel.voxels.begin(), skel.voxels.end());
  return skel;
}

struct CenterlineOptions {
  int prune_length = 10;     // voxels
  double sample_step = 1.0;  // mm
  double junction_fit_length = 12.0;  // mm of branch used to fit junction and end directions
};

namespace detail {

struct Branch {
  int a = -1;
  int b = -1;
  std::vector<Vec3> points;  // interior points, ordered a -> b
  int length() const { return static_cast<int>(points.size()) + 1; }
  Branch reversed() const {
    Branch r{b, a, points};
    std::reverse(r.points.begin(), r.points.end());
    return r;
  }
};

inline Polyline smooth_pinned(const Polyline& pts, int half) {
  Polyline out(pts.size());
  const int n = static_cast<int>(pts.size());
  for (int i = 0; i < n; ++i) {
    const int h = std::min({half, i, n - 1 - i});
    Vec3 acc;
    for (int j = i - h; j <= i + h; ++j) acc += pts[j];
    out[i] = acc / (2 * h + 1);
  }
  return out;
}



/// Distance from p to the nearest background voxel center (brute force over a
/// growing cube; the junction zone is small).
inline double inscribed_radius(const BinaryMask& mask, const Vec3& p) {
  const GridGeometry& g = mask.geometry();
  const auto c = g.voxel_of(p);
  if (!c) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  const int max_r = std::max({g.dims[0], g.dims[1], g.dims[2]});
  for (int r = 1; r <= max_r; ++r) {
    bool any_in_grid = false;
    for (int k = c->k - r; k <= c->k + r; ++k)
      for (int j = c->j - r; j <= c->j + r; ++j)
        for (int i = c->i - r; i <= c->i + r; ++i) {
          if (std::max({std::abs(i - c->i), std::abs(j - c->j), std::abs(k - c->k)}) != r) continue;
          if (!g.contains(i, j, k)) {
            best = std::min(best, distance(p, g.center(i, j, k)));
            continue;
          }
          any_in_grid = true;
          if (!mask.at(i, j, k)) best = std::min(best, distance(p, g.center(i, j, k)));
        }
    // anything outside the shell is at least r - 1 voxels away
    if (best <= (r - 1) * g.min_spacing() || !any_in_grid) break;
  }
  return std::isfinite(best) ? best : 0.0;
}

/// Least-squares point closest to a set of lines (point, unit direction).
inline std::optional<Vec3> closest_point_to_lines(const std::vector<std::pair<Vec3, Vec3>>& lines) {
  double m[3][3] = {};
  double rhs[3] = {};
  for (const auto& [p, d] : lines) {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        const double proj = (r == c ? 1.0 : 0.0) - d[r] * d[c];
        m[r][c] += proj;
        rhs[r] += proj * p[c];
      }
    }
  }
  const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                     m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                     m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  if (std::abs(det) < 1e-9) return std::nullopt;
  Vec3 x;
  for (int col = 0; col < 3; ++col) {
    double a[3][3];
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) a[r][c] = c == col ? rhs[r] : m[r][c];
    x[col] = (a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
              a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])) /
             det;
  }
  return x;
}

/// Principal direction of a point set (power iteration on the scatter matrix),
/// oriented from the first point towards the last.
inline Vec3 principal_direction(const std::vector<Vec3>& pts) {
  Vec3 mean;
  for (const auto& p : pts) mean += p;
  mean = mean / static_cast<double>(pts.size());
  double s[3][3] = {};
  for (const auto& p : pts) {
    const Vec3 q = p - mean;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) s[r][c] += q[r] * q[c];
  }
  Vec3 v = normalized(pts.back() - pts.front());
  if (norm(v) == 0.0) return v;
  for (int it = 0; it < 100; ++it) {
    Vec3 w;
    for (int r = 0; r < 3; ++r) w[r] = s[r][0] * v.x + s[r][1] * v.y + s[r][2] * v.z;
    w = normalized(w);
    if (norm(w) == 0.0) break;
    v = w;
  }
  return dot(v, pts.back() - pts.front()) < 0.0 ? -v : v;
}

/// Replaces the open end of a path by a straight run along the branch
/// direction until it leaves the mask. Erosion retracts curve ends by about
/// the local radius and bends the last voxels, so the tail within the
/// endpoint's inscribed radius is discarded and the direction is fitted on the
/// preceding stretch.
inline void extend_to_lumen_end(Polyline& pts, const BinaryMask& mask, double fit_length) {
  if (pts.size() < 3) return;
  const GridGeometry& g = mask.geometry();
  const Vec3 end = pts.back();
  const double zone = inscribed_radius(mask, end);
  std::size_t keep = pts.size() - 1;
  while (keep > 1 && distance(pts[keep], end) < zone) --keep;
  std::size_t from = keep;
  while (from > 0 && distance(pts[from - 1], pts[keep]) <= fit_length) --from;
  if (keep - from + 1 < 3) {
    keep = pts.size() - 1;
    from = keep >= 5 ? keep - 5 : 0;
  }
  const Vec3 dir = principal_direction(std::vector<Vec3>(pts.begin() + static_cast<std::ptrdiff_t>(from),
                                                         pts.begin() + static_cast<std::ptrdiff_t>(keep) + 1));
  if (norm(dir) == 0.0) return;
  pts.resize(keep + 1);
  const Vec3 base = pts.back();
  const double h = 0.25 * g.min_spacing();
  Vec3 last = base;
  for (int i = 1; i < 100000; ++i) {
    const Vec3 q = base + dir * (i * h);
    const auto v = g.voxel_of(q);
    if (!v || !mask.at(*v)) break;
    last = q;
  }
  if (distance(last, base) > 0.0) pts.push_back(last);
}

}  // namespace detail

/// Splits a thinned Y-shaped skeleton into trunk and limb centerlines.
inline CenterlineSet extract_centerlines(const VoxelSkeleton& skel, const BinaryMask& mask,
                                         const CenterlineOptions& opt = {}) {
  if (skel.voxels.empty()) throw Error(ErrorCode::EmptyMask, "empty skeleton");
  if (!(skel.geometry == mask.geometry()))
    throw Error(ErrorCode::InvalidConfig, "skeleton and mask geometry differ");
  if (!(opt.sample_step > 0.0)) throw Error(ErrorCode::InvalidConfig, "sample_step must be > 0");
  const GridGeometry& g = skel.geometry;

  detail::PaddedGrid grid(g);
  const std::size_t n = skel.voxels.size();
  std::vector<std::ptrdiff_t> padded(n);
  std::map<std::ptrdiff_t, int> id_of;
  for (std::size_t i = 0; i < n; ++i) {
    padded[i] = grid.padded(skel.voxels[i]);
    grid[padded[i]] = 1;
    id_of[padded[i]] = static_cast<int>(i);
  }
  std::vector<std::vector<int>> nbrs(n);
  for (std::size_t i = 0; i < n; ++i)
    for (int c = 0; c < 27; ++c) {
      if (c == 13) continue;
      const auto q = padded[i] + grid.offset(c);
      if (grid[q]) nbrs[i].push_back(id_of.at(q));
    }

  // graph nodes: junction clusters (26-connected voxels of degree >= 3) and endpoints
  std::vector<int> node_of(n, -1);
  std::vector<Vec3> node_point;
  std::vector<bool> node_is_cluster;
  std::vector<Vec3> original_endpoint;  // per node, voxel center for endpoints
  for (std::size_t i = 0; i < n; ++i) {
    if (nbrs[i].size() < 3 || node_of[i] >= 0) continue;
    const int id = static_cast<int>(node_point.size());
    std::vector<int> stack{static_cast<int>(i)};
    node_of[i] = id;
    Vec3 acc;
    int count = 0;
    while (!stack.empty()) {
      const int c = stack.back();
      stack.pop_back();
      acc += g.center(skel.voxels[c]);
      ++count;
      for (int m : nbrs[c])
        if (nbrs[m].size() >= 3 && node_of[m] < 0) {
          node_of[m] = id;
          stack.push_back(m);
        }
    }
    node_point.push_back(acc / count);
    node_is_cluster.push_back(true);
  }
  for (std::size_t i = 0; i < n; ++i)
    if (nbrs[i].size() == 1) {
      node_of[i] = static_cast<int>(node_point.size());
      node_point.push_back(g.center(skel.voxels[i]));
      node_is_cluster.push_back(false);
    }
  if (node_point.empty()) throw Error(ErrorCode::NoBifurcation, "skeleton has no endpoints or junctions");

  // trace voxel paths between nodes
  std::vector<detail::Branch> branches;
  std::vector<bool> visited(n, false);
  std::set<std::pair<int, int>> direct;
  for (std::size_t i = 0; i < n; ++i) {
    const int node = node_of[i];
    if (node < 0) continue;
    for (int w : nbrs[i]) {
      if (node_of[w] == node) continue;
      if (node_of[w] >= 0) {
        const auto key = std::minmax(node, node_of[w]);
        if (direct.insert(key).second) branches.push_back({node, node_of[w], {}});
        continue;
      }
      if (visited[w]) continue;
      detail::Branch br{node, -1, {}};
      int prev = static_cast<int>(i), cur = w;
      while (true) {
        visited[cur] = true;
        br.points.push_back(g.center(skel.voxels[cur]));
        int next = -1;
        for (int m : nbrs[cur])
          if (m != prev) next = m;
        if (next < 0) break;
        if (node_of[next] >= 0) {
          br.b = node_of[next];
          break;
        }
        if (visited[next]) break;
        prev = cur;
        cur = next;
      }
      if (br.b >= 0) branches.push_back(std::move(br));
    }
  }

  // simplify: drop loops, dissolve pass-through clusters, prune short spurs
  auto degrees = [&] {
    std::vector<int> deg(node_point.size(), 0);
    for (const auto& b : branches) {
      ++deg[b.a];
      ++deg[b.b];
    }
    return deg;
  };
  bool changed = true;
  while (changed) {
    changed = false;
    const auto before = branches.size();
    branches.erase(std::remove_if(branches.begin(), branches.end(), [](const auto& b) { return b.a == b.b; }),
                   branches.end());
    changed = branches.size() != before;

    auto deg = degrees();
    for (int node = 0; node < static_cast<int>(node_point.size()); ++node) {
      if (!node_is_cluster[node] || deg[node] != 2) continue;
      std::vector<std::size_t> inc;
      for (std::size_t k = 0; k < branches.size(); ++k)
        if (branches[k].a == node || branches[k].b == node) inc.push_back(k);
      if (inc.size() != 2) continue;
      detail::Branch first = branches[inc[0]].b == node ? branches[inc[0]] : branches[inc[0]].reversed();
      detail::Branch second = branches[inc[1]].a == node ? branches[inc[1]] : branches[inc[1]].reversed();
      detail::Branch merged{first.a, second.b, first.points};
      merged.points.push_back(node_point[node]);
      merged.points.insert(merged.points.end(), second.points.begin(), second.points.end());
      branches.erase(branches.begin() + static_cast<std::ptrdiff_t>(inc[1]));
      branches.erase(branches.begin() + static_cast<std::ptrdiff_t>(inc[0]));
      branches.push_back(std::move(merged));
      changed = true;
      deg = degrees();
    }
    if (changed) continue;

    int victim = -1;
    for (int k = 0; k < static_cast<int>(branches.size()); ++k) {
      const auto& b = branches[k];
      const bool leaf_a = !node_is_cluster[b.a] && node_is_cluster[b.b] && deg[b.b] >= 3;
      const bool leaf_b = !node_is_cluster[b.b] && node_is_cluster[b.a] && deg[b.a] >= 3;
      if (!(leaf_a || leaf_b) || b.length() >= opt.prune_length) continue;
      if (victim < 0 || b.length() < branches[victim].length()) victim = k;
    }
    if (victim >= 0) {
      branches.erase(branches.begin() + victim);
      changed = true;
    }
  }

  const auto deg = degrees();
  std::vector<int> junctions;
  for (int node = 0; node < static_cast<int>(node_point.size()); ++node)
    if (node_is_cluster[node] && deg[node] >= 3) junctions.push_back(node);
  if (junctions.empty()) throw Error(ErrorCode::NoBifurcation, "no junction left after spur pruning");
  if (junctions.size() > 1 || deg[junctions[0]] != 3 || branches.size() != 3)
    throw Error(ErrorCode::ExtraBranches, "skeleton has more than three persistent branches");
  const int j = junctions[0];

  struct Path {
    Polyline points;
    Vec3 far_end;
  };
  // Branch point lists oriented junction -> endpoint (junction excluded).
  std::vector<Polyline> raw;
  std::vector<Vec3> far_ends;
  for (const auto& b0 : branches) {
    const detail::Branch b = b0.a == j ? b0 : b0.reversed();
    if (b.a != j || node_is_cluster[b.b]) throw Error(ErrorCode::ExtraBranches, "branch does not end at an endpoint");
    Polyline pts = b.points;
    pts.push_back(node_point[b.b]);
    raw.push_back(std::move(pts));
    far_ends.push_back(node_point[b.b]);
  }

  // The voxel junction of a thinned Y sits off the true axis crossing; place
  // the bifurcation at the least-squares crossing of the three branch lines
  // fitted just outside the junction's inscribed ball.
  Vec3 bifurcation = node_point[j];
  const double zone = detail::inscribed_radius(mask, node_point[j]);
  std::vector<std::size_t> first_kept(3, 0);
  {
    std::vector<std::pair<Vec3, Vec3>> lines;
    for (std::size_t k = 0; k < 3; ++k) {
      std::vector<Vec3> window;
      for (std::size_t i = 0; i < raw[k].size(); ++i) {
        const double d = distance(raw[k][i], node_point[j]);
        if (d < zone) first_kept[k] = i + 1;
        else if (d <= zone + opt.junction_fit_length) window.push_back(raw[k][i]);
      }
      if (window.size() < 3) break;
      Vec3 mean;
      for (const auto& p : window) mean += p;
      lines.emplace_back(mean / static_cast<double>(window.size()), detail::principal_direction(window));
    }
    if (lines.size() == 3) {
      if (auto x = detail::closest_point_to_lines(lines); x && distance(*x, node_point[j]) <= 2.0 * zone) {
        bifurcation = *x;
      }
    }
    if (bifurcation == node_point[j]) std::fill(first_kept.begin(), first_kept.end(), 0);
  }

  std::vector<Path> paths;
  for (std::size_t k = 0; k < 3; ++k) {
    Polyline pts{bifurcation};
    const std::size_t start = std::min(first_kept[k], raw[k].size() - 1);
    pts.insert(pts.end(), raw[k].begin() + static_cast<std::ptrdiff_t>(start), raw[k].end());
    pts = detail::smooth_pinned(pts, 2);
    detail::extend_to_lumen_end(pts, mask, opt.junction_fit_length);
    paths.push_back({resample_uniform(pts, opt.sample_step), far_ends[k]});
  }

  const auto trunk_it =
      std::max_element(paths.begin(), paths.end(), [](const Path& a, const Path& b) { return a.far_end.z < b.far_end.z; });
  const std::size_t trunk_idx = static_cast<std::size_t>(trunk_it - paths.begin());
  std::vector<std::size_t> limbs;
  for (std::size_t k = 0; k < 3; ++k)
    if (k != trunk_idx) limbs.push_back(k);
  if (paths[limbs[1]].points.back().x < paths[limbs[0]].points.back().x) std::swap(limbs[0], limbs[1]);

  CenterlineSet cl;
  cl.sample_step = opt.sample_step;
  cl.bifurcation_point = bifurcation;
  cl.trunk = paths[trunk_idx].points;
  std::reverse(cl.trunk.begin(), cl.trunk.end());
  cl.left_limb = paths[limbs[0]].points;
  cl.right_limb = paths[limbs[1]].points;
  return cl;
}

/// Centerline of an unbranched tube: the longest geodesic path through the
/// skeleton, smoothed, extended to the lumen ends and resampled from its
/// superior end. Only `trunk` is filled; `bifurcation_point` is its last point.
inline CenterlineSet extract_tube_centerline(const VoxelSkeleton& skel, const BinaryMask& mask,
                                             const CenterlineOptions& opt = {}) {
  if (skel.voxels.empty()) throw Error(ErrorCode::EmptyMask, "empty skeleton");
  if (!(skel.geometry == mask.geometry()))
    throw Error(ErrorCode::InvalidConfig, "skeleton and mask geometry differ");
  if (!(opt.sample_step > 0.0)) throw Error(ErrorCode::InvalidConfig, "sample_step must be > 0");
  const GridGeometry& g = skel.geometry;
  detail::PaddedGrid grid(g);
  const std::size_t n = skel.voxels.size();
  std::map<std::ptrdiff_t, int> id_of;
  std::vector<std::ptrdiff_t> padded(n);
  for (std::size_t i = 0; i < n; ++i) {
    padded[i] = grid.padded(skel.voxels[i]);
    grid[padded[i]] = 1;
    id_of[padded[i]] = static_cast<int>(i);
  }
  auto farthest = [&](int src, std::vector<int>& parent) {
    std::vector<double> dist(n, std::numeric_limits<double>::infinity());
    parent.assign(n, -1);
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    dist[src] = 0.0;
    pq.push({0.0, src});
    while (!pq.empty()) {
      const auto [d, c] = pq.top();
      pq.pop();
      if (d > dist[c]) continue;
      for (int k = 0; k < 27; ++k) {
        if (k == 13) continue;
        const auto q = padded[c] + grid.offset(k);
        if (!grid[q]) continue;
        const int m = id_of.at(q);
        const double nd = d + distance(g.center(skel.voxels[c]), g.center(skel.voxels[m]));
        if (nd < dist[m]) {
          dist[m] = nd;
          parent[m] = c;
          pq.push({nd, m});
        }
      }
    }
    int best = src;
    for (std::size_t i = 0; i < n; ++i)
      if (std::isfinite(dist[i]) && dist[i] > dist[best]) best = static_cast<int>(i);
    return best;
  };
  std::vector<int> parent;
  const int a = farthest(0, parent);
  const int b = farthest(a, parent);
  Polyline pts;
  for (int c = b; c >= 0; c = parent[c]) pts.push_back(g.center(skel.voxels[c]));
  if (pts.size() < 2) throw Error(ErrorCode::CenterlineTooShort, "skeleton path has fewer than two voxels");
  if (pts.front().z < pts.back().z) std::reverse(pts.begin(), pts.end());
  pts = detail::smooth_pinned(pts, 2);
  detail::extend_to_lumen_end(pts, mask, opt.junction_fit_length);
  std::reverse(pts.begin(), pts.end());
  detail::extend_to_lumen_end(pts, mask, opt.junction_fit_length);
  std::reverse(pts.begin(), pts.end());
  CenterlineSet cl;
  cl.sample_step = opt.sample_step;
  cl.trunk = resample_uniform(pts, opt.sample_step);
  cl.bifurcation_point = cl.trunk.back();
  return cl;
}

}  // namespace stentfit
