#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "stentfit/error.hpp"
#include "stentfit/volume.hpp"

namespace stentfit {

/// Distance in mm from each voxel center to the nearest inside voxel center
/// (0 on inside voxels).
using DistanceField = Volume<double>;

namespace detail {

// Lower envelope of parabolas (Felzenszwalb & Huttenlocher) along one line:
// out[q] = min_p f[p] + (h (q - p))^2. Infinite samples are skipped.
inline void edt_line(const std::vector<double>& f, std::vector<double>& out, double h,
                     std::vector<int>& v, std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  const double inf = std::numeric_limits<double>::infinity();
  const double h2 = h * h;
  v.resize(n);
  z.resize(n + 1);
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == inf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
      continue;
    }
    double s = 0.0;
    while (true) {
      const int p = v[k];
      s = ((f[q] + h2 * q * q) - (f[p] + h2 * static_cast<double>(p) * p)) / (2.0 * h2 * (q - p));
      if (s > z[k]) break;
      --k;  // z[0] = -inf stops this at k = 0
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  if (k < 0) {
    out.assign(n, inf);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[j + 1] < q) ++j;
    const double d = q - v[j];
    out[q] = f[v[j]] + h2 * d * d;
  }
}

}  // namespace detail

/// Exact Euclidean distance transform with anisotropic spacing, computed as
/// three separable squared-distance passes.
inline DistanceField edt(const BinaryMask& mask) {
  const GridGeometry& g = mask.geometry();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> sq(mask.size());
  bool any = false;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    sq[i] = mask[i] ? 0.0 : inf;
    any = any || mask[i];
  }
  if (!any) throw Error(ErrorCode::EmptyMask, "distance transform needs at least one inside voxel");

  const std::array<int, 3> n = g.dims;
  std::vector<double> line, out;
  std::vector<int> v;
  std::vector<double> z;
  for (int axis = 0; axis < 3; ++axis) {
    const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
    line.resize(n[axis]);
    out.resize(n[axis]);
    for (int u = 0; u < n[a1]; ++u) {
      for (int w = 0; w < n[a2]; ++w) {
        std::array<int, 3> idx{};
        idx[a1] = u;
        idx[a2] = w;
        for (int q = 0; q < n[axis]; ++q) {
          idx[axis] = q;
          line[q] = sq[g.linear(idx[0], idx[1], idx[2])];
        }
        detail::edt_line(line, out, g.spacing[axis], v, z);
        for (int q = 0; q < n[axis]; ++q) {
          idx[axis] = q;
          sq[g.linear(idx[0], idx[1], idx[2])] = out[q];
        }
      }
    }
  }
  for (auto& d : sq) d = std::sqrt(d);
  return DistanceField(g, std::move(sq));
}

/// Gradient of the trilinearly interpolated field by central differences with
/// step h = min spacing. Every probe p +- h e_i must lie in the voxel-center hull.
inline Vec3 grad_d(const DistanceField& field, const Vec3& p) {
  const GridGeometry& g = field.geometry();
  const double h = g.min_spacing();
  Vec3 grad;
  for (int a = 0; a < 3; ++a) {
    Vec3 lo = p, hi = p;
    lo[a] -= h;
    hi[a] += h;
    if (!in_sample_hull(g, lo) || !in_sample_hull(g, hi))
      throw Error(ErrorCode::OutOfBounds, "gradient probe leaves the distance field");
    grad[a] = (sample_trilinear(field, hi) - sample_trilinear(field, lo)) / (2.0 * h);
  }
  return grad;
}

/// Largest distance from an inside voxel center to the nearest outside voxel
/// center; a lumen radius hint for the expansion configuration.
inline double max_inscribed_radius(const BinaryMask& mask) {
  BinaryMask outside(mask.geometry());
  bool any_inside = false;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    outside[i] = mask[i] ? 0 : 1;
    any_inside = any_inside || mask[i];
  }
  if (!any_inside) throw Error(ErrorCode::EmptyMask, "no inside voxels");
  if (count_true(outside) == 0) throw Error(ErrorCode::InvalidConfig, "mask has no outside voxels");
  const DistanceField d = edt(outside);
  double best = 0.0;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) best = std::max(best, d[i]);
  return best;
}

}  // namespace stentfit
