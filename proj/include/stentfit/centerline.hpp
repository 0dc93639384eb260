#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "stentfit/error.hpp"
#include "stentfit/vec3.hpp"

namespace stentfit {

using Polyline = std::vector<Vec3>;

/// Trunk ordered proximal -> bifurcation, limbs ordered bifurcation -> distal.
/// trunk.back(), left_limb.front() and right_limb.front() equal bifurcation_point.
struct CenterlineSet {
  Polyline trunk;
  Polyline left_limb;
  Polyline right_limb;
  Vec3 bifurcation_point;
  double sample_step = 1.0;
};

inline double polyline_length(const Polyline& line) {
  double len = 0.0;
  for (std::size_t i = 1; i < line.size(); ++i) len += distance(line[i - 1], line[i]);
  return len;
}

/// Point at arc length s (clamped to the polyline extent).
inline Vec3 point_at(const Polyline& line, double s) {
  if (line.empty()) throw Error(ErrorCode::CenterlineTooShort, "empty polyline");
  if (line.size() == 1 || s <= 0.0) return line.front();
  double acc = 0.0;
  for (std::size_t i = 1; i < line.size(); ++i) {
    const double seg = distance(line[i - 1], line[i]);
    if (acc + seg >= s && seg > 0.0) return line[i - 1] + (line[i] - line[i - 1]) * ((s - acc) / seg);
    acc += seg;
  }
  return line.back();
}

/// Unit tangent at arc length s, from a chord of +-half_window around s.
inline Vec3 tangent_at(const Polyline& line, double s, double half_window) {
  const double len = polyline_length(line);
  const double lo = std::max(0.0, s - half_window);
  const double hi = std::min(len, s + half_window);
  Vec3 t = normalized(point_at(line, hi) - point_at(line, lo));
  if (norm(t) == 0.0 && line.size() >= 2) t = normalized(line.back() - line.front());
  return t;
}

/// Arc length of the point of the polyline closest to p.
inline double project_arclength(const Polyline& line, const Vec3& p) {
  double best = std::numeric_limits<double>::infinity();
  double best_s = 0.0;
  double acc = 0.0;
  for (std::size_t i = 1; i < line.size(); ++i) {
    const Vec3 ab = line[i] - line[i - 1];
    const double len2 = dot(ab, ab);
    double u = len2 > 0.0 ? std::clamp(dot(p - line[i - 1], ab) / len2, 0.0, 1.0) : 0.0;
    const double d = distance(p, line[i - 1] + ab * u);
    if (d < best) {
      best = d;
      best_s = acc + u * std::sqrt(len2);
    }
    acc += std::sqrt(len2);
  }
  return best_s;
}

inline double distance_to_polyline(const Polyline& line, const Vec3& p) {
  if (line.size() == 1) return distance(p, line.front());
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < line.size(); ++i) best = std::min(best, distance_to_segment(p, line[i - 1], line[i]));
  return best;
}

/// Walks the polyline from its first point emitting points exactly `step`
/// apart in Euclidean distance (sphere/segment intersection). The leftover
/// tail shorter than one step is dropped.
inline Polyline resample_uniform(const Polyline& line, double step) {
  Polyline out;
  if (line.empty()) return out;
  out.push_back(line.front());
  Vec3 cur = line.front();
  std::size_t seg = 1;
  double seg_u = 0.0;  // parameter of cur within segment seg-1 -> seg
  while (seg < line.size()) {
    const Vec3 a = line[seg - 1];
    const Vec3 d = line[seg] - a;
    const double dd = dot(d, d);
    if (dd == 0.0) {
      ++seg;
      seg_u = 0.0;
      continue;
    }
    // |a + u d - cur| = step, u >= seg_u
    const Vec3 f = a - cur;
    const double b = 2.0 * dot(f, d);
    const double c = dot(f, f) - step * step;
    const double disc = b * b - 4.0 * dd * c;
    double u = -1.0;
    if (disc >= 0.0) {
      const double root = (-b + std::sqrt(disc)) / (2.0 * dd);
      if (root >= seg_u - 1e-12) u = root;
    }
    if (u >= 0.0 && u <= 1.0) {
      cur = a + d * u;
      out.push_back(cur);
      seg_u = u;
    } else {
      ++seg;
      seg_u = 0.0;
    }
  }
  return out;
}

}  // namespace stentfit
