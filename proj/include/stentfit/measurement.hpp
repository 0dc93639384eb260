#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "stentfit/anatomy.hpp"
#include "stentfit/centerline.hpp"
#include "stentfit/error.hpp"
#include "stentfit/stent_model.hpp"

namespace stentfit {

/// Per-ring (arc length mm, diameter mm) samples of one tube.
using DiameterProfile = std::vector<std::pair<double, double>>;

struct MeasurementReport {
  Diameters diameters;
  DiameterProfile trunk_profile;
  DiameterProfile left_profile;
  DiameterProfile right_profile;
  std::vector<std::string> covered_ostia;
};

/// Twice the mean distance of the ring's vertices from their centroid.
inline double ring_diameter(const StentMesh& mesh, Segment seg, int ring) {
  const auto& g = mesh.grid;
  if (ring < 0 || ring >= g.rings(seg)) throw Error(ErrorCode::InvalidGrid, "ring index out of range");
  Vec3 c{};
  for (int t = 0; t < g.n_t(); ++t) c += g.vertices[g.index(seg, ring, t)];
  c = c / static_cast<double>(g.n_t());
  double sum = 0.0;
  for (int t = 0; t < g.n_t(); ++t) sum += distance(g.vertices[g.index(seg, ring, t)], c);
  return 2.0 * sum / g.n_t();
}

/// Diameter profile over the rings, keyed by their construction arc length.
inline DiameterProfile diameter_profile(const StentMesh& mesh, Segment seg) {
  DiameterProfile out;
  const auto& g = mesh.grid;
  for (int s = 0; s < g.rings(seg); ++s)
    out.emplace_back(g.ring_arclength[static_cast<std::size_t>(g.ring_id(seg, s))], ring_diameter(mesh, seg, s));
  return out;
}

namespace detail {

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double profile_at(const DiameterProfile& p, double s) {
  if (s <= p.front().first) return p.front().second;
  if (s >= p.back().first) return p.back().second;
  for (std::size_t i = 1; i < p.size(); ++i)
    if (s <= p[i].first) {
      const double f = (s - p[i - 1].first) / (p[i].first - p[i - 1].first);
      return p[i - 1].second + f * (p[i].second - p[i - 1].second);
    }
  return p.back().second;
}

inline double limb_middle_median(const DiameterProfile& p) {
  const std::size_t n = p.size();
  std::size_t lo = n / 3, hi = (2 * n + 2) / 3;
  if (hi <= lo) hi = lo + 1;
  std::vector<double> d;
  for (std::size_t i = lo; i < std::min(hi, n); ++i) d.push_back(p[i].second);
  return median(d);
}

}  // namespace detail

/// Reads diameters (a)-(f) off an expanded mesh. Landmark arc lengths refer
/// to `cl.trunk`, on which the mesh rings were placed.
inline MeasurementReport measure(const StentMesh& expanded, const CenterlineSet& cl, const Landmarks& lm) {
  const double len = polyline_length(cl.trunk);
  auto in_range = [&](double s) { return std::isfinite(s) && s >= 0.0 && s <= len; };
  if (!in_range(lm.proximal_site) || !in_range(lm.proximal_site + kInferiorOffsetMm))
    throw Error(ErrorCode::LandmarkOutOfRange, "proximal site or the point 15 mm below it is off the trunk");
  if (!in_range(lm.aneurysm_start) || !in_range(lm.aneurysm_end) || !in_range(lm.neck_start) ||
      !in_range(lm.neck_end) || lm.aneurysm_start > lm.aneurysm_end || lm.neck_start > lm.neck_end)
    throw Error(ErrorCode::LandmarkOutOfRange, "landmark region off the trunk or reversed");
  if (!expanded.grid.has_limbs()) throw Error(ErrorCode::RegionEmpty, "mesh has no limbs to measure");

  MeasurementReport rep;
  rep.trunk_profile = diameter_profile(expanded, Segment::Trunk);
  rep.left_profile = diameter_profile(expanded, Segment::Left);
  rep.right_profile = diameter_profile(expanded, Segment::Right);
  const auto& tp = rep.trunk_profile;

  auto nearest = std::min_element(tp.begin(), tp.end(), [&](const auto& x, const auto& y) {
    return std::abs(x.first - lm.proximal_site) < std::abs(y.first - lm.proximal_site);
  });
  rep.diameters.a = nearest->second;
  rep.diameters.b = detail::profile_at(tp, lm.proximal_site + kInferiorOffsetMm);

  auto region = [&](double lo, double hi, const char* what) {
    std::vector<double> d;
    for (const auto& [s, dia] : tp)
      if (s >= lo && s <= hi) d.push_back(dia);
    if (d.empty()) throw Error(ErrorCode::RegionEmpty, std::string("no ring inside the ") + what);
    return d;
  };
  const auto aneurysm = region(lm.aneurysm_start, lm.aneurysm_end, "aneurysm region");
  const auto neck = region(lm.neck_start, lm.neck_end, "distal neck region");
  rep.diameters.c = *std::max_element(aneurysm.begin(), aneurysm.end());
  rep.diameters.d = *std::min_element(neck.begin(), neck.end());
  rep.diameters.e = detail::limb_middle_median(rep.right_profile);
  rep.diameters.f = detail::limb_middle_median(rep.left_profile);
  return rep;
}

/// Labels (sorted) of markers with a stent quad centroid within
/// disc_radius + tolerance of the marker point.
inline std::vector<std::string> ostium_coverage(const StentMesh& expanded, const std::vector<OstiumMarker>& markers,
                                                double tolerance) {
  const auto& g = expanded.grid;
  std::vector<Vec3> centroids;
  for (Segment seg : kSegments)
    for (int s = 0; s + 1 < g.rings(seg); ++s)
      for (int t = 0; t < g.n_t(); ++t) {
        const Vec3 q = g.vertices[g.index(seg, s, t)] + g.vertices[g.index(seg, s, t + 1)] +
                       g.vertices[g.index(seg, s + 1, t + 1)] + g.vertices[g.index(seg, s + 1, t)];
        centroids.push_back(q / 4.0);
      }
  std::vector<std::string> covered;
  for (const auto& m : markers) {
    const double reach = m.disc_radius + tolerance;
    for (const auto& c : centroids)
      if (distance(c, m.point) <= reach) {
        covered.push_back(m.label);
        break;
      }
  }
  std::sort(covered.begin(), covered.end());
  return covered;
}

}  // namespace stentfit
