#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "stentfit/anatomy.hpp"
#include "stentfit/centerline.hpp"
#include "stentfit/error.hpp"
#include "stentfit/volume.hpp"

namespace stentfit {

/// Marker placement on the trunk wall: arc length below the proximal end and
/// angle around the axis (0 deg = +x, 90 deg = +y). Either this or an
/// absolute point is given.
struct MarkerPlacement {
  std::optional<Vec3> point;
  double arclength = 0.0;
  double angle_deg = 0.0;
  double disc_radius = 0.0;
  std::string label;
};

/// Parameters of the synthetic aorto-iliac phantom. Lengths in mm.
struct PhantomSpec {
  double trunk_radius = 9.0;
  double trunk_length = 70.0;
  double aneurysm_peak_radius = 25.0;
  double aneurysm_center = 32.0;
  double aneurysm_width = 8.0;
  double distal_neck_radius = 8.0;
  double limb_radius = 6.0;
  double limb_length = 45.0;
  double limb_half_angle = 30.0;  // degrees
  double inside_intensity = 100.0;
  double outside_intensity = 0.0;
  double noise_sigma = 0.0;
  std::uint64_t noise_seed = 0;
  std::vector<MarkerPlacement> markers;
  std::optional<Landmarks> landmarks;

  void validate() const {
    auto positive = [](double v, const char* what) {
      if (!(v > 0.0) || !std::isfinite(v)) throw Error(ErrorCode::InvalidSpec, std::string(what) + " must be > 0");
    };
    positive(trunk_radius, "trunk_radius");
    positive(trunk_length, "trunk_length");
    positive(aneurysm_peak_radius, "aneurysm_peak_radius");
    positive(aneurysm_width, "aneurysm_width");
    positive(distal_neck_radius, "distal_neck_radius");
    positive(limb_radius, "limb_radius");
    positive(limb_length, "limb_length");
    if (aneurysm_peak_radius < trunk_radius || aneurysm_peak_radius < distal_neck_radius)
      throw Error(ErrorCode::InvalidSpec, "aneurysm_peak_radius must be >= trunk and neck radii");
    if (!(aneurysm_center >= 0.0 && aneurysm_center <= trunk_length))
      throw Error(ErrorCode::InvalidSpec, "aneurysm_center must lie on the trunk");
    if (!(limb_half_angle > 0.0 && limb_half_angle < 90.0))
      throw Error(ErrorCode::InvalidSpec, "limb_half_angle must be in (0, 90) degrees");
    if (!(noise_sigma >= 0.0)) throw Error(ErrorCode::InvalidSpec, "noise_sigma must be >= 0");
    if (inside_intensity == outside_intensity)
      throw Error(ErrorCode::DegenerateContrast, "inside_intensity equals outside_intensity");
    for (const auto& m : markers)
      if (!(m.disc_radius > 0.0)) throw Error(ErrorCode::InvalidSpec, "marker disc_radius must be > 0");
  }
};

struct PhantomTruth {
  CenterlineSet centerlines;
  /// (arc length mm, lumen radius mm) along each truth centerline.
  std::vector<std::pair<double, double>> trunk_profile;
  std::vector<std::pair<double, double>> left_profile;
  std::vector<std::pair<double, double>> right_profile;
  Vec3 bifurcation_point;
  Landmarks landmarks;
  /// Trunk points at the landmark arc lengths, handy for mapping onto an
  /// extracted centerline.
  Vec3 proximal_site_point, aneurysm_start_point, aneurysm_end_point, neck_start_point, neck_end_point;
  Diameters diameters;
  std::vector<OstiumMarker> markers;
};

/// Analytic lumen of the phantom once it has been placed in a grid.
///
/// The trunk is a vertical tube (superior = +z) from its proximal cap down to
/// the bifurcation point B, with radius profile
///   r(s) = base(s) + (peak - base(s)) * exp(-(s - c)^2 / (2 w^2)),
/// base = trunk_radius above the aneurysm center and distal_neck_radius below
/// it. A sphere of radius r(L) closes the trunk at B, and two straight limbs
/// leave B at +-limb_half_angle from -z in the x-z plane. The trunk axis runs
/// through the geometric center of the grid in x and y; the phantom's z span
/// is centered in the grid.
class PhantomGeometry {
 public:
  PhantomGeometry(const PhantomSpec& spec, const GridGeometry& grid) : spec_(spec), grid_(grid) {
    spec_.validate();
    grid_.validate();
    const double theta = spec_.limb_half_angle * std::numbers::pi / 180.0;
    sin_ = std::sin(theta);
    cos_ = std::cos(theta);
    const Vec3 ext = grid_.extent();
    const double end_radius = trunk_radius_at(spec_.trunk_length);
    const double below = std::max(end_radius, spec_.limb_length * cos_ + spec_.limb_radius * sin_);
    const double span = spec_.trunk_length + below;
    const double cx = grid_.origin.x + 0.5 * ext.x;
    const double cy = grid_.origin.y + 0.5 * ext.y;
    const double top = grid_.origin.z + 0.5 * ext.z + 0.5 * span;
    top_ = {cx, cy, top};
    bif_ = {cx, cy, top - spec_.trunk_length};
    left_dir_ = {-sin_, 0.0, -cos_};
    right_dir_ = {sin_, 0.0, -cos_};
    check_fits(end_radius, below);
  }

  const PhantomSpec& spec() const { return spec_; }
  Vec3 proximal_point() const { return top_; }
  Vec3 bifurcation_point() const { return bif_; }
  Vec3 left_direction() const { return left_dir_; }
  Vec3 right_direction() const { return right_dir_; }
  Vec3 left_tip() const { return bif_ + left_dir_ * spec_.limb_length; }
  Vec3 right_tip() const { return bif_ + right_dir_ * spec_.limb_length; }

  /// Lumen radius of the trunk at arc length s below the proximal cap.
  double trunk_radius_at(double s) const {
    const double c = spec_.aneurysm_center;
    const double w = spec_.aneurysm_width;
    const double base = s <= c ? spec_.trunk_radius : spec_.distal_neck_radius;
    const double g = std::exp(-(s - c) * (s - c) / (2.0 * w * w));
    return base + (spec_.aneurysm_peak_radius - base) * g;
  }

  /// Point on the trunk centerline at arc length s.
  Vec3 trunk_point(double s) const { return top_ - Vec3{0.0, 0.0, s}; }

  /// Strict point-in-lumen predicate.
  bool inside(const Vec3& p) const {
    const double L = spec_.trunk_length;
    const double s = top_.z - p.z;
    const double dx = p.x - top_.x;
    const double dy = p.y - top_.y;
    const double rho2 = dx * dx + dy * dy;
    if (s > 0.0 && s <= L) {
      const double r = trunk_radius_at(s);
      if (rho2 < r * r) return true;
    }
    const double rend = trunk_radius_at(L);
    const Vec3 q = p - bif_;
    if (dot(q, q) < rend * rend) return true;
    for (const Vec3& d : {left_dir_, right_dir_}) {
      const double u = dot(q, d);
      if (u < 0.0 || u > spec_.limb_length) continue;
      const Vec3 radial = q - d * u;
      if (dot(radial, radial) < spec_.limb_radius * spec_.limb_radius) return true;
    }
    return false;
  }

  /// Surface point of the trunk wall at arc length s and azimuth angle.
  Vec3 trunk_wall_point(double s, double angle_deg) const {
    const double a = angle_deg * std::numbers::pi / 180.0;
    const double r = trunk_radius_at(s);
    return trunk_point(s) + Vec3{r * std::cos(a), r * std::sin(a), 0.0};
  }

 private:
  void check_fits(double end_radius, double below) const {
    const double r_max = std::max({spec_.trunk_radius, spec_.aneurysm_peak_radius, spec_.distal_neck_radius});
    const double lateral = spec_.limb_length * sin_ + spec_.limb_radius * cos_;
    const Vec3 lo{top_.x - std::max({r_max, lateral, end_radius}), top_.y - std::max(r_max, spec_.limb_radius),
                  bif_.z - below};
    const Vec3 hi{top_.x + std::max({r_max, lateral, end_radius}), top_.y + std::max(r_max, spec_.limb_radius),
                  top_.z};
    for (int a = 0; a < 3; ++a) {
      const double min_ok = grid_.origin[a] + 2.0 * grid_.spacing[a];
      const double max_ok = grid_.origin[a] + grid_.dims[a] * grid_.spacing[a] - 2.0 * grid_.spacing[a];
      if (lo[a] < min_ok || hi[a] > max_ok)
        throw Error(ErrorCode::GeometryOverflow, "phantom does not fit the volume with a 2-voxel margin");
    }
  }

  PhantomSpec spec_;
  GridGeometry grid_;
  double sin_ = 0.0, cos_ = 1.0;
  Vec3 top_, bif_, left_dir_, right_dir_;
};

namespace detail {

inline Landmarks default_landmarks(const PhantomGeometry& geo) {
  const auto& s = geo.spec();
  const double L = s.trunk_length;
  const double c = s.aneurysm_center;
  const double w = s.aneurysm_width;
  Landmarks lm;
  lm.aneurysm_start = std::max(0.0, c - 2.0 * w);
  lm.aneurysm_end = std::min(L, c + 2.0 * w);
  lm.proximal_site = std::max(0.0, lm.aneurysm_start - 12.0);
  lm.neck_start = std::min(L, c + 2.5 * w);
  lm.neck_end = L - 0.5 * geo.trunk_radius_at(L);
  return lm;
}

inline void validate_landmarks(const Landmarks& lm, double trunk_length) {
  const bool ok = lm.proximal_site >= 0.0 && lm.proximal_site < lm.aneurysm_start &&
                  lm.aneurysm_start <= lm.aneurysm_end && lm.aneurysm_end <= lm.neck_start &&
                  lm.neck_start <= lm.neck_end && lm.neck_end <= trunk_length &&
                  lm.proximal_site + kInferiorOffsetMm <= trunk_length;
  if (!ok) throw Error(ErrorCode::LandmarkOutOfRange, "landmarks must be ordered proximal -> distal on the trunk");
}

inline Polyline sample_segment(const Vec3& from, const Vec3& to, double step) {
  const double len = distance(from, to);
  const int n = static_cast<int>(std::floor(len / step + 1e-9));
  Polyline out;
  const Vec3 dir = normalized(to - from);
  for (int i = 0; i <= n; ++i) out.push_back(from + dir * (i * step));
  return out;
}

}  // namespace detail

/// Builds the voxelized phantom and its analytic ground truth.
inline std::pair<VoxelVolume, PhantomTruth> phantom_generate(const PhantomSpec& spec, const GridGeometry& grid) {
  const PhantomGeometry geo(spec, grid);
  VoxelVolume vol(grid, static_cast<float>(spec.outside_intensity));
  std::mt19937_64 rng(spec.noise_seed);
  std::normal_distribution<double> noise(0.0, spec.noise_sigma > 0.0 ? spec.noise_sigma : 1.0);
  for (std::size_t idx = 0; idx < vol.size(); ++idx) {
    double value = geo.inside(grid.center(idx)) ? spec.inside_intensity : spec.outside_intensity;
    if (spec.noise_sigma > 0.0) value += noise(rng);
    vol[idx] = static_cast<float>(value);
  }

  PhantomTruth truth;
  const double step = 1.0;
  const Vec3 bif = geo.bifurcation_point();
  // Sample outward from the bifurcation so every branch ends exactly at B.
  Polyline trunk = detail::sample_segment(bif, geo.proximal_point(), step);
  std::reverse(trunk.begin(), trunk.end());
  truth.centerlines.trunk = trunk;
  truth.centerlines.left_limb = detail::sample_segment(bif, geo.left_tip(), step);
  truth.centerlines.right_limb = detail::sample_segment(bif, geo.right_tip(), step);
  truth.centerlines.bifurcation_point = bif;
  truth.centerlines.sample_step = step;
  truth.bifurcation_point = bif;

  for (const auto& p : truth.centerlines.trunk) {
    const double s = geo.proximal_point().z - p.z;
    truth.trunk_profile.emplace_back(s, geo.trunk_radius_at(s));
  }
  for (std::size_t i = 0; i < truth.centerlines.left_limb.size(); ++i) {
    truth.left_profile.emplace_back(i * step, spec.limb_radius);
    truth.right_profile.emplace_back(i * step, spec.limb_radius);
  }

  truth.landmarks = spec.landmarks ? *spec.landmarks : detail::default_landmarks(geo);
  const Landmarks& lm = truth.landmarks;
  detail::validate_landmarks(lm, spec.trunk_length);
  truth.proximal_site_point = geo.trunk_point(lm.proximal_site);
  truth.aneurysm_start_point = geo.trunk_point(lm.aneurysm_start);
  truth.aneurysm_end_point = geo.trunk_point(lm.aneurysm_end);
  truth.neck_start_point = geo.trunk_point(lm.neck_start);
  truth.neck_end_point = geo.trunk_point(lm.neck_end);

  // r(s) increases up to the aneurysm center and decreases after it, so
  // extrema over an interval sit at its ends or at the clamped center.
  auto r = [&](double s) { return geo.trunk_radius_at(s); };
  Diameters& dm = truth.diameters;
  dm.a = 2.0 * r(lm.proximal_site);
  dm.b = 2.0 * r(lm.proximal_site + kInferiorOffsetMm);
  dm.c = 2.0 * r(std::clamp(spec.aneurysm_center, lm.aneurysm_start, lm.aneurysm_end));
  dm.d = 2.0 * std::min(r(lm.neck_start), r(lm.neck_end));
  dm.e = 2.0 * spec.limb_radius;
  dm.f = 2.0 * spec.limb_radius;

  for (const auto& m : spec.markers) {
    OstiumMarker om;
    om.point = m.point ? *m.point : geo.trunk_wall_point(m.arclength, m.angle_deg);
    om.disc_radius = m.disc_radius;
    om.label = m.label;
    truth.markers.push_back(om);
  }
  return {std::move(vol), std::move(truth)};
}

}  // namespace stentfit
