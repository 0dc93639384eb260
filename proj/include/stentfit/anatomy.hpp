#pragma once

#include <string>
#include <vector>

#include "stentfit/vec3.hpp"

namespace stentfit {

/// Arc-length positions (mm along the trunk centerline, proximal end = 0) that
/// define where the stent-selection diameters are read.
struct Landmarks {
  double proximal_site = 0.0;
  double aneurysm_start = 0.0;
  double aneurysm_end = 0.0;
  double neck_start = 0.0;
  double neck_end = 0.0;
};

/// The six stent-selection diameters in mm:
/// a = aorta at the proximal implantation site, b = aorta 15 mm below it,
/// c = maximum aneurysm, d = minimum distal neck, e = right common iliac,
/// f = left common iliac.
struct Diameters {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  double d = 0.0;
  double e = 0.0;
  double f = 0.0;
};

/// Branch-artery opening on the vessel wall that the stent must not cover.
struct OstiumMarker {
  Vec3 point;
  double disc_radius = 0.0;
  std::string label;
};

inline constexpr double kInferiorOffsetMm = 15.0;

}  // namespace stentfit
