#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "stentfit/error.hpp"
#include "stentfit/volume.hpp"

namespace stentfit {

struct IntensityWindow {
  double lower = 0.0;
  double upper = 0.0;
  bool accepts(double v) const { return v >= lower && v <= upper; }
};

enum class Connectivity { Six = 6, TwentySix = 26 };

namespace detail {

inline const std::vector<Index3>& neighbor_offsets(Connectivity c) {
  static const std::vector<Index3> six{{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  static const std::vector<Index3> twenty_six = [] {
    std::vector<Index3> out;
    for (int k = -1; k <= 1; ++k)
      for (int j = -1; j <= 1; ++j)
        for (int i = -1; i <= 1; ++i)
          if (i || j || k) out.push_back({i, j, k});
    return out;
  }();
  return c == Connectivity::Six ? six : twenty_six;
}

}  // namespace detail

/// Connected-component labels (0 = background, components numbered from 1 in
/// order of their smallest linear voxel index).
struct ComponentLabels {
  std::vector<std::uint32_t> labels;
  std::vector<std::size_t> sizes;  // sizes[label - 1]
  std::size_t count() const { return sizes.size(); }
};

inline ComponentLabels label_components(const BinaryMask& mask, Connectivity conn) {
  const GridGeometry& g = mask.geometry();
  ComponentLabels out;
  out.labels.assign(mask.size(), 0);
  std::vector<std::size_t> stack;
  const auto& offsets = detail::neighbor_offsets(conn);
  for (std::size_t start = 0; start < mask.size(); ++start) {
    if (!mask[start] || out.labels[start]) continue;
    const auto label = static_cast<std::uint32_t>(out.sizes.size() + 1);
    std::size_t size = 0;
    out.labels[start] = label;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t cur = stack.back();
      stack.pop_back();
      ++size;
      const Index3 v = g.unravel(cur);
      for (const auto& o : offsets) {
        const Index3 n{v.i + o.i, v.j + o.j, v.k + o.k};
        if (!g.contains(n)) continue;
        const std::size_t ni = g.linear(n);
        if (mask[ni] && !out.labels[ni]) {
          out.labels[ni] = label;
          stack.push_back(ni);
        }
      }
    }
    out.sizes.push_back(size);
  }
  return out;
}

/// 6-connected region of in-window voxels containing the voxel under `seed_mm`.
inline BinaryMask region_grow(const VoxelVolume& vol, const Vec3& seed_mm, const IntensityWindow& window) {
  const GridGeometry& g = vol.geometry();
  if (!(window.lower <= window.upper)) throw Error(ErrorCode::InvalidConfig, "window lower > upper");
  const auto seed = g.voxel_of(seed_mm);
  if (!seed) throw Error(ErrorCode::OutOfBounds, "seed point outside the volume");
  BinaryMask mask(g, 0);
  const std::size_t s = g.linear(*seed);
  if (!window.accepts(vol[s])) throw Error(ErrorCode::SeedOutsideWindow, "seed voxel intensity outside window");
  std::vector<std::size_t> stack{s};
  mask[s] = 1;
  const auto& offsets = detail::neighbor_offsets(Connectivity::Six);
  while (!stack.empty()) {
    const std::size_t cur = stack.back();
    stack.pop_back();
    const Index3 v = g.unravel(cur);
    for (const auto& o : offsets) {
      const Index3 n{v.i + o.i, v.j + o.j, v.k + o.k};
      if (!g.contains(n)) continue;
      const std::size_t ni = g.linear(n);
      if (!mask[ni] && window.accepts(vol[ni])) {
        mask[ni] = 1;
        stack.push_back(ni);
      }
    }
  }
  return mask;
}

/// Keeps the largest 6-connected component; ties go to the component with the
/// smallest minimum linear index.
inline BinaryMask largest_component_cleanup(const BinaryMask& mask) {
  const auto comps = label_components(mask, Connectivity::Six);
  if (comps.count() == 0) throw Error(ErrorCode::EmptyMask, "mask has no foreground voxels");
  std::uint32_t best = 1;
  for (std::uint32_t l = 2; l <= comps.count(); ++l)
    if (comps.sizes[l - 1] > comps.sizes[best - 1]) best = l;
  BinaryMask out(mask.geometry(), 0);
  for (std::size_t i = 0; i < mask.size(); ++i) out[i] = comps.labels[i] == best ? 1 : 0;
  return out;
}

}  // namespace stentfit
