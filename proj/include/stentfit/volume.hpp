#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "stentfit/error.hpp"
#include "stentfit/format.hpp"
#include "stentfit/vec3.hpp"

namespace stentfit {

struct Index3 {
  int i = 0;
  int j = 0;
  int k = 0;
  friend constexpr bool operator==(const Index3&, const Index3&) = default;
};

/// Sampling lattice shared by every volume-like type. Voxel (i,j,k) has its
/// center at origin + ((i+0.5)*sx, (j+0.5)*sy, (k+0.5)*sz); storage is x-fastest.
struct GridGeometry {
  std::array<int, 3> dims{0, 0, 0};
  Vec3 spacing{1.0, 1.0, 1.0};
  Vec3 origin{};

  std::size_t size() const {
    return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) *
           static_cast<std::size_t>(dims[2]);
  }

  bool contains(int i, int j, int k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < dims[0] && j < dims[1] && k < dims[2];
  }
  bool contains(const Index3& v) const { return contains(v.i, v.j, v.k); }

  std::size_t linear(int i, int j, int k) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(dims[0]) *
               (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(k));
  }
  std::size_t linear(const Index3& v) const { return linear(v.i, v.j, v.k); }

  Index3 unravel(std::size_t idx) const {
    const auto nx = static_cast<std::size_t>(dims[0]);
    const auto ny = static_cast<std::size_t>(dims[1]);
    return {static_cast<int>(idx % nx), static_cast<int>((idx / nx) % ny), static_cast<int>(idx / (nx * ny))};
  }

  Vec3 center(int i, int j, int k) const {
    return {origin.x + (i + 0.5) * spacing.x, origin.y + (j + 0.5) * spacing.y, origin.z + (k + 0.5) * spacing.z};
  }
  Vec3 center(const Index3& v) const { return center(v.i, v.j, v.k); }
  Vec3 center(std::size_t idx) const { return center(unravel(idx)); }

  /// Voxel whose cell contains p, if any.
  std::optional<Index3> voxel_of(const Vec3& p) const {
    Index3 v{static_cast<int>(std::floor((p.x - origin.x) / spacing.x)),
             static_cast<int>(std::floor((p.y - origin.y) / spacing.y)),
             static_cast<int>(std::floor((p.z - origin.z) / spacing.z))};
    if (!contains(v)) return std::nullopt;
    return v;
  }

  Vec3 extent() const { return {dims[0] * spacing.x, dims[1] * spacing.y, dims[2] * spacing.z}; }
  double min_spacing() const { return std::min({spacing.x, spacing.y, spacing.z}); }
  double voxel_diagonal() const { return norm(spacing); }

  void validate() const {
    for (int a = 0; a < 3; ++a) {
      if (dims[a] <= 0) throw Error(ErrorCode::InvalidSpec, "dims must be positive");
      if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a]))
        throw Error(ErrorCode::InvalidSpec, "spacing must be strictly positive");
    }
  }

  friend bool operator==(const GridGeometry&, const GridGeometry&) = default;
};

/// Dense scalar grid. VoxelVolume, BinaryMask and DistanceField are instances.
template <class T>
class Volume {
 public:
  using value_type = T;

  Volume() = default;
  explicit Volume(GridGeometry geometry, T fill = T{}) : geometry_(geometry) {
    geometry_.validate();
    data_.assign(geometry_.size(), fill);
  }
  Volume(GridGeometry geometry, std::vector<T> data) : geometry_(geometry), data_(std::move(data)) {
    geometry_.validate();
    if (data_.size() != geometry_.size())
      throw Error(ErrorCode::SizeMismatch, "data length does not match dims");
  }

  const GridGeometry& geometry() const { return geometry_; }
  const std::array<int, 3>& dims() const { return geometry_.dims; }
  std::size_t size() const { return data_.size(); }

  T& operator[](std::size_t idx) { return data_[idx]; }
  const T& operator[](std::size_t idx) const { return data_[idx]; }
  T& at(int i, int j, int k) { return data_[geometry_.linear(i, j, k)]; }
  const T& at(int i, int j, int k) const { return data_[geometry_.linear(i, j, k)]; }
  const T& at(const Index3& v) const { return data_[geometry_.linear(v)]; }
  T& at(const Index3& v) { return data_[geometry_.linear(v)]; }

  const std::vector<T>& data() const { return data_; }
  std::vector<T>& data() { return data_; }

  friend bool operator==(const Volume&, const Volume&) = default;

 private:
  GridGeometry geometry_;
  std::vector<T> data_;
};

using VoxelVolume = Volume<float>;
using BinaryMask = Volume<std::uint8_t>;

inline std::size_t count_true(const BinaryMask& mask) {
  std::size_t n = 0;
  for (auto b : mask.data()) n += b ? 1 : 0;
  return n;
}

/// Trilinear interpolation of voxel-center values. Throws OutOfBounds outside
/// the convex hull of voxel centers.
template <class T>
double sample_trilinear(const Volume<T>& vol, const Vec3& p) {
  const GridGeometry& g = vol.geometry();
  constexpr double kSlack = 1e-9;
  std::array<int, 3> base{};
  std::array<double, 3> frac{};
  for (int a = 0; a < 3; ++a) {
    double u = (p[a] - g.origin[a]) / g.spacing[a] - 0.5;
    const double hi = static_cast<double>(g.dims[a] - 1);
    if (!(u >= -kSlack && u <= hi + kSlack))
      throw Error(ErrorCode::OutOfBounds, "sample point outside voxel-center hull");
    u = std::clamp(u, 0.0, hi);
    int i0 = static_cast<int>(std::floor(u));
    if (i0 >= g.dims[a] - 1) i0 = std::max(0, g.dims[a] - 2);
    base[a] = i0;
    frac[a] = g.dims[a] == 1 ? 0.0 : u - i0;
  }
  double acc = 0.0;
  for (int c = 0; c < 8; ++c) {
    const int di = c & 1, dj = (c >> 1) & 1, dk = (c >> 2) & 1;
    const double w = (di ? frac[0] : 1.0 - frac[0]) * (dj ? frac[1] : 1.0 - frac[1]) *
                     (dk ? frac[2] : 1.0 - frac[2]);
    if (w == 0.0) continue;
    const int i = std::min(base[0] + di, g.dims[0] - 1);
    const int j = std::min(base[1] + dj, g.dims[1] - 1);
    const int k = std::min(base[2] + dk, g.dims[2] - 1);
    acc += w * static_cast<double>(vol.at(i, j, k));
  }
  return acc;
}

/// True when p lies in the hull where sample_trilinear is defined.
inline bool in_sample_hull(const GridGeometry& g, const Vec3& p) {
  for (int a = 0; a < 3; ++a) {
    const double u = (p[a] - g.origin[a]) / g.spacing[a] - 0.5;
    if (!(u >= -1e-9 && u <= g.dims[a] - 1 + 1e-9)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// .svh / .svr volume files

namespace detail {

template <class T>
constexpr const char* dtype_name() {
  if constexpr (std::is_same_v<T, std::uint8_t>) return "uint8";
  else return "float32";
}

inline void append_le32(std::string& out, std::uint32_t bits) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xffu));
}

inline std::uint32_t read_le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::filesystem::path raw_path_for(const std::filesystem::path& header) {
  auto raw = header;
  raw.replace_extension(".svr");
  return raw;
}

inline std::string triple(const Vec3& v) {
  return format_double(v.x) + " " + format_double(v.y) + " " + format_double(v.z);
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct VolumeHeader {
  GridGeometry geometry;
  std::string dtype;
  std::string data;
};

inline VolumeHeader parse_header(const std::string& text, const std::string& where) {
  std::map<std::string, std::string> kv;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    const auto body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto colon = body.find(':');
    if (colon == std::string_view::npos)
      throw Error(ErrorCode::MalformedHeader, where + ": line without ':' separator");
    kv[std::string(trim(body.substr(0, colon)))] = std::string(trim(body.substr(colon + 1)));
  }
  auto require = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw Error(ErrorCode::MalformedHeader, where + ": missing key '" + key + "'");
    return it->second;
  };
  auto parse_triple = [&](const char* key) {
    std::istringstream ss(require(key));
    std::array<double, 3> v{};
    for (auto& c : v)
      if (!(ss >> c)) throw Error(ErrorCode::MalformedHeader, where + ": invalid '" + key + "'");
    std::string rest;
    if (ss >> rest) throw Error(ErrorCode::MalformedHeader, where + ": trailing text in '" + key + "'");
    return v;
  };

  VolumeHeader h;
  const auto d = parse_triple("dims");
  for (int a = 0; a < 3; ++a) {
    if (d[a] < 1 || d[a] != std::floor(d[a]) || d[a] > 1e5)
      throw Error(ErrorCode::MalformedHeader, where + ": dims must be positive integers");
    h.geometry.dims[a] = static_cast<int>(d[a]);
  }
  const auto s = parse_triple("spacing");
  const auto o = parse_triple("origin");
  h.geometry.spacing = {s[0], s[1], s[2]};
  h.geometry.origin = {o[0], o[1], o[2]};
  for (int a = 0; a < 3; ++a) {
    if (!(s[a] > 0.0) || !std::isfinite(s[a]))
      throw Error(ErrorCode::MalformedHeader, where + ": spacing must be strictly positive");
    if (!std::isfinite(o[a])) throw Error(ErrorCode::MalformedHeader, where + ": origin must be finite");
  }
  h.dtype = require("dtype");
  if (h.dtype != "float32" && h.dtype != "uint8")
    throw Error(ErrorCode::MalformedHeader, where + ": unsupported dtype '" + h.dtype + "'");
  h.data = require("data");
  if (h.data.empty()) throw Error(ErrorCode::MalformedHeader, where + ": empty data filename");
  return h;
}

}  // namespace detail

/// Writes `<path>` (.svh text header) and the sibling .svr payload. Float and
/// double volumes are stored as float32, masks as uint8.
template <class T>
void save_volume(const Volume<T>& vol, const std::filesystem::path& path) {
  const auto raw = detail::raw_path_for(path);
  const GridGeometry& g = vol.geometry();
  std::string header;
  header += "dims: " + std::to_string(g.dims[0]) + " " + std::to_string(g.dims[1]) + " " +
            std::to_string(g.dims[2]) + "\n";
  header += "spacing: " + detail::triple(g.spacing) + "\n";
  header += "origin: " + detail::triple(g.origin) + "\n";
  header += std::string("dtype: ") + detail::dtype_name<T>() + "\n";
  header += "data: " + raw.filename().string() + "\n";

  std::string payload;
  if constexpr (std::is_same_v<T, std::uint8_t>) {
    payload.reserve(vol.size());
    for (auto v : vol.data()) payload.push_back(static_cast<char>(v ? 1 : 0));
  } else {
    payload.reserve(vol.size() * 4);
    for (auto v : vol.data()) detail::append_le32(payload, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  detail::write_file(path, header);
  detail::write_file(raw, payload);
}

/// Reads a volume file; T must match the stored dtype (float for float32,
/// std::uint8_t for uint8).
template <class T = float>
Volume<T> load_volume_as(const std::filesystem::path& path) {
  const auto h = detail::parse_header(detail::read_file(path), path.string());
  if (h.dtype != detail::dtype_name<T>())
    throw Error(ErrorCode::MalformedHeader, path.string() + ": dtype " + h.dtype + " not expected here");
  const auto raw = detail::read_file(path.parent_path() / h.data);
  const std::size_t n = h.geometry.size();
  const std::size_t elem = std::is_same_v<T, std::uint8_t> ? 1 : 4;
  if (raw.size() != n * elem)
    throw Error(ErrorCode::SizeMismatch, path.string() + ": payload has " + std::to_string(raw.size()) +
                                             " bytes, header implies " + std::to_string(n * elem));
  std::vector<T> data(n);
  const auto* bytes = reinterpret_cast<const unsigned char*>(raw.data());
  for (std::size_t i = 0; i < n; ++i) {
    if constexpr (std::is_same_v<T, std::uint8_t>) data[i] = bytes[i] ? 1 : 0;
    else data[i] = static_cast<T>(std::bit_cast<float>(detail::read_le32(bytes + 4 * i)));
  }
  return Volume<T>(h.geometry, std::move(data));
}

inline VoxelVolume load_volume(const std::filesystem::path& path) { return load_volume_as<float>(path); }
inline BinaryMask load_mask(const std::filesystem::path& path) { return load_volume_as<std::uint8_t>(path); }

}  // namespace stentfit
