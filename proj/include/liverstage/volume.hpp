#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace liverstage {

/// 3-D scalar grid with physical spacing and origin. Data is x-fastest.
struct Volume {
  std::array<int, 3> dims{0, 0, 0};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::array<double, 3> origin{0.0, 0.0, 0.0};
  std::vector<float> data;

  Volume() = default;
  Volume(std::array<int, 3> d, std::array<double, 3> sp, std::array<double, 3> org,
         float fill = 0.0f)
      : dims(d), spacing(sp), origin(org),
        data(static_cast<size_t>(d[0]) * d[1] * d[2], fill) {
    validate_geometry();
  }

  size_t voxel_count() const {
    return static_cast<size_t>(dims[0]) * dims[1] * dims[2];
  }

  size_t index(int x, int y, int z) const {
    return static_cast<size_t>(z) * dims[1] * dims[0] +
           static_cast<size_t>(y) * dims[0] + static_cast<size_t>(x);
  }

  float at(int x, int y, int z) const { return data[index(x, y, z)]; }
  float& at(int x, int y, int z) { return data[index(x, y, z)]; }

  bool in_bounds(int x, int y, int z) const {
    return x >= 0 && x < dims[0] && y >= 0 && y < dims[1] && z >= 0 && z < dims[2];
  }

  bool same_geometry(const Volume& o, double tol = 1e-9) const {
    if (dims != o.dims) return false;
    for (int a = 0; a < 3; ++a) {
      if (std::abs(spacing[a] - o.spacing[a]) > tol) return false;
      if (std::abs(origin[a] - o.origin[a]) > tol) return false;
    }
    return true;
  }

  void validate_geometry() const {
    for (int a = 0; a < 3; ++a) {
      if (dims[a] <= 0) throw std::invalid_argument("Volume dims must be positive");
      if (!(spacing[a] > 0.0)) throw std::invalid_argument("Volume spacing must be positive");
    }
  }

  void validate() const {
    validate_geometry();
    if (data.size() != voxel_count())
      throw std::invalid_argument("Volume data length does not match dims");
    for (float v : data)
      if (!std::isfinite(v)) throw std::invalid_argument("Volume contains non-finite values");
  }
};

/// Continuous voxel index of a physical point (axis-aligned geometry).
inline std::array<double, 3> world_to_voxel(const Volume& v, const std::array<double, 3>& p) {
  return {(p[0] - v.origin[0]) / v.spacing[0],
          (p[1] - v.origin[1]) / v.spacing[1],
          (p[2] - v.origin[2]) / v.spacing[2]};
}

inline std::array<double, 3> voxel_to_world(const Volume& v, const std::array<double, 3>& idx) {
  return {v.origin[0] + idx[0] * v.spacing[0],
          v.origin[1] + idx[1] * v.spacing[1],
          v.origin[2] + idx[2] * v.spacing[2]};
}

/// Binary mask sharing the Volume geometry. Values are exactly 0 or 1.
struct Mask {
  std::array<int, 3> dims{0, 0, 0};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::array<double, 3> origin{0.0, 0.0, 0.0};
  std::vector<uint8_t> data;

  Mask() = default;
  Mask(std::array<int, 3> d, std::array<double, 3> sp, std::array<double, 3> org,
       uint8_t fill = 0)
      : dims(d), spacing(sp), origin(org),
        data(static_cast<size_t>(d[0]) * d[1] * d[2], fill) {}

  static Mask like(const Volume& v, uint8_t fill = 0) {
    return Mask(v.dims, v.spacing, v.origin, fill);
  }

  size_t voxel_count() const {
    return static_cast<size_t>(dims[0]) * dims[1] * dims[2];
  }
  size_t index(int x, int y, int z) const {
    return static_cast<size_t>(z) * dims[1] * dims[0] +
           static_cast<size_t>(y) * dims[0] + static_cast<size_t>(x);
  }
  uint8_t at(int x, int y, int z) const { return data[index(x, y, z)]; }
  uint8_t& at(int x, int y, int z) { return data[index(x, y, z)]; }
  bool in_bounds(int x, int y, int z) const {
    return x >= 0 && x < dims[0] && y >= 0 && y < dims[1] && z >= 0 && z < dims[2];
  }

  bool same_geometry(const Mask& o, double tol = 1e-9) const {
    if (dims != o.dims) return false;
    for (int a = 0; a < 3; ++a) {
      if (std::abs(spacing[a] - o.spacing[a]) > tol) return false;
      if (std::abs(origin[a] - o.origin[a]) > tol) return false;
    }
    return true;
  }
  bool matches_volume(const Volume& v, double tol = 1e-9) const {
    if (dims != v.dims) return false;
    for (int a = 0; a < 3; ++a) {
      if (std::abs(spacing[a] - v.spacing[a]) > tol) return false;
      if (std::abs(origin[a] - v.origin[a]) > tol) return false;
    }
    return true;
  }

  size_t count() const {
    size_t n = 0;
    for (uint8_t v : data) n += v;
    return n;
  }
};

enum class ContrastMode { NonContrast, Contrast };

/// Canonical modality order; NonContrast uses the first 3 channels.
const std::vector<std::string>& canonical_modalities();
std::vector<std::string> channels_for_mode(ContrastMode mode);

/// One subject: modality volumes keyed by canonical name, optional mask and stage.
struct Study {
  std::string subject_id;
  std::map<std::string, Volume> modalities;  // keys restricted to canonical names
  std::optional<Mask> mask;
  std::optional<int> stage;
  ContrastMode contrast_mode = ContrastMode::Contrast;

  bool has(const std::string& name) const { return modalities.count(name) > 0; }

  const Volume& ged4() const {
    auto it = modalities.find("GED4");
    if (it == modalities.end())
      throw std::runtime_error("study " + subject_id + " is missing GED4");
    return it->second;
  }

  /// Modalities in canonical order, skipping absent ones.
  std::vector<std::pair<std::string, const Volume*>> ordered_modalities() const;

  void validate() const;
};

}  // namespace liverstage
