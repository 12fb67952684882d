#pragma once

#include <optional>
#include <span>

#include "liverstage/volume.hpp"

namespace liverstage {

/// Binning setup for one patch-local joint histogram. Both images share the
/// bin count; each has its own intensity range. Logs are natural.
struct HistogramConfig {
  int bins = 32;
  std::array<double, 2> range_x{0.0, 1.0};
  std::array<double, 2> range_y{0.0, 1.0};
  double epsilon = 1e-6;
  double kernel_width = 1.0;  // Parzen width, in bin units

  void validate() const {
    if (bins < 2) throw std::invalid_argument("bins must be >= 2");
    if (!(range_x[0] < range_x[1]) || !(range_y[0] < range_y[1]))
      throw std::invalid_argument("intensity range min must be < max");
    if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
    if (!(kernel_width > 0.0)) throw std::invalid_argument("kernel_width must be positive");
  }
};

/// Patch lattice for the patch-local MI loss. A patch counts when its center
/// voxel lies inside the restriction mask (when one is given).
struct PatchGrid {
  std::array<int, 3> patch_size{16, 16, 16};
  std::array<int, 3> stride{8, 8, 8};
  const Mask* restriction_mask = nullptr;

  void validate() const {
    for (int a = 0; a < 3; ++a) {
      if (patch_size[a] <= 0 || stride[a] <= 0)
        throw std::invalid_argument("patch_size and stride must be positive");
      if (stride[a] > patch_size[a])
        throw std::invalid_argument("stride must not exceed patch_size");
    }
  }
};

struct JointHistogram {
  int bins = 0;
  std::vector<double> joint;  // bins*bins, row = x bin, col = y bin
  std::vector<double> marginal_x;
  std::vector<double> marginal_y;

  double& at(int i, int j) { return joint[static_cast<size_t>(i) * bins + j]; }
  double at(int i, int j) const { return joint[static_cast<size_t>(i) * bins + j]; }
};

enum class BinningMode { Hard, Soft };

JointHistogram hard_joint_histogram(std::span<const float> x, std::span<const float> y,
                                    const HistogramConfig& cfg);
JointHistogram soft_joint_histogram(std::span<const float> x, std::span<const float> y,
                                    const HistogramConfig& cfg);

/// MI of one patch from its joint histogram. Cells with zero joint probability
/// contribute exactly 0.
double local_mi(const JointHistogram& h, const HistogramConfig& cfg);

/// Patch windows of `grid` over `dims`, in deterministic x-fastest order.
/// Each entry is the (x,y,z) of the window's low corner.
std::vector<std::array<int, 3>> enumerate_patches(const std::array<int, 3>& dims,
                                                  const PatchGrid& grid);

/// 1 - mean patch-local MI.
double mi_loss(const Volume& fixed, const Volume& moving, const PatchGrid& grid,
               const HistogramConfig& cfg, BinningMode mode);

/// d(mi_loss)/d(moving intensity), per voxel, soft mode only.
std::vector<double> mi_loss_gradient(const Volume& fixed, const Volume& moving,
                                     const PatchGrid& grid, const HistogramConfig& cfg);

/// Robust binning range: [0.5, 99.5] percentiles over the mask (or everywhere).
std::array<double, 2> robust_intensity_range(const Volume& v, const Mask* mask = nullptr);

}  // namespace liverstage
