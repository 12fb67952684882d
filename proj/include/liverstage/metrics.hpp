#pragma once

#include "liverstage/volume.hpp"

namespace liverstage {

struct SegScore {
  double dice = 0.0;
  double hd = 0.0;  // mm
};

struct ClsScore {
  double auc = 0.0;
  double acc = 0.0;
};

/// 2|A∩B| / (|A|+|B|); both empty -> 1.0.
double dice(const Mask& a, const Mask& b);

/// Symmetric Hausdorff distance (max directed, 100th percentile) between
/// boundary voxel centers, in mm. Boundary voxels have >=1 face-neighbor
/// outside the mask (volume faces count as outside).
double hausdorff(const Mask& a, const Mask& b);

/// Mann-Whitney AUC: (wins + 0.5 * ties) / (n_pos * n_neg).
double auc(const std::vector<std::pair<double, bool>>& scores);

double accuracy(const std::vector<std::pair<bool, bool>>& decisions);

/// Boundary voxel centers in physical mm.
std::vector<std::array<double, 3>> boundary_points(const Mask& m);

}  // namespace liverstage
