#pragma once

#include "liverstage/mi.hpp"
#include "liverstage/volume.hpp"

namespace liverstage {

/// 6-parameter rigid motion, Euler XYZ about `center`, applied as
/// p' = R (p - center) + center + translation (moving-space <- fixed-space
/// sampling direction is the caller's concern).
struct RigidTransform {
  std::array<double, 3> rotation{0.0, 0.0, 0.0};  // radians
  std::array<double, 3> translation{0.0, 0.0, 0.0};  // mm
  std::array<double, 3> center{0.0, 0.0, 0.0};

  std::array<double, 3> apply(const std::array<double, 3>& p) const;
  RigidTransform inverse() const;
  std::array<std::array<double, 3>, 3> matrix() const;
};

RigidTransform load_transform(const std::string& path);
void save_transform(const RigidTransform& t, const std::string& path);

/// Sample `moving` on the target grid; value at voxel v is the trilinear
/// interpolation of moving at t(world(v)). Out-of-bounds samples are 0.
Volume resample_linear(const Volume& moving, const RigidTransform& t, const Volume& target);
Mask resample_nearest(const Mask& mask, const RigidTransform& t, const Volume& target);

enum class SimilarityMetric { PatchMI, PatchNCC };

struct RegistrationConfig {
  struct Level {
    int downsample = 1;
    int max_iterations = 100;
  };
  std::vector<Level> levels{{4, 100}, {2, 100}, {1, 50}};
  double step_init = 1.0;
  double step_shrink = 0.5;
  double converge_tol = 1e-6;  // relative loss change
  HistogramConfig hist;
  PatchGrid grid;
  SimilarityMetric metric = SimilarityMetric::PatchMI;
  BinningMode binning = BinningMode::Soft;

  void validate() const;
};

struct RegistrationResult {
  RigidTransform transform;
  double final_loss = 0.0;
  int iterations = 0;
  bool converged = true;  // false: divergence, best-so-far returned
};

/// Rigid registration minimizing the patch-local similarity loss by
/// multi-resolution gradient descent with backtracking. Gradients over the six
/// transform parameters use central finite differences. Deterministic.
RegistrationResult register_rigid(const Volume& fixed, const Volume& moving,
                                  const RegistrationConfig& cfg,
                                  const Mask* fixed_mask = nullptr);

/// Mean-pooling downsample by an integer factor per axis.
Volume downsample_mean(const Volume& v, int factor);
Mask downsample_mask(const Mask& m, int factor);

/// 1 - mean patch-wise normalized cross-correlation (ablation metric).
double ncc_loss(const Volume& fixed, const Volume& moving, const PatchGrid& grid);

}  // namespace liverstage
