#pragma once

#include "liverstage/registration.hpp"
#include "liverstage/staging.hpp"
#include "liverstage/volume.hpp"

namespace liverstage {

/// Monotone per-channel intensity remap: gamma curve plus affine. A negative
/// gain inverts contrast, which MI tolerates and correlation metrics do not.
struct IntensityRemap {
  double gamma = 1.0;
  double gain = 1.0;
  double offset = 0.0;

  double apply(double v, double lo, double hi) const;
};

struct PhantomSpec {
  std::array<int, 3> dims{64, 64, 32};
  std::array<double, 3> spacing{2.0, 2.0, 3.0};
  std::array<double, 3> organ_center_mm{64.0, 64.0, 48.0};
  std::array<double, 3> organ_semi_axes_mm{44.0, 36.0, 30.0};
  double lesion_fraction = 0.0;
  double texture_contrast = 0.3;
  std::map<std::string, IntensityRemap> modality_maps;  // non-reference channels
  std::map<std::string, RigidTransform> planted_transforms;
  double noise_sigma = 0.01;
  uint64_t seed = 0;
  ContrastMode contrast_mode = ContrastMode::NonContrast;
  std::string subject_id = "phantom";
};

struct PhantomTruth {
  Mask mask;
  std::map<std::string, RigidTransform> transforms;
  std::vector<uint8_t> lesion_labels;  // per GED4 voxel
  double realized_lesion_fraction = 0.0;
};

struct PhantomStudy {
  Study study;
  PhantomTruth truth;
};

/// Reference channel (GED4) plus remapped, rigidly displaced extra channels,
/// deterministic in spec.seed. Lesion voxels grow as seeded blobs until the
/// organ fraction is within 1% of lesion_fraction.
PhantomStudy generate(const PhantomSpec& spec);

/// Seeded clamped-Gaussian subject scores per stage, for calibration tests.
std::vector<CalibrationSample> synthetic_scores(const std::array<int, 4>& n_per_stage,
                                                const std::array<double, 4>& stage_means,
                                                double sigma, uint64_t seed);

/// Write the study as manifest + NIfTI files + ground-truth sidecar JSON.
void write_phantom_cohort(const std::vector<PhantomStudy>& cohort, const std::string& dir);

}  // namespace liverstage
