#pragma once

#include "liverstage/volume.hpp"

namespace liverstage {

/// One multi-channel axial window. `data` is channel-major K x S x S,
/// canonical channel order; absent modalities are all-zero channels.
struct Patch {
  std::string subject_id;
  int slice_index = 0;  // axial z
  int grid_y = 0, grid_x = 0;  // top-left voxel of the window
  int channels = 0, size = 0;
  std::vector<float> data;  // K*S*S
  double coverage = 0.0;  // fraction of window voxels inside the mask
  std::optional<int> label;  // 1 = from a Stage-4 subject, 0 = Stage-1

  float at(int c, int y, int x) const {
    return data[(static_cast<size_t>(c) * size + y) * size + x];
  }
  float& at(int c, int y, int x) {
    return data[(static_cast<size_t>(c) * size + y) * size + x];
  }
};

struct PatchExtractionConfig {
  int patch_size = 16;
  int stride = 8;
  double min_coverage = 0.5;

  void validate() const {
    if (patch_size <= 0 || stride <= 0 || stride > patch_size)
      throw std::invalid_argument("need 0 < stride <= patch_size");
    if (!(min_coverage > 0.0) || min_coverage > 1.0)
      throw std::invalid_argument("min_coverage must be in (0,1]");
  }
};

/// Overlapping windows inside the liver mask, one Patch per kept window:
/// all K channels masked by the liver mask, then per-channel z-scored with
/// statistics over the masked region. Deterministic (z, y, x) order.
std::vector<Patch> extract_patches(const Study& study, const PatchExtractionConfig& cfg);

/// Labeled training patches from Stage-1 (label 0) and Stage-4 (label 1)
/// subjects; stage-2/3 subjects are dropped. The minority class is balanced by
/// flip/right-angle-rotation augmentation to within 5% of the majority count.
std::vector<Patch> build_training_set(const std::vector<Study>& studies,
                                      const PatchExtractionConfig& cfg);

/// Geometric transforms used by augmentation. op in 0..7: three rotation bits
/// (90-degree multiples) x horizontal flip, identity excluded by callers.
Patch transform_patch(const Patch& p, int op);

/// Binary patch dataset container (JSON header + raw float32 tensors).
void save_patches(const std::vector<Patch>& patches, const std::vector<std::string>& channels,
                  const std::string& path);
std::vector<Patch> load_patches(const std::string& path, std::vector<std::string>* channels = nullptr);

}  // namespace liverstage
