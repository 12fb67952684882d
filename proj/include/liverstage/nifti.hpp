#pragma once

#include <string>

#include "liverstage/volume.hpp"

namespace liverstage {

/// Minimal uncompressed NIfTI-1 (.nii) I/O restricted to axis-aligned grids.
/// Readable datatypes: uint8, int16, float32 (scl_slope/scl_inter applied).
/// Volumes are written as float32, masks as uint8.
Volume load_volume(const std::string& path);
void save_volume(const Volume& v, const std::string& path);

/// Any nonzero voxel reads as 1.
Mask load_mask(const std::string& path);
void save_mask(const Mask& m, const std::string& path);

/// JSON manifest: array of {subject_id, stage?, mask?, modalities:{name:path}}.
/// Relative paths resolve against the manifest's directory.
std::vector<Study> load_manifest(const std::string& path, ContrastMode mode);

}  // namespace liverstage
