#pragma once

#include "liverstage/classifier.hpp"
#include "liverstage/volume.hpp"

namespace liverstage {

/// 8-bit RGB image, row-major from the top-left.
struct RgbImage {
  int width = 0, height = 0;
  std::vector<uint8_t> pixels;  // 3 * width * height

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), pixels(static_cast<size_t>(w) * h * 3, 0) {}
  uint8_t* px(int x, int y) { return &pixels[(static_cast<size_t>(y) * width + x) * 3]; }
};

/// Deterministic PNG bytes (fixed zlib settings, no ancillary chunks).
void write_png(const RgbImage& img, const std::string& path);

/// Axial GED4 slice window-leveled to the 1st-99th percentile, with
/// semi-transparent patch rectangles: red for z_j=1, blue for z_j=0,
/// alpha 0.35, overlaps blended by averaging.
RgbImage render_overlay(const Volume& ged4, const std::vector<PatchPrediction>& preds,
                        int slice, int patch_size);

}  // namespace liverstage
