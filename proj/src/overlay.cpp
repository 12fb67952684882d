#include "liverstage/overlay.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <zlib.h>

namespace liverstage {

namespace {

uint32_t crc32_of(const uint8_t* data, size_t n, uint32_t seed = 0) {
  return static_cast<uint32_t>(
      crc32(seed, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

void put_u32(std::vector<uint8_t>& v, uint32_t x) {
  v.push_back(static_cast<uint8_t>(x >> 24));
  v.push_back(static_cast<uint8_t>(x >> 16));
  v.push_back(static_cast<uint8_t>(x >> 8));
  v.push_back(static_cast<uint8_t>(x));
}

void write_chunk(std::ofstream& f, const char type[4], const std::vector<uint8_t>& payload) {
  std::vector<uint8_t> head;
  put_u32(head, static_cast<uint32_t>(payload.size()));
  f.write(reinterpret_cast<const char*>(head.data()), 4);
  f.write(type, 4);
  if (!payload.empty())
    f.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
  uint32_t crc = crc32_of(reinterpret_cast<const uint8_t*>(type), 4);
  crc = crc32_of(payload.data(), payload.size(), crc);
  std::vector<uint8_t> tail;
  put_u32(tail, crc);
  f.write(reinterpret_cast<const char*>(tail.data()), 4);
}

}  // namespace

void write_png(const RgbImage& img, const std::string& path) {
  if (img.width <= 0 || img.height <= 0)
    throw std::invalid_argument("write_png: empty image");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path);

  static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  f.write(reinterpret_cast<const char*>(sig), 8);

  std::vector<uint8_t> ihdr;
  put_u32(ihdr, static_cast<uint32_t>(img.width));
  put_u32(ihdr, static_cast<uint32_t>(img.height));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // color type RGB
  ihdr.push_back(0);   // compression
  ihdr.push_back(0);   // filter
  ihdr.push_back(0);   // interlace
  write_chunk(f, "IHDR", ihdr);

  // raw scanlines, filter byte 0 per row
  std::vector<uint8_t> raw;
  raw.reserve(static_cast<size_t>(img.height) * (1 + 3 * img.width));
  for (int y = 0; y < img.height; ++y) {
    raw.push_back(0);
    const uint8_t* row = &img.pixels[static_cast<size_t>(y) * img.width * 3];
    raw.insert(raw.end(), row, row + 3 * img.width);
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> comp(bound);
  if (compress2(comp.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw std::runtime_error("PNG deflate failed");
  comp.resize(bound);
  write_chunk(f, "IDAT", comp);
  write_chunk(f, "IEND", {});
  if (!f) throw std::runtime_error("write failed for " + path);
}

RgbImage render_overlay(const Volume& ged4, const std::vector<PatchPrediction>& preds,
                        int slice, int patch_size) {
  if (slice < 0 || slice >= ged4.dims[2])
    throw std::invalid_argument("render_overlay: slice out of range");
  const int W = ged4.dims[0], H = ged4.dims[1];

  // window-level to the slice's 1st-99th percentile
  std::vector<float> vals(static_cast<size_t>(W) * H);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) vals[static_cast<size_t>(y) * W + x] = ged4.at(x, y, slice);
  std::vector<float> sorted = vals;
  std::sort(sorted.begin(), sorted.end());
  auto pct = [&](double q) {
    return sorted[static_cast<size_t>(q * (sorted.size() - 1) + 0.5)];
  };
  double lo = pct(0.01), hi = pct(0.99);
  if (!(hi > lo)) hi = lo + 1.0;

  RgbImage img(W, H);
  // accumulate rectangle colors, then alpha-blend the average over the gray
  std::vector<double> r(vals.size(), 0.0), b(vals.size(), 0.0);
  std::vector<int> hits(vals.size(), 0);
  for (const auto& p : preds) {
    if (p.z != slice) continue;
    for (int y = p.y; y < p.y + patch_size && y < H; ++y)
      for (int x = p.x; x < p.x + patch_size && x < W; ++x) {
        if (y < 0 || x < 0) continue;
        size_t i = static_cast<size_t>(y) * W + x;
        (p.label ? r : b)[i] += 255.0;
        hits[i]++;
      }
  }
  const double alpha = 0.35;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      size_t i = static_cast<size_t>(y) * W + x;
      double g = 255.0 * std::clamp((vals[i] - lo) / (hi - lo), 0.0, 1.0);
      double rr = g, gg = g, bb = g;
      if (hits[i]) {
        rr = (1.0 - alpha) * g + alpha * r[i] / hits[i];
        bb = (1.0 - alpha) * g + alpha * b[i] / hits[i];
        gg = (1.0 - alpha) * g;
      }
      uint8_t* px = img.px(x, y);
      px[0] = static_cast<uint8_t>(std::lround(rr));
      px[1] = static_cast<uint8_t>(std::lround(gg));
      px[2] = static_cast<uint8_t>(std::lround(bb));
    }
  return img;
}

}  // namespace liverstage
