#include "liverstage/patches.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace liverstage {

std::vector<Patch> extract_patches(const Study& study, const PatchExtractionConfig& cfg) {
  cfg.validate();
  if (!study.mask) throw std::runtime_error("extract_patches: study has no mask");
  const Mask& mask = *study.mask;
  if (mask.count() == 0) throw std::runtime_error("extract_patches: empty mask");
  const Volume& ref = study.ged4();
  if (!mask.matches_volume(ref))
    throw std::runtime_error("extract_patches: mask geometry differs from GED4");
  for (const auto& [name, vol] : study.modalities)
    if (!vol.same_geometry(ref))
      throw std::runtime_error("extract_patches: modality " + name +
                               " not in GED4 geometry (register first)");

  const auto channels = channels_for_mode(study.contrast_mode);
  const int K = static_cast<int>(channels.size());
  const int S = cfg.patch_size;

  // Per-channel z-score over the mask; voxels outside the mask stay 0.
  std::vector<std::vector<float>> norm(K);
  for (int c = 0; c < K; ++c) {
    auto it = study.modalities.find(channels[c]);
    if (it == study.modalities.end()) continue;  // absent: all-zero channel
    const Volume& v = it->second;
    double sum = 0.0, sum2 = 0.0;
    size_t n = 0;
    for (size_t i = 0; i < v.data.size(); ++i)
      if (mask.data[i]) {
        sum += v.data[i];
        sum2 += double(v.data[i]) * v.data[i];
        ++n;
      }
    double mean = sum / n;
    double var = std::max(sum2 / n - mean * mean, 0.0);
    double sd = var > 0.0 ? std::sqrt(var) : 1.0;
    auto& out = norm[c];
    out.assign(v.data.size(), 0.0f);
    for (size_t i = 0; i < v.data.size(); ++i)
      if (mask.data[i]) out[i] = static_cast<float>((v.data[i] - mean) / sd);
  }

  // Mask bounding box anchors the window lattice.
  std::array<int, 3> lo = mask.dims, hi = {-1, -1, -1};
  for (int z = 0; z < mask.dims[2]; ++z)
    for (int y = 0; y < mask.dims[1]; ++y)
      for (int x = 0; x < mask.dims[0]; ++x)
        if (mask.at(x, y, z)) {
          lo = {std::min(lo[0], x), std::min(lo[1], y), std::min(lo[2], z)};
          hi = {std::max(hi[0], x), std::max(hi[1], y), std::max(hi[2], z)};
        }

  std::vector<Patch> patches;
  for (int z = lo[2]; z <= hi[2]; ++z)
    for (int y0 = lo[1]; y0 + S <= mask.dims[1]; y0 += cfg.stride)
      for (int x0 = lo[0]; x0 + S <= mask.dims[0]; x0 += cfg.stride) {
        int inside = 0;
        for (int y = y0; y < y0 + S; ++y)
          for (int x = x0; x < x0 + S; ++x) inside += mask.at(x, y, z);
        double coverage = static_cast<double>(inside) / (S * S);
        if (coverage < cfg.min_coverage) continue;

        Patch p;
        p.subject_id = study.subject_id;
        p.slice_index = z;
        p.grid_y = y0;
        p.grid_x = x0;
        p.channels = K;
        p.size = S;
        p.coverage = coverage;
        p.data.assign(static_cast<size_t>(K) * S * S, 0.0f);
        for (int c = 0; c < K; ++c) {
          if (norm[c].empty()) continue;
          for (int y = 0; y < S; ++y)
            for (int x = 0; x < S; ++x)
              p.at(c, y, x) = norm[c][mask.index(x0 + x, y0 + y, z)];
        }
        patches.push_back(std::move(p));
      }
  return patches;
}

Patch transform_patch(const Patch& p, int op) {
  int rot = (op >> 1) & 3;
  bool flip = op & 1;
  Patch out = p;
  const int S = p.size;
  for (int c = 0; c < p.channels; ++c)
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x) {
        int sx = x, sy = y;
        if (flip) sx = S - 1 - sx;
        for (int r = 0; r < rot; ++r) {  // 90-degree rotation
          int tx = sy, ty = S - 1 - sx;
          sx = tx;
          sy = ty;
        }
        out.at(c, y, x) = p.at(c, sy, sx);
      }
  return out;
}

std::vector<Patch> build_training_set(const std::vector<Study>& studies,
                                      const PatchExtractionConfig& cfg) {
  std::vector<Patch> cls[2];
  for (const auto& s : studies) {
    if (!s.stage) throw std::runtime_error("build_training_set: study " + s.subject_id +
                                           " has no stage label");
    if (*s.stage == 2 || *s.stage == 3) continue;  // validation-only stages
    int label = (*s.stage == 4) ? 1 : 0;
    for (auto& p : extract_patches(s, cfg)) {
      p.label = label;
      cls[label].push_back(std::move(p));
    }
  }

  int minority = cls[0].size() <= cls[1].size() ? 0 : 1;
  size_t target = static_cast<size_t>(
      std::ceil(0.95 * static_cast<double>(cls[1 - minority].size())));
  size_t base = cls[minority].size();
  if (base > 0) {
    for (int op = 1; op <= 7 && cls[minority].size() < target; ++op)
      for (size_t i = 0; i < base && cls[minority].size() < target; ++i)
        cls[minority].push_back(transform_patch(cls[minority][i], op));
  }

  std::vector<Patch> out = std::move(cls[0]);
  out.insert(out.end(), std::make_move_iterator(cls[1].begin()),
             std::make_move_iterator(cls[1].end()));
  return out;
}

void save_patches(const std::vector<Patch>& patches, const std::vector<std::string>& channels,
                  const std::string& path) {
  nlohmann::json hdr;
  hdr["count"] = patches.size();
  hdr["k"] = patches.empty() ? channels.size() : static_cast<size_t>(patches[0].channels);
  hdr["s"] = patches.empty() ? 0 : patches[0].size;
  hdr["channels"] = channels;
  nlohmann::json index = nlohmann::json::array();
  for (const auto& p : patches) {
    nlohmann::json rec = {{"subject_id", p.subject_id}, {"z", p.slice_index},
                          {"y", p.grid_y},             {"x", p.grid_x},
                          {"coverage", p.coverage}};
    if (p.label) rec["label"] = *p.label;
    index.push_back(rec);
  }
  hdr["index"] = index;

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << hdr.dump() << "\n";
  for (const auto& p : patches)
    f.write(reinterpret_cast<const char*>(p.data.data()),
            static_cast<std::streamsize>(p.data.size() * sizeof(float)));
  if (!f) throw std::runtime_error("write failed for " + path);
}

std::vector<Patch> load_patches(const std::string& path, std::vector<std::string>* channels) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error(path + ": missing header");
  nlohmann::json hdr = nlohmann::json::parse(line);
  if (channels) *channels = hdr.at("channels").get<std::vector<std::string>>();
  size_t count = hdr.at("count").get<size_t>();
  int K = hdr.at("k").get<int>();
  int S = hdr.at("s").get<int>();
  const auto& index = hdr.at("index");
  if (index.size() != count) throw std::runtime_error(path + ": index/count mismatch");

  std::vector<Patch> out(count);
  for (size_t i = 0; i < count; ++i) {
    Patch& p = out[i];
    const auto& rec = index[i];
    p.subject_id = rec.at("subject_id").get<std::string>();
    p.slice_index = rec.at("z").get<int>();
    p.grid_y = rec.at("y").get<int>();
    p.grid_x = rec.at("x").get<int>();
    p.coverage = rec.at("coverage").get<double>();
    if (rec.contains("label")) p.label = rec["label"].get<int>();
    p.channels = K;
    p.size = S;
    p.data.resize(static_cast<size_t>(K) * S * S);
    if (!f.read(reinterpret_cast<char*>(p.data.data()),
                static_cast<std::streamsize>(p.data.size() * sizeof(float))))
      throw std::runtime_error(path + ": truncated tensor section");
  }
  return out;
}

}  // namespace liverstage
