#include "liverstage/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <json.hpp>

#include "liverstage/nifti.hpp"

namespace liverstage {

double IntensityRemap::apply(double v, double lo, double hi) const {
  double u = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
  return gain * std::pow(u, gamma) + offset;
}

namespace {

bool inside_ellipsoid(const PhantomSpec& spec, const std::array<double, 3>& w) {
  double q = 0.0;
  for (int a = 0; a < 3; ++a) {
    double d = (w[a] - spec.organ_center_mm[a]) / spec.organ_semi_axes_mm[a];
    q += d * d;
  }
  return q <= 1.0;
}

}  // namespace

PhantomStudy generate(const PhantomSpec& spec) {
  if (!(spec.lesion_fraction >= 0.0 && spec.lesion_fraction <= 1.0))
    throw std::invalid_argument("lesion_fraction must be in [0,1]");
  for (int a = 0; a < 3; ++a)
    if (spec.organ_semi_axes_mm[a] >= 0.5 * spec.dims[a] * spec.spacing[a] * 2.0)
      throw std::invalid_argument("organ does not fit inside the volume");

  Volume clean(spec.dims, spec.spacing, {0.0, 0.0, 0.0});
  Mask mask = Mask::like(clean);
  std::vector<size_t> organ_voxels;

  // smooth organ over a dim background: base 0.15, organ ~0.7 with radial shading
  for (int z = 0; z < spec.dims[2]; ++z)
    for (int y = 0; y < spec.dims[1]; ++y)
      for (int x = 0; x < spec.dims[0]; ++x) {
        auto w = voxel_to_world(clean, {double(x), double(y), double(z)});
        double q = 0.0;
        for (int a = 0; a < 3; ++a) {
          double d = (w[a] - spec.organ_center_mm[a]) / spec.organ_semi_axes_mm[a];
          q += d * d;
        }
        size_t i = clean.index(x, y, z);
        if (q <= 1.0) {
          mask.data[i] = 1;
          organ_voxels.push_back(i);
          clean.data[i] = static_cast<float>(0.7 - 0.25 * q);
        } else {
          clean.data[i] = static_cast<float>(0.15 / (1.0 + 0.5 * q));
        }
      }
  if (organ_voxels.empty()) throw std::invalid_argument("infeasible phantom geometry");

  std::mt19937_64 rng(spec.seed);

  // lesion voxels by seeded blob growth to the exact target count
  std::vector<uint8_t> lesion(clean.voxel_count(), 0);
  size_t target = static_cast<size_t>(
      std::llround(spec.lesion_fraction * static_cast<double>(organ_voxels.size())));
  size_t grown = 0;
  std::vector<size_t> frontier;
  const auto& d = spec.dims;
  auto push_neighbors = [&](size_t i) {
    int x = static_cast<int>(i % d[0]);
    int y = static_cast<int>((i / d[0]) % d[1]);
    int z = static_cast<int>(i / (static_cast<size_t>(d[0]) * d[1]));
    const int nb[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    for (const auto& dd : nb) {
      int px = x + dd[0], py = y + dd[1], pz = z + dd[2];
      if (!mask.in_bounds(px, py, pz)) continue;
      size_t j = mask.index(px, py, pz);
      if (mask.data[j] && !lesion[j]) frontier.push_back(j);
    }
  };
  while (grown < target) {
    if (frontier.empty()) {
      std::uniform_int_distribution<size_t> pick(0, organ_voxels.size() - 1);
      size_t s = organ_voxels[pick(rng)];
      if (lesion[s]) continue;
      lesion[s] = 1;
      ++grown;
      push_neighbors(s);
      continue;
    }
    std::uniform_int_distribution<size_t> pick(0, frontier.size() - 1);
    size_t k = pick(rng);
    size_t v = frontier[k];
    frontier[k] = frontier.back();
    frontier.pop_back();
    if (lesion[v]) continue;
    lesion[v] = 1;
    ++grown;
    push_neighbors(v);
  }

  // fibrotic texture: intensity offset plus high-frequency speckle
  std::uniform_real_distribution<double> speckle(-1.0, 1.0);
  for (size_t i = 0; i < lesion.size(); ++i)
    if (lesion[i])
      clean.data[i] += static_cast<float>(spec.texture_contrast *
                                          (0.35 + 0.65 * speckle(rng)));

  std::normal_distribution<double> noise(0.0, spec.noise_sigma);
  PhantomStudy out;
  out.truth.mask = mask;
  out.truth.lesion_labels = lesion;
  out.truth.realized_lesion_fraction =
      static_cast<double>(grown) / static_cast<double>(organ_voxels.size());

  Volume ged4 = clean;
  if (spec.noise_sigma > 0.0)
    for (auto& v : ged4.data) v += static_cast<float>(noise(rng));
  out.study.subject_id = spec.subject_id;
  out.study.contrast_mode = spec.contrast_mode;
  out.study.modalities["GED4"] = std::move(ged4);
  out.study.mask = mask;

  for (const auto& name : channels_for_mode(spec.contrast_mode)) {
    if (name == "GED4") continue;
    auto mit = spec.modality_maps.find(name);
    if (mit == spec.modality_maps.end()) continue;  // absent modality
    Volume remapped = clean;
    for (auto& v : remapped.data)
      v = static_cast<float>(mit->second.apply(v, 0.0, 1.0));
    RigidTransform t;  // identity unless planted
    auto tit = spec.planted_transforms.find(name);
    if (tit != spec.planted_transforms.end()) t = tit->second;
    Volume moved = resample_linear(remapped, t.inverse(), remapped);
    if (spec.noise_sigma > 0.0)
      for (auto& v : moved.data) v += static_cast<float>(noise(rng));
    out.study.modalities[name] = std::move(moved);
    out.truth.transforms[name] = t;
  }
  return out;
}

std::vector<CalibrationSample> synthetic_scores(const std::array<int, 4>& n_per_stage,
                                                const std::array<double, 4>& stage_means,
                                                double sigma, uint64_t seed) {
  for (int i = 1; i < 4; ++i)
    if (!(stage_means[i] > stage_means[i - 1]))
      throw std::invalid_argument("stage means must be increasing");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<CalibrationSample> out;
  for (int stage = 1; stage <= 4; ++stage)
    for (int k = 0; k < n_per_stage[stage - 1]; ++k) {
      double s = stage_means[stage - 1] + (sigma > 0.0 ? sigma * noise(rng) : 0.0);
      out.push_back({std::clamp(s, 0.0, 1.0), stage});
    }
  return out;
}

void write_phantom_cohort(const std::vector<PhantomStudy>& cohort, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json manifest = nlohmann::json::array();
  nlohmann::json truth = nlohmann::json::array();
  for (const auto& ps : cohort) {
    const auto& id = ps.study.subject_id;
    nlohmann::json rec;
    rec["subject_id"] = id;
    if (ps.study.stage) rec["stage"] = *ps.study.stage;
    nlohmann::json mods;
    for (const auto& [name, vol] : ps.study.modalities) {
      std::string file = id + "_" + name + ".nii";
      save_volume(vol, (fs::path(dir) / file).string());
      mods[name] = file;
    }
    rec["modalities"] = mods;
    std::string mfile = id + "_mask.nii";
    save_mask(ps.truth.mask, (fs::path(dir) / mfile).string());
    rec["mask"] = mfile;
    manifest.push_back(rec);

    nlohmann::json trec;
    trec["subject_id"] = id;
    trec["realized_lesion_fraction"] = ps.truth.realized_lesion_fraction;
    nlohmann::json tf;
    for (const auto& [name, t] : ps.truth.transforms)
      tf[name] = {{"rotation", t.rotation}, {"translation", t.translation},
                  {"center", t.center}};
    trec["transforms"] = tf;
    truth.push_back(trec);
  }
  std::ofstream mf((fs::path(dir) / "manifest.json").string());
  mf << manifest.dump(2) << "\n";
  std::ofstream tf((fs::path(dir) / "ground_truth.json").string());
  tf << truth.dump(2) << "\n";
}

}  // namespace liverstage
