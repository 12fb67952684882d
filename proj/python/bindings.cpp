#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "liverstage/classifier.hpp"
#include "liverstage/metrics.hpp"
#include "liverstage/mi.hpp"
#include "liverstage/phantom.hpp"
#include "liverstage/registration.hpp"
#include "liverstage/staging.hpp"
#include "liverstage/volume.hpp"

namespace py = pybind11;
using namespace liverstage;

namespace {

using Arr3f = py::array_t<float, py::array::c_style | py::array::forcecast>;
using Arr3u8 = py::array_t<uint8_t, py::array::c_style | py::array::forcecast>;
using Arr1d = py::array_t<double, py::array::c_style | py::array::forcecast>;

// numpy arrays are (z, y, x); Volume data is x-fastest, so a C-contiguous
// buffer maps directly.
Volume to_volume(const Arr3f& a, std::array<double, 3> spacing,
                 std::array<double, 3> origin) {
  if (a.ndim() != 3) throw std::invalid_argument("expected a 3-D array (z, y, x)");
  Volume v({static_cast<int>(a.shape(2)), static_cast<int>(a.shape(1)),
            static_cast<int>(a.shape(0))},
           {spacing[2], spacing[1], spacing[0]}, {origin[2], origin[1], origin[0]});
  std::copy(a.data(), a.data() + a.size(), v.data.begin());
  return v;
}

Mask to_mask(const Arr3u8& a, std::array<double, 3> spacing,
             std::array<double, 3> origin) {
  if (a.ndim() != 3) throw std::invalid_argument("expected a 3-D array (z, y, x)");
  Mask m({static_cast<int>(a.shape(2)), static_cast<int>(a.shape(1)),
          static_cast<int>(a.shape(0))},
         {spacing[2], spacing[1], spacing[0]}, {origin[2], origin[1], origin[0]});
  std::copy(a.data(), a.data() + a.size(), m.data.begin());
  return m;
}

py::array_t<float> from_volume(const Volume& v) {
  py::array_t<float> a({v.dims[2], v.dims[1], v.dims[0]});
  std::copy(v.data.begin(), v.data.end(), a.mutable_data());
  return a;
}

py::array_t<uint8_t> from_mask(const Mask& m) {
  py::array_t<uint8_t> a({m.dims[2], m.dims[1], m.dims[0]});
  std::copy(m.data.begin(), m.data.end(), a.mutable_data());
  return a;
}

HistogramConfig hist_config(int bins, double kernel_width, const Volume& fixed,
                            const Volume& moving) {
  HistogramConfig cfg;
  cfg.bins = bins;
  cfg.kernel_width = kernel_width;
  cfg.range_x = robust_intensity_range(fixed);
  cfg.range_y = robust_intensity_range(moving);
  return cfg;
}

PatchGrid patch_grid(std::array<int, 3> patch_size, std::array<int, 3> stride) {
  PatchGrid g;
  // (z, y, x) from python, (x, y, z) internally
  g.patch_size = {patch_size[2], patch_size[1], patch_size[0]};
  g.stride = {stride[2], stride[1], stride[0]};
  return g;
}

RigidTransform make_transform(std::array<double, 3> rotation,
                              std::array<double, 3> translation,
                              std::array<double, 3> center) {
  RigidTransform t;
  t.rotation = rotation;
  t.translation = translation;
  t.center = center;
  return t;
}

py::dict transform_dict(const RigidTransform& t) {
  py::dict d;
  d["rotation"] = t.rotation;
  d["translation"] = t.translation;
  d["center"] = t.center;
  return d;
}

ContrastMode parse_mode(const std::string& mode) {
  if (mode == "contrast") return ContrastMode::Contrast;
  if (mode == "non_contrast") return ContrastMode::NonContrast;
  throw std::invalid_argument("mode must be 'contrast' or 'non_contrast'");
}

}  // namespace

PYBIND11_MODULE(_liverstage, m) {
  m.doc() = "Patch-MI registration, fibrosis staging and phantom generation";

  m.def(
      "mi_loss",
      [](const Arr3f& fixed, const Arr3f& moving, std::array<double, 3> spacing,
         int bins, std::array<int, 3> patch_size, std::array<int, 3> stride,
         const std::string& binning) {
        Volume f = to_volume(fixed, spacing, {0, 0, 0});
        Volume g = to_volume(moving, spacing, {0, 0, 0});
        auto mode = binning == "hard" ? BinningMode::Hard : BinningMode::Soft;
        return mi_loss(f, g, patch_grid(patch_size, stride),
                       hist_config(bins, 1.0, f, g), mode);
      },
      py::arg("fixed"), py::arg("moving"),
      py::arg("spacing") = std::array<double, 3>{1, 1, 1}, py::arg("bins") = 32,
      py::arg("patch_size") = std::array<int, 3>{16, 16, 16},
      py::arg("stride") = std::array<int, 3>{8, 8, 8},
      py::arg("binning") = "soft",
      "1 - mean patch-local mutual information of two equally shaped volumes.");

  m.def(
      "mi_loss_gradient",
      [](const Arr3f& fixed, const Arr3f& moving, std::array<double, 3> spacing,
         int bins, std::array<int, 3> patch_size, std::array<int, 3> stride) {
        Volume f = to_volume(fixed, spacing, {0, 0, 0});
        Volume g = to_volume(moving, spacing, {0, 0, 0});
        auto grad = mi_loss_gradient(f, g, patch_grid(patch_size, stride),
                                     hist_config(bins, 1.0, f, g));
        py::array_t<double> a({f.dims[2], f.dims[1], f.dims[0]});
        std::copy(grad.begin(), grad.end(), a.mutable_data());
        return a;
      },
      py::arg("fixed"), py::arg("moving"),
      py::arg("spacing") = std::array<double, 3>{1, 1, 1}, py::arg("bins") = 32,
      py::arg("patch_size") = std::array<int, 3>{16, 16, 16},
      py::arg("stride") = std::array<int, 3>{8, 8, 8},
      "Per-voxel derivative of mi_loss with respect to the moving image.");

  m.def(
      "register_rigid",
      [](const Arr3f& fixed, const Arr3f& moving, std::array<double, 3> spacing,
         const std::string& metric,
         const std::vector<std::pair<int, int>>& levels) {
        Volume f = to_volume(fixed, spacing, {0, 0, 0});
        Volume g = to_volume(moving, spacing, {0, 0, 0});
        RegistrationConfig cfg;
        if (!levels.empty()) {
          cfg.levels.clear();
          for (auto [down, iters] : levels) cfg.levels.push_back({down, iters});
        }
        cfg.metric = metric == "ncc" ? SimilarityMetric::PatchNCC
                                     : SimilarityMetric::PatchMI;
        auto res = register_rigid(f, g, cfg);
        py::dict d = transform_dict(res.transform);
        d["final_loss"] = res.final_loss;
        d["iterations"] = res.iterations;
        d["converged"] = res.converged;
        return d;
      },
      py::arg("fixed"), py::arg("moving"),
      py::arg("spacing") = std::array<double, 3>{1, 1, 1},
      py::arg("metric") = "mi",
      py::arg("levels") = std::vector<std::pair<int, int>>{},
      "Multi-resolution rigid registration; returns the recovered transform.");

  m.def(
      "resample",
      [](const Arr3f& moving, std::array<double, 3> rotation,
         std::array<double, 3> translation, std::array<double, 3> center,
         std::array<double, 3> spacing) {
        Volume g = to_volume(moving, spacing, {0, 0, 0});
        return from_volume(
            resample_linear(g, make_transform(rotation, translation, center), g));
      },
      py::arg("moving"), py::arg("rotation"), py::arg("translation"),
      py::arg("center") = std::array<double, 3>{0, 0, 0},
      py::arg("spacing") = std::array<double, 3>{1, 1, 1},
      "Trilinear resampling of a volume under a rigid transform.");

  m.def(
      "dice",
      [](const Arr3u8& a, const Arr3u8& b, std::array<double, 3> spacing) {
        return dice(to_mask(a, spacing, {0, 0, 0}), to_mask(b, spacing, {0, 0, 0}));
      },
      py::arg("a"), py::arg("b"),
      py::arg("spacing") = std::array<double, 3>{1, 1, 1});

  m.def(
      "hausdorff",
      [](const Arr3u8& a, const Arr3u8& b, std::array<double, 3> spacing) {
        return hausdorff(to_mask(a, spacing, {0, 0, 0}),
                         to_mask(b, spacing, {0, 0, 0}));
      },
      py::arg("a"), py::arg("b"),
      py::arg("spacing") = std::array<double, 3>{1, 1, 1},
      "Symmetric Hausdorff distance in physical units.");

  m.def(
      "auc",
      [](const Arr1d& scores, const std::vector<bool>& labels) {
        if (static_cast<size_t>(scores.size()) != labels.size())
          throw std::invalid_argument("scores and labels differ in length");
        std::vector<std::pair<double, bool>> pairs(labels.size());
        for (size_t i = 0; i < labels.size(); ++i)
          pairs[i] = {scores.data()[i], labels[i]};
        return auc(pairs);
      },
      py::arg("scores"), py::arg("labels"),
      "ROC AUC with tie handling by half credit.");

  m.def("map_y1", &map_y1, py::arg("s"), py::arg("tau1"));
  m.def("map_y4", &map_y4, py::arg("s"), py::arg("tau2"));

  m.def(
      "default_thresholds",
      [](const std::string& mode) {
        auto t = default_thresholds(parse_mode(mode));
        return std::make_pair(t.tau1, t.tau2);
      },
      py::arg("mode") = "non_contrast");

  m.def(
      "calibrate_thresholds",
      [](const Arr1d& scores, const std::vector<int>& stages, int folds,
         double grid_step, const std::string& mode) {
        if (static_cast<size_t>(scores.size()) != stages.size())
          throw std::invalid_argument("scores and stages differ in length");
        std::vector<CalibrationSample> val(stages.size());
        for (size_t i = 0; i < stages.size(); ++i) {
          val[i].s = scores.data()[i];
          val[i].stage = stages[i];
        }
        auto rep = calibrate(val, folds, grid_step, parse_mode(mode));
        py::dict d;
        d["tau1"] = rep.thresholds.tau1;
        d["tau2"] = rep.thresholds.tau2;
        d["skipped_folds"] = rep.skipped_folds;
        return d;
      },
      py::arg("scores"), py::arg("stages"), py::arg("folds") = 5,
      py::arg("grid_step") = 0.01, py::arg("mode") = "non_contrast",
      "Cross-validated threshold search over subject scores.");

  m.def(
      "generate_phantom",
      [](std::array<int, 3> dims, std::array<double, 3> spacing,
         double lesion_fraction, uint64_t seed,
         const std::map<std::string, std::array<double, 3>>& modality_maps,
         double noise_sigma) {
        PhantomSpec spec;
        spec.dims = {dims[2], dims[1], dims[0]};
        spec.spacing = {spacing[2], spacing[1], spacing[0]};
        for (int a = 0; a < 3; ++a) {
          spec.organ_center_mm[a] = 0.5 * spec.dims[a] * spec.spacing[a];
          spec.organ_semi_axes_mm[a] = 0.36 * spec.dims[a] * spec.spacing[a];
        }
        spec.lesion_fraction = lesion_fraction;
        spec.seed = seed;
        spec.noise_sigma = noise_sigma;
        for (const auto& [name, p] : modality_maps)
          spec.modality_maps[name] = {p[0], p[1], p[2]};
        auto ps = generate(spec);
        py::dict d;
        py::dict channels;
        channels["GED4"] = from_volume(ps.study.ged4());
        for (const auto& [name, vol] : ps.study.modalities)
          channels[name.c_str()] = from_volume(vol);
        d["channels"] = channels;
        d["mask"] = from_mask(ps.truth.mask);
        d["spacing"] = spacing;
        d["lesion_fraction"] = ps.truth.realized_lesion_fraction;
        return d;
      },
      py::arg("dims") = std::array<int, 3>{32, 64, 64},
      py::arg("spacing") = std::array<double, 3>{3, 2, 2},
      py::arg("lesion_fraction") = 0.0, py::arg("seed") = 0,
      py::arg("modality_maps") = std::map<std::string, std::array<double, 3>>{},
      py::arg("noise_sigma") = 0.01,
      "Synthetic multi-channel study; dims and spacing are (z, y, x), "
      "modality_maps values are (gamma, gain, offset).");
}
