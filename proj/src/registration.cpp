#include "liverstage/registration.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

namespace liverstage {

namespace {

using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 euler_xyz_matrix(const std::array<double, 3>& r) {
  double ca = std::cos(r[0]), sa = std::sin(r[0]);
  double cb = std::cos(r[1]), sb = std::sin(r[1]);
  double cc = std::cos(r[2]), sc = std::sin(r[2]);
  // R = Rz * Ry * Rx
  return {{{cb * cc, cc * sa * sb - ca * sc, ca * cc * sb + sa * sc},
           {cb * sc, ca * cc + sa * sb * sc, ca * sb * sc - cc * sa},
           {-sb, cb * sa, ca * cb}}};
}

std::array<double, 3> matrix_to_euler_xyz(const Mat3& m) {
  double sb = -m[2][0];
  sb = std::clamp(sb, -1.0, 1.0);
  double b = std::asin(sb);
  double a, c;
  if (std::abs(sb) < 1.0 - 1e-12) {
    a = std::atan2(m[2][1], m[2][2]);
    c = std::atan2(m[1][0], m[0][0]);
  } else {  // gimbal lock
    a = std::atan2(-m[0][1], m[1][1]);
    c = 0.0;
  }
  return {a, b, c};
}

std::array<double, 3> mat_apply(const Mat3& m, const std::array<double, 3>& v) {
  return {m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
          m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
          m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2]};
}

Mat3 transpose(const Mat3& m) {
  Mat3 t;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) t[i][j] = m[j][i];
  return t;
}

}  // namespace

Mat3 RigidTransform::matrix() const { return euler_xyz_matrix(rotation); }

std::array<double, 3> RigidTransform::apply(const std::array<double, 3>& p) const {
  Mat3 m = matrix();
  auto q = mat_apply(m, {p[0] - center[0], p[1] - center[1], p[2] - center[2]});
  return {q[0] + center[0] + translation[0], q[1] + center[1] + translation[1],
          q[2] + center[2] + translation[2]};
}

RigidTransform RigidTransform::inverse() const {
  Mat3 rt = transpose(matrix());
  RigidTransform inv;
  inv.center = center;
  inv.rotation = matrix_to_euler_xyz(rt);
  auto rt_t = mat_apply(rt, translation);
  inv.translation = {-rt_t[0], -rt_t[1], -rt_t[2]};
  return inv;
}

void save_transform(const RigidTransform& t, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  auto triple = [](const std::array<double, 3>& a) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "[%.17g, %.17g, %.17g]", a[0], a[1], a[2]);
    return std::string(buf);
  };
  f << "{\n  \"rotation\": " << triple(t.rotation)
    << ",\n  \"translation\": " << triple(t.translation)
    << ",\n  \"center\": " << triple(t.center) << "\n}\n";
}

RigidTransform load_transform(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  f >> j;
  RigidTransform t;
  for (int a = 0; a < 3; ++a) {
    t.rotation[a] = j.at("rotation").at(a).get<double>();
    t.translation[a] = j.at("translation").at(a).get<double>();
    t.center[a] = j.at("center").at(a).get<double>();
  }
  return t;
}

Volume resample_linear(const Volume& moving, const RigidTransform& t, const Volume& target) {
  Volume out(target.dims, target.spacing, target.origin);
  const auto& d = moving.dims;
  for (int z = 0; z < target.dims[2]; ++z)
    for (int y = 0; y < target.dims[1]; ++y)
      for (int x = 0; x < target.dims[0]; ++x) {
        auto w = voxel_to_world(target, {double(x), double(y), double(z)});
        auto idx = world_to_voxel(moving, t.apply(w));
        int fx = static_cast<int>(std::floor(idx[0]));
        int fy = static_cast<int>(std::floor(idx[1]));
        int fz = static_cast<int>(std::floor(idx[2]));
        if (fx < -1 || fx >= d[0] || fy < -1 || fy >= d[1] || fz < -1 || fz >= d[2])
          continue;
        double tx = idx[0] - fx, ty = idx[1] - fy, tz = idx[2] - fz;
        double acc = 0.0;
        for (int dz = 0; dz < 2; ++dz)
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              int px = fx + dx, py = fy + dy, pz = fz + dz;
              if (!moving.in_bounds(px, py, pz)) continue;
              double wgt = (dx ? tx : 1.0 - tx) * (dy ? ty : 1.0 - ty) * (dz ? tz : 1.0 - tz);
              acc += wgt * moving.at(px, py, pz);
            }
        out.at(x, y, z) = static_cast<float>(acc);
      }
  return out;
}

Mask resample_nearest(const Mask& mask, const RigidTransform& t, const Volume& target) {
  Mask out = Mask::like(target);
  for (int z = 0; z < target.dims[2]; ++z)
    for (int y = 0; y < target.dims[1]; ++y)
      for (int x = 0; x < target.dims[0]; ++x) {
        auto w = voxel_to_world(target, {double(x), double(y), double(z)});
        auto p = t.apply(w);
        int ix = static_cast<int>(std::lround((p[0] - mask.origin[0]) / mask.spacing[0]));
        int iy = static_cast<int>(std::lround((p[1] - mask.origin[1]) / mask.spacing[1]));
        int iz = static_cast<int>(std::lround((p[2] - mask.origin[2]) / mask.spacing[2]));
        if (mask.in_bounds(ix, iy, iz)) out.at(x, y, z) = mask.at(ix, iy, iz);
      }
  return out;
}

Volume downsample_mean(const Volume& v, int factor) {
  if (factor <= 1) return v;
  std::array<int, 3> nd;
  for (int a = 0; a < 3; ++a) {
    nd[a] = std::max(1, v.dims[a] / factor);
  }
  std::array<double, 3> ns = {v.spacing[0] * factor, v.spacing[1] * factor,
                              v.spacing[2] * factor};
  std::array<double, 3> no = {v.origin[0] + 0.5 * (factor - 1) * v.spacing[0],
                              v.origin[1] + 0.5 * (factor - 1) * v.spacing[1],
                              v.origin[2] + 0.5 * (factor - 1) * v.spacing[2]};
  Volume out(nd, ns, no);
  for (int z = 0; z < nd[2]; ++z)
    for (int y = 0; y < nd[1]; ++y)
      for (int x = 0; x < nd[0]; ++x) {
        double acc = 0.0;
        int n = 0;
        for (int dz = 0; dz < factor; ++dz)
          for (int dy = 0; dy < factor; ++dy)
            for (int dx = 0; dx < factor; ++dx) {
              int px = x * factor + dx, py = y * factor + dy, pz = z * factor + dz;
              if (!v.in_bounds(px, py, pz)) continue;
              acc += v.at(px, py, pz);
              ++n;
            }
        out.at(x, y, z) = static_cast<float>(acc / n);
      }
  return out;
}

Mask downsample_mask(const Mask& m, int factor) {
  if (factor <= 1) return m;
  std::array<int, 3> nd;
  for (int a = 0; a < 3; ++a) nd[a] = std::max(1, m.dims[a] / factor);
  Mask out(nd,
           {m.spacing[0] * factor, m.spacing[1] * factor, m.spacing[2] * factor},
           {m.origin[0] + 0.5 * (factor - 1) * m.spacing[0],
            m.origin[1] + 0.5 * (factor - 1) * m.spacing[1],
            m.origin[2] + 0.5 * (factor - 1) * m.spacing[2]});
  for (int z = 0; z < nd[2]; ++z)
    for (int y = 0; y < nd[1]; ++y)
      for (int x = 0; x < nd[0]; ++x) {
        uint8_t any = 0;
        for (int dz = 0; dz < factor && !any; ++dz)
          for (int dy = 0; dy < factor && !any; ++dy)
            for (int dx = 0; dx < factor && !any; ++dx) {
              int px = x * factor + dx, py = y * factor + dy, pz = z * factor + dz;
              if (m.in_bounds(px, py, pz) && m.at(px, py, pz)) any = 1;
            }
        out.at(x, y, z) = any;
      }
  return out;
}

double ncc_loss(const Volume& fixed, const Volume& moving, const PatchGrid& grid) {
  if (fixed.dims != moving.dims)
    throw std::invalid_argument("ncc_loss: fixed/moving dims differ");
  auto corners = enumerate_patches(fixed.dims, grid);
  if (corners.empty()) throw std::runtime_error("ncc_loss: no patches selected");
  std::array<int, 3> eff = {std::min(grid.patch_size[0], fixed.dims[0]),
                            std::min(grid.patch_size[1], fixed.dims[1]),
                            std::min(grid.patch_size[2], fixed.dims[2])};
  double total = 0.0;
  for (const auto& c : corners) {
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    size_t n = 0;
    for (int z = c[2]; z < c[2] + eff[2]; ++z)
      for (int y = c[1]; y < c[1] + eff[1]; ++y)
        for (int x = c[0]; x < c[0] + eff[0]; ++x) {
          double a = fixed.at(x, y, z), b = moving.at(x, y, z);
          sx += a;
          sy += b;
          sxx += a * a;
          syy += b * b;
          sxy += a * b;
          ++n;
        }
    double nn = static_cast<double>(n);
    double cov = sxy - sx * sy / nn;
    double vx = sxx - sx * sx / nn;
    double vy = syy - sy * sy / nn;
    if (vx > 1e-12 && vy > 1e-12) total += cov / std::sqrt(vx * vy);
  }
  return 1.0 - total / static_cast<double>(corners.size());
}

void RegistrationConfig::validate() const {
  if (levels.empty()) throw std::invalid_argument("levels must be nonempty");
  for (size_t i = 1; i < levels.size(); ++i)
    if (levels[i].downsample > levels[i - 1].downsample)
      throw std::invalid_argument("level factors must be descending");
  if (!(step_init > 0.0) || !(step_shrink > 0.0) || step_shrink >= 1.0)
    throw std::invalid_argument("bad step parameters");
  if (!(converge_tol > 0.0)) throw std::invalid_argument("converge_tol must be positive");
  grid.validate();
}

namespace {

struct LossContext {
  const Volume* fixed;
  const Volume* moving;
  PatchGrid grid;
  HistogramConfig hist;
  SimilarityMetric metric;
  BinningMode binning;

  double eval(const RigidTransform& t) const {
    Volume warped = resample_linear(*moving, t, *fixed);
    if (metric == SimilarityMetric::PatchNCC) return ncc_loss(*fixed, warped, grid);
    return mi_loss(*fixed, warped, grid, hist, binning);
  }
};

}  // namespace

RegistrationResult register_rigid(const Volume& fixed, const Volume& moving,
                                  const RegistrationConfig& cfg, const Mask* fixed_mask) {
  cfg.validate();
  fixed.validate();
  moving.validate();

  RigidTransform t;
  for (int a = 0; a < 3; ++a)
    t.center[a] = fixed.origin[a] + 0.5 * (fixed.dims[a] - 1) * fixed.spacing[a];

  // Physical half-extent couples rotation and translation step sizes.
  double radius = 0.0;
  for (int a = 0; a < 3; ++a) {
    double e = 0.5 * fixed.dims[a] * fixed.spacing[a];
    radius += e * e;
  }
  radius = std::sqrt(radius);
  const std::array<double, 6> scales = {radius, radius, radius, 1.0, 1.0, 1.0};

  auto y_range = robust_intensity_range(moving);

  RegistrationResult res;
  res.transform = t;
  bool have_loss = false;
  double best_loss = 0.0;
  int total_iters = 0;

  for (const auto& level : cfg.levels) {
    Volume fixed_l = downsample_mean(fixed, level.downsample);
    Mask mask_l;
    LossContext ctx{&fixed_l, &moving, cfg.grid, cfg.hist, cfg.metric, cfg.binning};
    if (fixed_mask) {
      mask_l = downsample_mask(*fixed_mask, level.downsample);
      ctx.grid.restriction_mask = &mask_l;
    }
    ctx.hist.range_x = robust_intensity_range(fixed_l, fixed_mask ? &mask_l : nullptr);
    ctx.hist.range_y = y_range;

    double min_spacing = *std::min_element(fixed_l.spacing.begin(), fixed_l.spacing.end());
    const double fd_trans = 0.1 * min_spacing;
    // matched physical perturbation: a rotation FD step moves the far edge of
    // the volume by about one translation FD step
    const double fd_rot = fd_trans / radius;
    const double step_min = 0.01 * min_spacing;
    double step = cfg.step_init * level.downsample;

    std::array<double, 6> p = {t.rotation[0], t.rotation[1], t.rotation[2],
                               t.translation[0], t.translation[1], t.translation[2]};
    auto to_transform = [&](const std::array<double, 6>& q) {
      RigidTransform tt;
      tt.center = t.center;
      tt.rotation = {q[0], q[1], q[2]};
      tt.translation = {q[3], q[4], q[5]};
      return tt;
    };

    double loss;
    try {
      loss = ctx.eval(to_transform(p));
    } catch (const std::runtime_error&) {
      // no patches at this level (mask vanished under pooling); skip level
      continue;
    }
    double level_start_loss = loss;
    int small_steps = 0;

    auto run_descent = [&] {
      step = std::max(step, 0.25 * cfg.step_init * level.downsample);
      small_steps = 0;
      for (int it = 0; it < level.max_iterations; ++it) {
      std::array<double, 6> g{};
      for (int i = 0; i < 6; ++i) {
        double h = (i < 3) ? fd_rot : fd_trans;
        auto pp = p;
        pp[i] = p[i] + h;
        double lp = ctx.eval(to_transform(pp));
        pp[i] = p[i] - h;
        double lm = ctx.eval(to_transform(pp));
        g[i] = (lp - lm) / (2.0 * h);
      }
      // Physical-units direction: rotations weighted by the image radius.
      double norm = 0.0;
      std::array<double, 6> dir{};
      for (int i = 0; i < 6; ++i) {
        double gs = g[i] / scales[i];
        dir[i] = -gs;
        norm += gs * gs;
      }
      norm = std::sqrt(norm);
      if (norm < 1e-15) break;
      for (int i = 0; i < 6; ++i) dir[i] /= norm;

      bool accepted = false;
      while (step >= step_min) {
        auto pp = p;
        for (int i = 0; i < 6; ++i) pp[i] = p[i] + step * dir[i] / scales[i];
        double lnew = ctx.eval(to_transform(pp));
        if (lnew < loss) {
          double rel = (loss - lnew) / std::max(std::abs(loss), 1e-12);
          p = pp;
          loss = lnew;
          accepted = true;
          step = std::min(step * 1.5, cfg.step_init * level.downsample);
          ++total_iters;
          // one barely-improving step can be an artifact of the line search;
          // stop the level only after several in a row
          small_steps = (rel < cfg.converge_tol) ? small_steps + 1 : 0;
          if (small_steps >= 3) it = level.max_iterations;  // converged
          break;
        }
        step *= cfg.step_shrink;
      }
      if (!accepted) {
        // the combined direction can be swamped by gradient noise; sweep each
        // parameter separately before declaring the level done
        double cstep = 0.5 * cfg.step_init * level.downsample;
        while (!accepted && cstep >= step_min) {
          for (int i = 0; i < 6 && !accepted; ++i) {
            for (int sgn = -1; sgn <= 1 && !accepted; sgn += 2) {
              auto pp = p;
              pp[i] = p[i] + sgn * cstep / scales[i];
              double lnew = ctx.eval(to_transform(pp));
              if (lnew < loss) {
                p = pp;
                loss = lnew;
                accepted = true;
                step = std::max(cstep, 2.0 * step_min);
                ++total_iters;
              }
            }
          }
          cstep *= cfg.step_shrink;
        }
        small_steps = 0;
      }
      if (!accepted) break;  // step floor reached
      }
    };
    run_descent();

    if (&level == &cfg.levels.back()) {
      // descent can stall against a shallow barrier with a clearly deeper
      // rotation basin a few degrees away; hop only when the probe beats the
      // current loss by a solid margin, so noise minima never pull us off
      const double kStep = 1.5 * M_PI / 180.0;
      const double margin = 0.02 * std::abs(loss);
      double best_probe = loss - margin;
      std::array<double, 6> bp = p;
      bool hop = false;
      for (int ix = -2; ix <= 2; ++ix)
        for (int iy = -2; iy <= 2; ++iy)
          for (int iz = -2; iz <= 2; ++iz) {
            if (ix == 0 && iy == 0 && iz == 0) continue;
            auto pp = p;
            pp[0] += ix * kStep;
            pp[1] += iy * kStep;
            pp[2] += iz * kStep;
            double l = ctx.eval(to_transform(pp));
            if (l < best_probe) {
              best_probe = l;
              bp = pp;
              hop = true;
            }
          }
      if (hop) {
        p = bp;
        loss = ctx.eval(to_transform(p));
        run_descent();
      }
    }

    t = to_transform(p);
    best_loss = loss;
    have_loss = true;
    if (loss > level_start_loss + 1e-12) res.converged = false;
  }

  if (!have_loss) throw std::runtime_error("register_rigid: no patches in overlap");
  res.transform = t;
  res.final_loss = best_loss;
  res.iterations = total_iters;
  return res;
}

}  // namespace liverstage
