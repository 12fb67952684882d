#include "liverstage/mi.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace liverstage {
namespace {

// Cubic B-spline, support (-2, 2).
double bspline3(double u) {
  double a = std::abs(u);
  if (a < 1.0) return 2.0 / 3.0 - a * a + 0.5 * a * a * a;
  if (a < 2.0) {
    double t = 2.0 - a;
    return t * t * t / 6.0;
  }
  return 0.0;
}

double bspline3_deriv(double u) {
  double a = std::abs(u);
  double s = (u < 0.0) ? -1.0 : 1.0;
  if (a < 1.0) return s * (-2.0 * a + 1.5 * a * a);
  if (a < 2.0) {
    double t = 2.0 - a;
    return -s * 0.5 * t * t;
  }
  return 0.0;
}

struct Binner {
  double lo, scale;  // continuous coord c = (v - lo) * scale - 0.5
  int bins;

  double coord(double v, bool* clamped = nullptr) const {
    double c = (v - lo) * scale - 0.5;
    bool cl = false;
    if (c < 0.0) { c = 0.0; cl = true; }
    if (c > bins - 1.0) { c = bins - 1.0; cl = true; }
    if (clamped) *clamped = cl;
    return c;
  }

  int hard_bin(double v) const {
    int b = static_cast<int>(std::floor((v - lo) * scale));
    return std::clamp(b, 0, bins - 1);
  }
};

Binner make_binner(const std::array<double, 2>& range, int bins) {
  return Binner{range[0], bins / (range[1] - range[0]), bins};
}

// Normalized Parzen weights of one sample over nearby bins, plus d(weight)/dc.
// Out-of-range bin indices fold onto the edge bins so mass always sums to 1.
struct SoftWeights {
  int first = 0;  // clamped bin index of entries[0]
  int count = 0;
  std::array<double, 16> w{};
  std::array<double, 16> dw{};
  std::array<int, 16> bin{};
};

SoftWeights soft_weights(double c, double h, int bins) {
  SoftWeights out;
  int k0 = static_cast<int>(std::ceil(c - 2.0 * h));
  int k1 = static_cast<int>(std::floor(c + 2.0 * h));
  if (k1 - k0 + 1 > 16) {  // very wide kernel: widen stride over bins
    k0 = std::max(k0, 0);
    k1 = std::min(k1, bins - 1);
  }
  double z = 0.0, dz = 0.0;
  int n = 0;
  std::array<double, 16> b{}, db{};
  std::array<int, 16> idx{};
  for (int k = k0; k <= k1 && n < 16; ++k) {
    double u = (c - k) / h;
    double bv = bspline3(u);
    if (bv <= 0.0 && std::abs(u) >= 2.0) continue;
    b[n] = bv;
    db[n] = bspline3_deriv(u) / h;
    idx[n] = std::clamp(k, 0, bins - 1);
    z += bv;
    dz += db[n];
    ++n;
  }
  if (n == 0 || z <= 0.0) {  // kernel narrower than the gap to any bin center
    out.count = 1;
    out.bin[0] = std::clamp(static_cast<int>(std::lround(c)), 0, bins - 1);
    out.w[0] = 1.0;
    out.dw[0] = 0.0;
    return out;
  }
  out.count = n;
  for (int i = 0; i < n; ++i) {
    out.bin[i] = idx[i];
    out.w[i] = b[i] / z;
    out.dw[i] = (db[i] * z - b[i] * dz) / (z * z);
  }
  return out;
}

void finalize(JointHistogram& h) {
  const int n = h.bins;
  h.marginal_x.assign(n, 0.0);
  h.marginal_y.assign(n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double p = h.at(i, j);
      h.marginal_x[i] += p;
      h.marginal_y[j] += p;
    }
}

void check_pair(std::span<const float> x, std::span<const float> y) {
  if (x.empty()) throw std::invalid_argument("empty patch arrays");
  if (x.size() != y.size()) throw std::invalid_argument("patch array length mismatch");
}

}  // namespace

JointHistogram hard_joint_histogram(std::span<const float> x, std::span<const float> y,
                                    const HistogramConfig& cfg) {
  cfg.validate();
  check_pair(x, y);
  Binner bx = make_binner(cfg.range_x, cfg.bins);
  Binner by = make_binner(cfg.range_y, cfg.bins);
  JointHistogram h;
  h.bins = cfg.bins;
  h.joint.assign(static_cast<size_t>(cfg.bins) * cfg.bins, 0.0);
  const double inc = 1.0 / static_cast<double>(x.size());
  for (size_t k = 0; k < x.size(); ++k)
    h.at(bx.hard_bin(x[k]), by.hard_bin(y[k])) += inc;
  finalize(h);
  return h;
}

JointHistogram soft_joint_histogram(std::span<const float> x, std::span<const float> y,
                                    const HistogramConfig& cfg) {
  cfg.validate();
  check_pair(x, y);
  Binner bx = make_binner(cfg.range_x, cfg.bins);
  Binner by = make_binner(cfg.range_y, cfg.bins);
  JointHistogram h;
  h.bins = cfg.bins;
  h.joint.assign(static_cast<size_t>(cfg.bins) * cfg.bins, 0.0);
  const double inc = 1.0 / static_cast<double>(x.size());
  for (size_t k = 0; k < x.size(); ++k) {
    SoftWeights wx = soft_weights(bx.coord(x[k]), cfg.kernel_width, cfg.bins);
    SoftWeights wy = soft_weights(by.coord(y[k]), cfg.kernel_width, cfg.bins);
    for (int i = 0; i < wx.count; ++i)
      for (int j = 0; j < wy.count; ++j)
        h.at(wx.bin[i], wy.bin[j]) += inc * wx.w[i] * wy.w[j];
  }
  finalize(h);
  return h;
}

double local_mi(const JointHistogram& h, const HistogramConfig& cfg) {
  const double eps = cfg.epsilon;
  double sum = 0.0, comp = 0.0;  // Kahan
  for (int i = 0; i < h.bins; ++i)
    for (int j = 0; j < h.bins; ++j) {
      double p = h.at(i, j);
      if (p == 0.0) continue;
      double term = p * std::log((p + eps) / (h.marginal_x[i] * h.marginal_y[j] + eps));
      double t = sum + term;
      comp += (std::abs(sum) >= std::abs(term)) ? (sum - t) + term : (term - t) + sum;
      sum = t;
    }
  return sum + comp;
}

static std::array<int, 3> effective_patch_size(const std::array<int, 3>& dims,
                                               const PatchGrid& grid) {
  return {std::min(grid.patch_size[0], dims[0]), std::min(grid.patch_size[1], dims[1]),
          std::min(grid.patch_size[2], dims[2])};
}

std::vector<std::array<int, 3>> enumerate_patches(const std::array<int, 3>& dims,
                                                  const PatchGrid& grid) {
  grid.validate();
  auto eff = effective_patch_size(dims, grid);
  std::vector<std::array<int, 3>> out;
  for (int z = 0; z + eff[2] <= dims[2]; z += grid.stride[2])
    for (int y = 0; y + eff[1] <= dims[1]; y += grid.stride[1])
      for (int x = 0; x + eff[0] <= dims[0]; x += grid.stride[0]) {
        if (grid.restriction_mask) {
          const Mask& m = *grid.restriction_mask;
          int cx = x + eff[0] / 2, cy = y + eff[1] / 2, cz = z + eff[2] / 2;
          if (!m.in_bounds(cx, cy, cz) || m.at(cx, cy, cz) == 0) continue;
        }
        out.push_back({x, y, z});
      }
  return out;
}

namespace {

void gather_patch(const Volume& v, const std::array<int, 3>& corner,
                  const std::array<int, 3>& size, std::vector<float>& out) {
  out.clear();
  for (int z = corner[2]; z < corner[2] + size[2]; ++z)
    for (int y = corner[1]; y < corner[1] + size[1]; ++y) {
      const float* row = v.data.data() + v.index(corner[0], y, z);
      out.insert(out.end(), row, row + size[0]);
    }
}

}  // namespace

double mi_loss(const Volume& fixed, const Volume& moving, const PatchGrid& grid,
               const HistogramConfig& cfg, BinningMode mode) {
  if (fixed.dims != moving.dims)
    throw std::invalid_argument("mi_loss: fixed/moving dims differ");
  auto corners = enumerate_patches(fixed.dims, grid);
  if (corners.empty()) throw std::runtime_error("mi_loss: no patches selected");
  auto eff = effective_patch_size(fixed.dims, grid);

  // Patches are independent; computing them in parallel and summing the stored
  // per-patch values in index order keeps the result bit-identical to a
  // sequential run.
  std::vector<double> terms(corners.size());
  auto worker = [&](size_t begin, size_t end) {
    std::vector<float> xp, yp;
    for (size_t p = begin; p < end; ++p) {
      gather_patch(fixed, corners[p], eff, xp);
      gather_patch(moving, corners[p], eff, yp);
      JointHistogram h = (mode == BinningMode::Hard) ? hard_joint_histogram(xp, yp, cfg)
                                                     : soft_joint_histogram(xp, yp, cfg);
      terms[p] = local_mi(h, cfg);
    }
  };
  size_t hw = std::max(1u, std::thread::hardware_concurrency());
  size_t workers = std::min(hw, corners.size());
  if (workers <= 1) {
    worker(0, corners.size());
  } else {
    std::vector<std::thread> pool;
    size_t chunk = (corners.size() + workers - 1) / workers;
    for (size_t w = 0; w < workers; ++w) {
      size_t b = w * chunk, e = std::min(corners.size(), b + chunk);
      if (b >= e) break;
      pool.emplace_back(worker, b, e);
    }
    for (auto& t : pool) t.join();
  }

  double sum = 0.0, comp = 0.0;
  for (double term : terms) {
    double t = sum + term;
    comp += (std::abs(sum) >= std::abs(term)) ? (sum - t) + term : (term - t) + sum;
    sum = t;
  }
  return 1.0 - (sum + comp) / static_cast<double>(corners.size());
}

std::vector<double> mi_loss_gradient(const Volume& fixed, const Volume& moving,
                                     const PatchGrid& grid, const HistogramConfig& cfg) {
  if (fixed.dims != moving.dims)
    throw std::invalid_argument("mi_loss_gradient: fixed/moving dims differ");
  cfg.validate();
  auto corners = enumerate_patches(fixed.dims, grid);
  if (corners.empty()) throw std::runtime_error("mi_loss_gradient: no patches selected");
  auto eff = effective_patch_size(fixed.dims, grid);

  Binner bx = make_binner(cfg.range_x, cfg.bins);
  Binner by = make_binner(cfg.range_y, cfg.bins);
  const double eps = cfg.epsilon;
  const int nb = cfg.bins;
  std::vector<double> grad(moving.voxel_count(), 0.0);
  const double patch_norm = -1.0 / static_cast<double>(corners.size());

  std::vector<float> xp, yp;
  std::vector<SoftWeights> wxs, wys;
  std::vector<double> dcdy;  // d(continuous y coord)/d(intensity), 0 when clamped
  std::vector<double> dmi_dp(static_cast<size_t>(nb) * nb);
  std::vector<double> rowterm(nb), colterm(nb);

  for (const auto& corner : corners) {
    gather_patch(fixed, corner, eff, xp);
    gather_patch(moving, corner, eff, yp);
    const size_t n = xp.size();
    const double inc = 1.0 / static_cast<double>(n);

    JointHistogram h;
    h.bins = nb;
    h.joint.assign(static_cast<size_t>(nb) * nb, 0.0);
    wxs.resize(n);
    wys.resize(n);
    dcdy.resize(n);
    for (size_t k = 0; k < n; ++k) {
      bool clamped = false;
      double cx = bx.coord(xp[k]);
      double cy = by.coord(yp[k], &clamped);
      dcdy[k] = clamped ? 0.0 : by.scale;
      wxs[k] = soft_weights(cx, cfg.kernel_width, nb);
      wys[k] = soft_weights(cy, cfg.kernel_width, nb);
      for (int i = 0; i < wxs[k].count; ++i)
        for (int j = 0; j < wys[k].count; ++j)
          h.at(wxs[k].bin[i], wys[k].bin[j]) += inc * wxs[k].w[i] * wys[k].w[j];
    }
    finalize(h);

    // dMI/dP(k,l) accounting for the marginals' dependence on the joint.
    std::fill(rowterm.begin(), rowterm.end(), 0.0);
    std::fill(colterm.begin(), colterm.end(), 0.0);
    for (int i = 0; i < nb; ++i)
      for (int j = 0; j < nb; ++j) {
        double p = h.at(i, j);
        if (p == 0.0) continue;
        double denom = h.marginal_x[i] * h.marginal_y[j] + eps;
        rowterm[i] += p * h.marginal_y[j] / denom;
        colterm[j] += p * h.marginal_x[i] / denom;
      }
    for (int i = 0; i < nb; ++i)
      for (int j = 0; j < nb; ++j) {
        double p = h.at(i, j);
        double denom = h.marginal_x[i] * h.marginal_y[j] + eps;
        dmi_dp[static_cast<size_t>(i) * nb + j] =
            std::log((p + eps) / denom) + p / (p + eps) - rowterm[i] - colterm[j];
      }

    size_t k = 0;
    for (int z = corner[2]; z < corner[2] + eff[2]; ++z)
      for (int y = corner[1]; y < corner[1] + eff[1]; ++y)
        for (int x = corner[0]; x < corner[0] + eff[0]; ++x, ++k) {
          if (dcdy[k] == 0.0) continue;
          const SoftWeights& wx = wxs[k];
          const SoftWeights& wy = wys[k];
          double acc = 0.0;
          for (int i = 0; i < wx.count; ++i)
            for (int j = 0; j < wy.count; ++j)
              acc += dmi_dp[static_cast<size_t>(wx.bin[i]) * nb + wy.bin[j]] * wx.w[i] *
                     wy.dw[j];
          grad[moving.index(x, y, z)] += patch_norm * inc * acc * dcdy[k];
        }
  }
  return grad;
}

std::array<double, 2> robust_intensity_range(const Volume& v, const Mask* mask) {
  std::vector<float> vals;
  if (mask) {
    if (!mask->matches_volume(v))
      throw std::invalid_argument("robust_intensity_range: mask geometry mismatch");
    for (size_t i = 0; i < v.data.size(); ++i)
      if (mask->data[i]) vals.push_back(v.data[i]);
  } else {
    vals = v.data;
  }
  if (vals.empty()) throw std::runtime_error("robust_intensity_range: no voxels selected");
  auto pct = [&](double q) {
    size_t k = static_cast<size_t>(q * (vals.size() - 1) + 0.5);
    std::nth_element(vals.begin(), vals.begin() + k, vals.end());
    return static_cast<double>(vals[k]);
  };
  double lo = pct(0.005), hi = pct(0.995);
  if (!(lo < hi)) hi = lo + 1.0;  // constant image
  return {lo, hi};
}

}  // namespace liverstage
