#include "liverstage/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace liverstage {

double dice(const Mask& a, const Mask& b) {
  if (!a.same_geometry(b)) throw std::invalid_argument("dice: geometry mismatch");
  size_t na = 0, nb = 0, ni = 0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    na += a.data[i];
    nb += b.data[i];
    ni += a.data[i] & b.data[i];
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(ni) / static_cast<double>(na + nb);
}

std::vector<std::array<double, 3>> boundary_points(const Mask& m) {
  std::vector<std::array<double, 3>> pts;
  for (int z = 0; z < m.dims[2]; ++z)
    for (int y = 0; y < m.dims[1]; ++y)
      for (int x = 0; x < m.dims[0]; ++x) {
        if (!m.at(x, y, z)) continue;
        bool boundary = false;
        const int nb[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0},
                              {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
        for (const auto& d : nb) {
          int px = x + d[0], py = y + d[1], pz = z + d[2];
          if (!m.in_bounds(px, py, pz) || !m.at(px, py, pz)) {
            boundary = true;
            break;
          }
        }
        if (boundary)
          pts.push_back({m.origin[0] + x * m.spacing[0], m.origin[1] + y * m.spacing[1],
                         m.origin[2] + z * m.spacing[2]});
      }
  return pts;
}

namespace {

// Large finite sentinel; squared distances in this toolkit stay far below it.
constexpr double kInf = 1e30;

// Felzenszwalb 1-D squared distance transform with anisotropic spacing.
void dt1d(const double* f, double* out, int n, double s) {
  std::vector<int> v(n);
  std::vector<double> z(n + 1);
  // z needs true infinities: with f values of kInf and sub-unit spacing the
  // intersection can fall below -kInf, which would walk k off the array.
  const double inf = std::numeric_limits<double>::infinity();
  int k = 0;
  v[0] = 0;
  z[0] = -inf;
  z[1] = inf;
  const double s2 = s * s;
  for (int q = 1; q < n; ++q) {
    double sep;
    while (true) {
      sep = ((f[q] + s2 * q * q) - (f[v[k]] + s2 * v[k] * v[k])) /
            (2.0 * s2 * (q - v[k]));
      if (sep > z[k]) break;
      --k;
    }
    ++k;
    v[k] = q;
    z[k] = sep;
    z[k + 1] = inf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    double d = s * (q - v[k]);
    out[q] = d * d + f[v[k]];
  }
}

// Squared Euclidean distance (mm) from every voxel to the boundary set of m.
std::vector<double> boundary_edt_sq(const Mask& m) {
  const auto& d = m.dims;
  size_t n = m.voxel_count();
  std::vector<double> dist(n, kInf);
  // seed with boundary voxels
  for (int z = 0; z < d[2]; ++z)
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x) {
        if (!m.at(x, y, z)) continue;
        bool boundary = x == 0 || x == d[0] - 1 || y == 0 || y == d[1] - 1 || z == 0 ||
                        z == d[2] - 1 || !m.at(x - 1, y, z) || !m.at(x + 1, y, z) ||
                        !m.at(x, y - 1, z) || !m.at(x, y + 1, z) || !m.at(x, y, z - 1) ||
                        !m.at(x, y, z + 1);
        if (boundary) dist[m.index(x, y, z)] = 0.0;
      }

  std::vector<double> line(std::max({d[0], d[1], d[2]}));
  std::vector<double> lout(line.size());
  // x pass
  for (int z = 0; z < d[2]; ++z)
    for (int y = 0; y < d[1]; ++y) {
      for (int x = 0; x < d[0]; ++x) line[x] = dist[m.index(x, y, z)];
      dt1d(line.data(), lout.data(), d[0], m.spacing[0]);
      for (int x = 0; x < d[0]; ++x) dist[m.index(x, y, z)] = lout[x];
    }
  // y pass
  for (int z = 0; z < d[2]; ++z)
    for (int x = 0; x < d[0]; ++x) {
      for (int y = 0; y < d[1]; ++y) line[y] = dist[m.index(x, y, z)];
      dt1d(line.data(), lout.data(), d[1], m.spacing[1]);
      for (int y = 0; y < d[1]; ++y) dist[m.index(x, y, z)] = lout[y];
    }
  // z pass
  for (int y = 0; y < d[1]; ++y)
    for (int x = 0; x < d[0]; ++x) {
      for (int z = 0; z < d[2]; ++z) line[z] = dist[m.index(x, y, z)];
      dt1d(line.data(), lout.data(), d[2], m.spacing[2]);
      for (int z = 0; z < d[2]; ++z) dist[m.index(x, y, z)] = lout[z];
    }
  return dist;
}

double directed_hd_sq(const Mask& from, const std::vector<double>& edt_to) {
  double worst = 0.0;
  const auto& d = from.dims;
  for (int z = 0; z < d[2]; ++z)
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x) {
        if (!from.at(x, y, z)) continue;
        bool boundary = x == 0 || x == d[0] - 1 || y == 0 || y == d[1] - 1 || z == 0 ||
                        z == d[2] - 1 || !from.at(x - 1, y, z) || !from.at(x + 1, y, z) ||
                        !from.at(x, y - 1, z) || !from.at(x, y + 1, z) ||
                        !from.at(x, y, z - 1) || !from.at(x, y, z + 1);
        if (boundary) worst = std::max(worst, edt_to[from.index(x, y, z)]);
      }
  return worst;
}

}  // namespace

double hausdorff(const Mask& a, const Mask& b) {
  if (!a.same_geometry(b)) throw std::invalid_argument("hausdorff: geometry mismatch");
  if (a.count() == 0 || b.count() == 0)
    throw std::invalid_argument("hausdorff: empty mask");
  auto edt_a = boundary_edt_sq(a);
  auto edt_b = boundary_edt_sq(b);
  double h = std::max(directed_hd_sq(a, edt_b), directed_hd_sq(b, edt_a));
  return std::sqrt(h);
}

double auc(const std::vector<std::pair<double, bool>>& scores) {
  std::vector<double> pos, neg;
  for (const auto& [s, p] : scores) (p ? pos : neg).push_back(s);
  if (pos.empty() || neg.empty())
    throw std::invalid_argument("auc: both classes must be present");
  // rank-sum form, O(n log n)
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  double wins = 0.0;
  for (double p : pos) {
    auto lo = std::lower_bound(neg.begin(), neg.end(), p);
    auto hi = std::upper_bound(neg.begin(), neg.end(), p);
    wins += static_cast<double>(lo - neg.begin()) + 0.5 * static_cast<double>(hi - lo);
  }
  return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

double accuracy(const std::vector<std::pair<bool, bool>>& decisions) {
  if (decisions.empty()) throw std::invalid_argument("accuracy: empty input");
  size_t n = 0;
  for (const auto& [p, t] : decisions) n += (p == t);
  return static_cast<double>(n) / static_cast<double>(decisions.size());
}

}  // namespace liverstage
