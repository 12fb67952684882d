// Acceptance suite: one pass/fail line per criterion, nonzero exit on failure.
// Usage: acceptance <liverstage-binary>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include <json.hpp>

#include "liverstage/metrics.hpp"
#include "liverstage/mi.hpp"
#include "liverstage/phantom.hpp"
#include "liverstage/registration.hpp"
#include "liverstage/staging.hpp"

namespace fs = std::filesystem;
using namespace liverstage;

namespace {

std::string g_bin;
fs::path g_dir;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int run_cli(const std::string& args) {
  std::string cmd = g_bin + " " + args + " > " + (g_dir / "cli_out.txt").string() + " 2>&1";
  int rc = std::system(cmd.c_str());
  return rc == -1 ? -1 : WEXITSTATUS(rc);
}

PhantomSpec base_spec(uint64_t seed, std::array<int, 3> dims, std::array<double, 3> spacing) {
  PhantomSpec spec;
  spec.dims = dims;
  spec.spacing = spacing;
  for (int a = 0; a < 3; ++a) {
    spec.organ_center_mm[a] = 0.5 * dims[a] * spacing[a];
    spec.organ_semi_axes_mm[a] = 0.36 * dims[a] * spacing[a];
  }
  spec.seed = seed;
  return spec;
}

// ---- criterion 1: patch MI vs an independent direct evaluation ----------

// Direct transcription of the patch-MI definition: natural log, eps inside the
// ratio, zero-probability cells contribute nothing.
double direct_mi(const JointHistogram& h, double eps) {
  double out = 0.0;
  for (int i = 0; i < h.bins; ++i)
    for (int j = 0; j < h.bins; ++j) {
      double pxy = h.at(i, j);
      if (pxy == 0.0) continue;
      out += pxy * std::log((pxy + eps) / (h.marginal_x[i] * h.marginal_y[j] + eps));
    }
  return out;
}

bool criterion1() {
  auto t0 = std::chrono::steady_clock::now();
  HistogramConfig cfg;
  cfg.bins = 2;
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::bernoulli_distribution zero(0.25);
  bool ok = true;
  for (int k = 0; k < 100; ++k) {
    JointHistogram h;
    h.bins = 2;
    h.joint.assign(4, 0.0);
    double total = 0.0;
    for (int c = 0; c < 4; ++c) {
      h.joint[c] = zero(rng) ? 0.0 : u(rng);
      total += h.joint[c];
    }
    if (total == 0.0) h.joint[0] = total = 1.0;
    for (auto& v : h.joint) v /= total;
    h.marginal_x = {h.at(0, 0) + h.at(0, 1), h.at(1, 0) + h.at(1, 1)};
    h.marginal_y = {h.at(0, 0) + h.at(1, 0), h.at(0, 1) + h.at(1, 1)};
    double got = local_mi(h, cfg);
    double want = direct_mi(h, cfg.epsilon);
    double rel = std::abs(got - want) / std::max(1e-300, std::abs(want));
    if (want == 0.0 ? got != 0.0 : rel > 1e-12) ok = false;
  }
  // diagonal 2-bin joint: MI = ln 2
  JointHistogram diag;
  diag.bins = 2;
  diag.joint = {0.5, 0.0, 0.0, 0.5};
  diag.marginal_x = {0.5, 0.5};
  diag.marginal_y = {0.5, 0.5};
  if (std::abs(local_mi(diag, cfg) - std::log(2.0)) > 1e-5) ok = false;
  return ok && seconds_since(t0) < 1.0;
}

// ---- criterion 2: loss identity and symmetry ----------------------------

bool criterion2() {
  auto t0 = std::chrono::steady_clock::now();
  bool ok = true;

  Volume cf({32, 32, 32}, {1, 1, 1}, {0, 0, 0}, 0.25f);
  Volume cm({32, 32, 32}, {1, 1, 1}, {0, 0, 0}, 0.75f);
  PatchGrid grid;
  HistogramConfig cfg;
  // a constant pair is a point-mass histogram: exactly 1.0 under hard binning;
  // the soft estimator agrees to accumulation precision
  if (mi_loss(cf, cm, grid, cfg, BinningMode::Hard) != 1.0) ok = false;
  if (std::abs(mi_loss(cf, cm, grid, cfg, BinningMode::Soft) - 1.0) > 1e-12) ok = false;

  std::mt19937_64 rng(202);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (int k = 0; k < 50 && ok; ++k) {
    Volume x({24, 24, 24}, {1, 1, 1}, {0, 0, 0});
    Volume y = x;
    for (auto& v : x.data) v = u(rng);
    for (auto& v : y.data) v = u(rng);
    HistogramConfig fwd, bwd;
    std::swap(bwd.range_x, bwd.range_y);
    double a = mi_loss(x, y, grid, fwd, BinningMode::Soft);
    double b = mi_loss(y, x, grid, bwd, BinningMode::Soft);
    if (std::abs(a - b) > 1e-12) ok = false;
  }
  return ok && seconds_since(t0) < 10.0;
}

// ---- criterion 3: analytic gradient vs finite differences ---------------

bool criterion3() {
  auto t0 = std::chrono::steady_clock::now();
  auto spec = base_spec(303, {64, 64, 64}, {2.0, 2.0, 2.0});
  spec.lesion_fraction = 0.4;
  spec.modality_maps["T1"] = {0.8, 0.9, 0.05};
  auto ps = generate(spec);
  const Volume& fixed = ps.study.ged4();
  const Volume& moving = ps.study.modalities.at("T1");

  PatchGrid grid;
  HistogramConfig cfg;
  cfg.range_x = robust_intensity_range(fixed);
  cfg.range_y = robust_intensity_range(moving);
  auto grad = mi_loss_gradient(fixed, moving, grid, cfg);

  // FD oracle over only the patches containing the perturbed voxel: the
  // other patch terms cancel in the difference, so this equals the full-volume
  // FD while costing a handful of patch histograms per probe.
  auto corners = enumerate_patches(fixed.dims, grid);
  const std::array<int, 3> eff = {16, 16, 16};
  auto patch_mi = [&](const std::array<int, 3>& c, size_t voxel, double delta) {
    std::vector<float> xp, yp;
    xp.reserve(4096);
    yp.reserve(4096);
    for (int dz = 0; dz < eff[2]; ++dz)
      for (int dy = 0; dy < eff[1]; ++dy)
        for (int dx = 0; dx < eff[0]; ++dx) {
          size_t i = fixed.index(c[0] + dx, c[1] + dy, c[2] + dz);
          xp.push_back(fixed.data[i]);
          float v = moving.data[i];
          if (i == voxel) v = static_cast<float>(double(v) + delta);
          yp.push_back(v);
        }
    return local_mi(soft_joint_histogram(xp, yp, cfg), cfg);
  };

  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> pick(0, 63);
  const double step = 2e-4;
  int checked = 0, tried = 0;
  bool ok = true;
  while (checked < 20 && tried < 200) {
    ++tried;
    int x = pick(rng), y = pick(rng), z = pick(rng);
    size_t i = moving.index(x, y, z);
    float base = moving.data[i];
    double applied = double(static_cast<float>(double(base) + step)) -
                     double(static_cast<float>(double(base) - step));
    if (applied == 0.0) continue;
    double dsum = 0.0;
    for (const auto& c : corners) {
      if (x < c[0] || x >= c[0] + eff[0] || y < c[1] || y >= c[1] + eff[1] ||
          z < c[2] || z >= c[2] + eff[2])
        continue;
      dsum += patch_mi(c, i, step) - patch_mi(c, i, -step);
    }
    double fd = -dsum / (static_cast<double>(corners.size()) * applied);
    if (std::abs(fd) < 5e-5) continue;  // below float-precision resolution of the FD
    ++checked;
    if (std::abs(grad[i] - fd) / std::abs(fd) > 1e-4) ok = false;
  }
  return ok && checked >= 20 && seconds_since(t0) < 60.0;
}

// ---- criterion 4: registration recovery, MI vs NCC ablation -------------

bool criterion4() {
  auto t0 = std::chrono::steady_clock::now();
  const double deg = M_PI / 180.0;
  RegistrationConfig mi_cfg, ncc_cfg;
  mi_cfg.levels = {{4, 80}, {2, 40}, {1, 15}};
  ncc_cfg = mi_cfg;
  ncc_cfg.levels = {{4, 40}, {2, 20}, {1, 8}};
  ncc_cfg.metric = SimilarityMetric::PatchNCC;

  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> ur(-5.0 * deg, 5.0 * deg);
  std::uniform_real_distribution<double> ut(-4.0, 4.0);
  int mi_good = 0, ncc_bad = 0;
  for (int k = 0; k < 20; ++k) {
    auto spec = base_spec(1000 + k, {48, 48, 24}, {2.0, 2.0, 3.0});
    // unequal semi-axes: a symmetric x/y organ outline under-constrains the
    // in-plane rotation and the recovered angle drifts
    const double k_ax[3] = {0.40, 0.30, 0.34};
    for (int a = 0; a < 3; ++a)
      spec.organ_semi_axes_mm[a] = k_ax[a] * spec.dims[a] * spec.spacing[a];
    spec.lesion_fraction = 0.3;
    spec.modality_maps["T2"] = {0.8, -0.9, 1.0};  // monotone, contrast-inverting
    RigidTransform planted;
    planted.center = spec.organ_center_mm;
    for (int a = 0; a < 3; ++a) {
      planted.rotation[a] = ur(rng);
      planted.translation[a] = ut(rng);
    }
    spec.planted_transforms["T2"] = planted;
    auto ps = generate(spec);
    const Volume& fixed = ps.study.ged4();
    const Volume& moving = ps.study.modalities.at("T2");

    auto within = [&](const RigidTransform& t) {
      for (int a = 0; a < 3; ++a) {
        if (std::abs(t.rotation[a] - planted.rotation[a]) > 1.0 * deg) return false;
        if (std::abs(t.translation[a] - planted.translation[a]) > spec.spacing[a])
          return false;
      }
      return true;
    };
    auto mi_t = register_rigid(fixed, moving, mi_cfg).transform;
    if (within(mi_t)) {
      ++mi_good;
    } else {
      double wr = 0.0, wt = 0.0;
      for (int a = 0; a < 3; ++a) {
        wr = std::max(wr, std::abs(mi_t.rotation[a] - planted.rotation[a]) / deg);
        wt = std::max(wt, std::abs(mi_t.translation[a] - planted.translation[a]));
      }
      std::printf("    [case %d: mi miss, rot err %.2f deg, trans err %.2f mm]\n", k, wr, wt);
      std::fflush(stdout);
    }
    if (!within(register_rigid(fixed, moving, ncc_cfg).transform)) ++ncc_bad;
  }
  std::printf("    [registration recovery: mi %d/20 ncc-failures %d/20]\n", mi_good, ncc_bad);
  return mi_good >= 18 && ncc_bad >= 10 && seconds_since(t0) < 600.0;
}

// ---- criterion 5: patch lattice and zero-fill ---------------------------

bool criterion5() {
  // fully-masked 64x64 slice: size-16/stride-8 lattice has 7x7 anchors
  Study s;
  s.subject_id = "lattice";
  s.contrast_mode = ContrastMode::NonContrast;
  Volume g({64, 64, 3}, {1.5, 1.5, 5.0}, {0, 0, 0});
  std::mt19937_64 rng(505);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (auto& v : g.data) v = u(rng);
  Volume t1 = g;
  for (auto& v : t1.data) v = u(rng);
  s.modalities["GED4"] = g;
  s.modalities["T1"] = t1;
  Mask m = Mask::like(g);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) m.at(x, y, 1) = 1;
  s.mask = m;
  auto patches = extract_patches(s, PatchExtractionConfig{});
  if (patches.size() != 49) return false;

  // zero-fill invariant over a 10-subject cohort with absent T2/DWI
  for (int k = 0; k < 10; ++k) {
    auto spec = base_spec(600 + k, {48, 48, 24}, {2.0, 2.0, 3.0});
    spec.contrast_mode = ContrastMode::NonContrast;
    spec.lesion_fraction = 0.1 * k / 2.0;
    spec.modality_maps["T1"] = {1.0, 0.9, 0.05};  // T2 and DWI stay absent
    auto ps = generate(spec);
    for (const auto& p : extract_patches(ps.study, PatchExtractionConfig{})) {
      if (p.channels != 3) return false;
      for (int c = 1; c < 3; ++c)
        for (int y = 0; y < p.size; ++y)
          for (int x = 0; x < p.size; ++x)
            if (p.at(c, y, x) != 0.0f) return false;
    }
  }
  return true;
}

// ---- criterion 6: piecewise score maps ----------------------------------

bool criterion6() {
  if (std::abs(map_y1(0.5, 0.37) - 0.39683) > 1e-5) return false;
  if (std::abs(map_y4(0.5, 0.66) - 0.37879) > 1e-5) return false;

  std::mt19937_64 rng(606);
  std::uniform_real_distribution<double> us(0.0, 1.0);
  std::uniform_real_distribution<double> utau(0.05, 0.95);
  for (int k = 0; k < 10000; ++k) {
    double tau = utau(rng);
    // endpoints
    if (std::abs(map_y1(0.0, tau) - 1.0) > 1e-12) return false;
    if (std::abs(map_y1(1.0, tau) - 0.0) > 1e-12) return false;
    if (std::abs(map_y4(0.0, tau) - 0.0) > 1e-12) return false;
    if (std::abs(map_y4(1.0, tau) - 1.0) > 1e-12) return false;
    // both branches meet the 0.5 operating point at tau
    if (std::abs(map_y1(tau, tau) - 0.5) > 1e-12) return false;
    if (std::abs(map_y4(tau, tau) - 0.5) > 1e-12) return false;
    double above1 = 0.5 - 0.5 * (tau - tau) / (1.0 - tau);
    double above4 = 0.5 + 0.5 * (tau - tau) / (1.0 - tau);
    if (std::abs(map_y1(tau, tau) - above1) > 1e-12) return false;
    if (std::abs(map_y4(tau, tau) - above4) > 1e-12) return false;
    // monotonicity
    double a = us(rng), b = us(rng);
    if (a > b) std::swap(a, b);
    if (map_y1(a, tau) < map_y1(b, tau)) return false;
    if (map_y4(a, tau) > map_y4(b, tau)) return false;
  }
  return true;
}

// ---- criterion 7: threshold calibration ---------------------------------

bool criterion7() {
  int good = 0;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    auto val = synthetic_scores({20, 20, 20, 20}, {0.1, 0.4, 0.6, 0.9}, 0.05, seed);
    auto rep = calibrate(val, 4, 0.01, ContrastMode::NonContrast);
    if (rep.thresholds.tau1 > 0.15 && rep.thresholds.tau1 < 0.40 &&
        rep.thresholds.tau2 > 0.62 && rep.thresholds.tau2 < 0.88)
      ++good;
  }
  std::printf("    [calibration in range for %d/100 seeds]\n", good);
  return good >= 95;
}

// ---- criterion 8: metric oracles ----------------------------------------

bool criterion8() {
  std::mt19937_64 rng(808);
  std::uniform_int_distribution<int> dim(3, 12);
  std::uniform_real_distribution<double> sp(0.5, 3.0);
  std::uniform_real_distribution<double> fill(0.1, 0.7);

  int pairs = 0;
  while (pairs < 200) {
    std::array<int, 3> dims{dim(rng), dim(rng), dim(rng)};
    std::array<double, 3> spacing{sp(rng), sp(rng), sp(rng)};
    Mask a(dims, spacing, {0, 0, 0});
    Mask b(dims, spacing, {0, 0, 0});
    std::bernoulli_distribution coin(fill(rng));
    for (auto& v : a.data) v = coin(rng) ? 1 : 0;
    for (auto& v : b.data) v = coin(rng) ? 1 : 0;
    if (a.count() == 0 || b.count() == 0) continue;
    ++pairs;

    // dice oracle
    size_t na = 0, nb = 0, ni = 0;
    for (size_t i = 0; i < a.data.size(); ++i) {
      na += a.data[i];
      nb += b.data[i];
      ni += (a.data[i] && b.data[i]) ? 1 : 0;
    }
    if (dice(a, b) != 2.0 * double(ni) / double(na + nb)) return false;

    // hausdorff via all-pairs boundary search
    auto pa = boundary_points(a);
    auto pb = boundary_points(b);
    auto directed = [](const std::vector<std::array<double, 3>>& from,
                       const std::vector<std::array<double, 3>>& to) {
      double worst = 0.0;
      for (const auto& p : from) {
        double best = 1e300;
        for (const auto& q : to) {
          double d2 = 0.0;
          for (int c = 0; c < 3; ++c) d2 += (p[c] - q[c]) * (p[c] - q[c]);
          best = std::min(best, d2);
        }
        worst = std::max(worst, best);
      }
      return worst;
    };
    double want = std::sqrt(std::max(directed(pa, pb), directed(pb, pa)));
    if (std::abs(hausdorff(a, b) - want) > 1e-9) return false;
  }

  // auc vs explicit pair counting
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::bernoulli_distribution lab(0.4);
  std::uniform_int_distribution<int> quant(1, 12);
  int sets = 0;
  while (sets < 200) {
    std::vector<std::pair<double, bool>> s;
    int q = quant(rng);
    bool saw0 = false, saw1 = false;
    for (int i = 0; i < 30; ++i) {
      bool l = lab(rng);
      (l ? saw1 : saw0) = true;
      s.push_back({std::floor(u(rng) * q) / q, l});
    }
    if (!saw0 || !saw1) continue;
    ++sets;
    double wins = 0.0;
    size_t np = 0, nn = 0;
    for (const auto& [sv, l] : s) (l ? np : nn) += 1;
    for (const auto& [spv, lp] : s) {
      if (!lp) continue;
      for (const auto& [snv, ln] : s) {
        if (ln) continue;
        if (spv > snv) wins += 1.0;
        else if (spv == snv) wins += 0.5;
      }
    }
    if (std::abs(auc(s) - wins / double(np * nn)) > 1e-12) return false;
  }
  return true;
}

// ---- criterion 9: end-to-end cohort through the CLI ---------------------

bool criterion9() {
  auto t0 = std::chrono::steady_clock::now();
  fs::path cohort = g_dir / "cohort";
  fs::path pipe = g_dir / "pipe";

  if (run_cli("--seed 17 phantom --out " + cohort.string() + " --n-per-group 10") != 0)
    return false;
  if (run_cli("extract --train --manifest " + (cohort / "manifest.json").string() +
              " --out " + (g_dir / "train.bin").string()) != 0)
    return false;
  if (run_cli("--seed 3 train --patches " + (g_dir / "train.bin").string() +
              " --epochs 300 --out " + (g_dir / "model.json").string()) != 0)
    return false;
  if (run_cli("pipeline --manifest " + (cohort / "manifest.json").string() + " --model " +
              (g_dir / "model.json").string() + " --out " + pipe.string()) != 0)
    return false;

  std::ifstream rf(pipe / "pipeline_report.json");
  if (!rf) return false;
  nlohmann::json report;
  rf >> report;
  double auc1 = report.value("auc_task1", 0.0);
  std::printf("    [task-1 auc %.4f]\n", auc1);
  if (auc1 < 0.95) return false;

  // monotone mean s across the three lesion-fraction groups
  std::ifstream sf(pipe / "staging.csv");
  if (!sf) return false;
  double sum[3] = {0, 0, 0};
  int cnt[3] = {0, 0, 0};
  std::string line;
  std::getline(sf, line);  // header
  while (std::getline(sf, line)) {
    std::stringstream ss(line);
    std::string id, n, sval;
    std::getline(ss, id, ',');
    std::getline(ss, n, ',');
    std::getline(ss, sval, ',');
    int idx = (std::stoi(id.substr(1)) - 100) / 10;  // P100..P129 -> group
    if (idx < 0 || idx > 2) return false;
    sum[idx] += std::stod(sval);
    ++cnt[idx];
  }
  if (cnt[0] == 0 || cnt[1] == 0 || cnt[2] == 0) return false;
  double m0 = sum[0] / cnt[0], m1 = sum[1] / cnt[1], m2 = sum[2] / cnt[2];
  std::printf("    [group mean s: %.3f %.3f %.3f]\n", m0, m1, m2);
  if (!(m0 < m1 && m1 < m2)) return false;

  // red/blue overlay renders for one subject per group
  for (const char* sid : {"P100", "P110", "P120"}) {
    fs::path png = g_dir / (std::string(sid) + ".png");
    if (run_cli("overlay --volume " + (cohort / (std::string(sid) + "_GED4.nii")).string() +
                " --predictions " + (pipe / "predictions.csv").string() + " --subject " +
                sid + " --slice 16 --out " + png.string()) != 0)
      return false;
    std::ifstream pf(png, std::ios::binary);
    char magic[8] = {};
    pf.read(magic, 8);
    if (!pf || magic[1] != 'P' || magic[2] != 'N' || magic[3] != 'G') return false;
  }
  return seconds_since(t0) < 300.0;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: acceptance <liverstage-binary>\n");
    return 2;
  }
  g_bin = argv[1];
  g_dir = fs::temp_directory_path() / "ls_acceptance";
  fs::remove_all(g_dir);
  fs::create_directories(g_dir);

  struct Entry {
    const char* name;
    bool (*fn)();
  };
  const Entry entries[] = {
      {"patch-MI matches the direct formula (2-bin suite + ln2 diagonal)", criterion1},
      {"constant-pair loss is exactly 1.0 and the loss is symmetric", criterion2},
      {"analytic soft-MI gradient matches finite differences", criterion3},
      {"rigid recovery under intensity remaps; NCC ablation fails", criterion4},
      {"49-patch lattice and zero-filled absent channels", criterion5},
      {"piecewise score maps: endpoints, continuity, monotonicity", criterion6},
      {"threshold calibration lands in the expected ranges", criterion7},
      {"dice/hausdorff/auc match brute-force oracles", criterion8},
      {"end-to-end phantom cohort: auc, monotone s, overlays", criterion9},
  };

  // optional criterion filter, e.g. "1,3,9"
  std::set<int> only;
  if (argc > 2) {
    std::stringstream ss(argv[2]);
    for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
  }

  int failures = 0;
  int idx = 1;
  for (const auto& e : entries) {
    if (!only.empty() && !only.count(idx)) {
      ++idx;
      continue;
    }
    bool ok = false;
    try {
      ok = e.fn();
    } catch (const std::exception& ex) {
      std::printf("    [exception: %s]\n", ex.what());
    }
    std::printf("criterion %d: %s ... %s\n", idx, e.name, ok ? "PASS" : "FAIL");
    std::fflush(stdout);
    if (!ok) ++failures;
    ++idx;
  }
  fs::remove_all(g_dir);
  return failures == 0 ? 0 : 1;
}
