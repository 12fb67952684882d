#include "liverstage/staging.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace liverstage {

Thresholds default_thresholds(ContrastMode mode) {
  if (mode == ContrastMode::NonContrast) return {0.37, 0.66, mode};
  return {0.35, 0.70, mode};
}

double subject_score(const std::vector<PatchPrediction>& preds) {
  if (preds.empty()) throw std::invalid_argument("subject_score: empty prediction list");
  size_t pos = 0;
  for (const auto& p : preds) {
    if (p.subject_id != preds[0].subject_id)
      throw std::invalid_argument("subject_score: mixed subjects");
    pos += p.label;
  }
  return static_cast<double>(pos) / static_cast<double>(preds.size());
}

double map_y1(double s, double tau1) {
  if (s < 0.0 || s > 1.0 || !(tau1 > 0.0 && tau1 < 1.0))
    throw std::invalid_argument("map_y1: domain violation");
  if (s <= tau1) return 1.0 - (0.5 / tau1) * s;
  return 0.5 - 0.5 * (s - tau1) / (1.0 - tau1);
}

double map_y4(double s, double tau2) {
  if (s < 0.0 || s > 1.0 || !(tau2 > 0.0 && tau2 < 1.0))
    throw std::invalid_argument("map_y4: domain violation");
  if (s <= tau2) return 0.5 * s / tau2;
  return 0.5 + 0.5 * (s - tau2) / (1.0 - tau2);
}

StageResult stage_subject(const std::vector<PatchPrediction>& preds,
                          const Thresholds& thresholds) {
  thresholds.validate();
  StageResult r;
  r.subject_id = preds.empty() ? "" : preds[0].subject_id;
  r.n_patches = static_cast<int>(preds.size());
  r.s = subject_score(preds);
  r.y1 = map_y1(r.s, thresholds.tau1);
  r.y4 = map_y4(r.s, thresholds.tau2);
  r.task1_positive = r.s > thresholds.tau2;
  r.task2_positive = r.s > thresholds.tau1;
  return r;
}

namespace {

// Youden's J of the rule "s > tau => positive".
double youden_j(const std::vector<CalibrationSample>& data, double tau,
                bool stage_is_positive(int)) {
  int tp = 0, fn = 0, tn = 0, fp = 0;
  for (const auto& d : data) {
    bool truth = stage_is_positive(d.stage);
    bool pred = d.s > tau;
    if (truth) (pred ? tp : fn)++;
    else (pred ? fp : tn)++;
  }
  double sens = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  double spec = tn + fp > 0 ? static_cast<double>(tn) / (tn + fp) : 0.0;
  return sens + spec - 1.0;
}

bool task1_truth(int stage) { return stage == 4; }       // cirrhosis
bool task2_truth(int stage) { return stage >= 2; }       // substantial fibrosis

double best_tau(const std::vector<CalibrationSample>& data, double grid_step,
                bool stage_is_positive(int)) {
  double best = grid_step, best_j = -2.0;
  for (double tau = grid_step; tau < 1.0 - 0.5 * grid_step; tau += grid_step) {
    double j = youden_j(data, tau, stage_is_positive);
    if (j > best_j + 1e-12) {  // strict improvement: ties go to the smaller tau
      best_j = j;
      best = tau;
    }
  }
  return best;
}

}  // namespace

CalibrationReport calibrate(const std::vector<CalibrationSample>& val, int folds,
                            double grid_step, ContrastMode mode) {
  if (folds < 2) throw std::invalid_argument("calibrate: need at least 2 folds");
  if (!(grid_step > 0.0 && grid_step < 0.5))
    throw std::invalid_argument("calibrate: bad grid_step");
  bool seen[5] = {};
  for (const auto& d : val) {
    if (d.stage < 1 || d.stage > 4) throw std::invalid_argument("calibrate: bad stage");
    seen[d.stage] = true;
  }
  if (!(seen[1] && seen[2] && seen[3] && seen[4]))
    throw std::invalid_argument("calibrate: validation set must contain all four stages");

  // Stratified round-robin fold assignment, deterministic in input order.
  std::vector<int> fold_of(val.size());
  int counter[5] = {};
  for (size_t i = 0; i < val.size(); ++i)
    fold_of[i] = counter[val[i].stage]++ % folds;

  CalibrationReport rep;
  double sum1 = 0.0, sum2 = 0.0;
  int used = 0;
  for (int f = 0; f < folds; ++f) {
    std::vector<CalibrationSample> heldin;
    for (size_t i = 0; i < val.size(); ++i)
      if (fold_of[i] != f) heldin.push_back(val[i]);
    bool has1 = false, has24 = false, has4 = false, has13 = false;
    for (const auto& d : heldin) {
      (d.stage == 1 ? has1 : has24) = true;
      (d.stage == 4 ? has4 : has13) = true;
    }
    if (!has1 || !has24 || !has4 || !has13) {
      rep.skipped_folds.push_back(f);
      continue;
    }
    sum1 += best_tau(heldin, grid_step, task2_truth);
    sum2 += best_tau(heldin, grid_step, task1_truth);
    ++used;
  }
  if (used == 0) throw std::runtime_error("calibrate: every fold missing a class");
  rep.thresholds = {sum1 / used, sum2 / used, mode};
  return rep;
}

void save_thresholds(const Thresholds& t, const std::string& path) {
  nlohmann::json j = {{"tau1", t.tau1},
                      {"tau2", t.tau2},
                      {"mode", t.mode == ContrastMode::Contrast ? "contrast" : "noncontrast"}};
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << j.dump(2) << "\n";
}

Thresholds load_thresholds(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  f >> j;
  Thresholds t;
  t.tau1 = j.at("tau1").get<double>();
  t.tau2 = j.at("tau2").get<double>();
  t.mode = j.at("mode").get<std::string>() == "contrast" ? ContrastMode::Contrast
                                                         : ContrastMode::NonContrast;
  t.validate();
  return t;
}

void save_stage_results(const std::vector<StageResult>& results, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "subject_id,n_patches,s,y1,y4,task1,task2\n";
  char buf[128];
  for (const auto& r : results) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g", r.s, r.y1, r.y4);
    f << r.subject_id << "," << r.n_patches << "," << buf << ","
      << (r.task1_positive ? 1 : 0) << "," << (r.task2_positive ? 1 : 0) << "\n";
  }
}

}  // namespace liverstage
