#pragma once

#include "liverstage/classifier.hpp"
#include "liverstage/volume.hpp"

namespace liverstage {

struct Thresholds {
  double tau1 = 0.37;
  double tau2 = 0.66;
  ContrastMode mode = ContrastMode::NonContrast;

  void validate() const {
    if (!(tau1 > 0.0 && tau1 < 1.0 && tau2 > 0.0 && tau2 < 1.0))
      throw std::invalid_argument("thresholds must lie in (0,1)");
  }
};

/// Challenge-reported operating points, used when calibration is skipped.
Thresholds default_thresholds(ContrastMode mode);

struct StageResult {
  std::string subject_id;
  int n_patches = 0;
  double s = 0.0;   // fraction of Stage-4-like patches
  double y1 = 0.0;  // substantial-fibrosis score (high = Stage-1-like)
  double y4 = 0.0;  // cirrhosis score
  bool task1_positive = false;  // cirrhosis: S4 vs S1-3, s > tau2
  bool task2_positive = false;  // substantial fibrosis: S1 vs S2-4, s > tau1
};

/// Mean of the binary patch decisions; all predictions must share a subject.
double subject_score(const std::vector<PatchPrediction>& preds);

/// Piecewise-linear score maps, value 0.5 exactly at the threshold.
double map_y1(double s, double tau1);
double map_y4(double s, double tau2);

StageResult stage_subject(const std::vector<PatchPrediction>& preds,
                          const Thresholds& thresholds);

struct CalibrationSample {
  double s = 0.0;
  int stage = 1;
};

struct CalibrationReport {
  Thresholds thresholds;
  std::vector<int> skipped_folds;  // folds missing a class
};

/// k-fold threshold search: per fold, the grid tau maximizing Youden's J on
/// the held-in folds (ties toward smaller tau); final value = mean over folds.
/// tau1 separates stage 1 from 2-4, tau2 separates 4 from 1-3, both by s > tau.
CalibrationReport calibrate(const std::vector<CalibrationSample>& val, int folds,
                            double grid_step, ContrastMode mode);

void save_thresholds(const Thresholds& t, const std::string& path);
Thresholds load_thresholds(const std::string& path);

/// Staging report CSV: subject_id,n_patches,s,y1,y4,task1,task2.
void save_stage_results(const std::vector<StageResult>& results, const std::string& path);

}  // namespace liverstage
