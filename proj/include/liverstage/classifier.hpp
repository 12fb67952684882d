#pragma once

#include "liverstage/patches.hpp"

namespace liverstage {

constexpr int kFeaturesPerChannel = 13;  // mean, std, 8-bin histogram, grad mean, grad std, (see featurize)

/// Handcrafted per-channel statistics plus coverage: 13*K + 1 values.
std::vector<double> featurize(const Patch& p);

struct PatchPrediction {
  std::string subject_id;
  int z = 0, y = 0, x = 0;
  double prob = 0.5;
  int label = 1;  // z_j; 1 iff prob >= 0.5

  static int decide(double prob) { return prob >= 0.5 ? 1 : 0; }
};

struct LogRegModel {
  std::vector<double> weights;
  double bias = 0.0;
  std::vector<double> feature_mean;
  std::vector<double> feature_std;  // constant features get std 1
  double final_loss = 0.0;

  size_t dim() const { return weights.size(); }
};

/// Full-batch gradient descent on cross-entropy with L2 weight decay 1e-4,
/// on standardized features. Deterministic in (data, epochs, lr, seed).
LogRegModel train_classifier(const std::vector<Patch>& patches, int epochs, double lr,
                             uint64_t seed);

PatchPrediction predict(const LogRegModel& model, const Patch& p);

void save_model(const LogRegModel& m, const std::string& path);
LogRegModel load_model(const std::string& path);

/// CSV "subject_id,z,y,x,prob"; z_j is recomputed from prob.
std::vector<PatchPrediction> load_external_predictions(const std::string& path);
void save_predictions(const std::vector<PatchPrediction>& preds, const std::string& path);

/// Cross-entropy loss and gradient on standardized features (exposed for the
/// finite-difference check in tests).
double logreg_loss(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                   const std::vector<double>& w, double b, double l2,
                   std::vector<double>* grad_w = nullptr, double* grad_b = nullptr);

}  // namespace liverstage
