#include "liverstage/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

namespace liverstage {

std::vector<double> featurize(const Patch& p) {
  const int S = p.size;
  std::vector<double> f;
  f.reserve(static_cast<size_t>(kFeaturesPerChannel) * p.channels + 1);
  for (int c = 0; c < p.channels; ++c) {
    double sum = 0.0, sum2 = 0.0;
    double vmin = p.at(c, 0, 0), vmax = vmin;
    bool all_zero = true;
    int nonzero = 0;
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x) {
        double v = p.at(c, y, x);
        if (v != 0.0) {
          all_zero = false;
          ++nonzero;
        }
        sum += v;
        sum2 += v * v;
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
      }
    const double n = static_cast<double>(S) * S;
    double mean = sum / n;
    double sd = std::sqrt(std::max(sum2 / n - mean * mean, 0.0));

    if (all_zero) {  // zero-filled channel: 13 zeros
      f.insert(f.end(), kFeaturesPerChannel, 0.0);
      continue;
    }
    f.push_back(mean);
    f.push_back(sd);

    // 8-bin histogram over the channel's own value range
    std::array<double, 8> hist{};
    double range = vmax - vmin;
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x) {
        int b = range > 0.0
                    ? std::clamp(static_cast<int>((p.at(c, y, x) - vmin) / range * 8), 0, 7)
                    : 0;
        hist[b] += 1.0 / n;
      }
    for (double h : hist) f.push_back(h);

    // central-difference gradient magnitude over interior pixels
    double gsum = 0.0, gsum2 = 0.0;
    int gn = 0;
    for (int y = 1; y < S - 1; ++y)
      for (int x = 1; x < S - 1; ++x) {
        double gx = 0.5 * (p.at(c, y, x + 1) - p.at(c, y, x - 1));
        double gy = 0.5 * (p.at(c, y + 1, x) - p.at(c, y - 1, x));
        double g = std::sqrt(gx * gx + gy * gy);
        gsum += g;
        gsum2 += g * g;
        ++gn;
      }
    double gmean = gn ? gsum / gn : 0.0;
    double gsd = gn ? std::sqrt(std::max(gsum2 / gn - gmean * gmean, 0.0)) : 0.0;
    f.push_back(gmean);
    f.push_back(gsd);
    f.push_back(nonzero / n);  // in-mask pixel fraction of this channel
  }
  f.push_back(p.coverage);
  return f;
}

double logreg_loss(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                   const std::vector<double>& w, double b, double l2,
                   std::vector<double>* grad_w, double* grad_b) {
  const size_t n = x.size();
  const size_t d = w.size();
  if (grad_w) grad_w->assign(d, 0.0);
  if (grad_b) *grad_b = 0.0;
  double loss = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double s = b;
    for (size_t j = 0; j < d; ++j) s += w[j] * x[i][j];
    // numerically stable log(1+exp)
    double t = s > 0 ? s : 0.0;
    loss += t + std::log(std::exp(-t) + std::exp(s - t)) - y[i] * s;
    double p = 1.0 / (1.0 + std::exp(-s));
    double r = (p - y[i]) / static_cast<double>(n);
    if (grad_w)
      for (size_t j = 0; j < d; ++j) (*grad_w)[j] += r * x[i][j];
    if (grad_b) *grad_b += r;
  }
  loss /= static_cast<double>(n);
  for (size_t j = 0; j < d; ++j) {
    loss += 0.5 * l2 * w[j] * w[j];
    if (grad_w) (*grad_w)[j] += l2 * w[j];
  }
  return loss;
}

LogRegModel train_classifier(const std::vector<Patch>& patches, int epochs, double lr,
                             uint64_t seed) {
  if (patches.empty()) throw std::invalid_argument("train: empty dataset");
  std::vector<std::vector<double>> feats;
  std::vector<int> labels;
  feats.reserve(patches.size());
  for (const auto& p : patches) {
    if (!p.label) throw std::invalid_argument("train: unlabeled patch");
    feats.push_back(featurize(p));
    labels.push_back(*p.label);
  }
  bool has0 = false, has1 = false;
  for (int l : labels) (l ? has1 : has0) = true;
  if (!has0 || !has1) throw std::invalid_argument("train: single-class input");

  const size_t d = feats[0].size();
  LogRegModel m;
  m.feature_mean.assign(d, 0.0);
  m.feature_std.assign(d, 0.0);
  for (const auto& f : feats)
    for (size_t j = 0; j < d; ++j) m.feature_mean[j] += f[j];
  for (size_t j = 0; j < d; ++j) m.feature_mean[j] /= static_cast<double>(feats.size());
  for (const auto& f : feats)
    for (size_t j = 0; j < d; ++j) {
      double c = f[j] - m.feature_mean[j];
      m.feature_std[j] += c * c;
    }
  for (size_t j = 0; j < d; ++j) {
    m.feature_std[j] = std::sqrt(m.feature_std[j] / static_cast<double>(feats.size()));
    if (m.feature_std[j] <= 1e-12) m.feature_std[j] = 1.0;  // constant feature
  }
  for (auto& f : feats)
    for (size_t j = 0; j < d; ++j) f[j] = (f[j] - m.feature_mean[j]) / m.feature_std[j];

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> init(-0.01, 0.01);
  m.weights.resize(d);
  for (auto& w : m.weights) w = init(rng);
  m.bias = 0.0;

  const double l2 = 1e-4;
  std::vector<double> gw;
  double gb;
  for (int e = 0; e < epochs; ++e) {
    m.final_loss = logreg_loss(feats, labels, m.weights, m.bias, l2, &gw, &gb);
    for (size_t j = 0; j < d; ++j) m.weights[j] -= lr * gw[j];
    m.bias -= lr * gb;
  }
  m.final_loss = logreg_loss(feats, labels, m.weights, m.bias, l2);
  return m;
}

PatchPrediction predict(const LogRegModel& model, const Patch& p) {
  auto f = featurize(p);
  if (f.size() != model.dim())
    throw std::invalid_argument("predict: feature dimension mismatch");
  double s = model.bias;
  for (size_t j = 0; j < f.size(); ++j)
    s += model.weights[j] * (f[j] - model.feature_mean[j]) / model.feature_std[j];
  PatchPrediction out;
  out.subject_id = p.subject_id;
  out.z = p.slice_index;
  out.y = p.grid_y;
  out.x = p.grid_x;
  out.prob = 1.0 / (1.0 + std::exp(-s));
  out.label = PatchPrediction::decide(out.prob);
  return out;
}

void save_model(const LogRegModel& m, const std::string& path) {
  nlohmann::json j = {{"weights", m.weights},
                      {"bias", m.bias},
                      {"feature_mean", m.feature_mean},
                      {"feature_std", m.feature_std},
                      {"final_loss", m.final_loss}};
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << j.dump(2) << "\n";
}

LogRegModel load_model(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  f >> j;
  LogRegModel m;
  m.weights = j.at("weights").get<std::vector<double>>();
  m.bias = j.at("bias").get<double>();
  m.feature_mean = j.at("feature_mean").get<std::vector<double>>();
  m.feature_std = j.at("feature_std").get<std::vector<double>>();
  m.final_loss = j.value("final_loss", 0.0);
  return m;
}

std::vector<PatchPrediction> load_external_predictions(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::vector<PatchPrediction> out;
  std::string line;
  bool first = true;
  size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (first) {  // header line
      first = false;
      if (line.rfind("subject_id", 0) == 0) continue;
    }
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> cols;
    while (std::getline(ss, field, ',')) cols.push_back(field);
    if (cols.size() != 5)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected 5 columns");
    PatchPrediction p;
    p.subject_id = cols[0];
    try {
      p.z = std::stoi(cols[1]);
      p.y = std::stoi(cols[2]);
      p.x = std::stoi(cols[3]);
      p.prob = std::stod(cols[4]);
    } catch (const std::exception&) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed row");
    }
    if (p.prob < 0.0 || p.prob > 1.0 || !std::isfinite(p.prob))
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": prob outside [0,1]");
    p.label = PatchPrediction::decide(p.prob);
    out.push_back(std::move(p));
  }
  return out;
}

void save_predictions(const std::vector<PatchPrediction>& preds, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "subject_id,z,y,x,prob\n";
  char buf[64];
  for (const auto& p : preds) {
    std::snprintf(buf, sizeof(buf), "%.17g", p.prob);
    f << p.subject_id << "," << p.z << "," << p.y << "," << p.x << "," << buf << "\n";
  }
}

}  // namespace liverstage
