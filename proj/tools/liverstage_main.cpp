// liverstage: desk-scale liver MRI registration, patch classification and
// fibrosis staging toolkit.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <random>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "liverstage/metrics.hpp"
#include "liverstage/nifti.hpp"
#include "liverstage/overlay.hpp"
#include "liverstage/phantom.hpp"
#include "liverstage/registration.hpp"
#include "liverstage/staging.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace liverstage;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPartial = 1;
constexpr int kExitConfig = 2;

struct RunConfig {
  HistogramConfig hist;
  RegistrationConfig reg;
  PatchExtractionConfig patches;
  int clf_epochs = 500;
  double clf_lr = 0.5;
  std::optional<double> tau1, tau2;
  ContrastMode mode = ContrastMode::NonContrast;
};

void reject_unknown(const json& j, const std::vector<std::string>& known,
                    const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw std::runtime_error("config: unknown key '" + it.key() + "' in " + where);
}

RunConfig load_config(const std::string& path) {
  RunConfig c;
  if (path.empty()) return c;
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config " + path);
  json j;
  f >> j;
  reject_unknown(j, {"histogram", "registration", "patches", "classifier", "staging", "mode"},
                 "top level");
  if (j.contains("histogram")) {
    const auto& h = j["histogram"];
    reject_unknown(h, {"bins", "epsilon", "kernel_width"}, "histogram");
    c.hist.bins = h.value("bins", c.hist.bins);
    c.hist.epsilon = h.value("epsilon", c.hist.epsilon);
    c.hist.kernel_width = h.value("kernel_width", c.hist.kernel_width);
  }
  if (j.contains("registration")) {
    const auto& r = j["registration"];
    reject_unknown(r, {"levels", "step_init", "step_shrink", "converge_tol", "patch_size",
                       "stride", "metric", "binning"},
                   "registration");
    if (r.contains("levels")) {
      c.reg.levels.clear();
      for (const auto& l : r["levels"])
        c.reg.levels.push_back({l.at(0).get<int>(), l.at(1).get<int>()});
    }
    c.reg.step_init = r.value("step_init", c.reg.step_init);
    c.reg.step_shrink = r.value("step_shrink", c.reg.step_shrink);
    c.reg.converge_tol = r.value("converge_tol", c.reg.converge_tol);
    if (r.contains("patch_size")) {
      int s = r["patch_size"].get<int>();
      c.reg.grid.patch_size = {s, s, s};
    }
    if (r.contains("stride")) {
      int s = r["stride"].get<int>();
      c.reg.grid.stride = {s, s, s};
    }
    if (r.contains("metric"))
      c.reg.metric = r["metric"].get<std::string>() == "ncc" ? SimilarityMetric::PatchNCC
                                                             : SimilarityMetric::PatchMI;
    if (r.contains("binning"))
      c.reg.binning =
          r["binning"].get<std::string>() == "hard" ? BinningMode::Hard : BinningMode::Soft;
  }
  if (j.contains("patches")) {
    const auto& p = j["patches"];
    reject_unknown(p, {"patch_size", "stride", "min_coverage"}, "patches");
    c.patches.patch_size = p.value("patch_size", c.patches.patch_size);
    c.patches.stride = p.value("stride", c.patches.stride);
    c.patches.min_coverage = p.value("min_coverage", c.patches.min_coverage);
  }
  if (j.contains("classifier")) {
    const auto& k = j["classifier"];
    reject_unknown(k, {"epochs", "lr"}, "classifier");
    c.clf_epochs = k.value("epochs", c.clf_epochs);
    c.clf_lr = k.value("lr", c.clf_lr);
  }
  if (j.contains("staging")) {
    const auto& s = j["staging"];
    reject_unknown(s, {"tau1", "tau2"}, "staging");
    if (s.contains("tau1")) c.tau1 = s["tau1"].get<double>();
    if (s.contains("tau2")) c.tau2 = s["tau2"].get<double>();
  }
  if (j.contains("mode"))
    c.mode = j["mode"].get<std::string>() == "contrast" ? ContrastMode::Contrast
                                                        : ContrastMode::NonContrast;
  return c;
}

ContrastMode parse_mode(const std::string& m) {
  if (m == "contrast") return ContrastMode::Contrast;
  if (m == "noncontrast") return ContrastMode::NonContrast;
  throw std::runtime_error("bad --mode (use noncontrast|contrast)");
}

/// Deterministic per-subject parallel map: results land in input order.
template <typename F>
void parallel_subjects(size_t n, int jobs, F&& body) {
  if (jobs <= 1 || n <= 1) {
    for (size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<size_t> next{0};
  int workers = std::min<size_t>(jobs, n);
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) body(i);
    });
  for (auto& t : pool) t.join();
}

std::mutex log_mutex;

int cmd_register(const std::string& manifest, const RunConfig& cfg, const std::string& out_dir,
                 int jobs) {
  auto studies = load_manifest(manifest, cfg.mode);
  fs::create_directories(out_dir);
  struct Row {
    std::string subject, modality, status;
    double loss = 0.0;
    int iterations = 0;
  };
  std::vector<std::vector<Row>> rows(studies.size());
  std::atomic<int> failures{0};

  parallel_subjects(studies.size(), jobs, [&](size_t si) {
    const Study& s = studies[si];
    const Volume& fixed = s.ged4();
    const Mask* fmask = s.mask ? &*s.mask : nullptr;
    for (const auto& [name, moving] : s.modalities) {
      if (name == "GED4") continue;
      Row row{s.subject_id, name, "ok"};
      try {
        auto res = register_rigid(fixed, moving, cfg.reg, fmask);
        row.loss = res.final_loss;
        row.iterations = res.iterations;
        if (!res.converged) row.status = "warning";
        save_transform(res.transform,
                       (fs::path(out_dir) / (s.subject_id + "_" + name + "_transform.json"))
                           .string());
        save_volume(resample_linear(moving, res.transform, fixed),
                    (fs::path(out_dir) / (s.subject_id + "_" + name + "_aligned.nii"))
                        .string());
      } catch (const std::exception& e) {
        row.status = std::string("failed: ") + e.what();
        ++failures;
      }
      std::lock_guard<std::mutex> lk(log_mutex);
      std::cout << "[" << row.subject << "] " << row.modality << " loss=" << row.loss
                << " iters=" << row.iterations << " " << row.status << "\n";
      rows[si].push_back(row);
    }
  });

  json report = json::array();
  for (const auto& sr : rows)
    for (const auto& r : sr)
      report.push_back({{"subject_id", r.subject},
                        {"modality", r.modality},
                        {"final_loss", r.loss},
                        {"iterations", r.iterations},
                        {"status", r.status}});
  std::ofstream rf((fs::path(out_dir) / "registration_report.json").string());
  rf << report.dump(2) << "\n";
  return failures > 0 ? kExitPartial : kExitOk;
}

int cmd_pipeline(const std::string& manifest, const RunConfig& cfg, const std::string& out_dir,
                 const std::string& model_path, const std::string& preds_path, int jobs) {
  auto studies = load_manifest(manifest, cfg.mode);
  fs::create_directories(out_dir);

  std::optional<LogRegModel> model;
  std::vector<PatchPrediction> external;
  if (!model_path.empty()) model = load_model(model_path);
  else if (!preds_path.empty()) external = load_external_predictions(preds_path);
  else throw std::runtime_error("pipeline needs --model or --predictions");

  Thresholds thr = default_thresholds(cfg.mode);
  if (cfg.tau1) thr.tau1 = *cfg.tau1;
  if (cfg.tau2) thr.tau2 = *cfg.tau2;

  std::vector<std::optional<StageResult>> results(studies.size());
  std::vector<std::vector<PatchPrediction>> all_preds(studies.size());
  std::atomic<int> skipped{0};

  parallel_subjects(studies.size(), jobs, [&](size_t si) {
    const Study& s = studies[si];
    if (!s.mask) {
      std::lock_guard<std::mutex> lk(log_mutex);
      std::cout << "[" << s.subject_id << "] skipped: no mask\n";
      ++skipped;
      return;
    }
    std::vector<PatchPrediction> preds;
    if (model) {
      for (const auto& p : extract_patches(s, cfg.patches)) preds.push_back(predict(*model, p));
    } else {
      for (const auto& p : external)
        if (p.subject_id == s.subject_id) preds.push_back(p);
    }
    if (preds.empty()) {
      std::lock_guard<std::mutex> lk(log_mutex);
      std::cout << "[" << s.subject_id << "] skipped: no patches\n";
      ++skipped;
      return;
    }
    results[si] = stage_subject(preds, thr);
    all_preds[si] = std::move(preds);
    std::lock_guard<std::mutex> lk(log_mutex);
    std::cout << "[" << s.subject_id << "] s=" << results[si]->s
              << " y1=" << results[si]->y1 << " y4=" << results[si]->y4 << "\n";
  });

  std::vector<StageResult> flat;
  std::vector<PatchPrediction> flat_preds;
  for (size_t i = 0; i < results.size(); ++i) {
    if (results[i]) flat.push_back(*results[i]);
    for (auto& p : all_preds[i]) flat_preds.push_back(p);
  }
  save_stage_results(flat, (fs::path(out_dir) / "staging.csv").string());
  save_predictions(flat_preds, (fs::path(out_dir) / "predictions.csv").string());

  // classification metrics when ground-truth stages are available
  std::vector<std::pair<double, bool>> t1_scores, t2_scores;
  std::vector<std::pair<bool, bool>> t1_dec, t2_dec;
  for (size_t i = 0; i < studies.size(); ++i) {
    if (!results[i] || !studies[i].stage) continue;
    int st = *studies[i].stage;
    t1_scores.push_back({results[i]->y4, st == 4});
    t2_scores.push_back({1.0 - results[i]->y1, st >= 2});
    t1_dec.push_back({results[i]->task1_positive, st == 4});
    t2_dec.push_back({results[i]->task2_positive, st >= 2});
  }
  json report;
  report["n_subjects"] = flat.size();
  report["thresholds"] = {{"tau1", thr.tau1}, {"tau2", thr.tau2}};
  if (!t1_scores.empty()) {
    try {
      report["auc_task1"] = auc(t1_scores);
      report["auc_task2"] = auc(t2_scores);
    } catch (const std::exception&) {
      // one class absent; AUC undefined
    }
    report["acc_task1"] = accuracy(t1_dec);
    report["acc_task2"] = accuracy(t2_dec);
  }
  std::ofstream rf((fs::path(out_dir) / "pipeline_report.json").string());
  rf << report.dump(2) << "\n";
  return skipped > 0 ? kExitPartial : kExitOk;
}

std::vector<CalibrationSample> load_scores_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::vector<CalibrationSample> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line.rfind("s,", 0) == 0) continue;
    auto comma = line.find(',');
    if (comma == std::string::npos) throw std::runtime_error(path + ": malformed row");
    out.push_back({std::stod(line.substr(0, comma)), std::stoi(line.substr(comma + 1))});
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"patch-based liver fibrosis staging toolkit"};
  app.require_subcommand(1);

  std::string config_path, manifest, out, mode_str = "noncontrast";
  std::string model_path, preds_path, patches_path, thresholds_path, scores_path;
  std::string subject, ref_path, pred_path;
  uint64_t seed = 0;
  int jobs = 1;
  double tau1_flag = -1.0, tau2_flag = -1.0;

  app.add_option("--config", config_path, "JSON config file")->capture_default_str();
  app.add_option("--seed", seed, "global RNG seed");
  app.add_option("--jobs", jobs, "parallel subjects");
  app.add_option("--mode", mode_str, "noncontrast|contrast");

  auto* c_reg = app.add_subcommand("register", "rigid-align every modality to GED4");
  c_reg->add_option("--manifest", manifest)->required();
  c_reg->add_option("--out", out)->required();

  auto* c_ext = app.add_subcommand("extract", "extract liver patches");
  bool ext_train = false;
  c_ext->add_option("--manifest", manifest)->required();
  c_ext->add_option("--out", out)->required();
  c_ext->add_flag("--train", ext_train, "build the labeled, balanced training set");

  auto* c_train = app.add_subcommand("train", "train the baseline patch classifier");
  c_train->add_option("--patches", patches_path)->required();
  c_train->add_option("--out", out)->required();
  int epochs_flag = -1;
  double lr_flag = -1.0;
  c_train->add_option("--epochs", epochs_flag);
  c_train->add_option("--lr", lr_flag);

  auto* c_pred = app.add_subcommand("predict", "classify patches");
  c_pred->add_option("--patches", patches_path)->required();
  c_pred->add_option("--model", model_path)->required();
  c_pred->add_option("--out", out)->required();

  auto* c_cal = app.add_subcommand("calibrate", "k-fold threshold calibration");
  int folds = 4;
  double grid_step = 0.01;
  c_cal->add_option("--scores", scores_path, "CSV of s,stage rows")->required();
  c_cal->add_option("--out", out)->required();
  c_cal->add_option("--folds", folds);
  c_cal->add_option("--grid-step", grid_step);

  auto* c_stage = app.add_subcommand("stage", "subject staging from patch predictions");
  c_stage->add_option("--predictions", preds_path)->required();
  c_stage->add_option("--out", out)->required();
  c_stage->add_option("--thresholds", thresholds_path);
  c_stage->add_option("--tau1", tau1_flag);
  c_stage->add_option("--tau2", tau2_flag);

  auto* c_pipe = app.add_subcommand("pipeline", "extract -> classify -> score -> stage");
  c_pipe->add_option("--manifest", manifest)->required();
  c_pipe->add_option("--out", out)->required();
  c_pipe->add_option("--model", model_path);
  c_pipe->add_option("--predictions", preds_path);
  c_pipe->add_option("--tau1", tau1_flag);
  c_pipe->add_option("--tau2", tau2_flag);

  auto* c_eseg = app.add_subcommand("eval-seg", "Dice/HD between mask files");
  c_eseg->add_option("--ref", ref_path, "reference mask .nii or JSON pair list")->required();
  c_eseg->add_option("--pred", pred_path, "predicted mask .nii");
  c_eseg->add_option("--out", out);

  auto* c_ecls = app.add_subcommand("eval-cls", "AUC/ACC of a staging report");
  std::string truth_path;
  c_ecls->add_option("--staging", preds_path, "staging CSV")->required();
  c_ecls->add_option("--truth", truth_path, "CSV of subject_id,stage")->required();
  c_ecls->add_option("--out", out);

  auto* c_ovl = app.add_subcommand("overlay", "render patch predictions on a GED4 slice");
  std::string volume_path;
  int slice = 0, ovl_patch = 16;
  c_ovl->add_option("--volume", volume_path, "GED4 .nii")->required();
  c_ovl->add_option("--predictions", preds_path)->required();
  c_ovl->add_option("--subject", subject)->required();
  c_ovl->add_option("--slice", slice)->required();
  c_ovl->add_option("--patch-size", ovl_patch);
  c_ovl->add_option("--out", out)->required();

  auto* c_ph = app.add_subcommand("phantom", "generate a synthetic cohort");
  int n_per_group = 10;
  std::vector<double> fractions{0.05, 0.45, 0.85};
  std::vector<int> group_stages{1, 3, 4};
  double planted_rot = 0.0, planted_trans = 0.0;
  c_ph->add_option("--out", out)->required();
  c_ph->add_option("--n-per-group", n_per_group);
  c_ph->add_option("--lesion-fractions", fractions);
  c_ph->add_option("--stages", group_stages);
  c_ph->add_option("--max-rotation-deg", planted_rot, "planted rotation bound");
  c_ph->add_option("--max-translation-mm", planted_trans, "planted translation bound");

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = load_config(config_path);
    if (app.count("--mode")) cfg.mode = parse_mode(mode_str);
    if (tau1_flag >= 0.0) cfg.tau1 = tau1_flag;  // flags override config
    if (tau2_flag >= 0.0) cfg.tau2 = tau2_flag;

    if (*c_reg) return cmd_register(manifest, cfg, out, jobs);

    if (*c_ext) {
      auto studies = load_manifest(manifest, cfg.mode);
      std::vector<Patch> patches;
      if (ext_train) {
        patches = build_training_set(studies, cfg.patches);
      } else {
        for (const auto& s : studies)
          for (auto& p : extract_patches(s, cfg.patches)) patches.push_back(std::move(p));
      }
      save_patches(patches, channels_for_mode(cfg.mode), out);
      std::cout << patches.size() << " patches -> " << out << "\n";
      return kExitOk;
    }

    if (*c_train) {
      auto patches = load_patches(patches_path);
      int epochs = epochs_flag > 0 ? epochs_flag : cfg.clf_epochs;
      double lr = lr_flag > 0.0 ? lr_flag : cfg.clf_lr;
      auto model = train_classifier(patches, epochs, lr, seed);
      save_model(model, out);
      std::cout << "final training loss " << model.final_loss << " -> " << out << "\n";
      return kExitOk;
    }

    if (*c_pred) {
      auto patches = load_patches(patches_path);
      auto model = load_model(model_path);
      std::vector<PatchPrediction> preds;
      preds.reserve(patches.size());
      for (const auto& p : patches) preds.push_back(predict(model, p));
      save_predictions(preds, out);
      return kExitOk;
    }

    if (*c_cal) {
      auto rep = calibrate(load_scores_csv(scores_path), folds, grid_step, cfg.mode);
      save_thresholds(rep.thresholds, out);
      std::cout << "tau1=" << rep.thresholds.tau1 << " tau2=" << rep.thresholds.tau2;
      if (!rep.skipped_folds.empty())
        std::cout << " (" << rep.skipped_folds.size() << " folds skipped)";
      std::cout << "\n";
      return kExitOk;
    }

    if (*c_stage) {
      Thresholds thr = thresholds_path.empty() ? default_thresholds(cfg.mode)
                                               : load_thresholds(thresholds_path);
      if (cfg.tau1) thr.tau1 = *cfg.tau1;
      if (cfg.tau2) thr.tau2 = *cfg.tau2;
      auto preds = load_external_predictions(preds_path);
      std::map<std::string, std::vector<PatchPrediction>> by_subject;
      for (auto& p : preds) by_subject[p.subject_id].push_back(p);
      std::vector<StageResult> results;
      for (auto& [sid, sp] : by_subject) results.push_back(stage_subject(sp, thr));
      save_stage_results(results, out);
      return kExitOk;
    }

    if (*c_pipe) return cmd_pipeline(manifest, cfg, out, model_path, preds_path, jobs);

    if (*c_eseg) {
      json report;
      if (pred_path.empty()) {  // JSON list of {id, ref, pred}
        std::ifstream f(ref_path);
        if (!f) throw std::runtime_error("cannot open " + ref_path);
        json pairs;
        f >> pairs;
        double dsum = 0.0, hsum = 0.0;
        json per = json::array();
        for (const auto& pr : pairs) {
          Mask a = load_mask(pr.at("ref").get<std::string>());
          Mask b = load_mask(pr.at("pred").get<std::string>());
          double dc = dice(a, b), hd = hausdorff(a, b);
          dsum += dc;
          hsum += hd;
          per.push_back({{"subject_id", pr.value("id", "")}, {"dice", dc}, {"hd", hd}});
        }
        report["per_subject"] = per;
        report["mean_dice"] = dsum / pairs.size();
        report["mean_hd"] = hsum / pairs.size();
      } else {
        Mask a = load_mask(ref_path);
        Mask b = load_mask(pred_path);
        report["dice"] = dice(a, b);
        report["hd"] = hausdorff(a, b);
      }
      std::cout << report.dump(2) << "\n";
      if (!out.empty()) {
        std::ofstream rf(out);
        rf << report.dump(2) << "\n";
      }
      return kExitOk;
    }

    if (*c_ecls) {
      // staging CSV + truth CSV -> AUC/ACC for both tasks
      std::ifstream sf(preds_path);
      if (!sf) throw std::runtime_error("cannot open " + preds_path);
      std::map<std::string, int> truth;
      {
        std::ifstream tf(truth_path);
        if (!tf) throw std::runtime_error("cannot open " + truth_path);
        std::string line;
        while (std::getline(tf, line)) {
          if (line.empty() || line.rfind("subject_id", 0) == 0) continue;
          auto comma = line.find(',');
          truth[line.substr(0, comma)] = std::stoi(line.substr(comma + 1));
        }
      }
      std::vector<std::pair<double, bool>> t1_scores, t2_scores;
      std::vector<std::pair<bool, bool>> t1_dec, t2_dec;
      std::string line;
      while (std::getline(sf, line)) {
        if (line.empty() || line.rfind("subject_id", 0) == 0) continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string fld;
        while (std::getline(ss, fld, ',')) cols.push_back(fld);
        if (cols.size() != 7) throw std::runtime_error("malformed staging row: " + line);
        auto it = truth.find(cols[0]);
        if (it == truth.end()) continue;
        int st = it->second;
        double y1 = std::stod(cols[3]), y4 = std::stod(cols[4]);
        t1_scores.push_back({y4, st == 4});
        t2_scores.push_back({1.0 - y1, st >= 2});
        t1_dec.push_back({cols[5] == "1", st == 4});
        t2_dec.push_back({cols[6] == "1", st >= 2});
      }
      json report = {{"auc_task1", auc(t1_scores)},
                     {"acc_task1", accuracy(t1_dec)},
                     {"auc_task2", auc(t2_scores)},
                     {"acc_task2", accuracy(t2_dec)}};
      std::cout << report.dump(2) << "\n";
      if (!out.empty()) {
        std::ofstream rf(out);
        rf << report.dump(2) << "\n";
      }
      return kExitOk;
    }

    if (*c_ovl) {
      Volume ged4 = load_volume(volume_path);
      auto preds = load_external_predictions(preds_path);
      std::vector<PatchPrediction> mine;
      for (auto& p : preds)
        if (p.subject_id == subject) mine.push_back(p);
      write_png(render_overlay(ged4, mine, slice, ovl_patch), out);
      return kExitOk;
    }

    if (*c_ph) {
      if (fractions.size() != group_stages.size())
        throw std::runtime_error("--lesion-fractions and --stages must match in length");
      std::vector<PhantomStudy> cohort;
      std::mt19937_64 rng(seed);
      std::uniform_real_distribution<double> uni(-1.0, 1.0);
      int idx = 0;
      for (size_t g = 0; g < fractions.size(); ++g)
        for (int k = 0; k < n_per_group; ++k, ++idx) {
          PhantomSpec spec;
          spec.subject_id = "P" + std::to_string(100 + idx);
          spec.seed = seed * 7919 + idx;
          spec.lesion_fraction = fractions[g];
          spec.contrast_mode = cfg.mode;
          for (const auto& name : channels_for_mode(cfg.mode)) {
            if (name == "GED4") continue;
            IntensityRemap remap;
            remap.gamma = 0.6 + 0.2 * (uni(rng) + 1.0);
            remap.gain = (name == "T2" || name == "GED2") ? -0.9 : 0.9;
            remap.offset = (remap.gain < 0) ? 0.95 : 0.05;
            spec.modality_maps[name] = remap;
            if (planted_rot > 0.0 || planted_trans > 0.0) {
              RigidTransform t;
              for (int a = 0; a < 3; ++a) {
                t.rotation[a] = planted_rot * M_PI / 180.0 * uni(rng);
                t.translation[a] = planted_trans * uni(rng);
              }
              spec.planted_transforms[name] = t;
            }
          }
          auto ps = generate(spec);
          ps.study.stage = group_stages[g];
          cohort.push_back(std::move(ps));
        }
      write_phantom_cohort(cohort, out);
      std::cout << cohort.size() << " phantoms -> " << out << "\n";
      return kExitOk;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::cerr << "error: " << msg << "\n";
    return msg.rfind("config", 0) == 0 || msg.rfind("cannot open config", 0) == 0 ||
                   msg.rfind("bad --mode", 0) == 0
               ? kExitConfig
               : kExitPartial;
  }
  return kExitOk;
}
