#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "liverstage/patches.hpp"

using namespace liverstage;

namespace {

// 64x64x3 study with a full-slice mask on z=1 and random T1/GED4 textures.
Study make_study(const std::string& id, std::optional<int> stage, uint64_t seed,
                 ContrastMode mode = ContrastMode::NonContrast, int mask_extent = 64) {
  Study s;
  s.subject_id = id;
  s.stage = stage;
  s.contrast_mode = mode;
  std::array<int, 3> dims{64, 64, 3};
  std::array<double, 3> sp{1.5, 1.5, 5.0};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (const auto& name : {"GED4", "T1"}) {
    Volume v(dims, sp, {0, 0, 0});
    for (auto& f : v.data) f = u(rng);
    s.modalities[name] = std::move(v);
  }
  Mask m(dims, sp, {0, 0, 0});
  for (int y = 0; y < mask_extent; ++y)
    for (int x = 0; x < mask_extent; ++x) m.at(x, y, 1) = 1;
  s.mask = m;
  return s;
}

}  // namespace

TEST_CASE("window lattice over a full slice") {
  auto s = make_study("a", 1, 7);
  PatchExtractionConfig cfg;  // 16 / 8 / 0.5
  auto patches = extract_patches(s, cfg);
  // anchors 0,8,...,48 in both y and x, one slice
  REQUIRE(patches.size() == 49);
  int i = 0;
  for (int y0 = 0; y0 <= 48; y0 += 8)
    for (int x0 = 0; x0 <= 48; x0 += 8, ++i) {
      CHECK(patches[i].slice_index == 1);
      CHECK(patches[i].grid_y == y0);
      CHECK(patches[i].grid_x == x0);
      CHECK(patches[i].coverage == 1.0);
      CHECK(patches[i].subject_id == "a");
      CHECK(patches[i].channels == 3);  // noncontrast: T1, T2, DWI
      CHECK(patches[i].size == 16);
    }
}

TEST_CASE("absent modalities become all-zero channels") {
  auto s = make_study("a", 1, 7);  // has T1 but no T2/DWI
  auto patches = extract_patches(s, PatchExtractionConfig{});
  for (const auto& p : patches)
    for (int c = 1; c < 3; ++c)
      for (int y = 0; y < p.size; ++y)
        for (int x = 0; x < p.size; ++x) CHECK(p.at(c, y, x) == 0.0f);
}

TEST_CASE("channels are z-scored over the mask") {
  auto s = make_study("a", 1, 7);
  auto patches = extract_patches(s, PatchExtractionConfig{});
  // full-slice mask with stride 8: interior voxels are sampled by several
  // windows, but summing the distinct anchors at stride 16 tiles the slice
  double sum = 0.0, sum2 = 0.0;
  size_t n = 0;
  for (const auto& p : patches) {
    if (p.grid_y % 16 || p.grid_x % 16) continue;
    for (int y = 0; y < p.size; ++y)
      for (int x = 0; x < p.size; ++x) {
        sum += p.at(0, y, x);
        sum2 += double(p.at(0, y, x)) * p.at(0, y, x);
        ++n;
      }
  }
  CHECK(n == 4096);
  CHECK(sum / n == doctest::Approx(0.0).epsilon(1e-4));
  CHECK(sum2 / n == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("low-coverage windows are dropped and edges zero-filled") {
  auto s = make_study("a", 1, 7, ContrastMode::NonContrast, 20);  // 20x20 corner mask
  PatchExtractionConfig cfg;
  auto patches = extract_patches(s, cfg);
  CHECK(!patches.empty());
  for (const auto& p : patches) {
    CHECK(p.coverage >= cfg.min_coverage);
    // voxels outside the mask are exactly zero in every channel
    for (int c = 0; c < p.channels; ++c)
      for (int y = 0; y < p.size; ++y)
        for (int x = 0; x < p.size; ++x)
          if (p.grid_y + y >= 20 || p.grid_x + x >= 20) CHECK(p.at(c, y, x) == 0.0f);
  }
  // the fully-outside window is gone
  for (const auto& p : patches) CHECK(p.grid_x + p.grid_y <= 32);
}

TEST_CASE("coverage counts window voxels inside the mask") {
  auto s = make_study("a", 1, 7, ContrastMode::NonContrast, 24);
  auto patches = extract_patches(s, PatchExtractionConfig{});
  for (const auto& p : patches) {
    int inside = 0;
    for (int y = 0; y < p.size; ++y)
      for (int x = 0; x < p.size; ++x)
        inside += (p.grid_y + y < 24 && p.grid_x + x < 24) ? 1 : 0;
    CHECK(p.coverage == doctest::Approx(inside / 256.0).epsilon(1e-12));
  }
}

TEST_CASE("extraction error cases") {
  auto s = make_study("a", 1, 7);
  SUBCASE("no mask") {
    s.mask.reset();
    CHECK_THROWS(extract_patches(s, PatchExtractionConfig{}));
  }
  SUBCASE("empty mask") {
    for (auto& v : s.mask->data) v = 0;
    CHECK_THROWS(extract_patches(s, PatchExtractionConfig{}));
  }
  SUBCASE("geometry mismatch") {
    s.modalities["T1"].spacing[0] = 9.0;
    CHECK_THROWS(extract_patches(s, PatchExtractionConfig{}));
  }
  SUBCASE("bad config") {
    PatchExtractionConfig cfg;
    cfg.stride = 0;
    CHECK_THROWS_AS(extract_patches(s, cfg), std::invalid_argument);
    cfg = PatchExtractionConfig{};
    cfg.min_coverage = 0.0;
    CHECK_THROWS_AS(extract_patches(s, cfg), std::invalid_argument);
  }
}

TEST_CASE("determinism") {
  auto s = make_study("a", 2, 7);
  auto p1 = extract_patches(s, PatchExtractionConfig{});
  auto p2 = extract_patches(s, PatchExtractionConfig{});
  REQUIRE(p1.size() == p2.size());
  for (size_t i = 0; i < p1.size(); ++i) CHECK(p1[i].data == p2[i].data);
}

TEST_CASE("geometric transforms") {
  Patch p;
  p.channels = 1;
  p.size = 2;
  p.data = {1, 2,
            3, 4};

  SUBCASE("horizontal flip") {
    auto q = transform_patch(p, 1);
    CHECK(q.at(0, 0, 0) == 2);
    CHECK(q.at(0, 0, 1) == 1);
    CHECK(q.at(0, 1, 0) == 4);
    CHECK(q.at(0, 1, 1) == 3);
  }
  SUBCASE("identity") { CHECK(transform_patch(p, 0).data == p.data); }
  SUBCASE("flip twice is the identity") {
    CHECK(transform_patch(transform_patch(p, 1), 1).data == p.data);
  }
  SUBCASE("four quarter turns are the identity") {
    Patch q = p;
    for (int i = 0; i < 4; ++i) q = transform_patch(q, 2);
    CHECK(q.data == p.data);
  }
  SUBCASE("all eight ops are distinct on a generic patch") {
    Patch g;
    g.channels = 1;
    g.size = 4;
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    g.data.resize(16);
    for (auto& f : g.data) f = u(rng);
    std::vector<std::vector<float>> seen;
    for (int op = 0; op < 8; ++op) {
      auto t = transform_patch(g, op).data;
      for (const auto& s : seen) CHECK(t != s);
      seen.push_back(std::move(t));
    }
  }
  SUBCASE("metadata and labels survive") {
    p.label = 1;
    p.coverage = 0.75;
    p.subject_id = "s";
    auto q = transform_patch(p, 3);
    CHECK(q.label == p.label);
    CHECK(q.coverage == p.coverage);
    CHECK(q.subject_id == p.subject_id);
  }
}

TEST_CASE("training set drops stage 2 and 3 subjects") {
  std::vector<Study> studies;
  studies.push_back(make_study("s1", 1, 1));
  studies.push_back(make_study("s2", 2, 2));
  studies.push_back(make_study("s3", 3, 3));
  studies.push_back(make_study("s4", 4, 4));
  auto train = build_training_set(studies, PatchExtractionConfig{});
  for (const auto& p : train) {
    CHECK(p.subject_id != "s2");
    CHECK(p.subject_id != "s3");
    REQUIRE(p.label.has_value());
    CHECK(*p.label == (p.subject_id == "s4" ? 1 : 0));
  }
}

TEST_CASE("minority class is balanced by augmentation") {
  std::vector<Study> studies;
  // small stage-4 mask vs large stage-1 masks: class 1 starts as the minority
  studies.push_back(make_study("s1a", 1, 1));
  studies.push_back(make_study("s1b", 1, 2));
  studies.push_back(make_study("s4", 4, 3, ContrastMode::NonContrast, 32));
  auto train = build_training_set(studies, PatchExtractionConfig{});
  size_t n0 = 0, n1 = 0;
  for (const auto& p : train) (*p.label ? n1 : n0) += 1;
  CHECK(n0 > 0);
  CHECK(n1 > 0);
  double ratio = double(std::min(n0, n1)) / double(std::max(n0, n1));
  CHECK(ratio >= 0.95);

  // augmented copies are exact geometric transforms of originals
  CHECK(n1 >= 2 * 9);  // at least one full augmentation round of the 9 base patches
}

TEST_CASE("training set requires stage labels") {
  std::vector<Study> studies;
  studies.push_back(make_study("s1", std::nullopt, 1));
  CHECK_THROWS(build_training_set(studies, PatchExtractionConfig{}));
}

TEST_CASE("patch file round-trip") {
  auto s = make_study("rt", 4, 5);
  auto patches = extract_patches(s, PatchExtractionConfig{});
  for (auto& p : patches) p.label = 1;
  patches[0].label.reset();
  auto path = (std::filesystem::temp_directory_path() / "ls_patches.bin").string();
  save_patches(patches, {"T1", "T2", "DWI"}, path);

  std::vector<std::string> channels;
  auto back = load_patches(path, &channels);
  CHECK(channels == std::vector<std::string>{"T1", "T2", "DWI"});
  REQUIRE(back.size() == patches.size());
  for (size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].subject_id == patches[i].subject_id);
    CHECK(back[i].slice_index == patches[i].slice_index);
    CHECK(back[i].grid_y == patches[i].grid_y);
    CHECK(back[i].grid_x == patches[i].grid_x);
    CHECK(back[i].coverage == patches[i].coverage);
    CHECK(back[i].label == patches[i].label);
    CHECK(back[i].data == patches[i].data);
  }
  std::filesystem::remove(path);
  CHECK_THROWS(load_patches(path));
}
