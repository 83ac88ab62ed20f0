#include <doctest.h>

#include <filesystem>

#include "oracles.hpp"
#include "ssda/error.hpp"
#include "ssda/metrics.hpp"
#include "ssda/rng.hpp"

using namespace ssda;

namespace {

Detection det(const std::string& img, double cx, double cy, double w, double h, double score,
              int cls = 0) {
  return Detection{img, BBox{cls, cx, cy, w, h}, score};
}

/// Random little evaluation instance: <= 5 detections, <= 3 ground truths.
struct Instance {
  std::vector<Detection> dets;
  GroundTruthMap gts;
};

Instance random_instance(Rng& rng) {
  Instance inst;
  const int n_imgs = rng.uniform_int(1, 2);
  for (int i = 0; i < n_imgs; ++i) inst.gts["img" + std::to_string(i)] = {};
  const int n_gt = rng.uniform_int(1, 3);
  for (int g = 0; g < n_gt; ++g) {
    const std::string img = "img" + std::to_string(rng.uniform_int(0, n_imgs - 1));
    inst.gts[img].push_back(BBox{0, rng.uniform(10, 90), rng.uniform(10, 90), rng.uniform(4, 30), rng.uniform(4, 30)});
  }
  const int n_det = rng.uniform_int(0, 5);
  for (int d = 0; d < n_det; ++d) {
    const std::string img = "img" + std::to_string(rng.uniform_int(0, n_imgs - 1));
    BBox base{0, rng.uniform(10, 90), rng.uniform(10, 90), rng.uniform(4, 30), rng.uniform(4, 30)};
    // half the detections perturb an existing ground truth so matches happen
    if (!inst.gts[img].empty() && rng.bernoulli(0.5)) {
      const BBox& g = inst.gts[img][static_cast<size_t>(rng.below(inst.gts[img].size()))];
      base = BBox{0, g.cx + rng.uniform(-4, 4), g.cy + rng.uniform(-4, 4), g.w * rng.uniform(0.8, 1.2),
                  g.h * rng.uniform(0.8, 1.2)};
    }
    inst.dets.push_back(Detection{img, base, rng.uniform()});
  }
  return inst;
}

}  // namespace

TEST_CASE("average_precision on the trivial cases") {
  GroundTruthMap gts;
  gts["a"] = {BBox{0, 10, 10, 4, 4}};

  CHECK(average_precision({det("a", 10, 10, 4, 4, 0.9)}, gts, 0.5) == doctest::Approx(1.0));
  CHECK(average_precision({}, gts, 0.5) == doctest::Approx(0.0));

  GroundTruthMap no_gt;
  no_gt["a"] = {};
  CHECK_THROWS_AS(average_precision({det("a", 10, 10, 4, 4, 0.9)}, no_gt, 0.5), EvalError);
  CHECK_THROWS_AS(average_precision({}, GroundTruthMap{}, 0.5), EvalError);
}

TEST_CASE("average_precision: high-scoring miss then hit") {
  GroundTruthMap gts;
  gts["a"] = {BBox{0, 10, 10, 4, 4}};
  const std::vector<Detection> dets = {
      det("a", 60, 60, 4, 4, 0.9),  // false positive
      det("a", 10, 10, 4, 4, 0.8),  // true positive
  };
  const double ap = average_precision(dets, gts, 0.5);
  CHECK(ap == doctest::Approx(oracles::brute_force_ap(dets, gts, 0.5)).epsilon(1e-12));
  CHECK(ap == doctest::Approx(0.5));  // envelope lifts precision at recall 0
}

TEST_CASE("evaluate trivial cases") {
  GroundTruthMap gts;
  gts["a"] = {BBox{0, 10, 10, 4, 4}};
  gts["b"] = {BBox{0, 30, 30, 8, 8}};

  const std::vector<Detection> perfect = {det("a", 10, 10, 4, 4, 0.99), det("b", 30, 30, 8, 8, 0.98)};
  const EvalReport r = evaluate(perfect, gts);
  CHECK(r.map_50_95 == doctest::Approx(1.0));
  CHECK(r.map_50 == doctest::Approx(1.0));
  REQUIRE(r.per_threshold_ap.size() == 10);
  CHECK(r.per_threshold_ap.front().first == doctest::Approx(0.50));
  CHECK(r.per_threshold_ap.back().first == doctest::Approx(0.95));

  // all detections under 0.5 IoU
  const std::vector<Detection> off = {det("a", 14, 14, 4, 4, 0.9), det("b", 50, 60, 8, 8, 0.8)};
  CHECK(evaluate(off, gts).map_50 == doctest::Approx(0.0));
}

TEST_CASE("evaluate equals the brute-force oracle on random instances") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const Instance inst = random_instance(rng);
    const EvalReport r = evaluate(inst.dets, inst.gts);
    const std::vector<double> expect = oracles::brute_force_per_threshold_ap(inst.dets, inst.gts);
    REQUIRE(r.per_threshold_ap.size() == expect.size());
    for (size_t i = 0; i < expect.size(); ++i) {
      CHECK(r.per_threshold_ap[i].second == doctest::Approx(expect[i]).epsilon(1e-9));
    }
  }
}

TEST_CASE("mAP is exactly the mean of per-threshold APs") {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const Instance inst = random_instance(rng);
    const EvalReport r = evaluate(inst.dets, inst.gts);
    double sum = 0.0;
    for (const auto& [thr, ap] : r.per_threshold_ap) sum += ap;
    CHECK(r.map_50_95 == sum / 10.0);
  }
}

// A duplicate of an already-matched detection is an extra false positive; it
// is harmless when it ranks below everything else, and with a single ground
// truth even a top-ranked duplicate cannot move the curve (recall saturates
// at rank one). A top-ranked duplicate with several ground truths CAN lower
// COCO-interpolated AP; that is the convention working as intended.
TEST_CASE("duplicating a correct detection below all scores never decreases AP") {
  Rng rng(33);
  for (int trial = 0; trial < 100; ++trial) {
    Instance inst = random_instance(rng);
    double low = 1.0;
    for (const auto& d : inst.dets) low = std::min(low, d.score);
    const auto git = inst.gts.begin();
    if (git->second.empty()) continue;

    inst.dets.push_back(Detection{git->first, git->second[0], low * 0.5});
    const double before_plus_match = evaluate(inst.dets, inst.gts).map_50;
    inst.dets.push_back(Detection{git->first, git->second[0], low * 0.25});
    const double with_duplicate = evaluate(inst.dets, inst.gts).map_50;
    CHECK(with_duplicate >= before_plus_match - 1e-12);
  }
}

TEST_CASE("with one ground truth a top-ranked duplicate leaves AP at 1") {
  GroundTruthMap gts;
  gts["a"] = {BBox{0, 10, 10, 4, 4}};
  std::vector<Detection> dets = {det("a", 10, 10, 4, 4, 0.9)};
  CHECK(evaluate(dets, gts).map_50 == doctest::Approx(1.0));
  dets.insert(dets.begin(), det("a", 10, 10, 4, 4, 1.0));
  CHECK(evaluate(dets, gts).map_50 == doctest::Approx(1.0));
}

TEST_CASE("uniform coordinate scaling leaves the report unchanged") {
  Rng rng(55);
  for (int trial = 0; trial < 50; ++trial) {
    const Instance inst = random_instance(rng);
    const double k = rng.uniform(0.25, 8.0);
    Instance scaled = inst;
    for (auto& d : scaled.dets) {
      d.box.cx *= k;
      d.box.cy *= k;
      d.box.w *= k;
      d.box.h *= k;
    }
    for (auto& [id, boxes] : scaled.gts) {
      for (auto& b : boxes) {
        b.cx *= k;
        b.cy *= k;
        b.w *= k;
        b.h *= k;
      }
    }
    const EvalReport a = evaluate(inst.dets, inst.gts);
    const EvalReport b = evaluate(scaled.dets, scaled.gts);
    CHECK(a.map_50_95 == doctest::Approx(b.map_50_95).epsilon(1e-9));
  }
}

TEST_CASE("score ties break by input order (stable)") {
  GroundTruthMap gts;
  gts["a"] = {BBox{0, 10, 10, 4, 4}};
  // same score: the first listed detection is ranked first and takes the match
  const std::vector<Detection> dets = {det("a", 10, 10, 4, 4, 0.5), det("a", 10.5, 10, 4, 4, 0.5)};
  CHECK(average_precision(dets, gts, 0.5) ==
        doctest::Approx(oracles::brute_force_ap(dets, gts, 0.5)).epsilon(1e-12));
}

TEST_CASE("detections file round trip") {
  const std::string path =
      (std::filesystem::temp_directory_path() / "ssda_dets_roundtrip.jsonl").string();
  const std::vector<Detection> dets = {det("a", 10, 10, 4, 4, 0.75), det("b", 5, 6, 7, 8, 0.25, 2)};
  save_detections(dets, path);
  const auto back = load_detections(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].image_id == "a");
  CHECK(back[0].score == doctest::Approx(0.75));
  CHECK(back[1].box.class_id == 2);
  std::remove(path.c_str());
}
