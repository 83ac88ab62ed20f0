#include <doctest.h>

#include "oracles.hpp"
#include "ssda/geometry.hpp"
#include "ssda/rng.hpp"

using namespace ssda;

TEST_CASE("iou basics") {
  const BBox a = BBox::from_corners(0, 0, 0, 2, 2);
  CHECK(iou(a, a) == doctest::Approx(1.0));

  const BBox far_away = BBox::from_corners(0, 10, 10, 12, 12);
  CHECK(iou(a, far_away) == 0.0);

  // [0,0,2,2] vs [1,0,3,2]: intersection 2, union 6
  const BBox b = BBox::from_corners(0, 1, 0, 3, 2);
  CHECK(iou(a, b) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(iou(a, b) == iou(b, a));
}

TEST_CASE("iou scale invariance") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    BBox a{0, rng.uniform(0, 50), rng.uniform(0, 50), rng.uniform(1, 20), rng.uniform(1, 20)};
    BBox b{0, rng.uniform(0, 50), rng.uniform(0, 50), rng.uniform(1, 20), rng.uniform(1, 20)};
    const double k = rng.uniform(0.1, 10.0);
    BBox as{0, a.cx * k, a.cy * k, a.w * k, a.h * k};
    BBox bs{0, b.cx * k, b.cy * k, b.w * k, b.h * k};
    CHECK(iou(as, bs) == doctest::Approx(iou(a, b)).epsilon(1e-9));
  }
}

TEST_CASE("merge_boxes examples") {
  const BBox b1 = BBox::from_corners(0, 0, 0, 10, 10);
  const BBox b2 = BBox::from_corners(0, 20, 0, 30, 10);
  const auto merged = merge_boxes({b1, b2});
  REQUIRE(merged.size() == 1);
  CHECK(merged[0].x1() == doctest::Approx(0));
  CHECK(merged[0].y1() == doctest::Approx(0));
  CHECK(merged[0].x2() == doctest::Approx(30));
  CHECK(merged[0].y2() == doctest::Approx(10));

  const auto single = merge_boxes({b1});
  REQUIRE(single.size() == 1);
  CHECK(single[0] == b1);

  CHECK(merge_boxes({}).empty());
}

TEST_CASE("merge_boxes keeps one box per class") {
  const BBox a{0, 5, 5, 2, 2};
  const BBox b{1, 8, 8, 2, 2};
  const BBox c{0, 1, 1, 1, 1};
  const auto merged = merge_boxes({a, b, c});
  REQUIRE(merged.size() == 2);
  CHECK(merged[0].class_id == 0);
  CHECK(merged[1].class_id == 1);
  CHECK(merged[1] == b);
}

TEST_CASE("merge_boxes matches corner-scan oracle and is idempotent") {
  Rng rng(42);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<BBox> boxes;
    const int n = rng.uniform_int(1, 5);
    for (int i = 0; i < n; ++i) {
      boxes.push_back(BBox{0, rng.uniform(5, 95), rng.uniform(5, 95), rng.uniform(1, 10), rng.uniform(1, 10)});
    }
    const auto merged = merge_boxes(boxes);
    REQUIRE(merged.size() == 1);
    const BBox expect = oracles::corner_scan_enclosure(boxes);
    CHECK(merged[0].x1() == doctest::Approx(expect.x1()).epsilon(1e-12));
    CHECK(merged[0].y1() == doctest::Approx(expect.y1()).epsilon(1e-12));
    CHECK(merged[0].x2() == doctest::Approx(expect.x2()).epsilon(1e-12));
    CHECK(merged[0].y2() == doctest::Approx(expect.y2()).epsilon(1e-12));

    // every input box is contained in its class's merged box
    for (const BBox& b : boxes) {
      CHECK(b.x1() >= merged[0].x1() - 1e-12);
      CHECK(b.y1() >= merged[0].y1() - 1e-12);
      CHECK(b.x2() <= merged[0].x2() + 1e-12);
      CHECK(b.y2() <= merged[0].y2() + 1e-12);
    }

    const auto twice = merge_boxes(merged);
    REQUIRE(twice.size() == 1);
    CHECK(twice[0] == merged[0]);
  }
}

TEST_CASE("clamp_to_image") {
  const BBox b = BBox::from_corners(0, -5, -5, 15, 15);
  const BBox c = clamp_to_image(b, 10, 10);
  CHECK(c.x1() == doctest::Approx(0));
  CHECK(c.y1() == doctest::Approx(0));
  CHECK(c.x2() == doctest::Approx(10));
  CHECK(c.y2() == doctest::Approx(10));
}
