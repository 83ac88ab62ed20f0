#include <doctest.h>

#include "ssda/error.hpp"
#include "ssda/mask.hpp"
#include "ssda/pseudo.hpp"
#include "ssda/rng.hpp"

using namespace ssda;

namespace {
Detection det(double score) { return Detection{"img", BBox{0, 10, 10, 4, 4}, score}; }
}  // namespace

TEST_CASE("filter_pseudo_labels on the published thresholds") {
  const double tau_u = 0.8, tau_l = 0.05;

  const PseudoLabelSet a = filter_pseudo_labels({det(0.9), det(0.5), det(0.03)}, tau_u, tau_l);
  REQUIRE(a.positives.size() == 1);
  CHECK(a.positives[0].score == 0.9);
  CHECK(!a.is_reliable_background);
  CHECK(a.usable);

  const PseudoLabelSet empty = filter_pseudo_labels({}, tau_u, tau_l);
  CHECK(empty.positives.empty());
  CHECK(empty.is_reliable_background);
  CHECK(empty.usable);

  const PseudoLabelSet mid = filter_pseudo_labels({det(0.5)}, tau_u, tau_l);
  CHECK(mid.positives.empty());
  CHECK(!mid.is_reliable_background);
  CHECK(!mid.usable);

  // everything at or below the lower threshold is still background
  const PseudoLabelSet low = filter_pseudo_labels({det(0.04), det(0.01)}, tau_u, tau_l);
  CHECK(low.is_reliable_background);
  CHECK(low.usable);

  CHECK_THROWS_AS(filter_pseudo_labels({}, 0.05, 0.8), ConfigError);
}

TEST_CASE("filter totality: every detection is positive, discarded or below tau_l") {
  Rng rng(31);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<Detection> dets;
    const int n = rng.uniform_int(0, 8);
    for (int i = 0; i < n; ++i) dets.push_back(det(rng.uniform()));
    const PseudoLabelSet s = filter_pseudo_labels(dets, 0.8, 0.05);

    size_t positives = 0, discarded = 0, below = 0;
    for (const Detection& d : dets) {
      if (d.score > 0.8) {
        ++positives;
      } else if (d.score > 0.05) {
        ++discarded;
      } else {
        ++below;
      }
    }
    CHECK(s.positives.size() == positives);
    CHECK(positives + discarded + below == dets.size());
    if (s.is_reliable_background) CHECK(s.positives.empty());
    CHECK(s.usable == (!s.positives.empty() || s.is_reliable_background));
    CHECK(s.is_reliable_background == (positives + discarded == 0));
  }
}

TEST_CASE("generate_mask counts and determinism") {
  const BlockMask m = generate_mask(256, 256, 32, 0.5, 7);
  CHECK(m.blocks_y * m.blocks_x == 64);
  CHECK(m.masked_block_count() == 32);

  const BlockMask m2 = generate_mask(256, 256, 32, 0.5, 7);
  CHECK(m.masked == m2.masked);
  const BlockMask m3 = generate_mask(256, 256, 32, 0.5, 8);
  CHECK(m.masked != m3.masked);

  // ceiling division at the edges
  const BlockMask edge = generate_mask(100, 100, 32, 0.5, 9);
  CHECK(edge.blocks_y == 4);
  CHECK(edge.blocks_x == 4);
  CHECK(edge.masked_block_count() == 8);

  const BlockMask none = generate_mask(64, 64, 32, 0.0, 3);
  CHECK(none.masked_block_count() == 0);

  CHECK_THROWS_AS(generate_mask(64, 64, 0, 0.5, 1), ConfigError);
}

TEST_CASE("apply_mask zeroes masked blocks and nothing else") {
  Rng rng(33);
  Tensor img({3, 70, 50});
  for (auto& v : img.data) v = rng.uniform(0.1, 1.0);  // nonzero everywhere

  const BlockMask full = generate_mask(70, 50, 16, 1.0, 1);
  const Tensor zeros = apply_mask(img, full);
  for (double v : zeros.data) CHECK(v == 0.0);

  const BlockMask none = generate_mask(70, 50, 16, 0.0, 1);
  const Tensor same = apply_mask(img, none);
  CHECK(same.data == img.data);

  const BlockMask half = generate_mask(70, 50, 16, 0.5, 5);
  const Tensor masked = apply_mask(img, half);
  int64_t zero_count = 0;
  for (int y = 0; y < 70; ++y) {
    for (int x = 0; x < 50; ++x) {
      const bool is_masked = half.masked[static_cast<size_t>(y / 16) * half.blocks_x + x / 16] != 0;
      for (int c = 0; c < 3; ++c) {
        if (is_masked) {
          CHECK(masked.at3(c, y, x) == 0.0);
        } else {
          CHECK(masked.at3(c, y, x) == img.at3(c, y, x));
        }
      }
      zero_count += is_masked;
    }
  }
  CHECK(zero_count == half.masked_pixel_count());

  BlockMask wrong = half;
  wrong.height = 71;
  CHECK_THROWS_AS(apply_mask(img, wrong), ShapeError);
}

TEST_CASE("mask accounting holds for arbitrary sizes") {
  Rng rng(35);
  for (int trial = 0; trial < 50; ++trial) {
    const int h = rng.uniform_int(16, 200);
    const int w = rng.uniform_int(16, 200);
    const int block = rng.uniform_int(4, 48);
    const BlockMask m = generate_mask(h, w, block, 0.5, static_cast<uint64_t>(trial));
    const size_t nblocks = static_cast<size_t>(m.blocks_y) * m.blocks_x;
    CHECK(m.masked_block_count() == static_cast<size_t>(std::floor(0.5 * nblocks + 0.5)));

    int64_t area = 0;
    for (int by = 0; by < m.blocks_y; ++by) {
      for (int bx = 0; bx < m.blocks_x; ++bx) {
        if (m.masked[static_cast<size_t>(by) * m.blocks_x + bx]) area += m.block_area(by, bx);
      }
    }
    CHECK(area == m.masked_pixel_count());
  }
}
