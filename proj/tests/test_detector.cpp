#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "ssda/checkpoint.hpp"
#include "ssda/detector.hpp"
#include "ssda/error.hpp"
#include "ssda/rng.hpp"

using namespace ssda;

namespace {

/// Small architecture used throughout the detector tests.
DetectorConfig tiny_config() {
  DetectorConfig cfg;
  cfg.backbone_widths = {4, 8, 8};
  cfg.strides = {4, 8, 16};
  cfg.fpn_channels = 8;
  cfg.anchor_scales = {2.0, 4.0};
  cfg.anchor_ratios = {1.0};
  cfg.rpn_pre_nms_topk = 100;
  cfg.rpn_post_nms_topk = 20;
  cfg.roi_pool = 2;
  cfg.roi_fc_dim = 16;
  cfg.roi_sample_count = 8;
  cfg.dis_hidden = 4;
  return cfg;
}

Tensor random_image(int c, int h, int w, uint64_t seed) {
  Rng rng(seed);
  Tensor t({c, h, w});
  for (auto& v : t.data) v = rng.uniform();
  return t;
}

}  // namespace

TEST_CASE("make_coord_grid examples") {
  const CoordGrid g1 = make_coord_grid(1, 1);
  CHECK(g1.x_ch[0] == 0.0);
  CHECK(g1.y_ch[0] == 0.0);

  const CoordGrid g2 = make_coord_grid(2, 2);
  CHECK(g2.x_ch[0] == -1.0);
  CHECK(g2.x_ch[1] == 1.0);
  CHECK(g2.x_ch[2] == -1.0);
  CHECK(g2.x_ch[3] == 1.0);
  CHECK(g2.y_ch[0] == -1.0);
  CHECK(g2.y_ch[1] == -1.0);
  CHECK(g2.y_ch[2] == 1.0);
  CHECK(g2.y_ch[3] == 1.0);

  const CoordGrid g13 = make_coord_grid(1, 3);
  CHECK(g13.x_ch[0] == -1.0);
  CHECK(g13.x_ch[1] == 0.0);
  CHECK(g13.x_ch[2] == 1.0);

  CHECK_THROWS_AS(make_coord_grid(0, 3), ConfigError);

  // corners are exactly +-1 for dims >= 2
  const CoordGrid g = make_coord_grid(7, 5);
  CHECK(g.x_ch[0] == -1.0);
  CHECK(g.x_ch[4] == 1.0);
  CHECK(g.y_ch[0] == -1.0);
  CHECK(g.y_ch[6 * 5] == 1.0);
}

TEST_CASE("coord_conv sees two extra channels and keeps spatial size") {
  Rng rng(1);
  Tape tape;
  const Tensor x = random_image(3, 6, 6, 2);
  const Tensor w = he_init_conv(5, 3 + 2, 3, 3, rng);
  const Tensor b({5});
  const int out = coord_conv(tape, tape.constant(x), tape.constant(w), tape.constant(b), 1, 1, true);
  CHECK(tape.value(out).shape == std::vector<int>{5, 6, 6});
}

TEST_CASE("coord_conv on all-zero input varies with position") {
  Rng rng(2);
  Tape tape;
  const Tensor x({1, 8, 8});  // all zeros
  const Tensor w = he_init_conv(1, 3, 1, 1, rng);
  const Tensor b({1});
  const int out = coord_conv(tape, tape.constant(x), tape.constant(w), tape.constant(b), 1, 0, true);
  const Tensor& v = tape.value(out);
  // two different spatial positions produce different outputs
  CHECK(v.at3(0, 0, 0) != v.at3(0, 7, 7));

  // ablated: zeroed coordinate channels keep the output constant
  Tape tape2;
  const int out2 = coord_conv(tape2, tape2.constant(x), tape2.constant(w), tape2.constant(b), 1, 0, false);
  const Tensor& v2 = tape2.value(out2);
  CHECK(v2.at3(0, 0, 0) == v2.at3(0, 7, 7));
}

TEST_CASE("coord_conv with identity weights reproduces the coordinate grid") {
  // 1x1 conv that copies the two coordinate channels
  Tensor w({2, 3, 1, 1});
  w.data = {0, 1, 0, 0, 0, 1};  // out0 <- ch1 (x), out1 <- ch2 (y)
  Tensor b({2});
  Tape tape;
  const Tensor x({1, 4, 5});
  const int out = coord_conv(tape, tape.constant(x), tape.constant(w), tape.constant(b), 1, 0, true);
  const CoordGrid g = make_coord_grid(4, 5);
  const Tensor& v = tape.value(out);
  for (int y = 0; y < 4; ++y) {
    for (int xx = 0; xx < 5; ++xx) {
      CHECK(v.at3(0, y, xx) == g.x_ch[static_cast<int64_t>(y) * 5 + xx]);
      CHECK(v.at3(1, y, xx) == g.y_ch[static_cast<int64_t>(y) * 5 + xx]);
    }
  }
}

TEST_CASE("forward pyramid shapes at 256x256 with four levels") {
  DetectorConfig cfg;
  cfg.backbone_widths = {4, 4, 4, 4};
  cfg.strides = {4, 8, 16, 32};
  cfg.fpn_channels = 4;
  cfg.dis_hidden = 2;
  cfg.roi_fc_dim = 8;
  const ParamStore params = init_detector_params(cfg, 3);
  Tape tape(false);
  const BoundParams bound = bind_params(tape, params, nullptr);
  const int img = tape.constant(random_image(3, 256, 256, 4));
  const ForwardNodes fwd = detector_forward_nodes(tape, bound, cfg, img);
  REQUIRE(fwd.fpn.size() == 4);
  const int sizes[4] = {64, 32, 16, 8};
  for (int i = 0; i < 4; ++i) {
    CHECK(tape.value(fwd.fpn[i]).shape == std::vector<int>{4, sizes[i], sizes[i]});
    CHECK(tape.value(fwd.fpn[i]).all_finite());
  }
}

TEST_CASE("forward rejects sizes not divisible by the top stride") {
  const DetectorConfig cfg = tiny_config();
  const ParamStore params = init_detector_params(cfg, 5);
  Tape tape(false);
  const BoundParams bound = bind_params(tape, params, nullptr);
  const int img = tape.constant(random_image(3, 24, 32, 6));
  CHECK_THROWS_AS(detector_forward_nodes(tape, bound, cfg, img), ShapeError);
}

TEST_CASE("eval runs are deterministic and batched outputs match single runs") {
  const DetectorConfig cfg = tiny_config();
  const ParamStore params = init_detector_params(cfg, 7);
  const Tensor img0 = random_image(3, 32, 32, 8);
  const Tensor img1 = random_image(3, 32, 32, 9);

  const DetectorOutput a = run_detector(params, cfg, img0);
  const DetectorOutput b = run_detector(params, cfg, img0);
  REQUIRE(a.detections.size() == b.detections.size());
  for (size_t i = 0; i < a.detections.size(); ++i) {
    CHECK(a.detections[i].score == b.detections[i].score);
    CHECK(a.detections[i].box == b.detections[i].box);
  }
  CHECK(a.proposals.size() == b.proposals.size());

  Tensor batch({2, 3, 32, 32});
  std::copy(img0.data.begin(), img0.data.end(), batch.data.begin());
  std::copy(img1.data.begin(), img1.data.end(), batch.data.begin() + img0.numel());
  const std::vector<DetectorOutput> outs = run_detector_batch(params, cfg, batch);
  REQUIRE(outs.size() == 2);
  CHECK(outs[0].detections.size() == a.detections.size());
  for (const DetectorOutput& o : outs) {
    for (const Detection& d : o.detections) {
      CHECK(d.score >= 0.0);
      CHECK(d.score <= 1.0);
    }
    for (const Tensor& f : o.fpn_features) CHECK(f.all_finite());
  }
}

TEST_CASE("proposals stay inside the image") {
  const DetectorConfig cfg = tiny_config();
  const ParamStore params = init_detector_params(cfg, 11);
  const DetectorOutput out = run_detector(params, cfg, random_image(3, 32, 48, 12));
  CHECK(!out.proposals.empty());
  for (const Proposal& p : out.proposals) {
    CHECK(p.box.x1() >= -1e-9);
    CHECK(p.box.y1() >= -1e-9);
    CHECK(p.box.x2() <= 48 + 1e-9);
    CHECK(p.box.y2() <= 32 + 1e-9);
  }
}

TEST_CASE("nms keeps the best of overlapping boxes") {
  const std::vector<BBox> boxes = {
      BBox{0, 10, 10, 8, 8}, BBox{0, 11, 10, 8, 8}, BBox{0, 30, 30, 8, 8}};
  const std::vector<double> scores = {0.5, 0.9, 0.7};
  const std::vector<size_t> keep = nms(boxes, scores, 0.5);
  REQUIRE(keep.size() == 2);
  CHECK(keep[0] == 1);  // best overlapping
  CHECK(keep[1] == 2);
}

TEST_CASE("box encode/decode round trip") {
  Rng rng(13);
  for (int i = 0; i < 100; ++i) {
    const BBox anchor{0, rng.uniform(10, 50), rng.uniform(10, 50), rng.uniform(4, 20), rng.uniform(4, 20)};
    const BBox target{0, rng.uniform(10, 50), rng.uniform(10, 50), rng.uniform(4, 20), rng.uniform(4, 20)};
    const auto d = encode_box(anchor, target);
    const BBox back = decode_box(anchor, d[0], d[1], d[2], d[3]);
    CHECK(back.cx == doctest::Approx(target.cx).epsilon(1e-9));
    CHECK(back.cy == doctest::Approx(target.cy).epsilon(1e-9));
    CHECK(back.w == doctest::Approx(target.w).epsilon(1e-9));
    CHECK(back.h == doctest::Approx(target.h).epsilon(1e-9));
  }
}

TEST_CASE("rpn head: equivariant with zeroed coords, variant with them active") {
  // The head convolution sees a feature map and its one-cell-shifted copy.
  // Interior cells (a one-cell margin for the 3x3 kernel) must match exactly
  // when the coordinate channels are zeroed. A weight set that reads the
  // coordinate channels breaks the equivariance.
  Rng rng(17);
  const int c = 4, h = 12, w = 12;
  Tensor feat({c, h, w});
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 2; y < h - 2; ++y) {
      for (int x = 2; x < w - 3; ++x) {
        feat.at3(ch, y, x) = rng.uniform();
      }
    }
  }
  Tensor shifted({c, h, w});
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < h; ++y) {
      for (int x = 1; x < w; ++x) {
        shifted.at3(ch, y, x) = feat.at3(ch, y, x - 1);
      }
    }
  }

  Tensor head_w = he_init_conv(c, c + 2, 3, 3, rng);  // reads features + coords
  const Tensor head_b({c});
  Tensor obj_w = he_init_conv(1, c, 1, 1, rng);
  const Tensor obj_b({1});

  auto objectness = [&](const Tensor& input, bool coords) {
    Tape tape(false);
    const int head = coord_conv(tape, tape.constant(input), tape.constant(head_w),
                                tape.constant(head_b), 1, 1, coords);
    const int obj = tape.conv2d(tape.relu(head), tape.constant(obj_w), tape.constant(obj_b), 1, 0);
    return tape.value(obj);
  };

  const Tensor base = objectness(feat, false);
  const Tensor moved = objectness(shifted, false);
  for (int y = 1; y < h - 1; ++y) {
    for (int x = 1; x < w - 2; ++x) {
      CHECK(base.at3(0, y, x) == doctest::Approx(moved.at3(0, y, x + 1)).epsilon(1e-12));
    }
  }

  const Tensor cbase = objectness(feat, true);
  const Tensor cmoved = objectness(shifted, true);
  double max_diff = 0.0;
  for (int y = 1; y < h - 1; ++y) {
    for (int x = 1; x < w - 2; ++x) {
      max_diff = std::max(max_diff, std::abs(cbase.at3(0, y, x) - cmoved.at3(0, y, x + 1)));
    }
  }
  CHECK(max_diff > 1e-6);
}

TEST_CASE("discriminator reversal wrapper is the identity in the forward pass") {
  Tape tape;
  Tensor sink({2, 3, 3});
  const int x = tape.leaf(random_image(2, 3, 3, 19), &sink);
  const int rev = tape.grad_reverse(x, 2.5e-3);
  const Tensor& in = tape.value(x);
  const Tensor& outv = tape.value(rev);
  for (int64_t i = 0; i < in.numel(); ++i) CHECK(in[i] == outv[i]);
}

TEST_CASE("discriminate_domain produces three levels of logits") {
  const DetectorConfig cfg = tiny_config();
  const ParamStore params = init_detector_params(cfg, 23);
  Tape tape;
  GradSet grads(params);
  const BoundParams bound = bind_params(tape, params, &grads);
  const ForwardNodes fwd = detector_forward_nodes(tape, bound, cfg, tape.constant(random_image(3, 32, 32, 24)));
  const std::vector<BBox> rois = {BBox{0, 16, 16, 8, 8}, BBox{0, 8, 20, 6, 6}};
  const RoiNodes roi_nodes = roi_forward(tape, bound, cfg, fwd, rois);
  const DomainLogits logits = discriminate_domain(tape, bound, cfg, fwd, roi_nodes.fc, 2.5e-3);
  CHECK(tape.value(logits.img_low).numel() == 1);
  CHECK(tape.value(logits.img_high).numel() == 1);
  REQUIRE(logits.ins >= 0);
  CHECK(tape.value(logits.ins).numel() == 2);
}

TEST_CASE("detector config json round trip") {
  DetectorConfig cfg = tiny_config();
  cfg.det_topk = 17;
  cfg.coord_enabled = false;
  const DetectorConfig back = detector_config_from_json(detector_config_to_json(cfg));
  CHECK(back.backbone_widths == cfg.backbone_widths);
  CHECK(back.strides == cfg.strides);
  CHECK(back.det_topk == 17);
  CHECK(back.coord_enabled == false);
}

TEST_CASE("checkpoint round trip reproduces eval outputs exactly") {
  const DetectorConfig cfg = tiny_config();
  const ParamStore params = init_detector_params(cfg, 29);
  const std::string path =
      (std::filesystem::temp_directory_path() / "ssda_ckpt_test.bin").string();
  save_checkpoint(Checkpoint{cfg, params}, path);
  const Checkpoint back = load_checkpoint(path);
  CHECK(back.params.same_structure(params));

  const Tensor img = random_image(3, 32, 32, 30);
  const DetectorOutput a = run_detector(params, cfg, img);
  const DetectorOutput b = run_detector(back.params, back.config, img);
  REQUIRE(a.detections.size() == b.detections.size());
  for (size_t i = 0; i < a.detections.size(); ++i) {
    CHECK(a.detections[i].score == b.detections[i].score);
    CHECK(a.detections[i].box == b.detections[i].box);
  }
  std::remove(path.c_str());
}

TEST_CASE("structurally different parameter sets refuse to zip") {
  const DetectorConfig cfg = tiny_config();
  DetectorConfig other = cfg;
  other.fpn_channels = 4;
  ParamStore a = init_detector_params(cfg, 1);
  const ParamStore b = init_detector_params(other, 1);
  CHECK_THROWS_AS(ema_update(a, b, 0.9), StructureError);
}
