#include "ssda/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "ssda/error.hpp"

namespace ssda {

using nlohmann::json;

void DetectorConfig::validate() const {
  if (strides.size() < 3) throw ConfigError("need at least 3 pyramid levels");
  if (backbone_widths.size() != strides.size()) {
    throw ConfigError("backbone_widths must match strides");
  }
  for (size_t i = 0; i < strides.size(); ++i) {
    const int expect = 4 << i;
    if (strides[i] != expect) throw ConfigError("strides must be {4,8,16,...}");
  }
  if (fpn_channels <= 0 || num_classes <= 0) throw ConfigError("bad channel/class count");
  if (anchor_scales.empty() || anchor_ratios.empty()) throw ConfigError("empty anchor set");
  if (roi_pool < 1) throw ConfigError("roi_pool must be >= 1");
}

std::string detector_config_to_json(const DetectorConfig& c) {
  json j;
  j["image_channels"] = c.image_channels;
  j["backbone_widths"] = c.backbone_widths;
  j["strides"] = c.strides;
  j["fpn_channels"] = c.fpn_channels;
  j["num_classes"] = c.num_classes;
  j["anchor_scales"] = c.anchor_scales;
  j["anchor_ratios"] = c.anchor_ratios;
  j["rpn_nms_iou"] = c.rpn_nms_iou;
  j["rpn_pre_nms_topk"] = c.rpn_pre_nms_topk;
  j["rpn_post_nms_topk"] = c.rpn_post_nms_topk;
  j["rpn_sample_count"] = c.rpn_sample_count;
  j["rpn_pos_iou"] = c.rpn_pos_iou;
  j["rpn_neg_iou"] = c.rpn_neg_iou;
  j["roi_pool"] = c.roi_pool;
  j["roi_fc_dim"] = c.roi_fc_dim;
  j["roi_sample_count"] = c.roi_sample_count;
  j["roi_fg_iou"] = c.roi_fg_iou;
  j["roi_fg_fraction"] = c.roi_fg_fraction;
  j["det_nms_iou"] = c.det_nms_iou;
  j["det_score_min"] = c.det_score_min;
  j["det_topk"] = c.det_topk;
  j["coord_fpn_lateral"] = c.coord_fpn_lateral;
  j["coord_rpn"] = c.coord_rpn;
  j["coord_enabled"] = c.coord_enabled;
  j["dis_hidden"] = c.dis_hidden;
  return j.dump();
}

DetectorConfig detector_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("detector config: ") + e.what());
  }
  DetectorConfig c;
  c.image_channels = j.value("image_channels", c.image_channels);
  c.backbone_widths = j.value("backbone_widths", c.backbone_widths);
  c.strides = j.value("strides", c.strides);
  c.fpn_channels = j.value("fpn_channels", c.fpn_channels);
  c.num_classes = j.value("num_classes", c.num_classes);
  c.anchor_scales = j.value("anchor_scales", c.anchor_scales);
  c.anchor_ratios = j.value("anchor_ratios", c.anchor_ratios);
  c.rpn_nms_iou = j.value("rpn_nms_iou", c.rpn_nms_iou);
  c.rpn_pre_nms_topk = j.value("rpn_pre_nms_topk", c.rpn_pre_nms_topk);
  c.rpn_post_nms_topk = j.value("rpn_post_nms_topk", c.rpn_post_nms_topk);
  c.rpn_sample_count = j.value("rpn_sample_count", c.rpn_sample_count);
  c.rpn_pos_iou = j.value("rpn_pos_iou", c.rpn_pos_iou);
  c.rpn_neg_iou = j.value("rpn_neg_iou", c.rpn_neg_iou);
  c.roi_pool = j.value("roi_pool", c.roi_pool);
  c.roi_fc_dim = j.value("roi_fc_dim", c.roi_fc_dim);
  c.roi_sample_count = j.value("roi_sample_count", c.roi_sample_count);
  c.roi_fg_iou = j.value("roi_fg_iou", c.roi_fg_iou);
  c.roi_fg_fraction = j.value("roi_fg_fraction", c.roi_fg_fraction);
  c.det_nms_iou = j.value("det_nms_iou", c.det_nms_iou);
  c.det_score_min = j.value("det_score_min", c.det_score_min);
  c.det_topk = j.value("det_topk", c.det_topk);
  c.coord_fpn_lateral = j.value("coord_fpn_lateral", c.coord_fpn_lateral);
  c.coord_rpn = j.value("coord_rpn", c.coord_rpn);
  c.coord_enabled = j.value("coord_enabled", c.coord_enabled);
  c.dis_hidden = j.value("dis_hidden", c.dis_hidden);
  c.validate();
  return c;
}

CoordGrid make_coord_grid(int height, int width) {
  if (height < 1 || width < 1) throw ConfigError("coord grid needs positive dims");
  CoordGrid g;
  g.x_ch = Tensor({height, width});
  g.y_ch = Tensor({height, width});
  for (int i = 0; i < height; ++i) {
    const double yv = height >= 2 ? 2.0 * i / (height - 1) - 1.0 : 0.0;
    for (int j = 0; j < width; ++j) {
      const double xv = width >= 2 ? 2.0 * j / (width - 1) - 1.0 : 0.0;
      g.x_ch[static_cast<int64_t>(i) * width + j] = xv;
      g.y_ch[static_cast<int64_t>(i) * width + j] = yv;
    }
  }
  return g;
}

Tensor CoordGrid::channels() const {
  const int h = x_ch.dim(0), w = x_ch.dim(1);
  Tensor out({2, h, w});
  std::copy(x_ch.data.begin(), x_ch.data.end(), out.data.begin());
  std::copy(y_ch.data.begin(), y_ch.data.end(), out.data.begin() + x_ch.data.size());
  return out;
}

int coord_conv(Tape& tape, int features, int weight, int bias, int stride, int pad, bool enabled) {
  const Tensor& f = tape.value(features);
  if (f.rank() != 3) throw ShapeError("coord_conv wants CxHxW features");
  Tensor coords;
  if (enabled) {
    coords = make_coord_grid(f.dim(1), f.dim(2)).channels();
  } else {
    coords = Tensor({2, f.dim(1), f.dim(2)});
  }
  const int with_coords = tape.concat_ch(features, tape.constant(std::move(coords)));
  return tape.conv2d(with_coords, weight, bias, stride, pad);
}

namespace {

void add_conv(ParamStore& p, Rng& rng, const std::string& name, int out_ch, int in_ch, int k,
              double bias_init = 0.0) {
  p.add(name + ".w", he_init_conv(out_ch, in_ch, k, k, rng));
  p.add(name + ".b", Tensor({out_ch}, bias_init));
}

void add_fc(ParamStore& p, Rng& rng, const std::string& name, int out_dim, int in_dim,
            double bias_init = 0.0) {
  p.add(name + ".w", he_init_linear(out_dim, in_dim, rng));
  p.add(name + ".b", Tensor({out_dim}, bias_init));
}

}  // namespace

ParamStore init_detector_params(const DetectorConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(Rng::mix(seed, 0x9a7a));
  ParamStore p;
  const int levels = cfg.num_levels();
  const auto& w = cfg.backbone_widths;

  add_conv(p, rng, "backbone.stem", w[0], cfg.image_channels, 3);
  for (int i = 0; i < levels; ++i) {
    const int in_ch = i == 0 ? w[0] : w[i - 1];
    add_conv(p, rng, "backbone.block" + std::to_string(i) + ".a", w[i], in_ch, 3);
    add_conv(p, rng, "backbone.block" + std::to_string(i) + ".b", w[i], w[i], 3);
  }
  for (int i = 0; i < levels; ++i) {
    const int lat_in = w[i] + (cfg.coord_fpn_lateral ? 2 : 0);
    add_conv(p, rng, "fpn.lateral" + std::to_string(i), cfg.fpn_channels, lat_in, 1);
    add_conv(p, rng, "fpn.out" + std::to_string(i), cfg.fpn_channels, cfg.fpn_channels, 3);
  }
  const int rpn_in = cfg.fpn_channels + (cfg.coord_rpn ? 2 : 0);
  add_conv(p, rng, "rpn.head", cfg.fpn_channels, rpn_in, 3);
  // a pessimistic objectness prior keeps early proposals quiet
  add_conv(p, rng, "rpn.obj", cfg.anchors_per_cell(), cfg.fpn_channels, 1, -2.0);
  add_conv(p, rng, "rpn.reg", 4 * cfg.anchors_per_cell(), cfg.fpn_channels, 1);

  const int pooled = cfg.fpn_channels * cfg.roi_pool * cfg.roi_pool;
  add_fc(p, rng, "roi.fc", cfg.roi_fc_dim, pooled);
  add_fc(p, rng, "roi.cls", cfg.num_classes + 1, cfg.roi_fc_dim);
  p.at("roi.cls.b")[cfg.num_classes] = 2.0;  // favor background at start
  add_fc(p, rng, "roi.reg", 4, cfg.roi_fc_dim);

  add_conv(p, rng, "dis.img0.c0", cfg.dis_hidden, cfg.fpn_channels, 1);
  add_conv(p, rng, "dis.img0.c1", 1, cfg.dis_hidden, 1);
  add_conv(p, rng, "dis.img1.c0", cfg.dis_hidden, cfg.fpn_channels, 1);
  add_conv(p, rng, "dis.img1.c1", 1, cfg.dis_hidden, 1);
  add_fc(p, rng, "dis.ins.f0", cfg.dis_hidden, cfg.roi_fc_dim);
  add_fc(p, rng, "dis.ins.f1", 1, cfg.dis_hidden);
  return p;
}

ForwardNodes detector_forward_nodes(Tape& tape, const BoundParams& params,
                                    const DetectorConfig& cfg, int image_node) {
  const Tensor& img = tape.value(image_node);
  if (img.rank() != 3 || img.dim(0) != cfg.image_channels) {
    throw ShapeError("detector input must be {" + std::to_string(cfg.image_channels) + ",H,W}");
  }
  const int top_stride = cfg.strides.back();
  if (img.dim(1) % top_stride != 0 || img.dim(2) % top_stride != 0) {
    throw ShapeError("image size must be divisible by the top stride " +
                     std::to_string(top_stride));
  }

  ForwardNodes out;
  const int levels = cfg.num_levels();

  // Backbone: plain strided convolutions, no coordinate channels here.
  int h = tape.relu(tape.conv2d(image_node, params["backbone.stem.w"], params["backbone.stem.b"], 2, 1));
  for (int i = 0; i < levels; ++i) {
    const std::string blk = "backbone.block" + std::to_string(i);
    h = tape.relu(tape.conv2d(h, params[blk + ".a.w"], params[blk + ".a.b"], 2, 1));
    h = tape.relu(tape.conv2d(h, params[blk + ".b.w"], params[blk + ".b.b"], 1, 1));
    out.backbone.push_back(h);
  }

  // FPN with coordinate-aware lateral convolutions.
  std::vector<int> laterals(levels);
  for (int i = 0; i < levels; ++i) {
    const std::string lat = "fpn.lateral" + std::to_string(i);
    if (cfg.coord_fpn_lateral) {
      laterals[i] = coord_conv(tape, out.backbone[i], params[lat + ".w"], params[lat + ".b"], 1, 0,
                               cfg.coord_enabled);
    } else {
      laterals[i] = tape.conv2d(out.backbone[i], params[lat + ".w"], params[lat + ".b"], 1, 0);
    }
  }
  std::vector<int> merged(levels);
  merged[levels - 1] = laterals[levels - 1];
  for (int i = levels - 2; i >= 0; --i) {
    merged[i] = tape.add(laterals[i], tape.upsample2x(merged[i + 1]));
  }
  out.fpn.resize(levels);
  for (int i = 0; i < levels; ++i) {
    const std::string oc = "fpn.out" + std::to_string(i);
    out.fpn[i] = tape.conv2d(merged[i], params[oc + ".w"], params[oc + ".b"], 1, 1);
  }

  // RPN head shared across levels, coordinate-aware.
  for (int i = 0; i < levels; ++i) {
    int head;
    if (cfg.coord_rpn) {
      head = coord_conv(tape, out.fpn[i], params["rpn.head.w"], params["rpn.head.b"], 1, 1,
                        cfg.coord_enabled);
    } else {
      head = tape.conv2d(out.fpn[i], params["rpn.head.w"], params["rpn.head.b"], 1, 1);
    }
    head = tape.relu(head);
    out.rpn_obj.push_back(tape.conv2d(head, params["rpn.obj.w"], params["rpn.obj.b"], 1, 0));
    out.rpn_reg.push_back(tape.conv2d(head, params["rpn.reg.w"], params["rpn.reg.b"], 1, 0));
  }
  return out;
}

std::vector<BBox> make_anchors(const DetectorConfig& cfg, int level, int fh, int fw) {
  const double s = cfg.strides[static_cast<size_t>(level)];
  std::vector<BBox> anchors;
  anchors.reserve(static_cast<size_t>(cfg.anchors_per_cell()) * fh * fw);
  for (double scale : cfg.anchor_scales) {
    for (double ratio : cfg.anchor_ratios) {
      const double base = s * scale;
      const double w = base / std::sqrt(ratio);
      const double h = base * std::sqrt(ratio);
      for (int i = 0; i < fh; ++i) {
        for (int j = 0; j < fw; ++j) {
          anchors.push_back(BBox{0, (j + 0.5) * s, (i + 0.5) * s, w, h});
        }
      }
    }
  }
  return anchors;
}

std::array<double, 4> encode_box(const BBox& anchor, const BBox& target) {
  return {(target.cx - anchor.cx) / anchor.w, (target.cy - anchor.cy) / anchor.h,
          std::log(target.w / anchor.w), std::log(target.h / anchor.h)};
}

BBox decode_box(const BBox& anchor, double dx, double dy, double dw, double dh) {
  BBox b;
  b.class_id = anchor.class_id;
  b.cx = anchor.cx + dx * anchor.w;
  b.cy = anchor.cy + dy * anchor.h;
  b.w = anchor.w * std::exp(std::clamp(dw, -6.0, 6.0));
  b.h = anchor.h * std::exp(std::clamp(dh, -6.0, 6.0));
  return b;
}

std::vector<size_t> nms(const std::vector<BBox>& boxes, const std::vector<double>& scores,
                        double iou_threshold) {
  std::vector<size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return scores[a] > scores[b]; });
  std::vector<size_t> keep;
  std::vector<bool> removed(boxes.size(), false);
  for (size_t oi = 0; oi < order.size(); ++oi) {
    const size_t i = order[oi];
    if (removed[i]) continue;
    keep.push_back(i);
    for (size_t oj = oi + 1; oj < order.size(); ++oj) {
      const size_t j = order[oj];
      if (!removed[j] && iou(boxes[i], boxes[j]) > iou_threshold) removed[j] = true;
    }
  }
  return keep;
}

std::vector<Proposal> generate_proposals(const Tape& tape, const ForwardNodes& fwd,
                                         const DetectorConfig& cfg, int img_w, int img_h) {
  std::vector<Proposal> cands;
  for (int level = 0; level < cfg.num_levels(); ++level) {
    const Tensor& obj = tape.value(fwd.rpn_obj[static_cast<size_t>(level)]);
    const Tensor& reg = tape.value(fwd.rpn_reg[static_cast<size_t>(level)]);
    const int a_count = cfg.anchors_per_cell();
    const int fh = obj.dim(1), fw = obj.dim(2);
    const std::vector<BBox> anchors = make_anchors(cfg, level, fh, fw);
    for (int a = 0; a < a_count; ++a) {
      for (int i = 0; i < fh; ++i) {
        for (int j = 0; j < fw; ++j) {
          const size_t flat = (static_cast<size_t>(a) * fh + i) * fw + j;
          const double score = obj.at3(a, i, j);
          const BBox dec = decode_box(anchors[flat], reg.at3(a * 4 + 0, i, j), reg.at3(a * 4 + 1, i, j),
                                      reg.at3(a * 4 + 2, i, j), reg.at3(a * 4 + 3, i, j));
          const BBox clipped = clamp_to_image(dec, img_w, img_h);
          if (clipped.w < 1.0 || clipped.h < 1.0) continue;
          cands.push_back(Proposal{clipped, score});
        }
      }
    }
  }
  std::vector<size_t> order(cands.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return cands[a].score > cands[b].score; });
  if (order.size() > static_cast<size_t>(cfg.rpn_pre_nms_topk)) {
    order.resize(static_cast<size_t>(cfg.rpn_pre_nms_topk));
  }
  std::vector<BBox> boxes;
  std::vector<double> scores;
  for (size_t i : order) {
    boxes.push_back(cands[i].box);
    scores.push_back(cands[i].score);
  }
  const std::vector<size_t> keep = nms(boxes, scores, cfg.rpn_nms_iou);
  std::vector<Proposal> out;
  for (size_t k : keep) {
    out.push_back(Proposal{boxes[k], scores[k]});
    if (out.size() >= static_cast<size_t>(cfg.rpn_post_nms_topk)) break;
  }
  if (out.empty()) {
    out.push_back(Proposal{BBox::from_corners(0, 0, 0, img_w, img_h), 0.0});
  }
  return out;
}

int assign_roi_level(const DetectorConfig& cfg, const BBox& box) {
  const double want = std::sqrt(std::max(box.area(), 1.0)) / cfg.roi_pool;
  int best = 0;
  double best_diff = std::abs(cfg.strides[0] - want);
  for (int i = 1; i < cfg.num_levels(); ++i) {
    const double d = std::abs(cfg.strides[static_cast<size_t>(i)] - want);
    if (d < best_diff) {
      best_diff = d;
      best = i;
    }
  }
  return best;
}

RoiNodes roi_forward(Tape& tape, const BoundParams& params, const DetectorConfig& cfg,
                     const ForwardNodes& fwd, const std::vector<BBox>& rois) {
  RoiNodes out;
  for (const BBox& roi : rois) {
    const int level = assign_roi_level(cfg, roi);
    const double s = cfg.strides[static_cast<size_t>(level)];
    const int pooled = tape.roi_align(fwd.fpn[static_cast<size_t>(level)], roi.x1() / s,
                                      roi.y1() / s, roi.x2() / s, roi.y2() / s, cfg.roi_pool);
    const int fc = tape.relu(tape.linear(pooled, params["roi.fc.w"], params["roi.fc.b"]));
    out.fc.push_back(fc);
    out.cls_logits.push_back(tape.linear(fc, params["roi.cls.w"], params["roi.cls.b"]));
    out.reg.push_back(tape.linear(fc, params["roi.reg.w"], params["roi.reg.b"]));
  }
  return out;
}

DomainLogits discriminate_domain(Tape& tape, const BoundParams& params, const DetectorConfig& cfg,
                                 const ForwardNodes& fwd, const std::vector<int>& roi_fc,
                                 double reversal_coefficient) {
  DomainLogits out;
  auto image_head = [&](int feat, const std::string& name) {
    const int rev = tape.grad_reverse(feat, reversal_coefficient);
    const int h = tape.relu(tape.conv2d(rev, params[name + ".c0.w"], params[name + ".c0.b"], 1, 0));
    const int logit_map = tape.conv2d(h, params[name + ".c1.w"], params[name + ".c1.b"], 1, 0);
    return tape.mean_all(logit_map);
  };
  out.img_low = image_head(fwd.fpn.front(), "dis.img0");
  out.img_high = image_head(fwd.fpn.back(), "dis.img1");
  if (!roi_fc.empty()) {
    std::vector<int> logits;
    logits.reserve(roi_fc.size());
    for (int fc : roi_fc) {
      const int rev = tape.grad_reverse(fc, reversal_coefficient);
      const int h = tape.relu(tape.linear(rev, params["dis.ins.f0.w"], params["dis.ins.f0.b"]));
      logits.push_back(tape.linear(h, params["dis.ins.f1.w"], params["dis.ins.f1.b"]));
    }
    out.ins = tape.stack_scalars(logits);
  }
  return out;
}

namespace {

std::vector<double> softmax(const Tensor& logits) {
  double zmax = logits[0];
  for (int64_t i = 1; i < logits.numel(); ++i) zmax = std::max(zmax, logits[i]);
  double sum = 0.0;
  std::vector<double> p(static_cast<size_t>(logits.numel()));
  for (int64_t i = 0; i < logits.numel(); ++i) {
    p[static_cast<size_t>(i)] = std::exp(logits[i] - zmax);
    sum += p[static_cast<size_t>(i)];
  }
  for (double& v : p) v /= sum;
  return p;
}

}  // namespace

DetectorOutput run_detector(const ParamStore& params, const DetectorConfig& cfg,
                            const Tensor& image) {
  Tape tape(false);
  const BoundParams bound = bind_params(tape, params, nullptr);
  const int image_node = tape.constant(image);
  const ForwardNodes fwd = detector_forward_nodes(tape, bound, cfg, image_node);
  const int img_h = image.dim(1), img_w = image.dim(2);

  DetectorOutput out;
  out.proposals = generate_proposals(tape, fwd, cfg, img_w, img_h);
  for (int node : fwd.fpn) out.fpn_features.push_back(tape.value(node));

  std::vector<BBox> roi_boxes;
  roi_boxes.reserve(out.proposals.size());
  for (const Proposal& p : out.proposals) roi_boxes.push_back(p.box);
  const RoiNodes rois = roi_forward(tape, bound, cfg, fwd, roi_boxes);

  struct Cand {
    BBox box;
    double score;
  };
  std::vector<Cand> cands;
  for (size_t r = 0; r < roi_boxes.size(); ++r) {
    const std::vector<double> probs = softmax(tape.value(rois.cls_logits[r]));
    const Tensor& reg = tape.value(rois.reg[r]);
    const BBox refined =
        clamp_to_image(decode_box(roi_boxes[r], reg[0], reg[1], reg[2], reg[3]), img_w, img_h);
    if (refined.w < 1.0 || refined.h < 1.0) continue;
    for (int c = 0; c < cfg.num_classes; ++c) {
      const double score = probs[static_cast<size_t>(c)];
      if (score < cfg.det_score_min) continue;
      BBox b = refined;
      b.class_id = c;
      cands.push_back(Cand{b, score});
    }
  }
  for (int c = 0; c < cfg.num_classes; ++c) {
    std::vector<BBox> boxes;
    std::vector<double> scores;
    for (const Cand& cd : cands) {
      if (cd.box.class_id == c) {
        boxes.push_back(cd.box);
        scores.push_back(cd.score);
      }
    }
    for (size_t k : nms(boxes, scores, cfg.det_nms_iou)) {
      out.detections.push_back(Detection{"", boxes[k], scores[k]});
    }
  }
  std::stable_sort(out.detections.begin(), out.detections.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
  if (out.detections.size() > static_cast<size_t>(cfg.det_topk)) {
    out.detections.resize(static_cast<size_t>(cfg.det_topk));
  }
  return out;
}

std::vector<DetectorOutput> run_detector_batch(const ParamStore& params,
                                               const DetectorConfig& cfg, const Tensor& images) {
  if (images.rank() != 4) throw ShapeError("run_detector_batch wants {N,C,H,W}");
  const int n = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
  std::vector<DetectorOutput> outputs;
  outputs.reserve(static_cast<size_t>(n));
  const int64_t chw = static_cast<int64_t>(c) * h * w;
  for (int i = 0; i < n; ++i) {
    Tensor img({c, h, w});
    std::copy(images.data.begin() + i * chw, images.data.begin() + (i + 1) * chw, img.data.begin());
    outputs.push_back(run_detector(params, cfg, img));
  }
  return outputs;
}

}  // namespace ssda
