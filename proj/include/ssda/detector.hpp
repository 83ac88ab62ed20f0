#pragma once

#include <array>
#include <string>
#include <vector>

#include "ssda/geometry.hpp"
#include "ssda/metrics.hpp"
#include "ssda/nn.hpp"
#include "ssda/rng.hpp"
#include "ssda/tape.hpp"

namespace ssda {

/// Architecture and inference knobs of the two-stage detector. The defaults
/// are the documented full-size configuration; tests and the synthetic
/// benchmark shrink widths and counts.
struct DetectorConfig {
  int image_channels = 3;
  std::vector<int> backbone_widths = {16, 32, 48, 64};  // one block per FPN level
  std::vector<int> strides = {4, 8, 16, 32};            // strides.size() >= 3, halving sizes
  int fpn_channels = 32;
  int num_classes = 1;

  std::vector<double> anchor_scales = {1.0, 2.0, 4.0};  // x stride
  std::vector<double> anchor_ratios = {0.5, 1.0, 2.0};  // h/w
  double rpn_nms_iou = 0.7;
  int rpn_pre_nms_topk = 600;
  int rpn_post_nms_topk = 300;
  int rpn_sample_count = 64;
  double rpn_pos_iou = 0.7;
  double rpn_neg_iou = 0.3;

  int roi_pool = 4;
  int roi_fc_dim = 64;
  int roi_sample_count = 32;
  double roi_fg_iou = 0.5;
  double roi_fg_fraction = 0.5;

  double det_nms_iou = 0.5;
  double det_score_min = 0.05;
  int det_topk = 50;

  // Coordinate-channel injection points. The backbone never gets them.
  bool coord_fpn_lateral = true;
  bool coord_rpn = true;
  /// false: the coordinate channels are fed as zeros (ablation switch that
  /// keeps the parameter count identical).
  bool coord_enabled = true;

  int dis_hidden = 16;

  int anchors_per_cell() const {
    return static_cast<int>(anchor_scales.size() * anchor_ratios.size());
  }
  int num_levels() const { return static_cast<int>(strides.size()); }
  void validate() const;
};

std::string detector_config_to_json(const DetectorConfig& cfg);
DetectorConfig detector_config_from_json(const std::string& text);

/// Normalized coordinate channels in [-1, 1]; degenerate dimensions are 0.
struct CoordGrid {
  Tensor x_ch;  // {H, W}, linear in the column index
  Tensor y_ch;  // {H, W}, linear in the row index

  /// Stacked {2, H, W} tensor (x channel first).
  Tensor channels() const;
};

CoordGrid make_coord_grid(int height, int width);

/// Concat the spatial coordinate grid (or zeros when disabled) onto a
/// feature node, then run the wrapped convolution.
int coord_conv(Tape& tape, int features, int weight, int bias, int stride, int pad, bool enabled);

/// Fresh randomly initialized parameter set for the given architecture.
ParamStore init_detector_params(const DetectorConfig& cfg, uint64_t seed);

/// Node ids of one recorded forward pass.
struct ForwardNodes {
  std::vector<int> backbone;  // per level, before FPN
  std::vector<int> fpn;       // per level, stride order
  std::vector<int> rpn_obj;   // {A, h, w} objectness logits per level
  std::vector<int> rpn_reg;   // {4A, h, w} box deltas per level
};

ForwardNodes detector_forward_nodes(Tape& tape, const BoundParams& params,
                                    const DetectorConfig& cfg, int image_node);

struct Proposal {
  BBox box;
  double score = 0.0;  // objectness logit
};

/// Decode + clip + NMS on the recorded RPN outputs (plain values, no grad).
/// Always returns at least one proposal (whole-image fallback).
std::vector<Proposal> generate_proposals(const Tape& tape, const ForwardNodes& fwd,
                                         const DetectorConfig& cfg, int img_w, int img_h);

/// Anchor boxes of one pyramid level, indexed (a, i, j) flattened like the
/// RPN objectness map.
std::vector<BBox> make_anchors(const DetectorConfig& cfg, int level, int fh, int fw);

/// Box delta encoding between an anchor/roi and a target box.
std::array<double, 4> encode_box(const BBox& anchor, const BBox& target);
BBox decode_box(const BBox& anchor, double dx, double dy, double dw, double dh);

/// Pyramid level a box of the given area is pooled from.
int assign_roi_level(const DetectorConfig& cfg, const BBox& box);

/// ROI head outputs for a list of boxes (in image coordinates).
struct RoiNodes {
  std::vector<int> fc;          // shared hidden feature per roi
  std::vector<int> cls_logits;  // {num_classes + 1} per roi
  std::vector<int> reg;         // {4} per roi
};

RoiNodes roi_forward(Tape& tape, const BoundParams& params, const DetectorConfig& cfg,
                     const ForwardNodes& fwd, const std::vector<BBox>& rois);

/// Domain logits at three levels: image-level on the finest and coarsest
/// pyramid levels, instance-level on pooled roi features. Every path runs
/// behind a gradient-reversal wrapper with the given coefficient.
struct DomainLogits {
  int img_low = -1;   // scalar node
  int img_high = -1;  // scalar node
  int ins = -1;       // {R} node, -1 when no rois were given
};

DomainLogits discriminate_domain(Tape& tape, const BoundParams& params, const DetectorConfig& cfg,
                                 const ForwardNodes& fwd, const std::vector<int>& roi_fc,
                                 double reversal_coefficient);

/// Greedy non-maximum suppression; returns kept indices in score order.
std::vector<size_t> nms(const std::vector<BBox>& boxes, const std::vector<double>& scores,
                        double iou_threshold);

/// Eval-mode single-image run: proposals, scored detections and pyramid
/// feature copies.
struct DetectorOutput {
  std::vector<Proposal> proposals;
  std::vector<Detection> detections;  // image_id left empty
  std::vector<Tensor> fpn_features;
};

DetectorOutput run_detector(const ParamStore& params, const DetectorConfig& cfg,
                            const Tensor& image);

/// Batched wrapper: image {N, C, H, W}, one output per batch element.
std::vector<DetectorOutput> run_detector_batch(const ParamStore& params,
                                               const DetectorConfig& cfg, const Tensor& images);

}  // namespace ssda
