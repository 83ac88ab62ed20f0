#pragma once

#include <map>
#include <string>
#include <vector>

#include "ssda/geometry.hpp"
#include "ssda/manifest.hpp"

namespace ssda {

/// A scored predicted box for one image.
struct Detection {
  std::string image_id;
  BBox box;
  double score = 0.0;
};

struct EvalReport {
  double map_50_95 = 0.0;
  double map_50 = 0.0;
  std::vector<std::pair<double, double>> per_threshold_ap;  // (iou_threshold, AP)
};

using GroundTruthMap = std::map<std::string, std::vector<BBox>>;

/// Single-class average precision at one IoU threshold. Detections are
/// greedily matched in descending score order (stable on ties) to at most one
/// unmatched ground-truth box with IoU >= threshold; AP is the 101-point
/// interpolated integral of the precision-recall curve. Class ids on the
/// boxes are ignored; callers split by class. Throws EvalError when the
/// ground truth is empty.
double average_precision(const std::vector<Detection>& dets, const GroundTruthMap& gts,
                         double iou_threshold);

/// Full report over IoU thresholds 0.50:0.05:0.95. AP at each threshold is
/// averaged over the classes present in the ground truth. Throws EvalError
/// when no ground truth exists at all.
EvalReport evaluate(const std::vector<Detection>& dets, const GroundTruthMap& gts);

/// Ground truth of a manifest keyed by image id. Labeled records contribute
/// `boxes`; unlabeled records contribute their retained `eval_boxes`.
/// Box-free images are kept (false positives on them count).
GroundTruthMap ground_truth_of(const Manifest& m);

/// Detections file I/O: JSON-lines, one Detection per line.
void save_detections(const std::vector<Detection>& dets, const std::string& path);
std::vector<Detection> load_detections(const std::string& path);

}  // namespace ssda
