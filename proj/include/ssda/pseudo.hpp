#pragma once

#include <string>
#include <vector>

#include "ssda/metrics.hpp"

namespace ssda {

/// Filtered teacher outputs for one unlabeled image. A reliable-background
/// image has no detection above the lower threshold at all; it trains the
/// detector on pure background. Detections caught between the thresholds are
/// discarded, and an image with only such detections is unusable.
struct PseudoLabelSet {
  std::string image_id;
  std::vector<Detection> positives;
  bool is_reliable_background = false;
  bool usable = false;

  std::vector<BBox> target_boxes() const {
    std::vector<BBox> out;
    out.reserve(positives.size());
    for (const Detection& d : positives) out.push_back(d.box);
    return out;
  }
};

/// Dual-threshold filter: positives have score > tau_u; the image is
/// reliable background iff no detection scores above tau_l (including the
/// zero-detection case). Throws ConfigError unless tau_l < tau_u.
PseudoLabelSet filter_pseudo_labels(const std::vector<Detection>& dets, double tau_u, double tau_l);

}  // namespace ssda
