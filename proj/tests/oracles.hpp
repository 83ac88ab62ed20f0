#pragma once

// Test-only reference implementations, kept independent of the library code
// they check. Everything here is brute force: no incremental state, no
// shared helpers with src/.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "ssda/geometry.hpp"
#include "ssda/metrics.hpp"

namespace oracles {

/// Enclosing rectangle by scanning every corner coordinate of every box.
inline ssda::BBox corner_scan_enclosure(const std::vector<ssda::BBox>& boxes) {
  double x1 = std::numeric_limits<double>::infinity();
  double y1 = std::numeric_limits<double>::infinity();
  double x2 = -std::numeric_limits<double>::infinity();
  double y2 = -std::numeric_limits<double>::infinity();
  for (const ssda::BBox& b : boxes) {
    const double corners_x[2] = {b.cx - b.w / 2, b.cx + b.w / 2};
    const double corners_y[2] = {b.cy - b.h / 2, b.cy + b.h / 2};
    for (double x : corners_x) {
      x1 = std::min(x1, x);
      x2 = std::max(x2, x);
    }
    for (double y : corners_y) {
      y1 = std::min(y1, y);
      y2 = std::max(y2, y);
    }
  }
  return ssda::BBox::from_corners(boxes.front().class_id, x1, y1, x2, y2);
}

inline double box_iou(const ssda::BBox& a, const ssda::BBox& b) {
  const double ix = std::max(0.0, std::min(a.cx + a.w / 2, b.cx + b.w / 2) -
                                      std::max(a.cx - a.w / 2, b.cx - b.w / 2));
  const double iy = std::max(0.0, std::min(a.cy + a.h / 2, b.cy + b.h / 2) -
                                      std::max(a.cy - a.h / 2, b.cy - b.h / 2));
  const double inter = ix * iy;
  const double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0 ? inter / uni : 0.0;
}

/// Greedy matching recomputed from scratch for the top-k ranked detections:
/// returns the number of true positives among them.
inline size_t matches_in_prefix(const std::vector<ssda::Detection>& ranked, size_t k,
                                const ssda::GroundTruthMap& gts, double thr) {
  std::map<std::string, std::vector<bool>> used;
  for (const auto& [id, g] : gts) used[id].assign(g.size(), false);
  size_t tp = 0;
  for (size_t i = 0; i < k; ++i) {
    const ssda::Detection& d = ranked[i];
    const auto it = gts.find(d.image_id);
    if (it == gts.end()) continue;
    double best = 0.0;
    int best_j = -1;
    for (size_t j = 0; j < it->second.size(); ++j) {
      if (used[d.image_id][j]) continue;
      const double v = box_iou(d.box, it->second[j]);
      if (v > best) {
        best = v;
        best_j = static_cast<int>(j);
      }
    }
    if (best_j >= 0 && best >= thr) {
      used[d.image_id][static_cast<size_t>(best_j)] = true;
      ++tp;
    }
  }
  return tp;
}

/// Average precision by exhaustive enumeration of every score cutoff, with
/// direct 101-point interpolation (max precision over points at recall >= r).
/// Single class; caller filters by class. Requires at least one GT box.
inline double brute_force_ap(const std::vector<ssda::Detection>& dets,
                             const ssda::GroundTruthMap& gts, double thr) {
  size_t total_gt = 0;
  for (const auto& [id, g] : gts) total_gt += g.size();

  std::vector<size_t> order(dets.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return dets[a].score > dets[b].score; });
  std::vector<ssda::Detection> ranked;
  for (size_t i : order) ranked.push_back(dets[i]);

  std::vector<double> precisions, recalls;
  for (size_t k = 1; k <= ranked.size(); ++k) {
    const size_t tp = matches_in_prefix(ranked, k, gts, thr);
    precisions.push_back(static_cast<double>(tp) / static_cast<double>(k));
    recalls.push_back(static_cast<double>(tp) / static_cast<double>(total_gt));
  }

  double ap = 0.0;
  for (int i = 0; i <= 100; ++i) {
    const double r = static_cast<double>(i) / 100.0;
    double best = 0.0;
    for (size_t k = 0; k < precisions.size(); ++k) {
      if (recalls[k] >= r) best = std::max(best, precisions[k]);
    }
    ap += best;
  }
  return ap / 101.0;
}

/// Full mAP report by brute force over classes and the 10 IoU thresholds.
inline std::vector<double> brute_force_per_threshold_ap(const std::vector<ssda::Detection>& dets,
                                                        const ssda::GroundTruthMap& gts) {
  std::vector<int> classes;
  for (const auto& [id, g] : gts) {
    for (const ssda::BBox& b : g) {
      if (std::find(classes.begin(), classes.end(), b.class_id) == classes.end()) {
        classes.push_back(b.class_id);
      }
    }
  }
  std::sort(classes.begin(), classes.end());
  std::vector<double> out;
  for (int i = 0; i < 10; ++i) {
    const double thr = 0.5 + 0.05 * i;
    double sum = 0.0;
    for (int cls : classes) {
      ssda::GroundTruthMap gts_c;
      for (const auto& [id, g] : gts) {
        auto& dst = gts_c[id];
        for (const ssda::BBox& b : g) {
          if (b.class_id == cls) dst.push_back(b);
        }
      }
      std::vector<ssda::Detection> dets_c;
      for (const ssda::Detection& d : dets) {
        if (d.box.class_id == cls) dets_c.push_back(d);
      }
      sum += brute_force_ap(dets_c, gts_c, thr);
    }
    out.push_back(sum / static_cast<double>(classes.size()));
  }
  return out;
}

}  // namespace oracles
