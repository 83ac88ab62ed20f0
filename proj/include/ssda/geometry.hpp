#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

namespace ssda {

/// Ground-truth box in center format: class index, center point, size.
struct BBox {
  int class_id = 0;
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;

  double x1() const { return cx - 0.5 * w; }
  double y1() const { return cy - 0.5 * h; }
  double x2() const { return cx + 0.5 * w; }
  double y2() const { return cy + 0.5 * h; }
  double area() const { return w * h; }

  bool valid() const { return w > 0.0 && h > 0.0 && class_id >= 0; }

  static BBox from_corners(int class_id, double x1, double y1, double x2, double y2) {
    return BBox{class_id, 0.5 * (x1 + x2), 0.5 * (y1 + y2), x2 - x1, y2 - y1};
  }

  bool operator==(const BBox&) const = default;
};

/// Clamp a box to the image rectangle [0,W]x[0,H], preserving center format.
inline BBox clamp_to_image(const BBox& b, double img_w, double img_h) {
  const double x1 = std::clamp(b.x1(), 0.0, img_w);
  const double y1 = std::clamp(b.y1(), 0.0, img_h);
  const double x2 = std::clamp(b.x2(), 0.0, img_w);
  const double y2 = std::clamp(b.y2(), 0.0, img_h);
  return BBox::from_corners(b.class_id, x1, y1, x2, y2);
}

/// Intersection-over-union of two boxes, in [0, 1]. Class ids are ignored.
inline double iou(const BBox& a, const BBox& b) {
  const double ix1 = std::max(a.x1(), b.x1());
  const double iy1 = std::max(a.y1(), b.y1());
  const double ix2 = std::min(a.x2(), b.x2());
  const double iy2 = std::min(a.y2(), b.y2());
  const double iw = std::max(0.0, ix2 - ix1);
  const double ih = std::max(0.0, iy2 - iy1);
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

/// Collapse all boxes of each class into the minimal axis-aligned rectangle
/// covering their union. At most one box per class remains; output is ordered
/// by ascending class id. Idempotent.
std::vector<BBox> merge_boxes(const std::vector<BBox>& boxes);

}  // namespace ssda
