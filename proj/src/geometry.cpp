#include "ssda/geometry.hpp"

#include <limits>
#include <map>

namespace ssda {

std::vector<BBox> merge_boxes(const std::vector<BBox>& boxes) {
  std::map<int, std::vector<const BBox*>> per_class;
  for (const BBox& b : boxes) per_class[b.class_id].push_back(&b);

  std::vector<BBox> merged;
  merged.reserve(per_class.size());
  for (const auto& [cls, group] : per_class) {
    // A lone box passes through untouched so merging is exactly idempotent.
    if (group.size() == 1) {
      merged.push_back(*group.front());
      continue;
    }
    double x1 = std::numeric_limits<double>::infinity();
    double y1 = std::numeric_limits<double>::infinity();
    double x2 = -std::numeric_limits<double>::infinity();
    double y2 = -std::numeric_limits<double>::infinity();
    for (const BBox* b : group) {
      x1 = std::min(x1, b->x1());
      y1 = std::min(y1, b->y1());
      x2 = std::max(x2, b->x2());
      y2 = std::max(y2, b->y2());
    }
    merged.push_back(BBox::from_corners(cls, x1, y1, x2, y2));
  }
  return merged;
}

}  // namespace ssda
