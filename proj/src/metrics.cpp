#include "ssda/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>

#include <json.hpp>

#include "ssda/error.hpp"

namespace ssda {

using nlohmann::json;

double average_precision(const std::vector<Detection>& dets, const GroundTruthMap& gts,
                         double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
    throw ConfigError("iou_threshold must be in (0,1]");
  }
  size_t total_gt = 0;
  for (const auto& [id, boxes] : gts) total_gt += boxes.size();
  if (total_gt == 0) throw EvalError("no ground truth to evaluate against");

  // Descending score, stable on ties so input order breaks them.
  std::vector<size_t> order(dets.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return dets[a].score > dets[b].score; });

  std::map<std::string, std::vector<bool>> matched;
  for (const auto& [id, boxes] : gts) matched[id].assign(boxes.size(), false);

  std::vector<char> is_tp(dets.size(), 0);
  for (size_t k : order) {
    const Detection& d = dets[k];
    const auto git = gts.find(d.image_id);
    if (git == gts.end()) continue;  // image unknown to the ground truth: FP
    const std::vector<BBox>& g = git->second;
    std::vector<bool>& used = matched[d.image_id];
    double best_iou = 0.0;
    int best_j = -1;
    for (size_t j = 0; j < g.size(); ++j) {
      if (used[j]) continue;
      const double v = iou(d.box, g[j]);
      if (v > best_iou) {
        best_iou = v;
        best_j = static_cast<int>(j);
      }
    }
    if (best_j >= 0 && best_iou >= iou_threshold) {
      used[static_cast<size_t>(best_j)] = true;
      is_tp[k] = 1;
    }
  }

  // Precision-recall points in ranked order.
  std::vector<double> precision(dets.size()), recall(dets.size());
  size_t tp = 0, fp = 0;
  for (size_t i = 0; i < order.size(); ++i) {
    if (is_tp[order[i]]) {
      ++tp;
    } else {
      ++fp;
    }
    precision[i] = static_cast<double>(tp) / static_cast<double>(tp + fp);
    recall[i] = static_cast<double>(tp) / static_cast<double>(total_gt);
  }

  // Precision envelope, then 101-point interpolation.
  for (size_t i = precision.size(); i > 1; --i) {
    precision[i - 2] = std::max(precision[i - 2], precision[i - 1]);
  }
  double ap_sum = 0.0;
  for (int i = 0; i <= 100; ++i) {
    const double r = static_cast<double>(i) / 100.0;
    const auto it = std::lower_bound(recall.begin(), recall.end(), r);
    if (it != recall.end()) ap_sum += precision[static_cast<size_t>(it - recall.begin())];
  }
  return ap_sum / 101.0;
}

EvalReport evaluate(const std::vector<Detection>& dets, const GroundTruthMap& gts) {
  std::set<int> classes;
  for (const auto& [id, boxes] : gts) {
    for (const BBox& b : boxes) classes.insert(b.class_id);
  }
  if (classes.empty()) throw EvalError("no ground truth to evaluate against");

  EvalReport report;
  double sum = 0.0;
  for (int i = 0; i < 10; ++i) {
    const double thr = 0.5 + 0.05 * static_cast<double>(i);
    double ap_classes = 0.0;
    for (int cls : classes) {
      GroundTruthMap gts_c;
      for (const auto& [id, boxes] : gts) {
        std::vector<BBox>& dst = gts_c[id];
        for (const BBox& b : boxes) {
          if (b.class_id == cls) dst.push_back(b);
        }
      }
      std::vector<Detection> dets_c;
      for (const Detection& d : dets) {
        if (d.box.class_id == cls) dets_c.push_back(d);
      }
      ap_classes += average_precision(dets_c, gts_c, thr);
    }
    const double ap = ap_classes / static_cast<double>(classes.size());
    report.per_threshold_ap.emplace_back(thr, ap);
    sum += ap;
  }
  report.map_50 = report.per_threshold_ap.front().second;
  report.map_50_95 = sum / 10.0;
  return report;
}

GroundTruthMap ground_truth_of(const Manifest& m) {
  GroundTruthMap gt;
  for (const ImageRecord& r : m.records) {
    gt[r.image_id] = r.label_status == LabelStatus::labeled ? r.boxes : r.eval_boxes;
  }
  return gt;
}

void save_detections(const std::vector<Detection>& dets, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open '" + path + "' for writing");
  for (const Detection& d : dets) {
    json j{{"image_id", d.image_id},
           {"score", d.score},
           {"box",
            {{"class_id", d.box.class_id},
             {"cx", d.box.cx},
             {"cy", d.box.cy},
             {"w", d.box.w},
             {"h", d.box.h}}}};
    os << j.dump() << "\n";
  }
  if (!os) throw DataError("write failed for '" + path + "'");
}

std::vector<Detection> load_detections(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open '" + path + "'");
  std::vector<Detection> dets;
  std::string line;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      Detection d;
      d.image_id = j.at("image_id").get<std::string>();
      d.score = j.at("score").get<double>();
      const json& bj = j.at("box");
      d.box.class_id = bj.at("class_id").get<int>();
      d.box.cx = bj.at("cx").get<double>();
      d.box.cy = bj.at("cy").get<double>();
      d.box.w = bj.at("w").get<double>();
      d.box.h = bj.at("h").get<double>();
      if (d.score < 0.0 || d.score > 1.0) throw DataError("score outside [0,1]");
      dets.push_back(std::move(d));
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return dets;
}

}  // namespace ssda
