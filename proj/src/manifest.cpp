#include "ssda/manifest.hpp"

#include <fstream>
#include <set>
#include <unordered_set>

#include <json.hpp>

#include "ssda/error.hpp"
#include "ssda/rng.hpp"

namespace ssda {

using nlohmann::json;

namespace {

json box_to_json(const BBox& b) {
  return json{{"class_id", b.class_id}, {"cx", b.cx}, {"cy", b.cy}, {"w", b.w}, {"h", b.h}};
}

BBox box_from_json(const json& j) {
  BBox b;
  b.class_id = j.at("class_id").get<int>();
  b.cx = j.at("cx").get<double>();
  b.cy = j.at("cy").get<double>();
  b.w = j.at("w").get<double>();
  b.h = j.at("h").get<double>();
  return b;
}

json record_to_json(const ImageRecord& r) {
  json j;
  j["image_id"] = r.image_id;
  j["scene"] = json{{"date", r.scene.date.iso()},
                    {"fire_name", r.scene.fire_name},
                    {"camera_name", r.scene.camera_name},
                    {"raw", r.scene.raw}};
  j["width"] = r.width;
  j["height"] = r.height;
  j["boxes"] = json::array();
  for (const BBox& b : r.boxes) j["boxes"].push_back(box_to_json(b));
  j["domain"] = r.domain == Domain::source ? "source" : "target";
  j["label_status"] = r.label_status == LabelStatus::labeled ? "labeled" : "unlabeled";
  if (!r.eval_boxes.empty()) {
    j["eval_boxes"] = json::array();
    for (const BBox& b : r.eval_boxes) j["eval_boxes"].push_back(box_to_json(b));
  }
  return j;
}

Date date_from_iso(const std::string& iso) {
  if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-') {
    throw DataError("bad date '" + iso + "' (want YYYY-MM-DD)");
  }
  return Date::parse_compact(iso.substr(0, 4) + iso.substr(5, 2) + iso.substr(8, 2));
}

ImageRecord record_from_json(const json& j) {
  ImageRecord r;
  r.image_id = j.at("image_id").get<std::string>();
  const json& s = j.at("scene");
  r.scene.date = date_from_iso(s.at("date").get<std::string>());
  r.scene.fire_name = s.at("fire_name").get<std::string>();
  r.scene.camera_name = s.at("camera_name").get<std::string>();
  r.scene.raw = s.at("raw").get<std::string>();
  r.width = j.at("width").get<int>();
  r.height = j.at("height").get<int>();
  for (const json& bj : j.at("boxes")) r.boxes.push_back(box_from_json(bj));
  const std::string dom = j.at("domain").get<std::string>();
  if (dom == "source") {
    r.domain = Domain::source;
  } else if (dom == "target") {
    r.domain = Domain::target;
  } else {
    throw DataError("unknown domain '" + dom + "'");
  }
  const std::string ls = j.at("label_status").get<std::string>();
  if (ls == "labeled") {
    r.label_status = LabelStatus::labeled;
  } else if (ls == "unlabeled") {
    r.label_status = LabelStatus::unlabeled;
  } else {
    throw DataError("unknown label_status '" + ls + "'");
  }
  if (j.contains("eval_boxes")) {
    for (const json& bj : j.at("eval_boxes")) r.eval_boxes.push_back(box_from_json(bj));
  }
  return r;
}

}  // namespace

ManifestCounts Manifest::counts() const {
  ManifestCounts c;
  for (const ImageRecord& r : records) {
    if (r.label_status == LabelStatus::labeled) {
      ++c.labeled;
    } else {
      ++c.unlabeled;
    }
    if (r.is_foreground()) {
      ++c.foreground;
    } else {
      ++c.background;
    }
  }
  return c;
}

void Manifest::validate() const {
  std::unordered_set<std::string> ids;
  for (size_t i = 0; i < records.size(); ++i) {
    const ImageRecord& r = records[i];
    const std::string where = "record " + std::to_string(i) + " ('" + r.image_id + "')";
    if (r.image_id.empty()) throw DataError(where + ": empty image_id");
    if (!ids.insert(r.image_id).second) throw DataError(where + ": duplicate image_id");
    if (r.width <= 0 || r.height <= 0) throw DataError(where + ": non-positive image size");
    if (r.label_status == LabelStatus::unlabeled && !r.boxes.empty()) {
      throw DataError(where + ": unlabeled record carries boxes");
    }
    for (const BBox& b : r.boxes) {
      if (!b.valid()) throw DataError(where + ": invalid box (w,h must be > 0, class_id >= 0)");
      if (b.x1() < 0 || b.y1() < 0 || b.x2() > r.width || b.y2() > r.height) {
        throw DataError(where + ": box outside image bounds");
      }
    }
  }
}

std::pair<Manifest, Manifest> split_train_val(const std::vector<ImageRecord>& records,
                                              double val_fraction, uint64_t seed) {
  if (records.empty()) throw EmptyManifestError("split_train_val needs records");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ConfigError("val_fraction must be in (0,1), got " + std::to_string(val_fraction));
  }
  const size_t n_val = round_count(val_fraction * static_cast<double>(records.size()));
  Rng rng(seed);
  std::vector<size_t> perm = rng.permutation(records.size());
  std::vector<bool> in_val(records.size(), false);
  for (size_t i = 0; i < n_val; ++i) in_val[perm[i]] = true;

  Manifest train, val;
  train.split_name = "train";
  val.split_name = "val";
  train.seed = val.seed = seed;
  for (size_t i = 0; i < records.size(); ++i) {
    (in_val[i] ? val : train).records.push_back(records[i]);
  }
  return {train, val};
}

std::pair<Manifest, Manifest> sample_protocol(const Manifest& train, double fraction,
                                              uint64_t seed) {
  if (train.empty()) throw EmptyManifestError("sample_protocol needs records");
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ConfigError("protocol fraction must be in (0,1), got " + std::to_string(fraction));
  }
  const size_t n_labeled = round_count(fraction * static_cast<double>(train.size()));
  Rng rng(seed);
  std::vector<size_t> perm = rng.permutation(train.size());
  std::vector<bool> labeled(train.size(), false);
  for (size_t i = 0; i < n_labeled; ++i) labeled[perm[i]] = true;

  Manifest lab, unlab;
  lab.split_name = "labeled";
  unlab.split_name = "unlabeled";
  lab.seed = unlab.seed = seed;
  lab.protocol = unlab.protocol = fraction;
  for (size_t i = 0; i < train.size(); ++i) {
    if (labeled[i]) {
      lab.records.push_back(train.records[i]);
    } else {
      ImageRecord r = train.records[i];
      if (r.eval_boxes.empty()) r.eval_boxes = r.boxes;
      r.boxes.clear();
      r.label_status = LabelStatus::unlabeled;
      unlab.records.push_back(std::move(r));
    }
  }
  return {lab, unlab};
}

Manifest merge_manifest_labels(const Manifest& input) {
  Manifest out = input;
  for (ImageRecord& r : out.records) {
    r.boxes = merge_boxes(r.boxes);
    r.eval_boxes = merge_boxes(r.eval_boxes);
  }
  return out;
}

void save_manifest(const Manifest& m, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open '" + path + "' for writing");
  json header;
  header["split_name"] = m.split_name;
  header["seed"] = m.seed;
  if (m.protocol) header["protocol"] = *m.protocol;
  os << header.dump() << "\n";
  for (const ImageRecord& r : m.records) os << record_to_json(r).dump() << "\n";
  if (!os) throw DataError("write failed for '" + path + "'");
}

Manifest load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open '" + path + "'");
  Manifest m;
  std::string line;
  size_t lineno = 0;
  bool saw_header = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!saw_header && j.contains("split_name")) {
      saw_header = true;
      m.split_name = j.at("split_name").get<std::string>();
      m.seed = j.value("seed", uint64_t{0});
      if (j.contains("protocol")) m.protocol = j.at("protocol").get<double>();
      continue;
    }
    try {
      m.records.push_back(record_from_json(j));
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  m.validate();
  return m;
}

void export_coco(const Manifest& m, const std::string& path) {
  m.validate();
  json root;
  root["images"] = json::array();
  root["annotations"] = json::array();
  root["categories"] = json::array();

  std::set<int> class_ids;
  for (const ImageRecord& r : m.records) {
    for (const BBox& b : r.boxes) class_ids.insert(b.class_id);
  }
  if (class_ids.empty()) class_ids.insert(0);
  for (int c : class_ids) {
    root["categories"].push_back(
        json{{"id", c + 1}, {"name", c == 0 ? std::string("smoke") : "class_" + std::to_string(c)}});
  }

  int64_t ann_id = 1;
  for (size_t i = 0; i < m.records.size(); ++i) {
    const ImageRecord& r = m.records[i];
    const int64_t img_id = static_cast<int64_t>(i) + 1;
    root["images"].push_back(json{{"id", img_id},
                                  {"file_name", r.image_id},
                                  {"width", r.width},
                                  {"height", r.height}});
    for (const BBox& b : r.boxes) {
      root["annotations"].push_back(json{{"id", ann_id++},
                                         {"image_id", img_id},
                                         {"category_id", b.class_id + 1},
                                         {"bbox", {b.x1(), b.y1(), b.w, b.h}},
                                         {"area", b.area()},
                                         {"iscrowd", 0}});
    }
  }
  std::ofstream os(path);
  if (!os) throw DataError("cannot open '" + path + "' for writing");
  os << root.dump(2) << "\n";
  if (!os) throw DataError("write failed for '" + path + "'");
}

Manifest import_coco(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open '" + path + "'");
  json root;
  try {
    is >> root;
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  Manifest m;
  m.split_name = "coco_import";
  std::map<int64_t, size_t> by_id;
  for (const json& ij : root.at("images")) {
    ImageRecord r;
    r.image_id = ij.at("file_name").get<std::string>();
    r.width = ij.at("width").get<int>();
    r.height = ij.at("height").get<int>();
    by_id[ij.at("id").get<int64_t>()] = m.records.size();
    m.records.push_back(std::move(r));
  }
  for (const json& aj : root.at("annotations")) {
    const auto it = by_id.find(aj.at("image_id").get<int64_t>());
    if (it == by_id.end()) throw DataError(path + ": annotation references unknown image");
    const auto& bb = aj.at("bbox");
    const double x = bb.at(0).get<double>(), y = bb.at(1).get<double>();
    const double w = bb.at(2).get<double>(), h = bb.at(3).get<double>();
    BBox b = BBox::from_corners(aj.at("category_id").get<int>() - 1, x, y, x + w, y + h);
    m.records[it->second].boxes.push_back(b);
  }
  return m;
}

}  // namespace ssda
