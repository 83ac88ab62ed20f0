#include "ssda/scene.hpp"

#include <array>
#include <cctype>
#include <cstdio>

#include "ssda/error.hpp"

namespace ssda {

namespace {

const std::array<std::string, 4> kCameraSuffixes = {"mobo-c", "mobo-m", "mobo", "iqeye"};

bool all_digits(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

bool is_leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

int days_in_month(int y, int m) {
  static const int days[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (m == 2 && is_leap(y)) return 29;
  return days[m - 1];
}

std::vector<std::string> split(const std::string& s, char delim) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    const size_t pos = s.find(delim, start);
    if (pos == std::string::npos) {
      out.push_back(s.substr(start));
      break;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

bool token_alnum(const std::string& t) {
  if (t.empty()) return false;
  for (char c : t) {
    if (!std::isalnum(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

bool ends_with_camera_suffix(const std::string& camera) {
  for (const std::string& suf : kCameraSuffixes) {
    if (camera.size() == suf.size() && camera == suf) return true;
    if (camera.size() > suf.size() && camera.compare(camera.size() - suf.size(), suf.size(), suf) == 0 &&
        camera[camera.size() - suf.size() - 1] == '-') {
      return true;
    }
  }
  return false;
}

/// A camera name is '-'-joined alphanumeric tokens ending in a known suffix,
/// or a single station-code token.
bool camera_pattern_ok(const std::string& camera) {
  const std::vector<std::string> toks = split(camera, '-');
  for (const std::string& t : toks) {
    if (!token_alnum(t)) return false;
  }
  if (toks.size() == 1) return true;
  return ends_with_camera_suffix(camera);
}

}  // namespace

std::string Date::iso() const {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", year, month, day);
  return buf;
}

std::string Date::compact() const {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d%02d%02d", year, month, day);
  return buf;
}

Date Date::parse_compact(const std::string& yyyymmdd) {
  if (yyyymmdd.size() != 8 || !all_digits(yyyymmdd)) {
    throw ParseError("malformed date '" + yyyymmdd + "' (want 8 digits YYYYMMDD)");
  }
  Date d;
  d.year = std::stoi(yyyymmdd.substr(0, 4));
  d.month = std::stoi(yyyymmdd.substr(4, 2));
  d.day = std::stoi(yyyymmdd.substr(6, 2));
  if (d.month < 1 || d.month > 12 || d.day < 1 || d.day > days_in_month(d.year, d.month)) {
    throw ParseError("invalid calendar date '" + yyyymmdd + "'");
  }
  return d;
}

std::string SceneMeta::rejoin() const {
  std::string out = date.compact();
  if (raw.size() > 8) out += raw[8];
  if (!fire_name.empty()) {
    out += fire_name;
    const size_t delim_pos = 9 + fire_name.size();
    if (delim_pos < raw.size()) out += raw[delim_pos];
  }
  out += camera_name;
  return out;
}

SceneMeta parse_scene_name(const std::string& name) {
  if (name.empty()) throw ParseError("empty scene name");
  if (name.size() < 9) throw ParseError("scene name too short: '" + name + "'");

  SceneMeta meta;
  meta.raw = name;
  meta.date = Date::parse_compact(name.substr(0, 8));
  if (name[8] != '_' && name[8] != '-') {
    throw ParseError("expected '_' or '-' after date in '" + name + "'");
  }
  const std::string rest = name.substr(9);
  if (rest.empty()) throw ParseError("missing fire/camera part in '" + name + "'");

  const size_t last_us = rest.rfind('_');
  if (last_us != std::string::npos) {
    // '_'-delimited: camera is the final field, fire name is the middle.
    meta.fire_name = rest.substr(0, last_us);
    meta.camera_name = rest.substr(last_us + 1);
    if (meta.camera_name.empty() || !camera_pattern_ok(meta.camera_name)) {
      throw ParseError("no camera suffix found in '" + name + "'");
    }
    return meta;
  }

  // '-'-delimited throughout: locate the camera suffix, then take the two
  // preceding tokens (station and direction) as part of the camera name.
  const std::vector<std::string> toks = split(rest, '-');
  size_t base_tokens = 0;
  const size_t n = toks.size();
  if (n >= 2 && toks[n - 2] == "mobo" && (toks[n - 1] == "c" || toks[n - 1] == "m")) {
    base_tokens = 2;
  } else if (n >= 1 && (toks[n - 1] == "mobo" || toks[n - 1] == "iqeye")) {
    base_tokens = 1;
  } else {
    throw ParseError("no camera suffix found in '" + name + "'");
  }
  const size_t extra = std::min<size_t>(2, n - base_tokens);
  const size_t cam_start = n - base_tokens - extra;
  std::string camera;
  for (size_t i = cam_start; i < n; ++i) {
    if (!camera.empty()) camera += '-';
    camera += toks[i];
  }
  std::string fire;
  for (size_t i = 0; i < cam_start; ++i) {
    if (!fire.empty()) fire += '-';
    fire += toks[i];
  }
  if (!camera_pattern_ok(camera)) {
    throw ParseError("no camera suffix found in '" + name + "'");
  }
  meta.fire_name = fire;
  meta.camera_name = camera;
  return meta;
}

Domain classify_domain(const SceneMeta& meta, const std::set<std::string>& source_scenes,
                       DomainMode mode) {
  const std::string& key = (mode == DomainMode::by_camera) ? meta.camera_name : meta.raw;
  return source_scenes.count(key) ? Domain::source : Domain::target;
}

}  // namespace ssda
