#pragma once

#include <set>
#include <string>
#include <vector>

namespace ssda {

enum class Domain { source, target };

struct Date {
  int year = 0;
  int month = 0;
  int day = 0;
  bool operator==(const Date&) const = default;
  /// "YYYY-MM-DD"
  std::string iso() const;
  /// "YYYYMMDD"
  std::string compact() const;
  static Date parse_compact(const std::string& yyyymmdd);
};

/// Parsed identity of a scene sub-directory name. A scene name is
/// date + fire name + camera name joined by '_' or '-'; fire names may
/// themselves contain the joining character.
struct SceneMeta {
  Date date;
  std::string fire_name;
  std::string camera_name;
  std::string raw;

  /// Re-join the parsed fields with the delimiters observed in `raw`.
  /// Equals `raw` for every successfully parsed name.
  std::string rejoin() const;

  bool operator==(const SceneMeta&) const = default;
};

/// Parse a scene sub-directory name. The leading 8 digits must form a valid
/// calendar date; the camera name is the trailing token group ending in a
/// known camera suffix ("mobo-c", "mobo-m", "mobo", "iqeye") or, when the
/// name is '_'-delimited, any single trailing station code. Throws ParseError.
SceneMeta parse_scene_name(const std::string& name);

enum class DomainMode { by_scene, by_camera };

/// A scene is source iff its raw name (by_scene) or camera name (by_camera)
/// appears in `source_scenes`; everything else is target.
Domain classify_domain(const SceneMeta& meta, const std::set<std::string>& source_scenes,
                       DomainMode mode = DomainMode::by_scene);

}  // namespace ssda
