#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ssda/geometry.hpp"
#include "ssda/scene.hpp"

namespace ssda {

enum class LabelStatus { labeled, unlabeled };

/// One image with its domain tag, label status and box annotations.
/// Unlabeled records carry no visible boxes; when produced by protocol
/// sampling they retain the original ground truth in `eval_boxes`, which is
/// used for evaluation only and never for training.
struct ImageRecord {
  std::string image_id;
  SceneMeta scene;
  int width = 0;
  int height = 0;
  std::vector<BBox> boxes;
  Domain domain = Domain::source;
  LabelStatus label_status = LabelStatus::labeled;
  std::vector<BBox> eval_boxes;

  /// Foreground = the image content contains at least one annotated object.
  /// For unlabeled records this is judged from the retained eval_boxes.
  bool is_foreground() const {
    return label_status == LabelStatus::labeled ? !boxes.empty() : !eval_boxes.empty();
  }

  bool operator==(const ImageRecord&) const = default;
};

struct ManifestCounts {
  size_t labeled = 0;
  size_t unlabeled = 0;
  size_t foreground = 0;
  size_t background = 0;
};

struct Manifest {
  std::vector<ImageRecord> records;
  std::string split_name;
  uint64_t seed = 0;
  std::optional<double> protocol;

  size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
  ManifestCounts counts() const;

  /// Check manifest invariants (unique ids, unlabeled records box-free,
  /// valid boxes inside their image). Throws DataError on violation.
  void validate() const;
};

/// Round-half-up count rule used for every split-size computation.
inline size_t round_count(double x) { return static_cast<size_t>(std::floor(x + 0.5)); }

/// Randomly partition records into train and val with |val| =
/// round(val_fraction * N). Deterministic under seed. Throws
/// EmptyManifestError / ConfigError.
std::pair<Manifest, Manifest> split_train_val(const std::vector<ImageRecord>& records,
                                              double val_fraction, uint64_t seed);

/// Sample round(fraction * N) records as the labeled protocol subset; the
/// rest become unlabeled with boxes moved to eval_boxes. Deterministic under
/// seed. Throws ConfigError / EmptyManifestError.
std::pair<Manifest, Manifest> sample_protocol(const Manifest& train, double fraction,
                                              uint64_t seed);

/// Apply the box-merging labeling policy to every record of a manifest.
Manifest merge_manifest_labels(const Manifest& input);

/// JSON-lines manifest I/O: one ImageRecord per line, preceded by a header
/// line carrying split_name/seed/protocol. save->load is the identity.
void save_manifest(const Manifest& m, const std::string& path);
Manifest load_manifest(const std::string& path);

/// COCO detection JSON (images / annotations / categories, xywh top-left).
void export_coco(const Manifest& m, const std::string& path);
/// Re-import of an exported file; recovers image sizes, ids and boxes.
Manifest import_coco(const std::string& path);

}  // namespace ssda
