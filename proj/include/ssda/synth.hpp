#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ssda/manifest.hpp"
#include "ssda/tensor.hpp"

namespace ssda {

/// Global rendering style of one domain; the style difference between source
/// and target IS the synthetic domain gap.
struct DomainStyle {
  double contrast = 1.0;
  double brightness = 0.0;
  double tint = 0.0;  // +warm (red up, blue down)
  double haze = 0.0;  // blend toward a flat gray veil
  bool operator==(const DomainStyle&) const = default;
};

/// Parameters of a synthetic location-biased smoke scene. Smoke plumes are
/// stacked translucent ellipse slices that widen with height; no plume pixel
/// group may center above the horizon line.
struct SceneSpec {
  int width = 64;
  int height = 64;
  double horizon_fraction = 0.35;  // rows above this fraction are sky only
  double plume_expansion = 1.6;    // conical widening factor at the top
  double base_width_min = 5.0;
  double base_width_max = 11.0;
  double plume_height_min = 12.0;
  double plume_height_max = 26.0;
  double background_prob = 0.5;
  uint64_t texture_seed = 0;
  DomainStyle source_style{1.0, 0.0, 0.03, 0.0};
  DomainStyle target_style{0.65, -0.02, -0.08, 0.3};
  Domain domain = Domain::source;

  /// Position-only class mode: every scene is foreground, the plume shape is
  /// fixed, and class_id encodes the vertical band the plume sits in. Labels
  /// then depend on nothing but position.
  bool position_class_mode = false;
  int position_bands = 2;

  const DomainStyle& style() const {
    return domain == Domain::source ? source_style : target_style;
  }
  void validate() const;
};

/// Deterministically render one scene. The returned record carries a
/// parseable scene name, the domain tag and a tight box around the plume
/// (none for background-only scenes). Images are {3,H,W} in [0,1], already
/// quantized to the 8-bit grid the on-disk format stores.
std::pair<Tensor, ImageRecord> generate_scene(const SceneSpec& spec, uint64_t seed);

struct SynthSample {
  ImageRecord record;
  Tensor image;
};

/// A batch of scenes with unique ids ("<prefix><index>.ppm").
std::vector<SynthSample> generate_dataset(const SceneSpec& spec, int count, uint64_t seed,
                                          const std::string& id_prefix);

}  // namespace ssda
