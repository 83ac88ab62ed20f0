#include "ssda/pseudo.hpp"

#include "ssda/error.hpp"

namespace ssda {

PseudoLabelSet filter_pseudo_labels(const std::vector<Detection>& dets, double tau_u,
                                    double tau_l) {
  if (!(tau_l < tau_u)) throw ConfigError("need tau_l < tau_u");
  PseudoLabelSet out;
  bool any_above_lower = false;
  for (const Detection& d : dets) {
    if (!out.image_id.empty() && d.image_id != out.image_id) {
      throw ConfigError("filter_pseudo_labels got detections from several images");
    }
    if (out.image_id.empty()) out.image_id = d.image_id;
    if (d.score > tau_u) out.positives.push_back(d);
    if (d.score > tau_l) any_above_lower = true;
  }
  out.is_reliable_background = !any_above_lower;
  out.usable = !out.positives.empty() || out.is_reliable_background;
  return out;
}

}  // namespace ssda
