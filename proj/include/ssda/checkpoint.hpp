#pragma once

#include <string>

#include "ssda/detector.hpp"
#include "ssda/nn.hpp"

namespace ssda {

/// Self-describing checkpoint: a JSON header holding the architecture config
/// plus the tensor table (names, shapes), followed by raw little-endian
/// float64 data in table order.
struct Checkpoint {
  DetectorConfig config;
  ParamStore params;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace ssda
