#pragma once

#include <cstdint>
#include <vector>

#include "ssda/tensor.hpp"

namespace ssda {

/// Boolean grid over block x block tiles covering an image; edge tiles are
/// partial. Used as the strong augmentation for masked-image consistency.
struct BlockMask {
  int height = 0;
  int width = 0;
  int block = 1;
  int blocks_y = 0;
  int blocks_x = 0;
  std::vector<uint8_t> masked;  // row-major blocks_y x blocks_x

  size_t masked_block_count() const;
  /// Total pixels covered by masked blocks (edge blocks counted partially).
  int64_t masked_pixel_count() const;
  int64_t block_area(int by, int bx) const;
};

/// Tile the image with ceiling division and mask round(ratio * nblocks)
/// blocks chosen uniformly without replacement; deterministic under seed.
BlockMask generate_mask(int height, int width, int block, double ratio, uint64_t seed);

/// Zero every pixel of the masked blocks (all channels); unmasked pixels are
/// returned bit-identical. Throws ShapeError when the mask does not cover
/// the image.
Tensor apply_mask(const Tensor& image, const BlockMask& mask);

}  // namespace ssda
