#include "ssda/mask.hpp"

#include <algorithm>

#include "ssda/error.hpp"
#include "ssda/manifest.hpp"
#include "ssda/rng.hpp"

namespace ssda {

size_t BlockMask::masked_block_count() const {
  size_t n = 0;
  for (uint8_t m : masked) n += m != 0;
  return n;
}

int64_t BlockMask::block_area(int by, int bx) const {
  const int y0 = by * block, x0 = bx * block;
  const int y1 = std::min(y0 + block, height), x1 = std::min(x0 + block, width);
  return static_cast<int64_t>(y1 - y0) * (x1 - x0);
}

int64_t BlockMask::masked_pixel_count() const {
  int64_t n = 0;
  for (int by = 0; by < blocks_y; ++by) {
    for (int bx = 0; bx < blocks_x; ++bx) {
      if (masked[static_cast<size_t>(by) * blocks_x + bx]) n += block_area(by, bx);
    }
  }
  return n;
}

BlockMask generate_mask(int height, int width, int block, double ratio, uint64_t seed) {
  if (block < 1) throw ConfigError("mask block must be >= 1");
  if (height < 1 || width < 1) throw ConfigError("mask needs a positive image size");
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw ConfigError("mask ratio must be in [0,1]");
  BlockMask m;
  m.height = height;
  m.width = width;
  m.block = block;
  m.blocks_y = (height + block - 1) / block;
  m.blocks_x = (width + block - 1) / block;
  const size_t nblocks = static_cast<size_t>(m.blocks_y) * m.blocks_x;
  m.masked.assign(nblocks, 0);
  const size_t n_masked = round_count(ratio * static_cast<double>(nblocks));
  Rng rng(seed);
  for (size_t i : rng.sample_without_replacement(nblocks, n_masked)) m.masked[i] = 1;
  return m;
}

Tensor apply_mask(const Tensor& image, const BlockMask& mask) {
  if (image.rank() != 3 || image.dim(1) != mask.height || image.dim(2) != mask.width) {
    throw ShapeError("mask does not cover the image");
  }
  Tensor out = image;
  const int c = image.dim(0);
  for (int by = 0; by < mask.blocks_y; ++by) {
    for (int bx = 0; bx < mask.blocks_x; ++bx) {
      if (!mask.masked[static_cast<size_t>(by) * mask.blocks_x + bx]) continue;
      const int y1 = std::min((by + 1) * mask.block, mask.height);
      const int x1 = std::min((bx + 1) * mask.block, mask.width);
      for (int ch = 0; ch < c; ++ch) {
        for (int y = by * mask.block; y < y1; ++y) {
          for (int x = bx * mask.block; x < x1; ++x) {
            out.at3(ch, y, x) = 0.0;
          }
        }
      }
    }
  }
  return out;
}

}  // namespace ssda
