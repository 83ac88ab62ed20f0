#pragma once

#include <string>

#include "ssda/tensor.hpp"

namespace ssda {

/// Binary PPM (P6) image I/O. Images are {3, H, W} tensors with values in
/// [0, 1]; writing quantizes to 8 bits, so write-then-read is exact for
/// values that are multiples of 1/255.
void write_ppm(const Tensor& image, const std::string& path);
Tensor read_ppm(const std::string& path);

/// Quantize to the 8-bit grid the PPM file format stores.
Tensor quantize_8bit(const Tensor& image);

}  // namespace ssda
