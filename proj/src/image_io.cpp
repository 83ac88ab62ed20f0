#include "ssda/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <vector>

#include "ssda/error.hpp"

namespace ssda {

Tensor quantize_8bit(const Tensor& image) {
  Tensor out = image;
  for (auto& v : out.data) {
    const int q = static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    v = static_cast<double>(q) / 255.0;
  }
  return out;
}

void write_ppm(const Tensor& image, const std::string& path) {
  if (image.rank() != 3 || image.dim(0) != 3) throw ShapeError("write_ppm wants {3,H,W}");
  const int h = image.dim(1), w = image.dim(2);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open '" + path + "' for writing");
  os << "P6\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> row(static_cast<size_t>(w) * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(image.at3(c, y, x), 0.0, 1.0);
        row[static_cast<size_t>(x) * 3 + c] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
    }
    os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!os) throw DataError("write failed for '" + path + "'");
}

Tensor read_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open '" + path + "'");
  std::string magic;
  is >> magic;
  if (magic != "P6") throw DataError("'" + path + "' is not a binary PPM");
  auto next_int = [&]() {
    // skip whitespace and '#' comments
    int c = is.get();
    while (c != EOF && (std::isspace(c) || c == '#')) {
      if (c == '#') {
        while (c != EOF && c != '\n') c = is.get();
      }
      c = is.get();
    }
    int v = 0;
    bool any = false;
    while (c != EOF && std::isdigit(c)) {
      v = v * 10 + (c - '0');
      any = true;
      c = is.get();
    }
    if (!any) throw DataError("'" + path + "': malformed PPM header");
    return v;
  };
  const int w = next_int();
  const int h = next_int();
  const int maxval = next_int();
  if (w < 1 || h < 1 || maxval != 255) throw DataError("'" + path + "': unsupported PPM");

  Tensor img({3, h, w});
  std::vector<unsigned char> row(static_cast<size_t>(w) * 3);
  for (int y = 0; y < h; ++y) {
    is.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
    if (!is) throw DataError("'" + path + "': truncated pixel data");
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        img.at3(c, y, x) = static_cast<double>(row[static_cast<size_t>(x) * 3 + c]) / 255.0;
      }
    }
  }
  return img;
}

}  // namespace ssda
