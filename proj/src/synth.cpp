#include "ssda/synth.hpp"

#include <algorithm>
#include <cmath>

#include "ssda/error.hpp"
#include "ssda/image_io.hpp"
#include "ssda/rng.hpp"
#include "ssda/scene.hpp"

namespace ssda {

void SceneSpec::validate() const {
  if (width < 16 || height < 16) throw ConfigError("scene too small");
  if (!(horizon_fraction >= 0.0 && horizon_fraction < 1.0)) {
    throw ConfigError("horizon_fraction must be in [0,1)");
  }
  if (!(background_prob >= 0.0 && background_prob <= 1.0)) {
    throw ConfigError("background_prob must be in [0,1]");
  }
  if (base_width_min <= 0 || base_width_max < base_width_min) throw ConfigError("bad base widths");
  if (plume_height_min <= 0 || plume_height_max < plume_height_min) {
    throw ConfigError("bad plume heights");
  }
  if (source_style == target_style) {
    throw ConfigError("source and target styles must differ (that is the domain gap)");
  }
  if (position_class_mode && position_bands < 2) throw ConfigError("need >= 2 position bands");
}

namespace {

/// Smooth value noise: bilinear interpolation of a coarse random lattice.
struct ValueNoise {
  int cell;
  int nx, ny;
  std::vector<double> lattice;

  ValueNoise(int w, int h, int cell_size, Rng& rng) : cell(cell_size) {
    nx = w / cell + 2;
    ny = h / cell + 2;
    lattice.resize(static_cast<size_t>(nx) * ny);
    for (double& v : lattice) v = rng.uniform(-1.0, 1.0);
  }

  double at(int x, int y) const {
    const double fx = static_cast<double>(x) / cell;
    const double fy = static_cast<double>(y) / cell;
    const int ix = static_cast<int>(fx), iy = static_cast<int>(fy);
    const double tx = fx - ix, ty = fy - iy;
    auto l = [&](int a, int b) { return lattice[static_cast<size_t>(b) * nx + a]; };
    const double top = l(ix, iy) * (1 - tx) + l(ix + 1, iy) * tx;
    const double bot = l(ix, iy + 1) * (1 - tx) + l(ix + 1, iy + 1) * tx;
    return top * (1 - ty) + bot * ty;
  }
};

struct Pixel {
  double r, g, b;
};

Pixel lerp(const Pixel& a, const Pixel& b, double t) {
  return Pixel{a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t};
}

}  // namespace

std::pair<Tensor, ImageRecord> generate_scene(const SceneSpec& spec, uint64_t seed) {
  spec.validate();
  const int w = spec.width, h = spec.height;
  Rng rng(Rng::mix(Rng::mix(seed, spec.texture_seed), spec.domain == Domain::source ? 11 : 23));

  Tensor img({3, h, w});
  const int horizon = static_cast<int>(std::lround(spec.horizon_fraction * h));
  const ValueNoise noise(w, h, 8, rng);
  const ValueNoise fine(w, h, 3, rng);

  const Pixel sky_top{0.50, 0.66, 0.90};
  const Pixel sky_bot{0.74, 0.80, 0.92};
  const Pixel ground_top{0.40, 0.46, 0.32};
  const Pixel ground_bot{0.24, 0.28, 0.20};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      Pixel p;
      if (y < horizon) {
        const double t = horizon > 1 ? static_cast<double>(y) / std::max(1, horizon - 1) : 0.0;
        p = lerp(sky_top, sky_bot, t);
        p.r += 0.015 * noise.at(x, y);
        p.g += 0.015 * noise.at(x, y);
        p.b += 0.01 * fine.at(x, y);
      } else {
        const double t = static_cast<double>(y - horizon) / std::max(1, h - horizon - 1);
        p = lerp(ground_top, ground_bot, t);
        const double n = 0.06 * noise.at(x, y) + 0.03 * fine.at(x, y);
        p.r += n;
        p.g += n * 1.2;
        p.b += n * 0.8;
      }
      img.at3(0, y, x) = p.r;
      img.at3(1, y, x) = p.g;
      img.at3(2, y, x) = p.b;
    }
  }

  ImageRecord rec;
  rec.width = w;
  rec.height = h;
  rec.domain = spec.domain;
  rec.label_status = LabelStatus::labeled;
  const std::string side = spec.domain == Domain::source ? "src" : "tgt";
  rec.scene = parse_scene_name("20240101_SYN" + std::to_string(seed) + "_" + side + "-n-mobo-c");
  rec.image_id = side + "_" + std::to_string(seed) + ".ppm";

  int cls = 0;
  bool foreground;
  double plume_h, base_w;
  int base_y_lo, base_y_hi;
  if (spec.position_class_mode) {
    foreground = true;
    plume_h = spec.plume_height_min;
    base_w = spec.base_width_min;
    cls = static_cast<int>(rng.below(static_cast<uint64_t>(spec.position_bands)));
    const int lo_all = horizon + static_cast<int>(std::ceil(plume_h)) + 1;
    const int hi_all = h - 2;
    const double band = static_cast<double>(hi_all - lo_all) / spec.position_bands;
    base_y_lo = lo_all + static_cast<int>(std::floor(cls * band));
    base_y_hi = lo_all + static_cast<int>(std::floor((cls + 1) * band)) - 1;
  } else {
    foreground = !rng.bernoulli(spec.background_prob);
    plume_h = rng.uniform(spec.plume_height_min, spec.plume_height_max);
    base_w = rng.uniform(spec.base_width_min, spec.base_width_max);
    base_y_lo = horizon + static_cast<int>(std::ceil(plume_h)) + 1;
    base_y_hi = h - 2;
  }

  if (foreground) {
    // keep the whole plume (and so the box center) below the horizon line
    if (base_y_lo > base_y_hi) {
      plume_h = std::max(4.0, static_cast<double>(h - horizon - 4));
      base_y_lo = std::min(h - 2, horizon + static_cast<int>(std::ceil(plume_h)) + 1);
      base_y_hi = h - 2;
    }
    const int base_y = rng.uniform_int(std::min(base_y_lo, base_y_hi), base_y_hi);
    const double top_half = 0.5 * base_w * (1.0 + spec.plume_expansion);
    const int margin = static_cast<int>(std::ceil(top_half)) + 1;
    const int base_x = rng.uniform_int(std::min(margin, w - 1 - margin), std::max(margin, w - 1 - margin));
    const double drift = rng.uniform(-0.25, 0.25);  // slight wind lean
    const Pixel smoke{0.84, 0.84, 0.86};

    int min_x = w, max_x = -1, min_y = h, max_y = -1;
    const int y_top = std::max(0, base_y - static_cast<int>(std::floor(plume_h)));
    for (int y = y_top; y <= base_y; ++y) {
      const double t = (base_y - y) / plume_h;
      const double half = 0.5 * base_w * (1.0 + spec.plume_expansion * t);
      const double cx = base_x + drift * base_w * t * 3.0;
      const double alpha_row = 0.85 * (1.0 - 0.4 * t);
      const int x0 = std::max(0, static_cast<int>(std::floor(cx - half)));
      const int x1 = std::min(w - 1, static_cast<int>(std::ceil(cx + half)));
      for (int x = x0; x <= x1; ++x) {
        const double u = (x - cx) / half;
        const double a = alpha_row * std::max(0.0, 1.0 - u * u);
        if (a <= 0.02) continue;
        img.at3(0, y, x) = img.at3(0, y, x) * (1 - a) + smoke.r * a;
        img.at3(1, y, x) = img.at3(1, y, x) * (1 - a) + smoke.g * a;
        img.at3(2, y, x) = img.at3(2, y, x) * (1 - a) + smoke.b * a;
        min_x = std::min(min_x, x);
        max_x = std::max(max_x, x);
        min_y = std::min(min_y, y);
        max_y = std::max(max_y, y);
      }
    }
    if (max_x >= 0) {
      BBox box = BBox::from_corners(cls, min_x, min_y, max_x + 1, max_y + 1);
      rec.boxes.push_back(clamp_to_image(box, w, h));
    }
  }

  const DomainStyle& style = spec.style();
  const Pixel veil{0.78, 0.80, 0.83};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double r = img.at3(0, y, x), g = img.at3(1, y, x), b = img.at3(2, y, x);
      r = (r - 0.5) * style.contrast + 0.5 + style.brightness + style.tint;
      g = (g - 0.5) * style.contrast + 0.5 + style.brightness;
      b = (b - 0.5) * style.contrast + 0.5 + style.brightness - style.tint;
      r = r * (1 - style.haze) + veil.r * style.haze;
      g = g * (1 - style.haze) + veil.g * style.haze;
      b = b * (1 - style.haze) + veil.b * style.haze;
      img.at3(0, y, x) = std::clamp(r, 0.0, 1.0);
      img.at3(1, y, x) = std::clamp(g, 0.0, 1.0);
      img.at3(2, y, x) = std::clamp(b, 0.0, 1.0);
    }
  }

  return {quantize_8bit(img), std::move(rec)};
}

std::vector<SynthSample> generate_dataset(const SceneSpec& spec, int count, uint64_t seed,
                                          const std::string& id_prefix) {
  std::vector<SynthSample> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    auto [img, rec] = generate_scene(spec, Rng::mix(seed, static_cast<uint64_t>(i)));
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%06d", i);
    rec.image_id = id_prefix + buf + ".ppm";
    out.push_back(SynthSample{std::move(rec), std::move(img)});
  }
  return out;
}

}  // namespace ssda
