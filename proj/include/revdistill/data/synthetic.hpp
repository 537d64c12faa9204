#pragma once

#include <cmath>
#include <utility>

#include "revdistill/core/rng.hpp"
#include "revdistill/data/sample.hpp"

namespace revdistill::data {

// Procedural texture corpus with painted defects, for self-contained
// end-to-end runs. Every sample is a pure function of (seed, split, index),
// so corpora are bitwise reproducible and loading order does not matter.
struct SynthConfig {
  uint64_t seed = 0;
  int64_t n_train = 200;
  int64_t n_test = 100;
  int64_t resolution = 128;
  double test_anomaly_ratio = 0.5;
  std::string category = "synthetic";
};

namespace detail {

// One octave of value noise: random lattice values, bilinearly interpolated.
inline void add_value_noise(Tensor<float>& field, Rng& rng, int64_t cell, float amp) {
  const int64_t R = field.dim(0);
  const int64_t g = R / cell + 2;
  std::vector<float> lattice(static_cast<size_t>(g * g));
  for (auto& v : lattice) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  for (int64_t y = 0; y < R; ++y) {
    const int64_t gy = y / cell;
    const float fy = static_cast<float>(y % cell) / static_cast<float>(cell);
    for (int64_t x = 0; x < R; ++x) {
      const int64_t gx = x / cell;
      const float fx = static_cast<float>(x % cell) / static_cast<float>(cell);
      const float v00 = lattice[static_cast<size_t>(gy * g + gx)];
      const float v01 = lattice[static_cast<size_t>(gy * g + gx + 1)];
      const float v10 = lattice[static_cast<size_t>((gy + 1) * g + gx)];
      const float v11 = lattice[static_cast<size_t>((gy + 1) * g + gx + 1)];
      const float top = v00 + fx * (v01 - v00);
      const float bot = v10 + fx * (v11 - v10);
      field[y * R + x] += amp * (top + fy * (bot - top));
    }
  }
}

// Smooth, low-frequency cloud texture. Kept deliberately band-limited: its
// features survive the information bottleneck, while the high-frequency
// defect patterns below cannot.
inline Tensor<float> cloud_field(Rng& rng, int64_t R) {
  Tensor<float> f({R, R});
  int64_t cell = std::max<int64_t>(8, R / 4);
  float amp = 0.6f;
  while (cell >= 8) {
    add_value_noise(f, rng, cell, amp);
    cell /= 2;
    amp *= 0.5f;
  }
  return f;
}

// Paints an ellipse (possibly rotated); returns painted pixel count.
inline int64_t paint_ellipse(Tensor<uint8_t>& mask, double cy, double cx, double ra,
                             double rb, double theta) {
  const int64_t R = mask.dim(0);
  const double ct = std::cos(theta), st = std::sin(theta);
  int64_t count = 0;
  for (int64_t y = 0; y < R; ++y) {
    for (int64_t x = 0; x < R; ++x) {
      const double dy = y - cy, dx = x - cx;
      const double u = ct * dx + st * dy;
      const double v = -st * dx + ct * dy;
      if ((u * u) / (ra * ra) + (v * v) / (rb * rb) <= 1.0) {
        if (!mask[y * R + x]) ++count;
        mask[y * R + x] = 1;
      }
    }
  }
  return count;
}

// Paints a thick polyline (capsule strokes); returns painted pixel count.
inline int64_t paint_stroke(Tensor<uint8_t>& mask, Rng& rng, double thickness) {
  const int64_t R = mask.dim(0);
  const int segments = static_cast<int>(rng.uniform_int(3, 5));
  double y = rng.uniform(0.25 * R, 0.75 * R);
  double x = rng.uniform(0.25 * R, 0.75 * R);
  int64_t count = 0;
  for (int s = 0; s < segments; ++s) {
    const double ny = std::clamp(y + rng.uniform(-0.25 * R, 0.25 * R), 0.1 * R, 0.9 * R);
    const double nx = std::clamp(x + rng.uniform(-0.25 * R, 0.25 * R), 0.1 * R, 0.9 * R);
    const double len = std::hypot(ny - y, nx - x);
    const int steps = std::max(2, static_cast<int>(len));
    for (int t = 0; t <= steps; ++t) {
      const double py = y + (ny - y) * t / steps;
      const double px = x + (nx - x) * t / steps;
      const int64_t r = static_cast<int64_t>(thickness);
      for (int64_t dy = -r; dy <= r; ++dy) {
        for (int64_t dx = -r; dx <= r; ++dx) {
          if (dy * dy + dx * dx > thickness * thickness) continue;
          const int64_t iy = static_cast<int64_t>(py) + dy;
          const int64_t ix = static_cast<int64_t>(px) + dx;
          if (iy < 0 || iy >= R || ix < 0 || ix >= R) continue;
          if (!mask[iy * R + ix]) {
            mask[iy * R + ix] = 1;
            ++count;
          }
        }
      }
    }
    y = ny;
    x = nx;
  }
  return count;
}

inline SampleRecord make_sample(const SynthConfig& cfg, uint64_t stream, bool anomalous,
                                const std::string& name) {
  Rng rng(stream);
  const int64_t R = cfg.resolution;
  SampleRecord rec;
  rec.name = name;
  rec.category = cfg.category;

  // Warm cloudy base texture with mild per-sample palette jitter.
  const float base[3] = {0.52f + static_cast<float>(rng.uniform(-0.04, 0.04)),
                         0.46f + static_cast<float>(rng.uniform(-0.04, 0.04)),
                         0.38f + static_cast<float>(rng.uniform(-0.04, 0.04))};
  static constexpr float kDir[3] = {1.0f, 0.92f, 0.78f};
  Tensor<float> field = cloud_field(rng, R);

  Tensor<uint8_t> mask({R, R});
  Tensor<float> defect_field;
  float defect_shift[3] = {0, 0, 0};
  if (anomalous) {
    // Mask area fraction is kept inside [1%, 20%] by construction and a
    // deterministic repaint loop.
    const bool use_ellipse = rng.uniform() < 0.6;
    int64_t painted = 0;
    if (use_ellipse) {
      const double frac = rng.uniform(0.02, 0.12);
      const double rho = rng.uniform(0.45, 1.0);
      double ra = R * std::sqrt(frac / (3.14159265 * rho));
      double rb = rho * ra;
      const double cy = rng.uniform(0.3 * R, 0.7 * R);
      const double cx = rng.uniform(0.3 * R, 0.7 * R);
      const double theta = rng.uniform(0.0, 3.14159265);
      painted = paint_ellipse(mask, cy, cx, ra, rb, theta);
    } else {
      painted = paint_stroke(mask, rng, std::max(2.5, 0.03 * R));
    }
    const int64_t lo = R * R / 100, hi = R * R / 5;
    int guard = 0;
    while ((painted < lo || painted > hi) && guard++ < 8) {
      mask.zero();
      const double frac = painted < lo ? 0.05 : 0.03;
      const double cy = rng.uniform(0.3 * R, 0.7 * R);
      const double cx = rng.uniform(0.3 * R, 0.7 * R);
      const double ra = R * std::sqrt(frac / 3.14159265);
      painted = paint_ellipse(mask, cy, cx, ra, ra, 0.0);
    }
    RD_CHECK_MSG(painted >= lo && painted <= hi, "defect area out of contract");
    rec.label = 1;
    rec.defect_type = use_ellipse ? "blotch" : "scratch";

    // Defect interior: a saturated high-frequency stripe pattern with an
    // off-palette hue. The stripes are too fine to be carried through the
    // bottleneck code, so a one-class student cannot restore them.
    const float sign = rng.uniform() < 0.5 ? 1.0f : -1.0f;
    const float mag = static_cast<float>(rng.uniform(0.25, 0.38));
    defect_shift[0] = -sign * mag;
    defect_shift[1] = sign * 0.15f * mag;
    defect_shift[2] = sign * mag;
    const double theta = rng.uniform(0.0, 3.14159265);
    const double wavelength = rng.uniform(5.0, 10.0);
    const double phase = rng.uniform(0.0, 6.28318531);
    const double kx = std::cos(theta) * 6.28318531 / wavelength;
    const double ky = std::sin(theta) * 6.28318531 / wavelength;
    defect_field = Tensor<float>({R, R});
    for (int64_t y = 0; y < R; ++y) {
      for (int64_t x = 0; x < R; ++x) {
        defect_field[y * R + x] =
            std::sin(kx * static_cast<double>(x) + ky * static_cast<double>(y) + phase) >
                    0
                ? 0.5f
                : -0.5f;
      }
    }
  }
  rec.mask = anomalous ? mask : Tensor<uint8_t>({R, R});

  // Compose to 8-bit and back so on-disk and in-memory corpora agree.
  rec.image = Tensor<float>({3, R, R});
  for (int64_t p = 0; p < R * R; ++p) {
    const bool inside = anomalous && mask[p];
    for (int64_t c = 0; c < 3; ++c) {
      float v = base[c] + 0.35f * kDir[c] * field[p];
      if (inside) v = base[c] + defect_shift[c] + 0.8f * kDir[2 - c] * defect_field[p];
      v = std::clamp(v, 0.0f, 1.0f);
      const auto q = static_cast<uint8_t>(std::lround(v * 255.0f));
      rec.image[c * R * R + p] = q / 255.0f;
    }
  }
  return rec;
}

}  // namespace detail

inline std::pair<DatasetSplit, DatasetSplit> synth_defect_corpus(const SynthConfig& cfg) {
  RD_CHECK(cfg.n_train > 0 && cfg.n_test >= 0);
  DatasetSplit train, test;
  for (int64_t i = 0; i < cfg.n_train; ++i) {
    train.samples.push_back(detail::make_sample(
        cfg, Rng::mix(cfg.seed, static_cast<uint64_t>(i)), false,
        "train_" + std::to_string(i)));
  }
  const auto n_anom = static_cast<int64_t>(
      std::llround(cfg.test_anomaly_ratio * static_cast<double>(cfg.n_test)));
  for (int64_t i = 0; i < cfg.n_test; ++i) {
    const bool anomalous = i < n_anom;
    test.samples.push_back(detail::make_sample(
        cfg, Rng::mix(cfg.seed, 0x100000 + static_cast<uint64_t>(i)), anomalous,
        "test_" + std::to_string(i)));
  }
  train.check_train_split();
  test.check_mask_consistency();
  return {std::move(train), std::move(test)};
}

}  // namespace revdistill::data
