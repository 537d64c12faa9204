#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "revdistill/core/errors.hpp"
#include "revdistill/core/tensor.hpp"

namespace revdistill {

enum class BackboneFamily { kResnet18, kResnet50, kWideResnet50 };

struct FamilyInfo {
  bool bottleneck_blocks;            // false: two-conv blocks, true: three-conv
  int64_t base_width;                // inner 3x3 width multiplier (128 = wide)
  std::array<int64_t, 4> blocks;     // residual blocks per stage
  std::array<int64_t, 4> stage_width;  // output channels of stages 1..4
  int64_t stem_width;
};

inline BackboneFamily parse_family(const std::string& s) {
  if (s == "resnet18") return BackboneFamily::kResnet18;
  if (s == "resnet50") return BackboneFamily::kResnet50;
  if (s == "wide_resnet50") return BackboneFamily::kWideResnet50;
  throw ConfigError("unknown family: '" + s +
                    "' (expected resnet18, resnet50 or wide_resnet50)");
}

inline std::string family_name(BackboneFamily f) {
  switch (f) {
    case BackboneFamily::kResnet18: return "resnet18";
    case BackboneFamily::kResnet50: return "resnet50";
    case BackboneFamily::kWideResnet50: return "wide_resnet50";
  }
  throw ConfigError("unknown family enum value");
}

inline FamilyInfo family_info(BackboneFamily f) {
  switch (f) {
    case BackboneFamily::kResnet18:
      return {false, 64, {2, 2, 2, 2}, {64, 128, 256, 512}, 64};
    case BackboneFamily::kResnet50:
      return {true, 64, {3, 4, 6, 3}, {256, 512, 1024, 2048}, 64};
    case BackboneFamily::kWideResnet50:
      return {true, 128, {3, 4, 6, 3}, {256, 512, 1024, 2048}, 64};
  }
  throw ConfigError("unknown family enum value");
}

// Stage k of a standard residual network sits at stride 2^(k+1): the stem
// (7x7 conv + pool) already downsamples by 4.
inline int64_t stage_spatial(int64_t resolution, int stage) {
  return resolution >> (stage + 1);
}

// Channel statistics of the pretraining corpus; inputs are normalized with
// these before entering the encoder (RGB order).
inline constexpr std::array<double, 3> kInputMean = {0.485, 0.456, 0.406};
inline constexpr std::array<double, 3> kInputStd = {0.229, 0.224, 0.225};

struct BackboneSpec {
  BackboneFamily family = BackboneFamily::kResnet18;
  int64_t input_resolution = 256;
  std::vector<int> stages_used = {1, 2, 3};
  std::string weights_source = "seeded:0";

  void validate() const {
    if (input_resolution <= 0 || input_resolution % 32 != 0) {
      throw ConfigError("input_resolution must be a positive multiple of 32, got " +
                        std::to_string(input_resolution));
    }
    if (stages_used.empty()) throw ConfigError("stages_used must be non-empty");
    int prev = 0;
    for (int s : stages_used) {
      if (s < 1 || s > 3) throw ConfigError("stage index out of range: " + std::to_string(s));
      if (s <= prev) throw ConfigError("stages_used must be strictly increasing");
      prev = s;
    }
  }

  std::vector<int64_t> stage_widths() const {
    FamilyInfo info = family_info(family);
    std::vector<int64_t> w;
    for (int s : stages_used) w.push_back(info.stage_width[static_cast<size_t>(s - 1)]);
    return w;
  }
};

enum class PyramidSource { kTeacher, kStudent };

template <typename T>
struct FeaturePyramid {
  std::vector<Tensor<T>> levels;  // ordered shallow to deep
  std::vector<int> stage_ids;
  PyramidSource source = PyramidSource::kTeacher;

  size_t size() const { return levels.size(); }

  void check_consistent() const {
    RD_CHECK_MSG(levels.size() == stage_ids.size(), "pyramid levels/stage_ids mismatch");
    for (size_t i = 1; i < levels.size(); ++i) {
      RD_CHECK_MSG(levels[i].dim(0) == levels[0].dim(0),
                   "pyramid batch sizes differ across levels");
    }
  }
};

// Normalize a raw RGB batch (values in [0,1]) with the pretraining statistics.
template <typename T>
inline Tensor<T> normalize_batch(const Tensor<T>& x) {
  RD_CHECK(x.ndim() == 4);
  if (x.dim(1) != 3) {
    throw ShapeError("expected 3-channel input, got " + std::to_string(x.dim(1)));
  }
  Tensor<T> y(x.shape());
  const int64_t B = x.dim(0), HW = x.dim(2) * x.dim(3);
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t c = 0; c < 3; ++c) {
      const T mean = static_cast<T>(kInputMean[static_cast<size_t>(c)]);
      const T inv_std = static_cast<T>(1.0 / kInputStd[static_cast<size_t>(c)]);
      const T* xs = x.data() + (b * 3 + c) * HW;
      T* ys = y.data() + (b * 3 + c) * HW;
      for (int64_t i = 0; i < HW; ++i) ys[i] = (xs[i] - mean) * inv_std;
    }
  }
  return y;
}

}  // namespace revdistill
