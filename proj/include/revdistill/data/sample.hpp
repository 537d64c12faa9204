#pragma once

#include <string>
#include <vector>

#include "revdistill/core/errors.hpp"
#include "revdistill/core/tensor.hpp"

namespace revdistill::data {

struct SampleRecord {
  std::string name;
  Tensor<float> image;   // (3,R,R) RGB in [0,1]
  int label = 0;         // 0 normal, 1 anomalous
  Tensor<uint8_t> mask;  // (R,R) binary; empty when no pixel annotation
  std::string category;
  std::string defect_type = "good";
};

struct DatasetSplit {
  std::vector<SampleRecord> samples;

  size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  int64_t resolution() const {
    return samples.empty() ? 0 : samples.front().image.dim(1);
  }

  // Anomalous samples must never appear in a training split, and an
  // annotated sample's label must agree with its mask.
  void check_train_split() const {
    for (const auto& s : samples) {
      if (s.label != 0) {
        throw DataError("anomalous sample '" + s.name + "' in a training split");
      }
    }
  }

  void check_mask_consistency() const {
    for (const auto& s : samples) {
      if (s.mask.empty()) continue;
      bool any = false;
      for (int64_t i = 0; i < s.mask.numel() && !any; ++i) any = s.mask[i] != 0;
      if (any != (s.label == 1)) {
        throw DataError("label/mask disagreement for sample '" + s.name + "'");
      }
    }
  }
};

// Stacks [first, first+count) sample images into a (B,3,R,R) batch.
inline Tensor<float> stack_images(const DatasetSplit& split,
                                  const std::vector<size_t>& indices, size_t first,
                                  size_t count) {
  RD_CHECK(count > 0 && first + count <= indices.size());
  const auto& ref = split.samples[indices[first]].image;
  Tensor<float> batch({static_cast<int64_t>(count), 3, ref.dim(1), ref.dim(2)});
  for (size_t i = 0; i < count; ++i) {
    const auto& img = split.samples[indices[first + i]].image;
    RD_CHECK_MSG(img.same_shape(ref), "inconsistent image shapes in split");
    std::copy(img.data(), img.data() + img.numel(),
              batch.data() + static_cast<int64_t>(i) * img.numel());
  }
  return batch;
}

}  // namespace revdistill::data
