#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "revdistill/backbone/family.hpp"
#include "revdistill/nn/resblocks.hpp"

namespace revdistill {

struct DecoderSpec {
  BackboneFamily family = BackboneFamily::kResnet18;
  std::vector<int> stages_emitted = {3, 2, 1};  // deep to shallow

  static DecoderSpec mirror_of(const BackboneSpec& spec) {
    DecoderSpec d;
    d.family = spec.family;
    d.stages_emitted.assign(spec.stages_used.rbegin(), spec.stages_used.rend());
    return d;
  }
};

// One decoding stage: an upsampling entry block followed by identity blocks,
// block count mirroring the encoder stage it reconstructs.
template <typename T>
class DecoderStage {
 public:
  DecoderStage() = default;
  DecoderStage(const std::string& name, const FamilyInfo& info, int stage, int64_t in_ch) {
    const int64_t out_ch = info.stage_width[static_cast<size_t>(stage - 1)];
    const int64_t planes = out_ch / (info.bottleneck_blocks ? 4 : 1);
    const int64_t n = info.blocks[static_cast<size_t>(stage - 1)];
    int64_t ch = in_ch;
    for (int64_t b = 0; b < n; ++b) {
      const std::string bname = name + "." + std::to_string(b);
      if (info.bottleneck_blocks) {
        de_bottleneck_.emplace_back(bname, ch, planes, b == 0, info.base_width);
      } else {
        de_basic_.emplace_back(bname, ch, planes, b == 0);
      }
      ch = out_ch;
    }
  }

  Tensor<T> infer(const Tensor<T>& x) const {
    Tensor<T> out = x;
    for (const auto& blk : de_basic_) out = blk.infer(out);
    for (const auto& blk : de_bottleneck_) out = blk.infer(out);
    return out;
  }

  Tensor<T> forward(const Tensor<T>& x, nn::Mode mode) {
    if (mode == nn::Mode::kInfer) return infer(x);
    Tensor<T> out = x;
    for (auto& blk : de_basic_) out = blk.forward(out, mode);
    for (auto& blk : de_bottleneck_) out = blk.forward(out, mode);
    return out;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> d = dy;
    for (size_t i = de_bottleneck_.size(); i-- > 0;) d = de_bottleneck_[i].backward(d);
    for (size_t i = de_basic_.size(); i-- > 0;) d = de_basic_[i].backward(d);
    return d;
  }

  void collect(nn::ParamRefs<T>& out) {
    for (auto& blk : de_basic_) blk.collect(out);
    for (auto& blk : de_bottleneck_) blk.collect(out);
  }
  void collect_state(nn::StateMap<T>& out) {
    for (auto& blk : de_basic_) blk.collect_state(out);
    for (auto& blk : de_bottleneck_) blk.collect_state(out);
  }
  void init_params(Rng& rng) {
    for (auto& blk : de_basic_) blk.init_params(rng);
    for (auto& blk : de_bottleneck_) blk.init_params(rng);
  }

 private:
  std::vector<nn::DeBasicBlock<T>> de_basic_;
  std::vector<nn::DeBottleneckBlock<T>> de_bottleneck_;
};

// Mirror-reversed student: reconstructs the encoder's multi-scale features
// from the bottleneck code, decoding deep to shallow. Stages below the
// shallowest emitted one are never built.
template <typename T>
class StudentDecoder {
 public:
  StudentDecoder() = default;

  explicit StudentDecoder(const DecoderSpec& spec)
      : spec_(spec), info_(family_info(spec.family)) {
    RD_CHECK_MSG(!spec.stages_emitted.empty(), "decoder needs at least one stage");
    min_stage_ = *std::min_element(spec.stages_emitted.begin(), spec.stages_emitted.end());
    int64_t ch = info_.stage_width[3];
    for (int s = 3; s >= min_stage_; --s) {
      stages_.push_back(
          DecoderStage<T>("decoder.stage" + std::to_string(s), info_, s, ch));
      ch = info_.stage_width[static_cast<size_t>(s - 1)];
    }
  }

  const DecoderSpec& spec() const { return spec_; }

  void init_params(Rng& rng) {
    for (auto& st : stages_) st.init_params(rng);
  }

  // code (B, C4, h, h) -> pyramid ordered shallow to deep, so it aligns
  // index-wise with the teacher pyramid.
  FeaturePyramid<T> forward(const Tensor<T>& code, nn::Mode mode) {
    if (code.ndim() != 4 || code.dim(1) != info_.stage_width[3]) {
      throw ShapeError("bottleneck code shape " + code.shape_str() + " invalid: want " +
                       std::to_string(info_.stage_width[3]) + " channels");
    }
    FeaturePyramid<T> pyr;
    pyr.source = PyramidSource::kStudent;
    Tensor<T> x = code;
    for (int s = 3; s >= min_stage_; --s) {
      x = stages_[static_cast<size_t>(3 - s)].forward(x, mode);
      if (std::find(spec_.stages_emitted.begin(), spec_.stages_emitted.end(), s) !=
          spec_.stages_emitted.end()) {
        pyr.levels.push_back(x);
        pyr.stage_ids.push_back(s);
      }
    }
    // Reorder shallow to deep.
    std::reverse(pyr.levels.begin(), pyr.levels.end());
    std::reverse(pyr.stage_ids.begin(), pyr.stage_ids.end());
    return pyr;
  }

  // dlevels aligned with the forward output (shallow to deep). Returns the
  // gradient with respect to the bottleneck code.
  Tensor<T> backward(const std::vector<Tensor<T>>& dlevels,
                     const std::vector<int>& stage_ids) {
    RD_CHECK(dlevels.size() == stage_ids.size());
    Tensor<T> d;
    // Walk shallow to deep, accumulating the loss gradient at each tap.
    for (int s = min_stage_; s <= 3; ++s) {
      auto it = std::find(stage_ids.begin(), stage_ids.end(), s);
      if (it != stage_ids.end()) {
        const auto& dl = dlevels[static_cast<size_t>(it - stage_ids.begin())];
        if (d.empty()) {
          d = dl;
        } else {
          add_inplace(d, dl);
        }
      }
      RD_CHECK_MSG(!d.empty(), "no loss gradient reaches decoder stage " << s);
      d = stages_[static_cast<size_t>(3 - s)].backward(d);
    }
    return d;
  }

  void collect(nn::ParamRefs<T>& out) {
    for (auto& st : stages_) st.collect(out);
  }
  void collect_state(nn::StateMap<T>& out) {
    for (auto& st : stages_) st.collect_state(out);
  }

 private:
  DecoderSpec spec_;
  FamilyInfo info_;
  int min_stage_ = 1;
  std::vector<DecoderStage<T>> stages_;
};

// Index-wise shape equality of the two pyramids; raises naming the first
// offending stage.
template <typename T>
inline void check_mirror_shapes(const FeaturePyramid<T>& teacher,
                                const FeaturePyramid<T>& student) {
  if (teacher.size() != student.size()) {
    throw ShapeError("pyramid level count mismatch: teacher " +
                     std::to_string(teacher.size()) + " vs student " +
                     std::to_string(student.size()));
  }
  for (size_t i = 0; i < teacher.size(); ++i) {
    if (teacher.stage_ids[i] != student.stage_ids[i] ||
        !teacher.levels[i].same_shape(student.levels[i])) {
      throw ShapeError("stage " + std::to_string(teacher.stage_ids[i]) +
                       " shape mismatch: teacher " + teacher.levels[i].shape_str() +
                       " vs student " + student.levels[i].shape_str());
    }
  }
}

}  // namespace revdistill
