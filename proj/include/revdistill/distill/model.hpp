#pragma once

#include <memory>
#include <utility>

#include "revdistill/decoder/decoder.hpp"
#include "revdistill/distill/anomaly.hpp"
#include "revdistill/ocbe/ocbe.hpp"

namespace revdistill {

// The full T-S arrangement: frozen encoder, trainable bottleneck, trainable
// decoder. Owns everything needed for a forward pass in either mode.
template <typename T>
class ReverseDistillModel {
 public:
  ReverseDistillModel(std::shared_ptr<const TeacherEncoder<T>> teacher,
                      OcbeVariant variant = OcbeVariant::kOceMff,
                      int64_t bottleneck_stride = 2)
      : teacher_(std::move(teacher)),
        ocbe_(teacher_->spec(), variant, teacher_, bottleneck_stride),
        decoder_(DecoderSpec::mirror_of(teacher_->spec())) {}

  void init_params(uint64_t seed) {
    Rng rng(seed);
    ocbe_.init_params(rng);
    decoder_.init_params(rng);
  }

  const TeacherEncoder<T>& teacher() const { return *teacher_; }
  std::shared_ptr<const TeacherEncoder<T>> teacher_ptr() const { return teacher_; }
  Ocbe<T>& ocbe() { return ocbe_; }
  StudentDecoder<T>& decoder() { return decoder_; }
  const BackboneSpec& spec() const { return teacher_->spec(); }

  struct Forward {
    FeaturePyramid<T> teacher_pyramid;
    FeaturePyramid<T> student_pyramid;
    BottleneckCode<T> code;
  };

  // One pass through the whole arrangement. `batch` must already be
  // normalized. In train mode the trainable halves keep caches for backward.
  Forward forward(const Tensor<T>& batch, nn::Mode mode,
                  bool allow_resolution_mismatch = false) {
    Forward out;
    out.teacher_pyramid = teacher_->extract(batch, allow_resolution_mismatch);
    Tensor<T> deep;
    if (ocbe_.config().variant != OcbeVariant::kOceMff) {
      // The no-fusion bottlenecks consume the deepest encoder feature.
      if (!out.teacher_pyramid.stage_ids.empty() &&
          out.teacher_pyramid.stage_ids.back() == 3) {
        deep = out.teacher_pyramid.levels.back();
      } else {
        deep = teacher_->stage3_feature(batch);
      }
    }
    out.code = ocbe_.forward(out.teacher_pyramid, deep, mode);
    out.student_pyramid = decoder_.forward(out.code.code, mode);
    check_mirror_shapes(out.teacher_pyramid, out.student_pyramid);
    return out;
  }

  // Backward from the distillation loss. Returns nothing: gradients land in
  // the trainable parameters.
  void backward(const Forward& fwd) {
    std::vector<Tensor<T>> dlevels =
        kd_loss_backward(fwd.teacher_pyramid, fwd.student_pyramid);
    Tensor<T> dcode = decoder_.backward(dlevels, fwd.student_pyramid.stage_ids);
    ocbe_.backward(dcode);
  }

  nn::ParamRefs<T> trainable_params() {
    nn::ParamRefs<T> out;
    ocbe_.collect(out);
    decoder_.collect(out);
    return out;
  }

  // Serializable state of the trainable halves (parameters + running stats).
  nn::StateMap<T> trainable_state() {
    nn::StateMap<T> out;
    ocbe_.collect_state(out);
    decoder_.collect_state(out);
    return out;
  }

 private:
  std::shared_ptr<const TeacherEncoder<T>> teacher_;
  Ocbe<T> ocbe_;
  StudentDecoder<T> decoder_;
};

// Inference product: both pyramids plus the per-stage anomaly maps.
template <typename T>
struct InferenceResult {
  FeaturePyramid<T> teacher_pyramid;
  FeaturePyramid<T> student_pyramid;
  AnomalyMapSet<T> maps;
};

template <typename T>
InferenceResult<T> forward_inference(ReverseDistillModel<T>& model, const Tensor<T>& batch,
                                     bool allow_resolution_mismatch = false) {
  auto fwd = model.forward(batch, nn::Mode::kInfer, allow_resolution_mismatch);
  InferenceResult<T> res;
  res.maps = anomaly_maps(fwd.teacher_pyramid, fwd.student_pyramid);
  res.teacher_pyramid = std::move(fwd.teacher_pyramid);
  res.student_pyramid = std::move(fwd.student_pyramid);
  return res;
}

}  // namespace revdistill
