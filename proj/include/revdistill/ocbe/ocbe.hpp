#pragma once

#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "revdistill/backbone/resnet.hpp"
#include "revdistill/nn/resblocks.hpp"

namespace revdistill {

// Bottleneck flavors used by the ablation study.
enum class OcbeVariant {
  kPre,     // frozen pretrained stage-4 block on the deep feature
  kOce,     // trainable embedding block on the deep feature, no fusion
  kOceMff,  // full module: multi-scale fusion + trainable embedding
};

inline std::string ocbe_variant_name(OcbeVariant v) {
  switch (v) {
    case OcbeVariant::kPre: return "pre";
    case OcbeVariant::kOce: return "oce";
    case OcbeVariant::kOceMff: return "oce_mff";
  }
  throw ConfigError("unknown ocbe variant");
}

inline OcbeVariant parse_ocbe_variant(const std::string& s) {
  if (s == "pre") return OcbeVariant::kPre;
  if (s == "oce") return OcbeVariant::kOce;
  if (s == "oce_mff") return OcbeVariant::kOceMff;
  throw ConfigError("unknown ocbe variant: '" + s + "'");
}

struct OcbeConfig {
  BackboneFamily family = BackboneFamily::kResnet18;
  int64_t fused_channels = 0;       // sum of used stage widths
  int64_t bottleneck_channels = 0;  // stage-4 width of the family
  int64_t bottleneck_stride = 2;    // downsample factor from stage-3 resolution
  OcbeVariant variant = OcbeVariant::kOceMff;
};

inline OcbeConfig make_ocbe_config(const BackboneSpec& spec,
                                   OcbeVariant variant = OcbeVariant::kOceMff,
                                   int64_t bottleneck_stride = 2) {
  const FamilyInfo info = family_info(spec.family);
  OcbeConfig cfg;
  cfg.family = spec.family;
  cfg.variant = variant;
  cfg.bottleneck_stride = bottleneck_stride;
  cfg.bottleneck_channels = info.stage_width[3];
  int64_t fused = 0;
  for (int64_t w : spec.stage_widths()) fused += w;
  cfg.fused_channels = variant == OcbeVariant::kOceMff ? fused : info.stage_width[2];
  if (variant == OcbeVariant::kPre && bottleneck_stride != 2) {
    throw ConfigError("the frozen pretrained bottleneck has a fixed stride of 2");
  }
  if (bottleneck_stride < 1) throw ConfigError("bottleneck_stride must be positive");
  return cfg;
}

// Element count of the bottleneck code for a given input resolution.
inline int64_t bottleneck_elements(const BackboneSpec& spec, int64_t bottleneck_stride = 2) {
  const int64_t h = stage_spatial(spec.input_resolution, 3) / bottleneck_stride;
  return family_info(spec.family).stage_width[3] * h * h;
}

inline int64_t stage_elements(const BackboneSpec& spec, int stage) {
  const int64_t h = stage_spatial(spec.input_resolution, stage);
  return family_info(spec.family).stage_width[static_cast<size_t>(stage - 1)] * h * h;
}

template <typename T>
struct BottleneckCode {
  Tensor<T> code;  // (B, C_b, H_b, W_b)
};

// Trainable bottleneck between the frozen encoder and the student decoder.
// Fusion: each used stage k is pushed down to the deepest stage resolution by
// (3 - k) stride-2 conv/BN/ReLU units, the results are channel-concatenated,
// and a 1x1 conv/BN/ReLU mixes them. Embedding: one stage-4 residual stage
// whose entry block accepts the fused width and halves the spatial size.
template <typename T>
class Ocbe {
 public:
  Ocbe() = default;

  Ocbe(const BackboneSpec& spec, OcbeVariant variant,
       std::shared_ptr<const TeacherEncoder<T>> teacher_for_pre = nullptr,
       int64_t bottleneck_stride = 2)
      : spec_(spec), cfg_(make_ocbe_config(spec, variant, bottleneck_stride)) {
    const FamilyInfo info = family_info(spec.family);
    if (variant == OcbeVariant::kPre) {
      RD_CHECK_MSG(teacher_for_pre != nullptr,
                   "frozen bottleneck variant needs the teacher");
      teacher_ = std::move(teacher_for_pre);
      return;
    }
    if (variant == OcbeVariant::kOceMff) {
      for (size_t i = 0; i < spec.stages_used.size(); ++i) {
        const int k = spec.stages_used[i];
        const int64_t ch = info.stage_width[static_cast<size_t>(k - 1)];
        std::vector<nn::ConvBnRelu<T>> chain;
        for (int j = 0; j < 3 - k; ++j) {
          chain.emplace_back("ocbe.mff.s" + std::to_string(k) + ".d" + std::to_string(j),
                             ch, ch, 3, 2, 1);
        }
        down_chains_.push_back(std::move(chain));
      }
      fuse_ = nn::ConvBnRelu<T>("ocbe.mff.fuse", cfg_.fused_channels, cfg_.fused_channels,
                                1, 1, 0);
    }
    // Embedding stage: family stage-4 blocks, entry block adapts the input
    // width and applies the bottleneck stride.
    const int64_t planes = info.stage_width[3] / (info.bottleneck_blocks ? 4 : 1);
    int64_t ch = cfg_.fused_channels;
    for (int64_t b = 0; b < info.blocks[3]; ++b) {
      const std::string bname = "ocbe.oce." + std::to_string(b);
      const int64_t s = b == 0 ? cfg_.bottleneck_stride : 1;
      if (info.bottleneck_blocks) {
        oce_bottleneck_.emplace_back(bname, ch, planes, s, info.base_width);
      } else {
        oce_basic_.emplace_back(bname, ch, planes, s);
      }
      ch = info.stage_width[3];
    }
  }

  const OcbeConfig& config() const { return cfg_; }

  void init_params(Rng& rng) {
    for (auto& chain : down_chains_) {
      for (auto& unit : chain) unit.init_params(rng);
    }
    if (cfg_.variant == OcbeVariant::kOceMff) fuse_.init_params(rng);
    for (auto& blk : oce_basic_) blk.init_params(rng);
    for (auto& blk : oce_bottleneck_) blk.init_params(rng);
  }

  // Aligns and concatenates the used teacher levels, then mixes with the 1x1
  // unit. Only valid for the full variant.
  Tensor<T> mff_fuse(const FeaturePyramid<T>& pyramid, nn::Mode mode) {
    RD_CHECK_MSG(cfg_.variant == OcbeVariant::kOceMff, "fusion disabled in this variant");
    pyramid.check_consistent();
    RD_CHECK_MSG(pyramid.stage_ids == spec_.stages_used,
                 "pyramid stages do not match the configured stages");
    const int64_t B = pyramid.levels[0].dim(0);
    // All levels align to the stage-3 spatial size.
    const int64_t input_res = pyramid.levels[0].dim(2) << (pyramid.stage_ids[0] + 1);
    const int64_t target_h = stage_spatial(input_res, 3);
    std::vector<Tensor<T>> aligned;
    for (size_t i = 0; i < pyramid.levels.size(); ++i) {
      Tensor<T> x = pyramid.levels[i];
      for (auto& unit : down_chains_[i]) x = unit.forward(x, mode);
      RD_CHECK_MSG(x.dim(2) == target_h && x.dim(3) == target_h,
                   "fusion alignment failed for stage " << pyramid.stage_ids[i] << ": "
                                                        << x.shape_str());
      aligned.push_back(std::move(x));
    }
    int64_t total_c = 0;
    for (const auto& t : aligned) total_c += t.dim(1);
    RD_CHECK(total_c == cfg_.fused_channels);
    Tensor<T> cat({B, total_c, target_h, target_h});
    concat_channels(aligned, cat);
    concat_shapes_.clear();
    for (const auto& t : aligned) concat_shapes_.push_back(t.shape());
    return fuse_.forward(cat, mode);
  }

  // Condenses the fused (or deep) feature into the bottleneck code.
  BottleneckCode<T> oce_embed(const Tensor<T>& fused, nn::Mode mode) {
    if (cfg_.variant == OcbeVariant::kPre) {
      return {teacher_->run_stage(4, fused)};
    }
    Tensor<T> x = fused;
    for (auto& blk : oce_basic_) x = blk.forward(x, mode);
    for (auto& blk : oce_bottleneck_) x = blk.forward(x, mode);
    return {std::move(x)};
  }

  // Full module: pyramid (and/or deep feature) -> code. `deep` is the
  // stage-3 feature used by the no-fusion variants.
  BottleneckCode<T> forward(const FeaturePyramid<T>& pyramid, const Tensor<T>& deep,
                            nn::Mode mode) {
    if (cfg_.variant == OcbeVariant::kOceMff) {
      return oce_embed(mff_fuse(pyramid, mode), mode);
    }
    RD_CHECK_MSG(!deep.empty(), "deep feature required for this bottleneck variant");
    return oce_embed(deep, mode);
  }

  // Backpropagates the code gradient into the trainable parameters. Gradients
  // never flow past the module inputs (the encoder is frozen).
  void backward(const Tensor<T>& dcode) {
    if (cfg_.variant == OcbeVariant::kPre) return;  // nothing trainable
    Tensor<T> d = dcode;
    const bool has_mff = cfg_.variant == OcbeVariant::kOceMff;
    for (size_t i = oce_bottleneck_.size(); i-- > 0;) {
      const bool first = i == 0 && oce_basic_.empty();
      d = oce_bottleneck_[i].backward(d, !first || has_mff);
    }
    for (size_t i = oce_basic_.size(); i-- > 0;) {
      const bool first = i == 0;
      d = oce_basic_[i].backward(d, !first || has_mff);
    }
    if (!has_mff) return;
    d = fuse_.backward(d);
    // Split the concatenated gradient back per stage and run each chain.
    int64_t c_off = 0;
    for (size_t i = 0; i < concat_shapes_.size(); ++i) {
      const auto& shp = concat_shapes_[i];
      Tensor<T> dpart(shp);
      split_channels(d, c_off, dpart);
      c_off += shp[1];
      auto& chain = down_chains_[i];
      for (size_t j = chain.size(); j-- > 0;) {
        dpart = chain[j].backward(dpart, j != 0);
      }
    }
  }

  void collect(nn::ParamRefs<T>& out) {
    if (cfg_.variant == OcbeVariant::kPre) return;
    for (auto& chain : down_chains_) {
      for (auto& unit : chain) unit.collect(out);
    }
    if (cfg_.variant == OcbeVariant::kOceMff) fuse_.collect(out);
    for (auto& blk : oce_basic_) blk.collect(out);
    for (auto& blk : oce_bottleneck_) blk.collect(out);
  }

  void collect_state(nn::StateMap<T>& out) {
    if (cfg_.variant == OcbeVariant::kPre) return;
    for (auto& chain : down_chains_) {
      for (auto& unit : chain) unit.collect_state(out);
    }
    if (cfg_.variant == OcbeVariant::kOceMff) fuse_.collect_state(out);
    for (auto& blk : oce_basic_) blk.collect_state(out);
    for (auto& blk : oce_bottleneck_) blk.collect_state(out);
  }

 private:
  static void concat_channels(const std::vector<Tensor<T>>& parts, Tensor<T>& out) {
    const int64_t B = out.dim(0), HW = out.dim(2) * out.dim(3);
    int64_t c_off = 0;
    for (const auto& p : parts) {
      const int64_t C = p.dim(1);
      for (int64_t b = 0; b < B; ++b) {
        std::memcpy(out.data() + ((b * out.dim(1)) + c_off) * HW,
                    p.data() + b * C * HW, static_cast<size_t>(C * HW) * sizeof(T));
      }
      c_off += C;
    }
  }

  static void split_channels(const Tensor<T>& cat, int64_t c_off, Tensor<T>& part) {
    const int64_t B = part.dim(0), C = part.dim(1), HW = part.dim(2) * part.dim(3);
    for (int64_t b = 0; b < B; ++b) {
      std::memcpy(part.data() + b * C * HW,
                  cat.data() + (b * cat.dim(1) + c_off) * HW,
                  static_cast<size_t>(C * HW) * sizeof(T));
    }
  }

  BackboneSpec spec_;
  OcbeConfig cfg_;
  std::shared_ptr<const TeacherEncoder<T>> teacher_;
  std::vector<std::vector<nn::ConvBnRelu<T>>> down_chains_;
  nn::ConvBnRelu<T> fuse_;
  std::vector<nn::BasicBlock<T>> oce_basic_;
  std::vector<nn::BottleneckBlock<T>> oce_bottleneck_;
  std::vector<std::vector<int64_t>> concat_shapes_;
};

}  // namespace revdistill
