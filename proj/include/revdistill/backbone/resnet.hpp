#pragma once

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "revdistill/backbone/family.hpp"
#include "revdistill/io/tensor_file.hpp"
#include "revdistill/nn/resblocks.hpp"

namespace revdistill {

inline std::string weights_dir() {
  if (const char* env = std::getenv("REVDISTILL_WEIGHTS_DIR"); env && *env) return env;
  if (const char* home = std::getenv("HOME"); home && *home) {
    return std::string(home) + "/.cache/revdistill/weights";
  }
  return ".revdistill/weights";
}

// One residual stage: a strided entry block followed by identity blocks.
template <typename T>
class EncoderStage {
 public:
  EncoderStage() = default;
  EncoderStage(const std::string& name, const FamilyInfo& info, int stage, int64_t in_ch,
               int64_t stride) {
    const int64_t planes = info.stage_width[static_cast<size_t>(stage - 1)] /
                           (info.bottleneck_blocks ? 4 : 1);
    const int64_t n = info.blocks[static_cast<size_t>(stage - 1)];
    int64_t ch = in_ch;
    for (int64_t b = 0; b < n; ++b) {
      const std::string bname = name + "." + std::to_string(b);
      const int64_t s = b == 0 ? stride : 1;
      if (info.bottleneck_blocks) {
        bottleneck_.emplace_back(bname, ch, planes, s, info.base_width);
      } else {
        basic_.emplace_back(bname, ch, planes, s);
      }
      ch = info.stage_width[static_cast<size_t>(stage - 1)];
    }
  }

  Tensor<T> infer(const Tensor<T>& x) const {
    Tensor<T> out = x;
    for (const auto& blk : basic_) out = blk.infer(out);
    for (const auto& blk : bottleneck_) out = blk.infer(out);
    return out;
  }

  void collect_state(nn::StateMap<T>& out) {
    for (auto& blk : basic_) blk.collect_state(out);
    for (auto& blk : bottleneck_) blk.collect_state(out);
  }

  void init_params(Rng& rng) {
    for (auto& blk : basic_) blk.init_params(rng);
    for (auto& blk : bottleneck_) blk.init_params(rng);
  }

 private:
  std::vector<nn::BasicBlock<T>> basic_;
  std::vector<nn::BottleneckBlock<T>> bottleneck_;
};

// Frozen feature extractor. Parameters are set once at load time and never
// touched again; every forward runs in inference mode (batch-norm uses the
// stored running statistics), so extraction is a pure function of the input
// and safe to call concurrently.
template <typename T>
class TeacherEncoder {
 public:
  explicit TeacherEncoder(const BackboneSpec& spec)
      : spec_(spec),
        info_(family_info(spec.family)),
        conv1_("conv1", 3, info_.stem_width, 7, 2, 3),
        bn1_("bn1", info_.stem_width) {
    spec_.validate();
    int64_t ch = info_.stem_width;
    for (int s = 1; s <= 4; ++s) {
      stages_.push_back(EncoderStage<T>("layer" + std::to_string(s), info_, s, ch,
                                        s == 1 ? 1 : 2));
      ch = info_.stage_width[static_cast<size_t>(s - 1)];
    }
  }

  const BackboneSpec& spec() const { return spec_; }
  const FamilyInfo& info() const { return info_; }
  const std::string& digest() const { return digest_; }

  // Fingerprint of the current parameter values (including normalization
  // statistics). Equal to digest() for as long as the teacher stays frozen.
  std::string compute_digest() const {
    nn::StateMap<T> state;
    const_cast<TeacherEncoder*>(this)->collect_state(state);
    return io::digest_state(state);
  }

  void init_seeded(uint64_t seed) {
    Rng rng(seed);
    conv1_.init_params(rng);
    for (auto& st : stages_) st.init_params(rng);
    digest_ = compute_digest();
  }

  void load_tensor_file(const io::TensorFile& file) {
    nn::StateMap<T> state;
    collect_state(state);
    for (auto& [name, dst] : state) {
      auto it = file.tensors.find(name);
      if (it == file.tensors.end()) {
        throw ConfigError("weight file is missing tensor '" + name + "'");
      }
      if (it->second.shape() != dst->shape()) {
        throw ConfigError("weight tensor '" + name + "' has shape " +
                          it->second.shape_str() + ", expected " + dst->shape_str());
      }
      if constexpr (std::is_same_v<T, float>) {
        *dst = it->second;
      } else {
        *dst = it->second.template cast<T>();
      }
    }
    digest_ = compute_digest();
  }

  // Multi-scale features for the configured stages. Input is a normalized
  // (B,3,R,R) batch.
  FeaturePyramid<T> extract(const Tensor<T>& batch,
                            bool allow_resolution_mismatch = false) const {
    if (batch.ndim() != 4 || batch.dim(1) != 3) {
      throw ShapeError("expected (B,3,R,R) input, got " + batch.shape_str());
    }
    if (batch.dim(2) != batch.dim(3)) {
      throw ShapeError("input must be square, got " + batch.shape_str());
    }
    if (!allow_resolution_mismatch && batch.dim(2) != spec_.input_resolution) {
      throw ShapeError("input resolution " + std::to_string(batch.dim(2)) +
                       " does not match configured " +
                       std::to_string(spec_.input_resolution));
    }
    if (batch.dim(2) % 32 != 0) {
      throw ShapeError("input resolution must be a multiple of 32");
    }
    const int deepest = spec_.stages_used.back();
    FeaturePyramid<T> pyr;
    pyr.source = PyramidSource::kTeacher;
    Tensor<T> x = nn::relu_fwd(bn1_.infer(conv1_.infer(batch)));
    x = nn::maxpool3x3s2_fwd(x);
    for (int s = 1; s <= deepest; ++s) {
      x = stages_[static_cast<size_t>(s - 1)].infer(x);
      if (std::find(spec_.stages_used.begin(), spec_.stages_used.end(), s) !=
          spec_.stages_used.end()) {
        pyr.levels.push_back(x);
        pyr.stage_ids.push_back(s);
      }
    }
    return pyr;
  }

  // Forward through a single stage; used by the frozen-bottleneck variant
  // (stage 4 applied to the stage-3 feature).
  Tensor<T> run_stage(int stage, const Tensor<T>& x) const {
    RD_CHECK(stage >= 1 && stage <= 4);
    return stages_[static_cast<size_t>(stage - 1)].infer(x);
  }

  // Runs the stem and stages 1..3 regardless of stages_used.
  Tensor<T> stage3_feature(const Tensor<T>& batch) const {
    Tensor<T> x = nn::relu_fwd(bn1_.infer(conv1_.infer(batch)));
    x = nn::maxpool3x3s2_fwd(x);
    for (int s = 1; s <= 3; ++s) x = stages_[static_cast<size_t>(s - 1)].infer(x);
    return x;
  }

  void collect_state(nn::StateMap<T>& out) {
    conv1_.collect_state(out);
    bn1_.collect_state(out);
    for (auto& st : stages_) st.collect_state(out);
  }

 private:
  BackboneSpec spec_;
  FamilyInfo info_;
  nn::Conv2d<T> conv1_;
  nn::BatchNorm2d<T> bn1_;
  std::vector<EncoderStage<T>> stages_;
  std::string digest_;
};

// Resolves weights_source:
//   "seeded:<u64>"  deterministic generated parameters (self-contained runs)
//   "file:<path>"   explicit container path
//   "<tag>"         <weights_dir>/<family>.<tag...>.bin, tag may be a digest
//                   prefix
template <typename T>
std::shared_ptr<const TeacherEncoder<T>> load_teacher(const BackboneSpec& spec) {
  auto teacher = std::make_shared<TeacherEncoder<T>>(spec);
  const std::string& src = spec.weights_source;
  if (src.rfind("seeded:", 0) == 0) {
    uint64_t seed = 0;
    try {
      seed = std::stoull(src.substr(7));
    } catch (const std::exception&) {
      throw ConfigError("bad seeded weights source: '" + src + "'");
    }
    teacher->init_seeded(seed);
    return teacher;
  }
  std::string path;
  if (src.rfind("file:", 0) == 0) {
    path = src.substr(5);
    if (!std::filesystem::exists(path)) {
      throw ConfigError("weight file not found: " + path);
    }
  } else {
    const std::string dir = weights_dir();
    const std::string prefix = family_name(spec.family) + "." + src;
    std::vector<std::string> matches;
    std::error_code ec;
    for (const auto& e : std::filesystem::directory_iterator(dir, ec)) {
      const std::string fname = e.path().filename().string();
      if (fname.rfind(prefix, 0) == 0 && fname.size() >= 4 &&
          fname.substr(fname.size() - 4) == ".bin") {
        matches.push_back(e.path().string());
      }
    }
    if (matches.empty()) {
      throw ConfigError("no weight file matching '" + prefix + "*.bin' in " + dir +
                        " (set REVDISTILL_WEIGHTS_DIR or use weights_source "
                        "'seeded:<n>' / 'file:<path>')");
    }
    if (matches.size() > 1) {
      throw ConfigError("ambiguous weights_source '" + src + "': " +
                        std::to_string(matches.size()) + " files match in " + dir);
    }
    path = matches[0];
  }
  teacher->load_tensor_file(io::TensorFile::read(path));
  return teacher;
}

}  // namespace revdistill
