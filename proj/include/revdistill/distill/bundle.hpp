#pragma once

#include <memory>
#include <string>
#include <utility>

#include "revdistill/config/config.hpp"
#include "revdistill/distill/model.hpp"
#include "revdistill/io/tensor_file.hpp"
#include "revdistill/version.hpp"

namespace revdistill {

// Everything needed to re-run inference: the frozen encoder's spec and
// digest, the trainable parameters, and the run record. Serialized as one
// tensor container whose metadata section is human-readable JSON.
struct ModelBundle {
  BackboneSpec backbone;
  OcbeVariant variant = OcbeVariant::kOceMff;
  TrainConfig train_config;
  ScoringConfig scoring;
  std::string teacher_digest;
  std::vector<double> loss_history;
  nlohmann::json extra;  // run name, code version, timestamps
  std::map<std::string, Tensor<float>> tensors;

  void save(const std::string& path) const {
    io::TensorFile f;
    f.meta = {{"kind", "revdistill.bundle"},
              {"version", kVersion},
              {"backbone", backbone},
              {"ocbe_variant", ocbe_variant_name(variant)},
              {"train", train_config},
              {"scoring", scoring},
              {"teacher_digest", teacher_digest},
              {"loss_history", loss_history},
              {"extra", extra}};
    f.tensors = tensors;
    f.write(path);
  }

  static ModelBundle load(const std::string& path) {
    io::TensorFile f = io::TensorFile::read(path);
    if (f.meta.value("kind", "") != "revdistill.bundle") {
      throw DataError("not a model bundle: " + path);
    }
    ModelBundle b;
    b.backbone = f.meta.at("backbone").get<BackboneSpec>();
    b.variant = parse_ocbe_variant(f.meta.value("ocbe_variant", "oce_mff"));
    if (f.meta.contains("train")) b.train_config = f.meta["train"].get<TrainConfig>();
    if (f.meta.contains("scoring")) b.scoring = f.meta["scoring"].get<ScoringConfig>();
    b.teacher_digest = f.meta.value("teacher_digest", "");
    b.loss_history = f.meta.value("loss_history", std::vector<double>{});
    b.extra = f.meta.value("extra", nlohmann::json::object());
    b.tensors = std::move(f.tensors);
    return b;
  }

  // Snapshot of a live model.
  static ModelBundle of(ReverseDistillModel<float>& model, const TrainConfig& cfg,
                        const ScoringConfig& scoring, std::vector<double> loss_history,
                        nlohmann::json extra = {}) {
    ModelBundle b;
    b.backbone = model.spec();
    b.variant = model.ocbe().config().variant;
    b.train_config = cfg;
    b.scoring = scoring;
    b.teacher_digest = model.teacher().digest();
    b.loss_history = std::move(loss_history);
    b.extra = std::move(extra);
    for (auto& [name, tensor] : model.trainable_state()) b.tensors[name] = *tensor;
    return b;
  }

  // Reconstructs a runnable model: loads the frozen encoder from the spec,
  // verifies it is bit-identical to the one this bundle was trained against,
  // and installs the trainable tensors.
  ReverseDistillModel<float> instantiate() const {
    auto teacher = load_teacher<float>(backbone);
    if (!teacher_digest.empty() && teacher->digest() != teacher_digest) {
      throw ConfigError(
          "teacher parameters drifted: bundle was trained against digest " +
          teacher_digest.substr(0, 12) + "..., resolved weights have " +
          teacher->digest().substr(0, 12) + "...");
    }
    ReverseDistillModel<float> model(teacher, variant);
    auto state = model.trainable_state();
    for (auto& [name, dst] : state) {
      auto it = tensors.find(name);
      if (it == tensors.end()) throw DataError("bundle is missing tensor '" + name + "'");
      if (it->second.shape() != dst->shape()) {
        throw DataError("bundle tensor '" + name + "' has shape " +
                        it->second.shape_str() + ", expected " + dst->shape_str());
      }
      *dst = it->second;
    }
    return model;
  }
};

}  // namespace revdistill
