#pragma once

#include <string>

#include <json.hpp>

#include "revdistill/backbone/family.hpp"
#include "revdistill/ocbe/ocbe.hpp"

namespace revdistill {

struct TrainConfig {
  double learning_rate = 0.005;
  double beta1 = 0.5;
  double beta2 = 0.999;
  int64_t epochs = 200;
  int64_t batch_size = 16;
  uint64_t seed = 0;
  std::string device = "cpu";
  int64_t checkpoint_every = 50;

  void validate() const {
    if (learning_rate <= 0) throw ConfigError("learning_rate must be positive");
    if (!(beta1 > 0 && beta1 < 1 && beta2 > 0 && beta2 < 1)) {
      throw ConfigError("adam betas must lie in (0,1)");
    }
    if (epochs <= 0 || batch_size <= 0) {
      throw ConfigError("epochs and batch_size must be positive");
    }
    if (checkpoint_every <= 0) throw ConfigError("checkpoint_every must be positive");
    if (device != "cpu") {
      throw ConfigError("unsupported device '" + device + "' (this build is CPU-only)");
    }
  }
};

struct ScoringConfig {
  double sigma = 4.0;
  bool smooth_before_sum = false;  // novelty score integrates the raw sum by default
};

struct EvalConfig {
  double pro_fpr_limit = 0.3;
  int histogram_bins = 50;
  int64_t max_thresholds = 5000;
  int64_t batch_size = 16;
};

struct DataConfig {
  std::string dataset = "synthetic";  // synthetic | mvtec | oneclass_idx | oneclass_folder
  std::string root;
  std::string category;       // mvtec category
  std::string normal_class;   // one-class protocols (numeric for idx)
  int64_t resolution = 0;     // 0: inherit backbone input_resolution
  int64_t n_train = 200;      // synthetic
  int64_t n_test = 100;       // synthetic
  double test_anomaly_ratio = 0.5;
  uint64_t synth_seed = 0;
};

struct RunConfig {
  std::string run_name = "run";
  std::string out_dir;  // default: runs/<run_name>
  BackboneSpec backbone;
  OcbeVariant variant = OcbeVariant::kOceMff;
  TrainConfig train;
  DataConfig data;
  ScoringConfig scoring;
  EvalConfig eval;

  std::string resolved_out_dir() const {
    return out_dir.empty() ? "runs/" + run_name : out_dir;
  }
  int64_t data_resolution() const {
    return data.resolution > 0 ? data.resolution : backbone.input_resolution;
  }
};

// ---- JSON round-trips (lossless; the on-disk config is the same object) ----

inline void to_json(nlohmann::json& j, const BackboneSpec& s) {
  j = {{"family", family_name(s.family)},
       {"input_resolution", s.input_resolution},
       {"stages_used", s.stages_used},
       {"weights_source", s.weights_source}};
}

inline void from_json(const nlohmann::json& j, BackboneSpec& s) {
  s.family = parse_family(j.value("family", "resnet18"));
  s.input_resolution = j.value("input_resolution", int64_t{256});
  s.stages_used = j.value("stages_used", std::vector<int>{1, 2, 3});
  s.weights_source = j.value("weights_source", std::string("seeded:0"));
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"learning_rate", c.learning_rate},
       {"adam_betas", {c.beta1, c.beta2}},
       {"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"seed", c.seed},
       {"device", c.device},
       {"checkpoint_every", c.checkpoint_every}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.learning_rate = j.value("learning_rate", 0.005);
  if (j.contains("adam_betas")) {
    c.beta1 = j["adam_betas"][0].get<double>();
    c.beta2 = j["adam_betas"][1].get<double>();
  }
  c.epochs = j.value("epochs", int64_t{200});
  c.batch_size = j.value("batch_size", int64_t{16});
  c.seed = j.value("seed", uint64_t{0});
  c.device = j.value("device", std::string("cpu"));
  c.checkpoint_every = j.value("checkpoint_every", int64_t{50});
}

inline void to_json(nlohmann::json& j, const ScoringConfig& c) {
  j = {{"sigma", c.sigma}, {"smooth_before_sum", c.smooth_before_sum}};
}

inline void from_json(const nlohmann::json& j, ScoringConfig& c) {
  c.sigma = j.value("sigma", 4.0);
  c.smooth_before_sum = j.value("smooth_before_sum", false);
}

inline void to_json(nlohmann::json& j, const EvalConfig& c) {
  j = {{"pro_fpr_limit", c.pro_fpr_limit},
       {"histogram_bins", c.histogram_bins},
       {"max_thresholds", c.max_thresholds},
       {"batch_size", c.batch_size}};
}

inline void from_json(const nlohmann::json& j, EvalConfig& c) {
  c.pro_fpr_limit = j.value("pro_fpr_limit", 0.3);
  c.histogram_bins = j.value("histogram_bins", 50);
  c.max_thresholds = j.value("max_thresholds", int64_t{5000});
  c.batch_size = j.value("batch_size", int64_t{16});
}

inline void to_json(nlohmann::json& j, const DataConfig& c) {
  j = {{"dataset", c.dataset},
       {"root", c.root},
       {"category", c.category},
       {"normal_class", c.normal_class},
       {"resolution", c.resolution},
       {"n_train", c.n_train},
       {"n_test", c.n_test},
       {"test_anomaly_ratio", c.test_anomaly_ratio},
       {"synth_seed", c.synth_seed}};
}

inline void from_json(const nlohmann::json& j, DataConfig& c) {
  c.dataset = j.value("dataset", std::string("synthetic"));
  c.root = j.value("root", std::string());
  c.category = j.value("category", std::string());
  c.normal_class = j.value("normal_class", std::string());
  c.resolution = j.value("resolution", int64_t{0});
  c.n_train = j.value("n_train", int64_t{200});
  c.n_test = j.value("n_test", int64_t{100});
  c.test_anomaly_ratio = j.value("test_anomaly_ratio", 0.5);
  c.synth_seed = j.value("synth_seed", uint64_t{0});
}

inline void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"run_name", c.run_name},   {"out_dir", c.out_dir},
       {"backbone", c.backbone},   {"ocbe_variant", ocbe_variant_name(c.variant)},
       {"train", c.train},         {"data", c.data},
       {"scoring", c.scoring},     {"eval", c.eval}};
}

inline void from_json(const nlohmann::json& j, RunConfig& c) {
  c.run_name = j.value("run_name", std::string("run"));
  c.out_dir = j.value("out_dir", std::string());
  if (j.contains("backbone")) c.backbone = j["backbone"].get<BackboneSpec>();
  c.variant = parse_ocbe_variant(j.value("ocbe_variant", std::string("oce_mff")));
  if (j.contains("train")) c.train = j["train"].get<TrainConfig>();
  if (j.contains("data")) c.data = j["data"].get<DataConfig>();
  if (j.contains("scoring")) c.scoring = j["scoring"].get<ScoringConfig>();
  if (j.contains("eval")) c.eval = j["eval"].get<EvalConfig>();
}

}  // namespace revdistill
