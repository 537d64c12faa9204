#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "revdistill/data/synthetic.hpp"
#include "revdistill/distill/trainer.hpp"
#include "revdistill/eval/report.hpp"

using namespace revdistill;
namespace fs = std::filesystem;

namespace {

BackboneSpec micro_spec() {
  BackboneSpec spec;
  spec.family = BackboneFamily::kResnet18;
  spec.input_resolution = 64;
  spec.weights_source = "seeded:3";
  return spec;
}

data::SynthConfig micro_data(int64_t n_train = 12, int64_t n_test = 8) {
  data::SynthConfig cfg;
  cfg.seed = 5;
  cfg.n_train = n_train;
  cfg.n_test = n_test;
  cfg.resolution = 64;
  return cfg;
}

TrainConfig micro_train(int64_t epochs = 3) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 4;
  cfg.seed = 11;
  cfg.checkpoint_every = 2;
  return cfg;
}

}  // namespace

TEST_CASE("training runs, logs, checkpoints and stays deterministic") {
  const fs::path out = fs::temp_directory_path() / "rd_train_smoke";
  fs::remove_all(out);
  auto [train_set, test_set] = data::synth_defect_corpus(micro_data());

  auto teacher = load_teacher<float>(micro_spec());
  ReverseDistillModel<float> model(teacher);
  model.init_params(micro_train().seed);
  std::vector<double> losses;
  ModelBundle bundle =
      train(model, train_set, micro_train(), ScoringConfig{}, out.string(),
            [&](const EpochStats& s) { losses.push_back(s.mean_loss); });

  REQUIRE(losses.size() == 3);
  for (double l : losses) CHECK(std::isfinite(l));
  CHECK(losses[2] < losses[0]);  // the optimization signal points downhill
  CHECK(bundle.loss_history == losses);
  CHECK(bundle.teacher_digest == teacher->digest());

  CHECK(fs::exists(out / "train_log.jsonl"));
  std::ifstream log(out / "train_log.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.contains("epoch"));
    CHECK(j.contains("mean_loss"));
    CHECK(j.contains("wallclock_s"));
    ++lines;
  }
  CHECK(lines == 3);
  CHECK(fs::exists(out / "ckpt_2.bundle"));
  CHECK(fs::exists(out / "ckpt_3.bundle"));
  CHECK(fs::exists(out / "model.bundle"));

  // Same seed, fresh model: identical loss curve.
  ReverseDistillModel<float> model2(teacher);
  model2.init_params(micro_train().seed);
  std::vector<double> losses2;
  train(model2, train_set, micro_train(), ScoringConfig{}, "",
        [&](const EpochStats& s) { losses2.push_back(s.mean_loss); });
  CHECK(losses2 == losses);

  fs::remove_all(out);
}

TEST_CASE("bundles round-trip and reproduce inference exactly") {
  const fs::path out = fs::temp_directory_path() / "rd_bundle_rt";
  fs::remove_all(out);
  fs::create_directories(out);
  auto [train_set, test_set] = data::synth_defect_corpus(micro_data(8, 4));

  auto teacher = load_teacher<float>(micro_spec());
  ReverseDistillModel<float> model(teacher);
  model.init_params(1);
  ModelBundle bundle = train(model, train_set, micro_train(2), ScoringConfig{}, "");
  bundle.save((out / "m.bundle").string());

  ModelBundle loaded = ModelBundle::load((out / "m.bundle").string());
  CHECK(loaded.teacher_digest == bundle.teacher_digest);
  CHECK(loaded.train_config.epochs == 2);
  CHECK(loaded.loss_history == bundle.loss_history);

  ReverseDistillModel<float> revived = loaded.instantiate();
  std::vector<size_t> idx = {0, 1, 2, 3};
  Tensor<float> batch = normalize_batch(data::stack_images(test_set, idx, 0, 4));
  auto a = forward_inference(model, batch);
  auto b = forward_inference(revived, batch);
  REQUIRE(a.maps.per_stage.size() == b.maps.per_stage.size());
  for (size_t k = 0; k < a.maps.per_stage.size(); ++k) {
    CHECK(a.maps.per_stage[k].vec() == b.maps.per_stage[k].vec());
  }

  // Drifted teacher spec: digest check trips.
  ModelBundle tampered = loaded;
  tampered.backbone.weights_source = "seeded:999";
  CHECK_THROWS_AS(tampered.instantiate(), ConfigError);
  fs::remove_all(out);
}

TEST_CASE("trainer input validation") {
  auto teacher = load_teacher<float>(micro_spec());
  ReverseDistillModel<float> model(teacher);
  model.init_params(1);

  data::DatasetSplit empty;
  CHECK_THROWS_AS(train(model, empty, micro_train(), ScoringConfig{}, ""), DataError);

  auto [train_set, test_set] = data::synth_defect_corpus(micro_data(4, 4));
  data::DatasetSplit poisoned = train_set;
  poisoned.samples.push_back(test_set.samples.front());
  bool has_anomalous = false;
  for (const auto& s : poisoned.samples) has_anomalous |= s.label == 1;
  REQUIRE(has_anomalous);
  CHECK_THROWS_AS(train(model, poisoned, micro_train(), ScoringConfig{}, ""), DataError);

  data::SynthConfig wrong_res = micro_data(4, 0);
  wrong_res.resolution = 32;
  auto [small_train, small_test] = data::synth_defect_corpus(wrong_res);
  CHECK_THROWS_AS(train(model, small_train, micro_train(), ScoringConfig{}, ""),
                  DataError);

  TrainConfig bad = micro_train();
  bad.device = "cuda";
  CHECK_THROWS_AS(train(model, train_set, bad, ScoringConfig{}, ""), ConfigError);
}

TEST_CASE("non-finite activations abort with the offending stage named") {
  auto teacher = load_teacher<float>(micro_spec());
  ReverseDistillModel<float> model(teacher);
  model.init_params(1);
  auto [train_set, test_set] = data::synth_defect_corpus(micro_data(4, 0));
  // An overflowing input: +inf survives ReLU and poisons the cosine.
  for (int64_t i = 0; i < 64; ++i) {
    train_set.samples[1].image[i] = std::numeric_limits<float>::infinity();
  }
  try {
    train(model, train_set, micro_train(1), ScoringConfig{}, "");
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("stage") != std::string::npos);
  }
}

TEST_CASE("evaluation produces a complete, deterministic report") {
  const fs::path out = fs::temp_directory_path() / "rd_eval_smoke";
  fs::remove_all(out);
  fs::create_directories(out);
  auto [train_set, test_set] = data::synth_defect_corpus(micro_data(10, 8));

  auto teacher = load_teacher<float>(micro_spec());
  ReverseDistillModel<float> model(teacher);
  model.init_params(1);
  train(model, train_set, micro_train(2), ScoringConfig{}, "");

  EvalConfig ecfg;
  ecfg.batch_size = 3;  // odd batch to exercise the tail
  eval::HeatmapOptions hm;
  hm.dir = (out / "heatmaps").string();
  eval::EvalReport report = eval::evaluate(model, test_set, ScoringConfig{}, ecfg, hm);

  CHECK(report.per_image.size() == test_set.size());
  CHECK(report.image_auroc >= 0.0);
  CHECK(report.image_auroc <= 1.0);
  CHECK(report.has_pixel_metrics);
  CHECK(report.pixel_auroc >= 0.0);
  CHECK(report.pro >= 0.0);
  CHECK(report.pro <= 1.0);
  CHECK(!report.per_class_auroc.empty());
  int64_t hist_total = 0;
  for (size_t i = 0; i < report.histogram.normal_counts.size(); ++i) {
    hist_total += report.histogram.normal_counts[i] + report.histogram.anomalous_counts[i];
  }
  CHECK(hist_total == static_cast<int64_t>(test_set.size()));

  // Artifacts.
  int pngs = 0, raws = 0;
  for (const auto& e : fs::directory_iterator(out / "heatmaps")) {
    const auto ext = e.path().extension().string();
    if (ext == ".png") ++pngs;
    if (ext == ".f32") ++raws;
  }
  CHECK(pngs == static_cast<int>(test_set.size()));
  CHECK(raws == static_cast<int>(test_set.size()));

  eval::write_report_text(report, (out / "report.txt").string());
  eval::write_per_image_csv(report, (out / "per_image.csv").string());
  eval::write_histogram_csv(report.histogram, (out / "hist.csv").string());
  eval::save_histogram_chart(report.histogram, (out / "hist.png").string());
  CHECK(fs::file_size(out / "report.txt") > 0);
  CHECK(fs::file_size(out / "per_image.csv") > 0);
  CHECK(fs::file_size(out / "hist.csv") > 0);
  CHECK(fs::file_size(out / "hist.png") > 0);

  // Determinism of evaluation.
  eval::EvalReport again = eval::evaluate(model, test_set, ScoringConfig{}, ecfg);
  CHECK(again.image_auroc == report.image_auroc);
  for (size_t i = 0; i < again.per_image.size(); ++i) {
    CHECK(again.per_image[i].detection == report.per_image[i].detection);
  }

  // Summing before or after smoothing is a presentation choice: reflect
  // padding makes the blur mass-preserving, so the two novelty readings
  // agree to rounding.
  ScoringConfig smooth_first;
  smooth_first.smooth_before_sum = true;
  eval::EvalReport alt = eval::evaluate(model, test_set, smooth_first, ecfg);
  CHECK(alt.per_image[0].detection == report.per_image[0].detection);
  CHECK(alt.per_image[0].novelty ==
        doctest::Approx(report.per_image[0].novelty).epsilon(1e-3));
  fs::remove_all(out);
}

TEST_CASE("perfect injected scores give perfect pixel metrics") {
  // Detection-only sanity of the metric wiring at pipeline level: feed maps
  // that equal the masks.
  auto [train_set, test_set] = data::synth_defect_corpus(micro_data(4, 6));
  std::vector<Tensor<float>> maps;
  std::vector<Tensor<uint8_t>> masks;
  for (const auto& s : test_set.samples) {
    Tensor<float> m({64, 64});
    for (int64_t i = 0; i < m.numel(); ++i) m[i] = s.mask.empty() ? 0.f : s.mask[i];
    maps.push_back(std::move(m));
    masks.push_back(s.mask.empty() ? Tensor<uint8_t>({64, 64}) : s.mask);
  }
  CHECK(eval::pixel_auroc(maps, masks) == 1.0);
  CHECK(eval::pro_score(maps, masks, 0.3) == doctest::Approx(1.0));
}
