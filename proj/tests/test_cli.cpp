#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "revdistill/config/config.hpp"

namespace fs = std::filesystem;
using namespace revdistill;

namespace {

std::string g_cli;
fs::path g_work;

int run(const std::string& args) {
  const std::string cmd = g_cli + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

}  // namespace

TEST_CASE("run config round-trips through json losslessly") {
  RunConfig rc;
  rc.run_name = "roundtrip";
  rc.backbone.family = BackboneFamily::kWideResnet50;
  rc.backbone.input_resolution = 128;
  rc.backbone.stages_used = {2, 3};
  rc.backbone.weights_source = "seeded:9";
  rc.variant = OcbeVariant::kOce;
  rc.train.learning_rate = 0.01;
  rc.train.epochs = 7;
  rc.train.seed = 42;
  rc.data.dataset = "mvtec";
  rc.data.root = "/data";
  rc.data.category = "bottle";
  rc.scoring.sigma = 2.5;
  rc.scoring.smooth_before_sum = true;
  rc.eval.pro_fpr_limit = 0.25;

  nlohmann::json j = rc;
  RunConfig back = j.get<RunConfig>();
  nlohmann::json j2 = back;
  CHECK(j == j2);
  CHECK(back.backbone.stages_used == rc.backbone.stages_used);
  CHECK(back.train.learning_rate == rc.train.learning_rate);
  CHECK(back.scoring.smooth_before_sum == rc.scoring.smooth_before_sum);
}

TEST_CASE("train honors the config file with flag overrides") {
  const fs::path dir = g_work / "cfg_run";
  fs::remove_all(dir);
  fs::create_directories(dir);

  RunConfig rc;
  rc.run_name = "cfg";
  rc.out_dir = (dir / "out").string();
  rc.backbone.input_resolution = 64;
  rc.backbone.weights_source = "seeded:5";
  rc.train.epochs = 1;
  rc.train.batch_size = 4;
  rc.data.dataset = "synthetic";
  rc.data.n_train = 6;
  rc.data.n_test = 4;
  {
    std::ofstream os(dir / "cfg.json");
    os << nlohmann::json(rc).dump(2);
  }

  // --epochs overrides the file's value.
  REQUIRE(run("train --config " + (dir / "cfg.json").string() + " --epochs 2") == 0);
  std::ifstream resolved(dir / "out" / "resolved_config.json");
  REQUIRE(resolved.good());
  nlohmann::json j;
  resolved >> j;
  CHECK(j["train"]["epochs"].get<int>() == 2);
  CHECK(j.contains("teacher_digest"));
  CHECK(j.contains("version"));

  std::ifstream log(dir / "out" / "train_log.jsonl");
  int lines = 0;
  std::string line;
  while (std::getline(log, line)) ++lines;
  CHECK(lines == 2);
  CHECK(fs::exists(dir / "out" / "model.bundle"));
}

TEST_CASE("eval and infer work against a trained bundle") {
  const fs::path dir = g_work / "cfg_run";  // reuse the bundle from the previous case
  const std::string bundle = (dir / "out" / "model.bundle").string();
  REQUIRE(fs::exists(bundle));

  const fs::path eval_out = g_work / "eval_out";
  fs::remove_all(eval_out);
  REQUIRE(run("eval --bundle " + bundle +
              " --dataset synthetic --n-train 6 --n-test 4 --data-resolution 64"
              " --out-dir " + eval_out.string() + " --heatmaps --histogram") == 0);
  CHECK(fs::exists(eval_out / "report.txt"));
  CHECK(fs::exists(eval_out / "per_image.csv"));
  CHECK(fs::exists(eval_out / "histogram.csv"));
  CHECK(fs::exists(eval_out / "histogram.png"));
  std::ifstream rep(eval_out / "report.txt");
  std::string text((std::istreambuf_iterator<char>(rep)), std::istreambuf_iterator<char>());
  CHECK(text.find("image_auroc") != std::string::npos);
  CHECK(text.find("pro") != std::string::npos);
  int f32 = 0;
  for (const auto& e : fs::directory_iterator(eval_out / "heatmaps")) {
    if (e.path().extension() == ".f32") ++f32;
  }
  CHECK(f32 == 4);

  // Materialize a corpus, score one of its images, visualize the raw map.
  const fs::path corpus = g_work / "corpus";
  fs::remove_all(corpus);
  REQUIRE(run("train --dataset synthetic --n-train 2 --n-test 2 --resolution 64 "
              "--weights seeded:5 --epochs 1 --batch-size 2 --out-dir " +
              (g_work / "mat_run").string() + " --materialize " + corpus.string()) == 0);
  std::string some_image;
  for (const auto& e :
       fs::recursive_directory_iterator(corpus / "synthetic" / "test")) {
    if (e.path().extension() == ".png") {
      some_image = e.path().string();
      break;
    }
  }
  REQUIRE(!some_image.empty());
  const fs::path infer_out = g_work / "infer_out";
  REQUIRE(run("infer --bundle " + bundle + " --out-dir " + infer_out.string() + " " +
              some_image) == 0);
  std::string raw_map;
  for (const auto& e : fs::directory_iterator(infer_out)) {
    if (e.path().extension() == ".f32") raw_map = e.path().string();
  }
  REQUIRE(!raw_map.empty());
  REQUIRE(run("visualize --map " + raw_map + " --image " + some_image + " --out " +
              (g_work / "viz.png").string()) == 0);
  CHECK(fs::exists(g_work / "viz.png"));
}

TEST_CASE("exit codes follow the scripting contract") {
  CHECK(run("train --dataset mvtec --root /nonexistent") == 1);   // missing --category
  CHECK(run("train --backbone vgg") == 1);                        // unknown family
  CHECK(run("train --dataset nosuch") == 1);                      // unknown dataset
  CHECK(run("eval --bundle /no/such.bundle --dataset synthetic") == 2);
  CHECK(run("ablate --axis bogus") == 1);
  CHECK(run("") == 1);  // a subcommand is required
  const std::string bundle = (g_work / "cfg_run" / "out" / "model.bundle").string();
  CHECK(run("infer --bundle " + bundle + " /no/such/image.png") == 2);
  CHECK(run("train --device cuda --dataset synthetic --n-train 2 --n-test 0 "
            "--resolution 64") == 1);
}

TEST_CASE("tiny ablation over the bottleneck axis") {
  const fs::path out = g_work / "ablate_out";
  fs::remove_all(out);
  REQUIRE(run("ablate --axis ocbe --dataset synthetic --n-train 4 --n-test 4 "
              "--resolution 64 --weights seeded:5 --epochs 1 --batch-size 4 "
              "--out-dir " + out.string()) == 0);
  std::ifstream csv(out / "ablate_ocbe.csv");
  REQUIRE(csv.good());
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(csv, line)) lines.push_back(line);
  REQUIRE(lines.size() == 4);  // header + pre + oce + oce_mff
  CHECK(lines[0] == "variant,image_auroc,pixel_auroc,pro");
  CHECK(lines[1].rfind("pre,", 0) == 0);
  CHECK(lines[2].rfind("oce,", 0) == 0);
  CHECK(lines[3].rfind("oce_mff,", 0) == 0);
  // Each row directory is itself re-evaluable.
  for (const char* name : {"pre", "oce", "oce_mff"}) {
    CHECK(fs::exists(out / name / "model.bundle"));
    CHECK(fs::exists(out / name / "resolved_config.json"));
  }
  const fs::path reeval = g_work / "reeval";
  REQUIRE(run("eval --bundle " + (out / "oce" / "model.bundle").string() +
              " --dataset synthetic --n-train 4 --n-test 4 --data-resolution 64 "
              "--out-dir " + reeval.string()) == 0);
  CHECK(fs::exists(reeval / "report.txt"));
}

int main(int argc, char** argv) {
  doctest::Context ctx;
  ctx.applyCommandLine(argc, argv);
  if (argc < 2) {
    std::fprintf(stderr, "usage: test_cli <path-to-cli-binary>\n");
    return 1;
  }
  g_cli = argv[argc - 1];
  g_work = fs::temp_directory_path() / "rd_cli_tests";
  fs::remove_all(g_work);
  fs::create_directories(g_work);
  const int rc = ctx.run();
  fs::remove_all(g_work);
  return rc;
}
