// Command-line front end. All model, scoring and metric math lives in the
// library headers; this file only wires configuration, datasets and files
// together.
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "revdistill/data/oneclass.hpp"
#include "revdistill/data/synthetic.hpp"
#include "revdistill/distill/trainer.hpp"
#include "revdistill/eval/report.hpp"
#include "revdistill/version.hpp"

namespace fs = std::filesystem;
using namespace revdistill;

namespace {

struct CliState {
  RunConfig rc;
  std::string config_path;
};

void load_config_file(CliState& st) {
  if (st.config_path.empty()) return;
  std::ifstream is(st.config_path);
  if (!is) throw ConfigError("cannot open config file: " + st.config_path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad config file " + st.config_path + ": " + e.what());
  }
  st.rc = j.get<RunConfig>();
}

// Shared dataset/backbone/train flags. Flags override the config file.
void add_run_options(CLI::App* cmd, CliState& st) {
  cmd->add_option("--config", st.config_path, "JSON config file (flags override it)");
  auto& rc = st.rc;
  cmd->add_option("--name", rc.run_name, "run name (default output dir runs/<name>)");
  cmd->add_option("--out-dir", rc.out_dir, "output directory");

  cmd->add_option_function<std::string>(
         "--backbone", [&rc](const std::string& v) { rc.backbone.family = parse_family(v); },
         "encoder family: resnet18|resnet50|wide_resnet50")
      ->type_name("FAMILY");
  cmd->add_option("--resolution", rc.backbone.input_resolution,
                  "input resolution (multiple of 32)");
  cmd->add_option_function<std::string>(
         "--stages",
         [&rc](const std::string& v) {
           std::vector<int> stages;
           std::stringstream ss(v);
           std::string tok;
           while (std::getline(ss, tok, ',')) {
             if (!tok.empty()) stages.push_back(std::stoi(tok));
           }
           rc.backbone.stages_used = stages;
         },
         "distilled stages, comma separated (default 1,2,3)")
      ->type_name("LIST");
  cmd->add_option("--weights", rc.backbone.weights_source,
                  "teacher weights: seeded:<n>, file:<path>, or a digest tag "
                  "looked up in $REVDISTILL_WEIGHTS_DIR");
  cmd->add_option_function<std::string>(
         "--variant",
         [&rc](const std::string& v) { rc.variant = parse_ocbe_variant(v); },
         "bottleneck variant: oce_mff|oce|pre")
      ->type_name("VARIANT");

  cmd->add_option("--dataset", rc.data.dataset,
                  "synthetic|mvtec|oneclass_idx|oneclass_folder");
  cmd->add_option("--root", rc.data.root, "dataset root directory");
  cmd->add_option("--category", rc.data.category, "category name (mvtec layout)");
  cmd->add_option("--normal-class", rc.data.normal_class,
                  "normal class id/name (one-class protocols)");
  cmd->add_option("--data-resolution", rc.data.resolution,
                  "dataset resolution override (default: backbone resolution)");
  cmd->add_option("--n-train", rc.data.n_train, "synthetic: training samples");
  cmd->add_option("--n-test", rc.data.n_test, "synthetic: test samples");
  cmd->add_option("--synth-seed", rc.data.synth_seed, "synthetic: corpus seed");

  cmd->add_option("--lr", rc.train.learning_rate, "learning rate");
  cmd->add_option("--epochs", rc.train.epochs, "training epochs");
  cmd->add_option("--batch-size", rc.train.batch_size, "batch size");
  cmd->add_option("--seed", rc.train.seed, "training seed");
  cmd->add_option("--checkpoint-every", rc.train.checkpoint_every,
                  "checkpoint cadence in epochs");
  cmd->add_option("--device", rc.train.device, "compute device (cpu)");

  cmd->add_option("--sigma", rc.scoring.sigma, "score map smoothing sigma (pixels)");
  cmd->add_flag("--smooth-before-sum", rc.scoring.smooth_before_sum,
                "novelty score integrates the smoothed map");
  cmd->add_option("--pro-fpr-limit", rc.eval.pro_fpr_limit,
                  "false-positive-rate cap of the region-overlap integral");
  cmd->add_option("--bins", rc.eval.histogram_bins, "histogram bins");
  cmd->add_option("--eval-batch-size", rc.eval.batch_size, "inference batch size");
}

std::pair<data::DatasetSplit, data::DatasetSplit> load_dataset(const RunConfig& rc) {
  const int64_t res = rc.data_resolution();
  const auto& d = rc.data;
  if (d.dataset == "synthetic") {
    data::SynthConfig cfg;
    cfg.seed = d.synth_seed;
    cfg.n_train = d.n_train;
    cfg.n_test = d.n_test;
    cfg.resolution = res;
    cfg.test_anomaly_ratio = d.test_anomaly_ratio;
    return data::synth_defect_corpus(cfg);
  }
  if (d.dataset == "mvtec") {
    if (d.root.empty()) throw ConfigError("--root is required for the mvtec layout");
    if (d.category.empty()) throw ConfigError("--category is required for the mvtec layout");
    return data::load_mvtec_category(d.root, d.category, res);
  }
  if (d.dataset == "oneclass_idx") {
    if (d.root.empty()) throw ConfigError("--root is required for oneclass_idx");
    if (d.normal_class.empty()) throw ConfigError("--normal-class is required");
    return data::load_one_class_idx(d.root, std::stoi(d.normal_class), res);
  }
  if (d.dataset == "oneclass_folder") {
    if (d.root.empty()) throw ConfigError("--root is required for oneclass_folder");
    if (d.normal_class.empty()) throw ConfigError("--normal-class is required");
    return data::load_one_class_folder(d.root, d.normal_class, res);
  }
  throw ConfigError("unknown dataset '" + d.dataset + "'");
}

// Every run directory carries enough to reproduce the run.
void write_resolved_config(const RunConfig& rc, const std::string& teacher_digest,
                           const std::string& dir) {
  fs::create_directories(dir);
  nlohmann::json j = rc;
  j["version"] = kVersion;
  j["teacher_digest"] = teacher_digest;
  std::ofstream os(dir + "/resolved_config.json");
  os << j.dump(2) << "\n";
}

void write_eval_artifacts(const eval::EvalReport& report, const std::string& dir,
                          bool histogram) {
  eval::write_report_text(report, dir + "/report.txt");
  eval::write_per_image_csv(report, dir + "/per_image.csv");
  if (histogram) {
    eval::write_histogram_csv(report.histogram, dir + "/histogram.csv");
    eval::save_histogram_chart(report.histogram, dir + "/histogram.png");
  }
}

int cmd_train(CliState& st) {
  RunConfig& rc = st.rc;
  rc.backbone.validate();
  rc.train.validate();
  auto [train_set, test_set] = load_dataset(rc);
  auto teacher = load_teacher<float>(rc.backbone);
  const std::string out = rc.resolved_out_dir();
  write_resolved_config(rc, teacher->digest(), out);

  ReverseDistillModel<float> model(teacher, rc.variant);
  model.init_params(rc.train.seed);
  std::cerr << "training '" << rc.run_name << "': " << train_set.size()
            << " normal samples, " << family_name(rc.backbone.family) << " @"
            << rc.backbone.input_resolution << "px, variant "
            << ocbe_variant_name(rc.variant) << "\n";
  nlohmann::json extra = {{"run_name", rc.run_name}, {"version", kVersion}};
  train(model, train_set, rc.train, rc.scoring, out,
        [](const EpochStats& s) {
          std::cerr << "epoch " << s.epoch << "  mean_loss " << s.mean_loss << "  ("
                    << static_cast<int64_t>(s.wallclock_s) << "s)\n";
        },
        extra);
  std::cout << out << "/model.bundle\n";
  return 0;
}

int cmd_eval(CliState& st, const std::string& bundle_path, bool heatmaps, bool overlay,
             bool histogram) {
  RunConfig& rc = st.rc;
  ModelBundle bundle = ModelBundle::load(bundle_path);
  rc.backbone = bundle.backbone;  // the bundle defines the model
  ReverseDistillModel<float> model = bundle.instantiate();
  auto [train_set, test_set] = load_dataset(rc);
  const std::string out = rc.resolved_out_dir();
  write_resolved_config(rc, bundle.teacher_digest, out);

  eval::HeatmapOptions hm;
  if (heatmaps) {
    hm.dir = out + "/heatmaps";
    hm.overlay = overlay;
  }
  eval::EvalReport report = eval::evaluate(model, test_set, rc.scoring, rc.eval, hm);
  report.config_echo = rc;
  write_eval_artifacts(report, out, histogram);
  std::cout << eval::format_report(report);
  return 0;
}

int cmd_infer(CliState& st, const std::string& bundle_path,
              const std::vector<std::string>& images, bool allow_mismatch) {
  RunConfig& rc = st.rc;
  ModelBundle bundle = ModelBundle::load(bundle_path);
  ReverseDistillModel<float> model = bundle.instantiate();
  const int64_t res = bundle.backbone.input_resolution;
  const std::string out = rc.resolved_out_dir();
  fs::create_directories(out);

  std::cout << "image,detection_score,novelty_score\n";
  for (size_t i = 0; i < images.size(); ++i) {
    if (!fs::exists(images[i])) throw DataError("no such image: " + images[i]);
    Tensor<float> img = io::load_image_rgb(images[i], res);
    Tensor<float> batch({1, 3, res, res});
    std::copy(img.data(), img.data() + img.numel(), batch.data());
    auto inf = forward_inference(model, normalize_batch(batch), allow_mismatch);
    auto raw = scoring::accumulate_maps(inf.maps, 0, res);
    auto smooth = raw;
    if (bundle.scoring.sigma > 0) {
      smooth.map = scoring::gaussian_blur(raw.map, bundle.scoring.sigma);
      smooth.smoothed = true;
      smooth.sigma = bundle.scoring.sigma;
    }
    const double s_det = scoring::detection_score(smooth);
    const double s_nov =
        scoring::novelty_score(bundle.scoring.smooth_before_sum ? smooth : raw);
    std::string stem = fs::path(images[i]).stem().string();
    if (images.size() > 1) stem = std::to_string(i) + "_" + stem;
    io::save_heatmap_png(smooth.map, out + "/" + stem + ".png");
    scoring::write_raw_map(smooth, out + "/" + stem + ".sal.f32");
    io::save_heatmap_overlay(smooth.map, out + "/" + stem + "_overlay.png", &img);
    std::cout << "\"" << images[i] << "\"," << s_det << "," << s_nov << "\n";
  }
  return 0;
}

int cmd_ablate(CliState& st, const std::string& axis) {
  RunConfig& rc = st.rc;
  struct Row {
    std::string name;
    RunConfig cfg;
  };
  std::vector<Row> rows;
  if (axis == "layers") {
    for (const auto& stages : std::vector<std::vector<int>>{
             {1}, {2}, {3}, {2, 3}, {1, 2, 3}}) {
      Row r{"M", rc};
      for (int s : stages) r.name += std::to_string(s);
      r.cfg.backbone.stages_used = stages;
      rows.push_back(std::move(r));
    }
  } else if (axis == "backbone") {
    for (auto fam : {BackboneFamily::kResnet18, BackboneFamily::kResnet50,
                     BackboneFamily::kWideResnet50}) {
      Row r{family_name(fam), rc};
      r.cfg.backbone.family = fam;
      rows.push_back(std::move(r));
    }
  } else if (axis == "ocbe") {
    for (auto v : {OcbeVariant::kPre, OcbeVariant::kOce, OcbeVariant::kOceMff}) {
      Row r{ocbe_variant_name(v), rc};
      r.cfg.variant = v;
      rows.push_back(std::move(r));
    }
  } else {
    throw ConfigError("unknown ablation axis '" + axis + "' (layers|backbone|ocbe)");
  }

  const std::string out = rc.resolved_out_dir();
  fs::create_directories(out);
  std::ofstream csv(out + "/ablate_" + axis + ".csv");
  csv << "variant,image_auroc,pixel_auroc,pro\n";
  std::cout << "variant,image_auroc,pixel_auroc,pro\n";
  for (auto& row : rows) {
    row.cfg.backbone.validate();
    row.cfg.train.validate();
    auto [train_set, test_set] = load_dataset(row.cfg);
    auto teacher = load_teacher<float>(row.cfg.backbone);
    ReverseDistillModel<float> model(teacher, row.cfg.variant);
    model.init_params(row.cfg.train.seed);
    const std::string row_dir = out + "/" + row.name;
    write_resolved_config(row.cfg, teacher->digest(), row_dir);
    std::cerr << "[ablate " << axis << "] training " << row.name << "\n";
    train(model, train_set, row.cfg.train, row.cfg.scoring, row_dir, nullptr,
          {{"run_name", rc.run_name + "/" + row.name}, {"version", kVersion}});
    eval::EvalReport report =
        eval::evaluate(model, test_set, row.cfg.scoring, row.cfg.eval);
    std::ostringstream line;
    line << row.name << "," << report.image_auroc << ","
         << (report.has_pixel_metrics ? std::to_string(report.pixel_auroc) : "n/a") << ","
         << (report.has_pixel_metrics ? std::to_string(report.pro) : "n/a");
    csv << line.str() << "\n";
    std::cout << line.str() << "\n";
  }
  return 0;
}

int cmd_visualize(const std::string& map_path, const std::string& image_path,
                  std::string out_path) {
  auto s = scoring::read_raw_map<float>(map_path);
  if (out_path.empty()) out_path = map_path + ".viz.png";
  if (!image_path.empty()) {
    if (!fs::exists(image_path)) throw DataError("no such image: " + image_path);
    Tensor<float> img = io::load_image_rgb(image_path, s.map.dim(0));
    io::save_heatmap_overlay(s.map, out_path, &img);
  } else {
    io::save_heatmap_overlay(s.map, out_path, nullptr);
  }
  std::cout << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reverse-distillation anomaly detection toolkit"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  CliState st;
  if (const char* dev = std::getenv("REVDISTILL_DEVICE"); dev && *dev) {
    st.rc.train.device = dev;
  }

  auto* train_cmd = app.add_subcommand("train", "train one category / class");
  add_run_options(train_cmd, st);
  std::string materialize_dir;
  train_cmd->add_option("--materialize", materialize_dir,
                        "also write the (synthetic) corpus to this directory in the "
                        "defect-inspection folder layout");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a trained bundle");
  add_run_options(eval_cmd, st);
  std::string bundle_path;
  bool heatmaps = false, overlay = false, histogram = false;
  eval_cmd->add_option("--bundle", bundle_path, "model bundle path")->required();
  eval_cmd->add_flag("--heatmaps", heatmaps, "export per-image heatmap PNG + raw map");
  eval_cmd->add_flag("--overlay", overlay, "also export colorized overlays");
  eval_cmd->add_flag("--histogram", histogram, "export score histogram CSV + chart");

  auto* infer_cmd = app.add_subcommand("infer", "score individual images");
  add_run_options(infer_cmd, st);
  std::string infer_bundle;
  std::vector<std::string> infer_images;
  bool allow_mismatch = false;
  infer_cmd->add_option("--bundle", infer_bundle, "model bundle path")->required();
  infer_cmd->add_option("images", infer_images, "image files")->required();
  infer_cmd->add_flag("--allow-resolution-mismatch", allow_mismatch,
                      "run even if the image resolution differs from the bundle's");

  auto* ablate_cmd = app.add_subcommand("ablate", "run an ablation axis");
  add_run_options(ablate_cmd, st);
  std::string axis;
  ablate_cmd->add_option("--axis", axis, "layers|backbone|ocbe")->required();

  auto* viz_cmd = app.add_subcommand("visualize", "render a saved raw score map");
  std::string map_path, image_path, out_path;
  viz_cmd->add_option("--map", map_path, "raw .sal.f32 map file")->required();
  viz_cmd->add_option("--image", image_path, "optional underlay image");
  viz_cmd->add_option("--out", out_path, "output PNG (default <map>.viz.png)");

  try {
    app.parse(argc, argv);
    load_config_file(st);
    // Re-parse so explicit flags override the config file.
    app.clear();
    app.parse(argc, argv);

    if (*train_cmd) {
      if (!materialize_dir.empty()) {
        auto [tr, te] = load_dataset(st.rc);
        data::materialize_mvtec_layout(tr, te, materialize_dir,
                                       st.rc.data.category.empty() ? "synthetic"
                                                                   : st.rc.data.category);
      }
      return cmd_train(st);
    }
    if (*eval_cmd) return cmd_eval(st, bundle_path, heatmaps, overlay, histogram);
    if (*infer_cmd) return cmd_infer(st, infer_bundle, infer_images, allow_mismatch);
    if (*ablate_cmd) return cmd_ablate(st, axis);
    if (*viz_cmd) return cmd_visualize(map_path, image_path, out_path);
    return 1;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const ShapeError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
