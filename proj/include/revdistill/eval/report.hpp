#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include <opencv2/imgproc.hpp>

#include "revdistill/config/config.hpp"
#include "revdistill/data/sample.hpp"
#include "revdistill/distill/model.hpp"
#include "revdistill/eval/metrics.hpp"
#include "revdistill/io/image.hpp"
#include "revdistill/scoring/scoring.hpp"

namespace revdistill::eval {

struct PerImageResult {
  std::string name;
  int label = 0;
  std::string defect_type;
  double detection = 0;
  double novelty = 0;
};

struct EvalReport {
  double image_auroc = std::nan("");
  double pixel_auroc = std::nan("");
  double pro = std::nan("");
  bool has_pixel_metrics = false;
  std::vector<PerImageResult> per_image;
  std::map<std::string, double> per_class_auroc;  // defect type vs normals
  HistogramTable histogram;
  nlohmann::json config_echo;
};

struct HeatmapOptions {
  std::string dir;        // empty: no export
  bool overlay = false;   // additionally write a colorized overlay
};

// Runs batched inference over the test split and assembles all metrics. The
// detection score reads the smoothed localization map; the novelty score
// integrates the unsmoothed accumulation unless configured otherwise.
inline EvalReport evaluate(ReverseDistillModel<float>& model,
                           const data::DatasetSplit& test, const ScoringConfig& score_cfg,
                           const EvalConfig& cfg, const HeatmapOptions& heatmaps = {}) {
  if (test.empty()) throw DataError("test set is empty");
  const int64_t res = test.resolution();
  EvalReport report;
  std::vector<Tensor<float>> pixel_maps;
  std::vector<Tensor<uint8_t>> pixel_masks;
  bool any_anomalous_pixels = false;

  if (!heatmaps.dir.empty()) std::filesystem::create_directories(heatmaps.dir);

  std::vector<size_t> indices(test.size());
  std::iota(indices.begin(), indices.end(), size_t{0});
  for (size_t first = 0; first < test.size();
       first += static_cast<size_t>(cfg.batch_size)) {
    const size_t count = std::min(static_cast<size_t>(cfg.batch_size),
                                  test.size() - first);
    Tensor<float> batch =
        normalize_batch(data::stack_images(test, indices, first, count));
    auto inf = forward_inference(model, batch, /*allow_resolution_mismatch=*/true);
    for (size_t b = 0; b < count; ++b) {
      const auto& sample = test.samples[first + b];
      auto raw = scoring::accumulate_maps(inf.maps, static_cast<int64_t>(b), res);
      scoring::ScoreMap<float> smooth = raw;
      if (score_cfg.sigma > 0) {
        smooth.map = scoring::gaussian_blur(raw.map, score_cfg.sigma);
        smooth.smoothed = true;
        smooth.sigma = score_cfg.sigma;
      }
      PerImageResult r;
      r.name = sample.name;
      r.label = sample.label;
      r.defect_type = sample.defect_type;
      r.detection = scoring::detection_score(smooth);
      r.novelty = scoring::novelty_score(score_cfg.smooth_before_sum ? smooth : raw);
      report.per_image.push_back(r);

      if (!sample.mask.empty()) {
        pixel_maps.push_back(smooth.map);
        pixel_masks.push_back(sample.mask);
        for (int64_t i = 0; i < sample.mask.numel() && !any_anomalous_pixels; ++i) {
          any_anomalous_pixels = sample.mask[i] != 0;
        }
      }
      if (!heatmaps.dir.empty()) {
        std::ostringstream stem;
        stem << std::setw(4) << std::setfill('0') << (first + b) << "_"
             << std::filesystem::path(sample.name).stem().string();
        const std::string base = heatmaps.dir + "/" + stem.str();
        io::save_heatmap_png(smooth.map, base + ".png");
        scoring::write_raw_map(smooth, base + ".sal.f32");
        if (heatmaps.overlay) {
          io::save_heatmap_overlay(smooth.map, base + "_overlay.png", &sample.image);
        }
      }
    }
  }

  LabeledScores detection_scores;
  for (const auto& r : report.per_image) {
    detection_scores.scores.push_back(r.detection);
    detection_scores.labels.push_back(r.label);
  }
  report.image_auroc = auroc(detection_scores);
  report.histogram = score_histogram(detection_scores, cfg.histogram_bins);

  if (any_anomalous_pixels) {
    report.pixel_auroc = pixel_auroc(pixel_maps, pixel_masks);
    report.pro = pro_score(pixel_maps, pixel_masks, cfg.pro_fpr_limit,
                           cfg.max_thresholds);
    report.has_pixel_metrics = true;
  }

  // Per-defect-type detection AUROC against the normal samples.
  std::map<std::string, LabeledScores> per_class;
  for (const auto& r : report.per_image) {
    if (r.label == 0) continue;
    auto& d = per_class[r.defect_type];
    d.scores.push_back(r.detection);
    d.labels.push_back(1);
  }
  for (auto& [defect, scores] : per_class) {
    for (const auto& r : report.per_image) {
      if (r.label == 0) {
        scores.scores.push_back(r.detection);
        scores.labels.push_back(0);
      }
    }
    report.per_class_auroc[defect] = auroc(scores);
  }
  return report;
}

inline std::string format_report(const EvalReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "image_auroc: " << r.image_auroc << "\n";
  if (r.has_pixel_metrics) {
    os << "pixel_auroc: " << r.pixel_auroc << "\n";
    os << "pro: " << r.pro << "\n";
  } else {
    os << "pixel_auroc: n/a (no pixel annotations)\n";
    os << "pro: n/a (no pixel annotations)\n";
  }
  int64_t n_norm = 0, n_anom = 0;
  for (const auto& p : r.per_image) (p.label ? n_anom : n_norm)++;
  os << "samples: " << r.per_image.size() << " (" << n_norm << " normal, " << n_anom
     << " anomalous)\n";
  if (!r.per_class_auroc.empty()) {
    os << "per_class_auroc:\n";
    for (const auto& [defect, v] : r.per_class_auroc) {
      os << "  " << defect << ": " << v << "\n";
    }
  }
  return os.str();
}

inline void write_report_text(const EvalReport& r, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write report: " + path);
  os << format_report(r);
  if (!r.config_echo.is_null()) {
    os << "config: " << r.config_echo.dump() << "\n";
  }
}

inline void write_per_image_csv(const EvalReport& r, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write csv: " + path);
  os << "name,label,defect_type,detection_score,novelty_score\n";
  os << std::setprecision(9);
  for (const auto& p : r.per_image) {
    os << "\"" << p.name << "\"," << p.label << "," << p.defect_type << ","
       << p.detection << "," << p.novelty << "\n";
  }
}

inline void write_histogram_csv(const HistogramTable& h, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write csv: " + path);
  os << "bin_lo,bin_hi,normal,anomalous\n";
  for (size_t i = 0; i + 1 < h.bin_edges.size(); ++i) {
    os << h.bin_edges[i] << "," << h.bin_edges[i + 1] << "," << h.normal_counts[i]
       << "," << h.anomalous_counts[i] << "\n";
  }
}

// Bar chart of the two class histograms (normal blue, anomalous red).
inline void save_histogram_chart(const HistogramTable& h, const std::string& path) {
  const int bins = static_cast<int>(h.normal_counts.size());
  const int width = std::max(400, bins * 12), height = 300, margin = 24;
  cv::Mat canvas(height, width, CV_8UC3, cv::Scalar(255, 255, 255));
  int64_t peak = 1;
  for (int i = 0; i < bins; ++i) {
    peak = std::max({peak, h.normal_counts[static_cast<size_t>(i)],
                     h.anomalous_counts[static_cast<size_t>(i)]});
  }
  const double bw = static_cast<double>(width - 2 * margin) / bins;
  auto bar = [&](int i, int64_t count, const cv::Scalar& color, double offset) {
    const int x0 = margin + static_cast<int>(i * bw + offset * bw * 0.45);
    const int x1 = margin + static_cast<int>(i * bw + (offset + 1) * bw * 0.45);
    const int y = height - margin -
                  static_cast<int>((height - 2 * margin) *
                                   static_cast<double>(count) / static_cast<double>(peak));
    cv::rectangle(canvas, cv::Point(x0, y), cv::Point(x1, height - margin), color,
                  cv::FILLED);
  };
  for (int i = 0; i < bins; ++i) {
    bar(i, h.normal_counts[static_cast<size_t>(i)], cv::Scalar(200, 120, 40), 0.0);
    bar(i, h.anomalous_counts[static_cast<size_t>(i)], cv::Scalar(60, 60, 220), 1.0);
  }
  cv::rectangle(canvas, cv::Point(margin, margin), cv::Point(width - margin, height - margin),
                cv::Scalar(0, 0, 0), 1);
  if (!cv::imwrite(path, canvas)) throw DataError("cannot write chart: " + path);
}

}  // namespace revdistill::eval
