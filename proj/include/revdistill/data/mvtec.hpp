#pragma once

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <map>
#include <utility>

#include "revdistill/data/sample.hpp"
#include "revdistill/io/image.hpp"

namespace revdistill::data {

namespace detail {

inline bool is_image_file(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp" ||
         ext == ".tif" || ext == ".tiff";
}

inline std::vector<std::filesystem::path> sorted_images(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  std::error_code ec;
  for (const auto& e : std::filesystem::directory_iterator(dir, ec)) {
    if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace detail

// Loads one category from the defect-inspection folder convention:
//   <root>/<category>/train/good/*.png
//   <root>/<category>/test/<defect_type>/*.png
//   <root>/<category>/ground_truth/<defect_type>/*_mask.png
// Anomalous folders without ground truth degrade to detection-only with a
// warning.
inline std::pair<DatasetSplit, DatasetSplit> load_mvtec_category(
    const std::string& root, const std::string& category, int64_t resolution) {
  namespace fs = std::filesystem;
  const fs::path base = fs::path(root) / category;
  if (!fs::exists(base)) throw DataError("category directory not found: " + base.string());

  DatasetSplit train;
  const fs::path train_dir = base / "train" / "good";
  for (const auto& p : detail::sorted_images(train_dir)) {
    SampleRecord rec;
    rec.name = p.string();
    rec.category = category;
    rec.image = io::load_image_rgb(p.string(), resolution);
    train.samples.push_back(std::move(rec));
  }
  if (train.empty()) {
    throw DataError("no training images under " + train_dir.string());
  }

  DatasetSplit test;
  const fs::path test_dir = base / "test";
  std::vector<fs::path> defect_dirs;
  std::error_code ec;
  for (const auto& e : fs::directory_iterator(test_dir, ec)) {
    if (e.is_directory()) defect_dirs.push_back(e.path());
  }
  std::sort(defect_dirs.begin(), defect_dirs.end());
  for (const auto& dir : defect_dirs) {
    const std::string defect = dir.filename().string();
    const bool anomalous = defect != "good";
    const fs::path gt_dir = base / "ground_truth" / defect;
    bool warned_missing_gt = false;
    for (const auto& p : detail::sorted_images(dir)) {
      SampleRecord rec;
      rec.name = p.string();
      rec.category = category;
      rec.defect_type = defect;
      rec.label = anomalous ? 1 : 0;
      rec.image = io::load_image_rgb(p.string(), resolution);
      if (anomalous) {
        const std::string stem = p.stem().string();
        fs::path mask_path = gt_dir / (stem + "_mask.png");
        if (!fs::exists(mask_path)) mask_path = gt_dir / (stem + ".png");
        if (fs::exists(mask_path)) {
          rec.mask = io::load_mask(mask_path.string(), resolution);
        } else if (!warned_missing_gt) {
          std::cerr << "warning: no ground truth for '" << defect
                    << "'; detection-only for that folder\n";
          warned_missing_gt = true;
        }
      } else {
        rec.mask = Tensor<uint8_t>({resolution, resolution});
      }
      test.samples.push_back(std::move(rec));
    }
  }
  train.check_train_split();
  test.check_mask_consistency();
  return {std::move(train), std::move(test)};
}

// Writes a corpus to disk in the same folder convention (images 8-bit PNG,
// masks 8-bit binary PNG).
inline void materialize_mvtec_layout(const DatasetSplit& train, const DatasetSplit& test,
                                     const std::string& root, const std::string& category) {
  namespace fs = std::filesystem;
  const fs::path base = fs::path(root) / category;
  fs::create_directories(base / "train" / "good");
  int idx = 0;
  for (const auto& s : train.samples) {
    char name[16];
    std::snprintf(name, sizeof(name), "%03d.png", idx++);
    io::save_image_rgb(s.image, (base / "train" / "good" / name).string());
  }
  std::map<std::string, int> counters;
  for (const auto& s : test.samples) {
    const std::string defect = s.label ? s.defect_type : "good";
    fs::create_directories(base / "test" / defect);
    char name[16];
    std::snprintf(name, sizeof(name), "%03d", counters[defect]++);
    io::save_image_rgb(s.image, (base / "test" / defect / (std::string(name) + ".png")).string());
    if (s.label && !s.mask.empty()) {
      fs::create_directories(base / "ground_truth" / defect);
      io::save_mask_png(s.mask,
                        (base / "ground_truth" / defect / (std::string(name) + "_mask.png")).string());
    }
  }
}

}  // namespace revdistill::data
