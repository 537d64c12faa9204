#pragma once

#include <filesystem>
#include <fstream>
#include <utility>

#include "revdistill/data/mvtec.hpp"
#include "revdistill/scoring/scoring.hpp"

namespace revdistill::data {

namespace detail {

inline uint32_t read_be32(std::ifstream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) |
         uint32_t(b[3]);
}

struct IdxImages {
  int64_t n = 0, rows = 0, cols = 0;
  std::vector<uint8_t> pixels;
};

inline IdxImages read_idx_images(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open: " + path);
  if (read_be32(is) != 0x00000803u) throw DataError("not an idx3 image file: " + path);
  IdxImages d;
  d.n = read_be32(is);
  d.rows = read_be32(is);
  d.cols = read_be32(is);
  d.pixels.resize(static_cast<size_t>(d.n * d.rows * d.cols));
  is.read(reinterpret_cast<char*>(d.pixels.data()),
          static_cast<std::streamsize>(d.pixels.size()));
  if (!is) throw DataError("truncated idx image file: " + path);
  return d;
}

inline std::vector<uint8_t> read_idx_labels(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open: " + path);
  if (read_be32(is) != 0x00000801u) throw DataError("not an idx1 label file: " + path);
  const uint32_t n = read_be32(is);
  std::vector<uint8_t> labels(n);
  is.read(reinterpret_cast<char*>(labels.data()), n);
  if (!is) throw DataError("truncated idx label file: " + path);
  return labels;
}

// Grayscale (rows,cols) -> RGB (3,res,res) by bilinear rescale and channel
// replication.
inline Tensor<float> gray_to_rgb(const uint8_t* px, int64_t rows, int64_t cols,
                                 int64_t res) {
  Tensor<float> g({rows, cols});
  for (int64_t i = 0; i < rows * cols; ++i) g[i] = px[i] / 255.0f;
  if (rows != res || cols != res) g = scoring::upsample_bilinear(g, res, res);
  Tensor<float> out({3, res, res});
  for (int64_t c = 0; c < 3; ++c) {
    std::copy(g.data(), g.data() + res * res, out.data() + c * res * res);
  }
  return out;
}

inline std::string find_idx_file(const std::filesystem::path& root,
                                 std::initializer_list<const char*> candidates) {
  for (const char* c : candidates) {
    const auto p = root / c;
    if (std::filesystem::exists(p)) return p.string();
  }
  std::string msg = "missing idx file under " + root.string() + " (tried";
  for (const char* c : candidates) msg += std::string(" ") + c;
  throw DataError(msg + ")");
}

}  // namespace detail

// One-class protocol over an idx-format classification corpus laid out in
// the conventional four files. Training keeps only the normal class; the
// whole test split is kept with label = (class != normal_class).
inline std::pair<DatasetSplit, DatasetSplit> load_one_class_idx(const std::string& root,
                                                                int normal_class,
                                                                int64_t resolution) {
  namespace fs = std::filesystem;
  const fs::path base(root);
  const auto tr_img = detail::find_idx_file(
      base, {"train-images-idx3-ubyte", "train-images.idx3-ubyte"});
  const auto tr_lab = detail::find_idx_file(
      base, {"train-labels-idx1-ubyte", "train-labels.idx1-ubyte"});
  const auto te_img = detail::find_idx_file(
      base, {"t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte",
             "test-images-idx3-ubyte"});
  const auto te_lab = detail::find_idx_file(
      base, {"t10k-labels-idx1-ubyte", "t10k-labels.idx1-ubyte",
             "test-labels-idx1-ubyte"});

  const auto train_images = detail::read_idx_images(tr_img);
  const auto train_labels = detail::read_idx_labels(tr_lab);
  const auto test_images = detail::read_idx_images(te_img);
  const auto test_labels = detail::read_idx_labels(te_lab);
  if (train_images.n != static_cast<int64_t>(train_labels.size()) ||
      test_images.n != static_cast<int64_t>(test_labels.size())) {
    throw DataError("idx image/label counts disagree");
  }
  bool class_seen = false;
  for (uint8_t l : train_labels) class_seen |= l == normal_class;
  if (!class_seen) {
    throw DataError("normal class " + std::to_string(normal_class) +
                    " absent from the training labels");
  }

  DatasetSplit train, test;
  const int64_t px = train_images.rows * train_images.cols;
  for (int64_t i = 0; i < train_images.n; ++i) {
    if (train_labels[static_cast<size_t>(i)] != normal_class) continue;
    SampleRecord rec;
    rec.name = "train_" + std::to_string(i);
    rec.category = "class" + std::to_string(normal_class);
    rec.image = detail::gray_to_rgb(train_images.pixels.data() + i * px,
                                    train_images.rows, train_images.cols, resolution);
    train.samples.push_back(std::move(rec));
  }
  const int64_t tpx = test_images.rows * test_images.cols;
  for (int64_t i = 0; i < test_images.n; ++i) {
    SampleRecord rec;
    rec.name = "test_" + std::to_string(i);
    rec.category = "class" + std::to_string(normal_class);
    rec.label = test_labels[static_cast<size_t>(i)] == normal_class ? 0 : 1;
    rec.defect_type = rec.label ? "class" + std::to_string(test_labels[static_cast<size_t>(i)])
                                : "good";
    rec.image = detail::gray_to_rgb(test_images.pixels.data() + i * tpx,
                                    test_images.rows, test_images.cols, resolution);
    test.samples.push_back(std::move(rec));
  }
  train.check_train_split();
  return {std::move(train), std::move(test)};
}

// One-class protocol over a folder-of-images corpus:
//   <root>/{train,test}/<class_name>/*.png
inline std::pair<DatasetSplit, DatasetSplit> load_one_class_folder(
    const std::string& root, const std::string& normal_class, int64_t resolution) {
  namespace fs = std::filesystem;
  const fs::path train_base = fs::path(root) / "train";
  const fs::path test_base = fs::path(root) / "test";
  if (!fs::exists(train_base / normal_class)) {
    throw DataError("unknown class '" + normal_class + "' under " + train_base.string());
  }
  DatasetSplit train, test;
  for (const auto& p : detail::sorted_images(train_base / normal_class)) {
    SampleRecord rec;
    rec.name = p.string();
    rec.category = normal_class;
    rec.image = io::load_image_rgb(p.string(), resolution);
    train.samples.push_back(std::move(rec));
  }
  if (train.empty()) throw DataError("no training images for class " + normal_class);
  std::vector<fs::path> class_dirs;
  std::error_code ec;
  for (const auto& e : fs::directory_iterator(test_base, ec)) {
    if (e.is_directory()) class_dirs.push_back(e.path());
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  for (const auto& dir : class_dirs) {
    const std::string cls = dir.filename().string();
    for (const auto& p : detail::sorted_images(dir)) {
      SampleRecord rec;
      rec.name = p.string();
      rec.category = normal_class;
      rec.label = cls == normal_class ? 0 : 1;
      rec.defect_type = rec.label ? cls : "good";
      rec.image = io::load_image_rgb(p.string(), resolution);
      test.samples.push_back(std::move(rec));
    }
  }
  train.check_train_split();
  return {std::move(train), std::move(test)};
}

}  // namespace revdistill::data
