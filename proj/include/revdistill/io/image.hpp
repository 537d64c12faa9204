#pragma once

#include <string>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "revdistill/core/errors.hpp"
#include "revdistill/core/tensor.hpp"

namespace revdistill::io {

// Decodes an 8-bit image to a (3,H,W) RGB tensor in [0,1]; resolution 0
// keeps the native size. Downscaling uses area interpolation, upscaling
// bilinear.
inline Tensor<float> load_image_rgb(const std::string& path, int64_t resolution = 0) {
  cv::Mat img = cv::imread(path, cv::IMREAD_COLOR);
  if (img.empty()) throw DataError("cannot decode image: " + path);
  if (resolution > 0 && (img.rows != resolution || img.cols != resolution)) {
    const int interp = resolution < std::min(img.rows, img.cols) ? cv::INTER_AREA
                                                                 : cv::INTER_LINEAR;
    cv::resize(img, img, cv::Size(static_cast<int>(resolution), static_cast<int>(resolution)),
               0, 0, interp);
  }
  Tensor<float> out({3, img.rows, img.cols});
  const int64_t hw = static_cast<int64_t>(img.rows) * img.cols;
  for (int64_t y = 0; y < img.rows; ++y) {
    const uchar* row = img.ptr<uchar>(static_cast<int>(y));
    for (int64_t x = 0; x < img.cols; ++x) {
      // OpenCV loads BGR.
      out[0 * hw + y * img.cols + x] = row[3 * x + 2] / 255.0f;
      out[1 * hw + y * img.cols + x] = row[3 * x + 1] / 255.0f;
      out[2 * hw + y * img.cols + x] = row[3 * x + 0] / 255.0f;
    }
  }
  return out;
}

// Binary ground-truth mask; nearest-neighbor resize keeps labels crisp.
inline Tensor<uint8_t> load_mask(const std::string& path, int64_t resolution = 0) {
  cv::Mat img = cv::imread(path, cv::IMREAD_GRAYSCALE);
  if (img.empty()) throw DataError("cannot decode mask: " + path);
  if (resolution > 0 && (img.rows != resolution || img.cols != resolution)) {
    cv::resize(img, img, cv::Size(static_cast<int>(resolution), static_cast<int>(resolution)),
               0, 0, cv::INTER_NEAREST);
  }
  Tensor<uint8_t> out({img.rows, img.cols});
  for (int64_t y = 0; y < img.rows; ++y) {
    const uchar* row = img.ptr<uchar>(static_cast<int>(y));
    for (int64_t x = 0; x < img.cols; ++x) out[y * img.cols + x] = row[x] > 0 ? 1 : 0;
  }
  return out;
}

inline void save_image_rgb(const Tensor<float>& img, const std::string& path) {
  RD_CHECK(img.ndim() == 3 && img.dim(0) == 3);
  const int h = static_cast<int>(img.dim(1)), w = static_cast<int>(img.dim(2));
  const int64_t hw = static_cast<int64_t>(h) * w;
  cv::Mat m(h, w, CV_8UC3);
  for (int y = 0; y < h; ++y) {
    uchar* row = m.ptr<uchar>(y);
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        const float v = img[c * hw + static_cast<int64_t>(y) * w + x];
        row[3 * x + (2 - c)] = cv::saturate_cast<uchar>(v * 255.0f);
      }
    }
  }
  if (!cv::imwrite(path, m)) throw DataError("cannot write image: " + path);
}

inline void save_mask_png(const Tensor<uint8_t>& mask, const std::string& path) {
  RD_CHECK(mask.ndim() == 2);
  const int h = static_cast<int>(mask.dim(0)), w = static_cast<int>(mask.dim(1));
  cv::Mat m(h, w, CV_8UC1);
  for (int y = 0; y < h; ++y) {
    uchar* row = m.ptr<uchar>(y);
    for (int x = 0; x < w; ++x) row[x] = mask[static_cast<int64_t>(y) * w + x] ? 255 : 0;
  }
  if (!cv::imwrite(path, m)) throw DataError("cannot write mask: " + path);
}

// Grayscale heatmap, per-image min-max normalized to 8 bits.
inline void save_heatmap_png(const Tensor<float>& map, const std::string& path) {
  RD_CHECK(map.ndim() == 2);
  const int h = static_cast<int>(map.dim(0)), w = static_cast<int>(map.dim(1));
  float lo = map[0], hi = map[0];
  for (int64_t i = 0; i < map.numel(); ++i) {
    lo = std::min(lo, map[i]);
    hi = std::max(hi, map[i]);
  }
  const float span = hi > lo ? hi - lo : 1.0f;
  cv::Mat m(h, w, CV_8UC1);
  for (int y = 0; y < h; ++y) {
    uchar* row = m.ptr<uchar>(y);
    for (int x = 0; x < w; ++x) {
      row[x] = cv::saturate_cast<uchar>(
          255.0f * (map[static_cast<int64_t>(y) * w + x] - lo) / span);
    }
  }
  if (!cv::imwrite(path, m)) throw DataError("cannot write heatmap: " + path);
}

// Colorized heatmap, optionally blended over the source image.
inline void save_heatmap_overlay(const Tensor<float>& map, const std::string& path,
                                 const Tensor<float>* underlay = nullptr,
                                 double blend = 0.5) {
  RD_CHECK(map.ndim() == 2);
  const int h = static_cast<int>(map.dim(0)), w = static_cast<int>(map.dim(1));
  float lo = map[0], hi = map[0];
  for (int64_t i = 0; i < map.numel(); ++i) {
    lo = std::min(lo, map[i]);
    hi = std::max(hi, map[i]);
  }
  const float span = hi > lo ? hi - lo : 1.0f;
  cv::Mat gray(h, w, CV_8UC1);
  for (int y = 0; y < h; ++y) {
    uchar* row = gray.ptr<uchar>(y);
    for (int x = 0; x < w; ++x) {
      row[x] = cv::saturate_cast<uchar>(
          255.0f * (map[static_cast<int64_t>(y) * w + x] - lo) / span);
    }
  }
  cv::Mat color;
  cv::applyColorMap(gray, color, cv::COLORMAP_JET);
  if (underlay != nullptr) {
    RD_CHECK(underlay->ndim() == 3 && underlay->dim(1) == h && underlay->dim(2) == w);
    const int64_t hw = static_cast<int64_t>(h) * w;
    cv::Mat base(h, w, CV_8UC3);
    for (int y = 0; y < h; ++y) {
      uchar* row = base.ptr<uchar>(y);
      for (int x = 0; x < w; ++x) {
        for (int c = 0; c < 3; ++c) {
          row[3 * x + (2 - c)] = cv::saturate_cast<uchar>(
              (*underlay)[c * hw + static_cast<int64_t>(y) * w + x] * 255.0f);
        }
      }
    }
    cv::addWeighted(base, 1.0 - blend, color, blend, 0.0, color);
  }
  if (!cv::imwrite(path, color)) throw DataError("cannot write heatmap: " + path);
}

}  // namespace revdistill::io
