#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "revdistill/core/tensor.hpp"

namespace revdistill::eval {

struct LabeledScores {
  std::vector<double> scores;
  std::vector<int> labels;  // 0 normal, 1 anomalous
};

// Probability that a uniformly random anomalous score outranks a random
// normal one, ties counted half (rank-sum formulation, O(n log n)).
inline double auroc(const LabeledScores& data) {
  const size_t n = data.scores.size();
  if (n != data.labels.size()) throw ShapeError("scores/labels length mismatch");
  int64_t n_pos = 0;
  for (int l : data.labels) n_pos += l ? 1 : 0;
  const int64_t n_neg = static_cast<int64_t>(n) - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw DataError("auroc undefined: both classes must be present");
  }
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return data.scores[a] < data.scores[b]; });
  double pos_rank_sum = 0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && data.scores[order[j + 1]] == data.scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based
    for (size_t k = i; k <= j; ++k) {
      if (data.labels[order[k]]) pos_rank_sum += avg_rank;
    }
    i = j + 1;
  }
  const double u = pos_rank_sum - 0.5 * static_cast<double>(n_pos) *
                                      static_cast<double>(n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// Pixel-level AUROC over the flattened multiset of all pixels of all images.
template <typename T>
double pixel_auroc(const std::vector<Tensor<T>>& score_maps,
                   const std::vector<Tensor<uint8_t>>& masks) {
  if (score_maps.size() != masks.size()) {
    throw ShapeError("score map / mask count mismatch");
  }
  LabeledScores flat;
  for (size_t i = 0; i < score_maps.size(); ++i) {
    if (score_maps[i].shape() != masks[i].shape()) {
      throw ShapeError("score map and mask shapes differ at image " + std::to_string(i));
    }
    for (int64_t p = 0; p < score_maps[i].numel(); ++p) {
      flat.scores.push_back(static_cast<double>(score_maps[i][p]));
      flat.labels.push_back(masks[i][p] ? 1 : 0);
    }
  }
  bool any_pos = std::find(flat.labels.begin(), flat.labels.end(), 1) != flat.labels.end();
  if (!any_pos) throw DataError("no anomalous pixels in the test set");
  return auroc(flat);
}

// 8-connected components of a binary mask; returns a label grid (0 =
// background) and the number of components.
inline int label_components(const Tensor<uint8_t>& mask, Tensor<int32_t>& labels) {
  const int64_t H = mask.dim(0), W = mask.dim(1);
  labels = Tensor<int32_t>({H, W});
  int next = 0;
  std::vector<int64_t> stack;
  for (int64_t start = 0; start < H * W; ++start) {
    if (!mask[start] || labels[start] != 0) continue;
    ++next;
    stack.push_back(start);
    labels[start] = next;
    while (!stack.empty()) {
      const int64_t p = stack.back();
      stack.pop_back();
      const int64_t y = p / W, x = p % W;
      for (int64_t dy = -1; dy <= 1; ++dy) {
        for (int64_t dx = -1; dx <= 1; ++dx) {
          if (dy == 0 && dx == 0) continue;
          const int64_t ny = y + dy, nx = x + dx;
          if (ny < 0 || ny >= H || nx < 0 || nx >= W) continue;
          const int64_t q = ny * W + nx;
          if (mask[q] && labels[q] == 0) {
            labels[q] = next;
            stack.push_back(q);
          }
        }
      }
    }
  }
  return next;
}

// Per-region overlap: sweep thresholds, average per-component detection
// fraction against the global false-positive rate on normal pixels,
// integrate to fpr_limit by trapezoid, normalize by fpr_limit.
//
// Thresholds are every distinct score when there are at most max_thresholds
// of them, otherwise max_thresholds rank-quantile values (keeping the metric
// invariant under strictly increasing score transforms).
template <typename T>
double pro_score(const std::vector<Tensor<T>>& score_maps,
                 const std::vector<Tensor<uint8_t>>& masks, double fpr_limit = 0.3,
                 int64_t max_thresholds = 5000) {
  if (!(fpr_limit > 0.0 && fpr_limit <= 1.0)) {
    throw ConfigError("fpr_limit must be in (0, 1]");
  }
  if (score_maps.size() != masks.size() || score_maps.empty()) {
    throw ShapeError("score map / mask count mismatch");
  }
  // Component score lists and the pool of negative-pixel scores.
  std::vector<std::vector<double>> comp_scores;
  std::vector<double> neg_scores;
  std::vector<double> all_scores;
  for (size_t i = 0; i < score_maps.size(); ++i) {
    if (score_maps[i].shape() != masks[i].shape()) {
      throw ShapeError("score map and mask shapes differ at image " + std::to_string(i));
    }
    Tensor<int32_t> labels;
    const int n = label_components(masks[i], labels);
    const size_t base = comp_scores.size();
    comp_scores.resize(base + static_cast<size_t>(n));
    for (int64_t p = 0; p < score_maps[i].numel(); ++p) {
      const double s = static_cast<double>(score_maps[i][p]);
      all_scores.push_back(s);
      if (labels[p] > 0) {
        comp_scores[base + static_cast<size_t>(labels[p] - 1)].push_back(s);
      } else {
        neg_scores.push_back(s);
      }
    }
  }
  if (comp_scores.empty()) throw DataError("no ground-truth regions in the test set");
  if (neg_scores.empty()) throw DataError("no normal pixels in the test set");
  for (auto& v : comp_scores) std::sort(v.begin(), v.end());
  std::sort(neg_scores.begin(), neg_scores.end());
  std::sort(all_scores.begin(), all_scores.end());

  std::vector<double> thresholds;
  all_scores.erase(std::unique(all_scores.begin(), all_scores.end()), all_scores.end());
  if (static_cast<int64_t>(all_scores.size()) <= max_thresholds) {
    thresholds = all_scores;
  } else {
    thresholds.reserve(static_cast<size_t>(max_thresholds));
    const double n1 = static_cast<double>(all_scores.size() - 1);
    for (int64_t q = 0; q < max_thresholds; ++q) {
      const auto idx = static_cast<size_t>(
          std::llround(n1 * static_cast<double>(q) / static_cast<double>(max_thresholds - 1)));
      thresholds.push_back(all_scores[idx]);
    }
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  }

  // Descending sweep; the curve starts at (fpr 0, overlap 0).
  std::vector<std::pair<double, double>> curve;  // (fpr, mean overlap)
  curve.emplace_back(0.0, 0.0);
  const double n_neg = static_cast<double>(neg_scores.size());
  for (size_t ti = thresholds.size(); ti-- > 0;) {
    const double t = thresholds[ti];
    double overlap = 0;
    for (const auto& comp : comp_scores) {
      const auto it = std::lower_bound(comp.begin(), comp.end(), t);
      overlap += static_cast<double>(comp.end() - it) / static_cast<double>(comp.size());
    }
    overlap /= static_cast<double>(comp_scores.size());
    const auto nit = std::lower_bound(neg_scores.begin(), neg_scores.end(), t);
    const double fpr = static_cast<double>(neg_scores.end() - nit) / n_neg;
    curve.emplace_back(fpr, overlap);
  }

  // Trapezoid up to fpr_limit with interpolation at the cut.
  double area = 0;
  for (size_t i = 1; i < curve.size(); ++i) {
    const auto [f0, o0] = curve[i - 1];
    auto [f1, o1] = curve[i];
    if (f1 <= f0) continue;  // vertical or degenerate segment
    if (f0 >= fpr_limit) break;
    if (f1 > fpr_limit) {
      const double tfrac = (fpr_limit - f0) / (f1 - f0);
      o1 = o0 + tfrac * (o1 - o0);
      f1 = fpr_limit;
    }
    area += 0.5 * (o0 + o1) * (f1 - f0);
    if (f1 >= fpr_limit) break;
  }
  return area / fpr_limit;
}

struct HistogramTable {
  std::vector<double> bin_edges;            // bins + 1 edges over [0,1]
  std::vector<int64_t> normal_counts;
  std::vector<int64_t> anomalous_counts;
};

// Min-max normalizes the scores to [0,1] and bins the two classes
// separately. A missing class yields a zero row.
inline HistogramTable score_histogram(const LabeledScores& data, int bins = 50) {
  RD_CHECK(bins > 0);
  if (data.scores.size() != data.labels.size()) {
    throw ShapeError("scores/labels length mismatch");
  }
  HistogramTable h;
  h.bin_edges.resize(static_cast<size_t>(bins) + 1);
  for (int i = 0; i <= bins; ++i) {
    h.bin_edges[static_cast<size_t>(i)] = static_cast<double>(i) / bins;
  }
  h.normal_counts.assign(static_cast<size_t>(bins), 0);
  h.anomalous_counts.assign(static_cast<size_t>(bins), 0);
  if (data.scores.empty()) return h;
  const auto [lo_it, hi_it] = std::minmax_element(data.scores.begin(), data.scores.end());
  const double lo = *lo_it, hi = *hi_it;
  const double span = hi > lo ? hi - lo : 1.0;
  for (size_t i = 0; i < data.scores.size(); ++i) {
    const double z = (data.scores[i] - lo) / span;
    int b = static_cast<int>(z * bins);
    if (b >= bins) b = bins - 1;
    if (b < 0) b = 0;
    auto& row = data.labels[i] ? h.anomalous_counts : h.normal_counts;
    ++row[static_cast<size_t>(b)];
  }
  return h;
}

}  // namespace revdistill::eval
