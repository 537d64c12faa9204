#include <doctest.h>

#include "revdistill/eval/metrics.hpp"
#include "revdistill/core/rng.hpp"

using namespace revdistill;
using namespace revdistill::eval;

namespace {

// All-pairs rank comparison, the quadratic reference.
double auroc_pairs(const LabeledScores& d) {
  double wins = 0;
  int64_t pairs = 0;
  for (size_t i = 0; i < d.scores.size(); ++i) {
    if (!d.labels[i]) continue;
    for (size_t j = 0; j < d.scores.size(); ++j) {
      if (d.labels[j]) continue;
      ++pairs;
      if (d.scores[i] > d.scores[j]) wins += 1.0;
      else if (d.scores[i] == d.scores[j]) wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

LabeledScores random_scores(Rng& rng, size_t n, bool quantized) {
  LabeledScores d;
  bool saw0 = false, saw1 = false;
  for (size_t i = 0; i < n; ++i) {
    const int label = rng.uniform() < 0.4 ? 1 : 0;
    double s = quantized ? static_cast<double>(rng.uniform_int(0, 9)) : rng.normal();
    d.scores.push_back(s);
    d.labels.push_back(label);
    saw0 |= label == 0;
    saw1 |= label == 1;
  }
  if (!saw0) d.labels[0] = 0;
  if (!saw1) d.labels[n - 1] = 1;
  return d;
}

// Exhaustive-threshold reference for the region-overlap metric: plain loops,
// every distinct score as a threshold.
double pro_oracle(const std::vector<Tensor<float>>& maps,
                  const std::vector<Tensor<uint8_t>>& masks, double fpr_limit) {
  // Collect components by flood fill (4 neighbors diag included).
  struct Comp { std::vector<double> scores; };
  std::vector<Comp> comps;
  std::vector<double> negs, all;
  for (size_t im = 0; im < maps.size(); ++im) {
    const int64_t H = masks[im].dim(0), W = masks[im].dim(1);
    Tensor<int32_t> lab({H, W});
    int next = 0;
    for (int64_t s = 0; s < H * W; ++s) {
      if (!masks[im][s] || lab[s]) continue;
      ++next;
      std::vector<int64_t> stack{s};
      lab[s] = next;
      while (!stack.empty()) {
        int64_t p = stack.back();
        stack.pop_back();
        int64_t y = p / W, x = p % W;
        for (int64_t dy = -1; dy <= 1; ++dy)
          for (int64_t dx = -1; dx <= 1; ++dx) {
            int64_t ny = y + dy, nx = x + dx;
            if ((dy || dx) && ny >= 0 && ny < H && nx >= 0 && nx < W) {
              int64_t q = ny * W + nx;
              if (masks[im][q] && !lab[q]) {
                lab[q] = next;
                stack.push_back(q);
              }
            }
          }
      }
    }
    const size_t base = comps.size();
    comps.resize(base + static_cast<size_t>(next));
    for (int64_t p = 0; p < H * W; ++p) {
      all.push_back(maps[im][p]);
      if (lab[p] > 0) comps[base + static_cast<size_t>(lab[p] - 1)].scores.push_back(maps[im][p]);
      else negs.push_back(maps[im][p]);
    }
  }
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());

  std::vector<std::pair<double, double>> pts{{0.0, 0.0}};
  for (auto it = all.rbegin(); it != all.rend(); ++it) {
    const double t = *it;
    double overlap = 0;
    for (const auto& c : comps) {
      int64_t hit = 0;
      for (double v : c.scores) hit += v >= t ? 1 : 0;
      overlap += static_cast<double>(hit) / static_cast<double>(c.scores.size());
    }
    overlap /= static_cast<double>(comps.size());
    int64_t fp = 0;
    for (double v : negs) fp += v >= t ? 1 : 0;
    pts.emplace_back(static_cast<double>(fp) / static_cast<double>(negs.size()), overlap);
  }
  double area = 0;
  for (size_t i = 1; i < pts.size(); ++i) {
    double f0 = pts[i - 1].first, o0 = pts[i - 1].second;
    double f1 = pts[i].first, o1 = pts[i].second;
    if (f1 <= f0) continue;
    if (f0 >= fpr_limit) break;
    if (f1 > fpr_limit) {
      o1 = o0 + (fpr_limit - f0) / (f1 - f0) * (o1 - o0);
      f1 = fpr_limit;
    }
    area += 0.5 * (o0 + o1) * (f1 - f0);
  }
  return area / fpr_limit;
}

// Random mask with up to max_regions painted blobs.
void random_case(Rng& rng, int64_t h, int64_t w, int max_regions,
                 Tensor<float>& map, Tensor<uint8_t>& mask) {
  map = Tensor<float>({h, w});
  mask = Tensor<uint8_t>({h, w});
  for (int64_t i = 0; i < map.numel(); ++i) {
    map[i] = static_cast<float>(rng.uniform_int(0, 12)) / 4.0f;
  }
  const int regions = static_cast<int>(rng.uniform_int(1, max_regions));
  for (int r = 0; r < regions; ++r) {
    const int64_t cy = rng.uniform_int(0, h - 1), cx = rng.uniform_int(0, w - 1);
    const int64_t ry = rng.uniform_int(0, 2), rx = rng.uniform_int(0, 2);
    for (int64_t y = std::max<int64_t>(0, cy - ry); y <= std::min(h - 1, cy + ry); ++y) {
      for (int64_t x = std::max<int64_t>(0, cx - rx); x <= std::min(w - 1, cx + rx); ++x) {
        mask.at(y, x) = 1;
      }
    }
  }
  // Keep at least one normal pixel.
  mask[0] = 0;
}

}  // namespace

TEST_CASE("auroc on canonical cases") {
  CHECK(auroc({{0.1, 0.2, 0.9, 0.8}, {0, 0, 1, 1}}) == 1.0);
  CHECK(auroc({{0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}}) == 0.5);
  CHECK(auroc({{0.9, 0.8, 0.1, 0.2}, {0, 0, 1, 1}}) == 0.0);
  CHECK_THROWS_AS(auroc({{0.1, 0.2}, {0, 0}}), DataError);
  CHECK_THROWS_AS(auroc({{0.1, 0.2}, {1, 1}}), DataError);
}

TEST_CASE("auroc equals the all-pairs oracle on 200 random cases") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const size_t n = static_cast<size_t>(rng.uniform_int(2, 60));
    LabeledScores d = random_scores(rng, n, trial % 2 == 0);
    CHECK(auroc(d) == auroc_pairs(d));
  }
}

TEST_CASE("auroc is invariant under strictly increasing transforms") {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    LabeledScores d = random_scores(rng, 40, true);
    LabeledScores t = d;
    for (double& s : t.scores) s = 3.0 * s + 11.0;  // affine, exact
    CHECK(auroc(d) == auroc(t));
    LabeledScores t2 = d;
    for (double& s : t2.scores) s = s * s * s + 5.0 * s;  // strictly increasing
    CHECK(auroc(d) == doctest::Approx(auroc(t2)).epsilon(1e-12));
  }
}

TEST_CASE("auroc complement identity on tie-free scores") {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    LabeledScores d = random_scores(rng, 30, false);
    LabeledScores neg = d;
    for (double& s : neg.scores) s = -s;
    CHECK(auroc(d) + auroc(neg) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("pixel auroc via flattening") {
  Tensor<float> perfect({4, 4});
  Tensor<uint8_t> mask({4, 4});
  mask.at(1, 1) = 1;
  mask.at(2, 2) = 1;
  perfect.at(1, 1) = 1.f;
  perfect.at(2, 2) = 1.f;
  CHECK(pixel_auroc<float>({perfect}, {mask}) == 1.0);

  Tensor<float> flat({4, 4}, 0.7f);
  CHECK(pixel_auroc<float>({flat}, {mask}) == 0.5);

  Tensor<uint8_t> empty_mask({4, 4});
  CHECK_THROWS_AS(pixel_auroc<float>({flat}, {empty_mask}), DataError);
}

TEST_CASE("component labeling uses 8-connectivity") {
  Tensor<uint8_t> mask({3, 3});
  mask.at(0, 0) = 1;
  mask.at(1, 1) = 1;  // diagonal touch: one component
  mask.at(2, 0) = 1;  // diagonal from (1,1): still the same component
  Tensor<int32_t> labels;
  CHECK(label_components(mask, labels) == 1);
  mask.at(2, 2) = 0;
  mask.at(0, 2) = 1;  // touches (1,1) diagonally too
  CHECK(label_components(mask, labels) == 1);
  Tensor<uint8_t> two({3, 3});
  two.at(0, 0) = 1;
  two.at(2, 2) = 1;  // gap of one full row/col? (1,1) empty -> diagonal chain broken
  two.at(0, 1) = 1;
  CHECK(label_components(two, labels) == 2);
}

TEST_CASE("region overlap equals the exhaustive-threshold oracle") {
  Rng rng(10);
  for (int trial = 0; trial < 200; ++trial) {
    const int64_t h = rng.uniform_int(4, 8), w = rng.uniform_int(4, 8);
    Tensor<float> map;
    Tensor<uint8_t> mask;
    random_case(rng, h, w, 3, map, mask);
    Tensor<int32_t> labels;
    if (label_components(mask, labels) == 0) continue;
    for (double limit : {0.3, 1.0}) {
      const double got = pro_score<float>({map}, {mask}, limit);
      const double want = pro_oracle({map}, {mask}, limit);
      CHECK(got == doctest::Approx(want).epsilon(1e-9));
    }
  }
}

TEST_CASE("region overlap canonical cases") {
  // Detector that emits the mask itself is perfect.
  Tensor<uint8_t> mask({6, 6});
  for (int64_t i = 1; i < 3; ++i)
    for (int64_t j = 1; j < 3; ++j) mask.at(i, j) = 1;
  Tensor<float> as_scores({6, 6});
  for (int64_t i = 0; i < 36; ++i) as_scores[i] = mask[i] ? 1.f : 0.f;
  CHECK(pro_score<float>({as_scores}, {mask}, 0.3) == doctest::Approx(1.0));

  // Constant map behaves like a random detector: 0.5 at limit 1.
  Tensor<float> flat({6, 6}, 0.4f);
  CHECK(pro_score<float>({flat}, {mask}, 1.0) == doctest::Approx(0.5));
  CHECK(pro_score<float>({flat}, {mask}, 0.3) ==
        doctest::Approx(pro_oracle({flat}, {mask}, 0.3)).epsilon(1e-9));

  // Two regions of very different size, one fully detected, one missed at
  // zero false positives: per-region averaging gives overlap 1/2, and with
  // the remaining sweep the full-range integral is 0.75.
  Tensor<uint8_t> mask2({8, 8});
  mask2.at(0, 0) = 1;  // 1-pixel region
  for (int64_t i = 4; i < 8; ++i)
    for (int64_t j = 4; j < 6; ++j) mask2.at(i, j) = 1;  // 8-pixel region
  Tensor<float> map2({8, 8});
  map2.at(0, 0) = 1.f;
  CHECK(pro_score<float>({map2}, {mask2}, 1.0) == doctest::Approx(0.75));

  CHECK_THROWS_AS(pro_score<float>({map2}, {mask2}, 0.0), ConfigError);
  CHECK_THROWS_AS(pro_score<float>({map2}, {mask2}, 1.5), ConfigError);
}

TEST_CASE("region overlap and pixel auroc are rank statistics") {
  Rng rng(11);
  Tensor<float> map;
  Tensor<uint8_t> mask;
  random_case(rng, 8, 8, 3, map, mask);
  Tensor<float> warped = map;
  for (int64_t i = 0; i < warped.numel(); ++i) warped[i] = 2.f * warped[i] + 3.f;
  CHECK(pro_score<float>({map}, {mask}, 0.3) ==
        doctest::Approx(pro_score<float>({warped}, {mask}, 0.3)).epsilon(1e-12));
  CHECK(pixel_auroc<float>({map}, {mask}) ==
        doctest::Approx(pixel_auroc<float>({warped}, {mask})).epsilon(1e-12));
}

TEST_CASE("quantile thresholding stays close to the exhaustive sweep") {
  Rng rng(12);
  Tensor<float> map({32, 32});
  Tensor<uint8_t> mask({32, 32});
  for (int64_t i = 0; i < map.numel(); ++i) map[i] = static_cast<float>(rng.normal());
  for (int64_t i = 10; i < 18; ++i)
    for (int64_t j = 10; j < 18; ++j) {
      mask.at(i, j) = 1;
      map.at(i, j) += 2.0f;
    }
  const double exact = pro_score<float>({map}, {mask}, 0.3, 1 << 20);
  const double capped = pro_score<float>({map}, {mask}, 0.3, 200);
  CHECK(std::abs(exact - capped) < 0.01);
}

TEST_CASE("histogram bins the two classes") {
  LabeledScores d{{0.0, 1.0, 0.5, 0.99}, {0, 1, 0, 1}};
  HistogramTable h = score_histogram(d, 4);
  REQUIRE(h.normal_counts.size() == 4);
  CHECK(h.normal_counts[0] == 1);   // 0.0
  CHECK(h.normal_counts[2] == 1);   // 0.5
  CHECK(h.anomalous_counts[3] == 2);  // 0.99, 1.0
  // Empty class: zero row.
  LabeledScores all_norm{{0.1, 0.6}, {0, 0}};
  HistogramTable h2 = score_histogram(all_norm, 4);
  for (auto c : h2.anomalous_counts) CHECK(c == 0);
  CHECK(h2.normal_counts[0] + h2.normal_counts[1] + h2.normal_counts[2] +
            h2.normal_counts[3] ==
        2);
}

TEST_CASE("histogram matches a loop-count reference on random scores") {
  Rng rng(13);
  LabeledScores d = random_scores(rng, 100, false);
  const int bins = 10;
  HistogramTable h = score_histogram(d, bins);
  double lo = d.scores[0], hi = d.scores[0];
  for (double s : d.scores) {
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  std::vector<int64_t> ref_n(bins, 0), ref_a(bins, 0);
  for (size_t i = 0; i < d.scores.size(); ++i) {
    int b = static_cast<int>((d.scores[i] - lo) / (hi - lo) * bins);
    if (b >= bins) b = bins - 1;
    (d.labels[i] ? ref_a : ref_n)[static_cast<size_t>(b)]++;
  }
  CHECK(h.normal_counts == ref_n);
  CHECK(h.anomalous_counts == ref_a);
}
