#include <doctest.h>

#include "revdistill/distill/anomaly.hpp"
#include "testsupport.hpp"

using namespace revdistill;
using testsupport::fill_random;

namespace {

template <typename T>
FeaturePyramid<T> pyramid_of(std::vector<Tensor<T>> levels, PyramidSource src) {
  FeaturePyramid<T> p;
  p.levels = std::move(levels);
  for (size_t i = 0; i < p.levels.size(); ++i) p.stage_ids.push_back(static_cast<int>(i + 1));
  p.source = src;
  return p;
}

// Triple-loop reference for the distillation loss.
template <typename T>
double kd_loss_reference(const FeaturePyramid<T>& te, const FeaturePyramid<T>& st) {
  const int64_t B = te.levels[0].dim(0);
  double per_sample_total = 0;
  for (int64_t b = 0; b < B; ++b) {
    for (size_t k = 0; k < te.size(); ++k) {
      const auto& e = te.levels[k];
      const auto& d = st.levels[k];
      const int64_t C = e.dim(1), H = e.dim(2), W = e.dim(3);
      double stage_sum = 0;
      for (int64_t h = 0; h < H; ++h) {
        for (int64_t w = 0; w < W; ++w) {
          double dot = 0, ne = 0, nd = 0;
          for (int64_t c = 0; c < C; ++c) {
            dot += double(e.at(b, c, h, w)) * double(d.at(b, c, h, w));
            ne += double(e.at(b, c, h, w)) * double(e.at(b, c, h, w));
            nd += double(d.at(b, c, h, w)) * double(d.at(b, c, h, w));
          }
          stage_sum += 1.0 - dot / ((std::sqrt(ne) + 1e-8) * (std::sqrt(nd) + 1e-8));
        }
      }
      per_sample_total += stage_sum / double(H * W);
    }
  }
  return per_sample_total / double(B);
}

}  // namespace

TEST_CASE("cosine map identities: identical, orthogonal, anti-parallel") {
  const int64_t B = 1, C = 4, H = 3, W = 3;
  Tensor<float> e({B, C, H, W});
  Rng rng(3);
  fill_random(e, rng);
  for (int64_t i = 0; i < e.numel(); ++i) e[i] += e[i] > 0 ? 0.5f : -0.5f;  // keep away from 0

  Tensor<float> same = e;
  Tensor<float> anti = e;
  for (int64_t i = 0; i < anti.numel(); ++i) anti[i] = -anti[i];

  // Orthogonal construction: swap channel pairs with sign flip.
  Tensor<float> orth({B, C, H, W});
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; c += 2)
      for (int64_t h = 0; h < H; ++h)
        for (int64_t w = 0; w < W; ++w) {
          orth.at(b, c, h, w) = -e.at(b, c + 1, h, w);
          orth.at(b, c + 1, h, w) = e.at(b, c, h, w);
        }

  auto m_same = anomaly_map(e, same);
  auto m_orth = anomaly_map(e, orth);
  auto m_anti = anomaly_map(e, anti);
  for (int64_t i = 0; i < m_same.numel(); ++i) {
    CHECK(std::abs(m_same[i] - 0.0f) < 1e-6f);
    CHECK(std::abs(m_orth[i] - 1.0f) < 1e-6f);
    CHECK(std::abs(m_anti[i] - 2.0f) < 1e-6f);
  }
}

TEST_CASE("zero vectors never divide by zero") {
  Tensor<float> e({1, 3, 2, 2});
  Tensor<float> d({1, 3, 2, 2});
  auto m = anomaly_map(e, d);  // both all-zero
  for (int64_t i = 0; i < m.numel(); ++i) {
    CHECK(std::isfinite(m[i]));
    CHECK(m[i] >= 0.0f);
    CHECK(m[i] <= 2.0f);
  }
  // One side zero.
  Rng rng(5);
  fill_random(d, rng);
  auto m2 = anomaly_map(e, d);
  for (int64_t i = 0; i < m2.numel(); ++i) CHECK(std::isfinite(m2[i]));
}

TEST_CASE("map values stay in [0,2] on random inputs") {
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor<float> e({2, 5, 4, 4}), d({2, 5, 4, 4});
    fill_random(e, rng, 3.0);
    fill_random(d, rng, 3.0);
    auto m = anomaly_map(e, d);
    for (int64_t i = 0; i < m.numel(); ++i) {
      CHECK(m[i] >= 0.0f);
      CHECK(m[i] <= 2.0f);
    }
  }
}

TEST_CASE("shape mismatch is rejected") {
  Tensor<float> e({1, 3, 4, 4}), d({1, 3, 2, 2});
  CHECK_THROWS_AS(anomaly_map(e, d), ShapeError);
}

TEST_CASE("loss on identical pyramids is zero; constant maps sum per stage") {
  Rng rng(7);
  std::vector<Tensor<float>> lv;
  for (int64_t h : {8, 4, 2}) {
    Tensor<float> t({2, 6, h, h});
    fill_random(t, rng);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] += t[i] > 0 ? 0.2f : -0.2f;
    lv.push_back(t);
  }
  auto te = pyramid_of(lv, PyramidSource::kTeacher);
  auto st = pyramid_of(lv, PyramidSource::kStudent);
  CHECK(kd_loss(te, st) < 1e-6f);

  // Anti-parallel student: every map is the constant 2, so the loss is 2K.
  auto anti = lv;
  for (auto& t : anti)
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = -t[i];
  auto st2 = pyramid_of(anti, PyramidSource::kStudent);
  CHECK(kd_loss(te, st2) == doctest::Approx(6.0).epsilon(1e-5));
}

TEST_CASE("loss matches the scalar triple-loop reference") {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Tensor<float>> e_lv, d_lv;
    for (int64_t h : {4, 3, 2}) {
      const int64_t C = rng.uniform_int(1, 8);
      Tensor<float> e({2, C, h, h}), d({2, C, h, h});
      fill_random(e, rng);
      fill_random(d, rng);
      e_lv.push_back(e);
      d_lv.push_back(d);
    }
    auto te = pyramid_of(e_lv, PyramidSource::kTeacher);
    auto st = pyramid_of(d_lv, PyramidSource::kStudent);
    CHECK(kd_loss(te, st) ==
          doctest::Approx(kd_loss_reference(te, st)).epsilon(1e-6));
  }
}

TEST_CASE("loss equals mean-then-sum of the anomaly maps") {
  Rng rng(9);
  std::vector<Tensor<float>> e_lv, d_lv;
  for (int64_t h : {6, 3}) {
    Tensor<float> e({3, 4, h, h}), d({3, 4, h, h});
    fill_random(e, rng);
    fill_random(d, rng);
    e_lv.push_back(e);
    d_lv.push_back(d);
  }
  auto te = pyramid_of(e_lv, PyramidSource::kTeacher);
  auto st = pyramid_of(d_lv, PyramidSource::kStudent);
  auto maps = anomaly_maps(te, st);
  double manual = 0;
  for (const auto& m : maps.per_stage) {
    double s = 0;
    for (int64_t i = 0; i < m.numel(); ++i) s += m[i];
    manual += s / double(m.dim(1) * m.dim(2));
  }
  manual /= 3.0;
  CHECK(kd_loss(te, st) == doctest::Approx(manual).epsilon(1e-7));
  CHECK(kd_loss_from_maps(maps) == doctest::Approx(manual).epsilon(1e-7));
}

TEST_CASE("cosine distance ignores positive per-tensor scaling") {
  Rng rng(10);
  Tensor<float> e({1, 6, 3, 3}), d({1, 6, 3, 3});
  fill_random(e, rng);
  fill_random(d, rng);
  auto base = anomaly_map(e, d);
  for (double alpha : {0.25, 4.0}) {
    for (double beta : {0.5, 2.0}) {
      Tensor<float> ea = e, db = d;
      scale_inplace(ea, static_cast<float>(alpha));
      scale_inplace(db, static_cast<float>(beta));
      auto m = anomaly_map(ea, db);
      for (int64_t i = 0; i < m.numel(); ++i) {
        CHECK(std::abs(m[i] - base[i]) < 1e-6f);
      }
    }
  }
}

TEST_CASE("analytic loss gradient matches central finite differences") {
  Rng rng(11);
  std::vector<Tensor<double>> e_lv, d_lv;
  Tensor<double> e({1, 2, 3, 3}), d({1, 2, 3, 3});
  fill_random(e, rng);
  fill_random(d, rng);
  e_lv.push_back(e);
  d_lv.push_back(d);
  auto te = pyramid_of(e_lv, PyramidSource::kTeacher);
  auto st = pyramid_of(d_lv, PyramidSource::kStudent);
  auto grads = kd_loss_backward(te, st);
  REQUIRE(grads.size() == 1);
  auto loss = [&]() { return static_cast<double>(kd_loss(te, st)); };
  const double worst =
      testsupport::max_grad_rel_err(loss, st.levels[0], grads[0], 1e-6);
  CHECK(worst < 1e-4);
}

TEST_CASE("pyramid length mismatch raises") {
  Tensor<float> a({1, 2, 2, 2});
  auto te = pyramid_of<float>({a, a}, PyramidSource::kTeacher);
  auto st = pyramid_of<float>({a}, PyramidSource::kStudent);
  CHECK_THROWS_AS(anomaly_maps(te, st), ShapeError);
}
