#pragma once

#include <cmath>
#include <vector>

#include "revdistill/backbone/family.hpp"

namespace revdistill {

// Guards cosine denominators when a ReLU feature vector is all-zero at some
// location.
inline constexpr double kCosineEps = 1e-8;

template <typename T>
struct AnomalyMapSet {
  std::vector<Tensor<T>> per_stage;  // each (B, H_k, W_k)
  std::vector<int> stage_ids;

  int64_t batch() const { return per_stage.empty() ? 0 : per_stage[0].dim(0); }

  // (H,W) map of one stage for one sample.
  Tensor<T> sample_map(size_t stage_index, int64_t b) const {
    const Tensor<T>& m = per_stage[stage_index];
    Tensor<T> out({m.dim(1), m.dim(2)});
    std::copy(m.data() + b * out.numel(), m.data() + (b + 1) * out.numel(), out.data());
    return out;
  }
};

// Per-location channel-wise cosine distance between paired feature tensors:
// M(h,w) = 1 - <e,d> / ((|e|+eps)(|d|+eps)), clamped to [0,2] against
// floating-point overshoot. Inputs (B,C,H,W), output (B,H,W).
template <typename T>
Tensor<T> anomaly_map(const Tensor<T>& f_teacher, const Tensor<T>& f_student) {
  if (!f_teacher.same_shape(f_student)) {
    throw ShapeError("paired features differ: " + f_teacher.shape_str() + " vs " +
                     f_student.shape_str());
  }
  RD_CHECK(f_teacher.ndim() == 4);
  const int64_t B = f_teacher.dim(0), C = f_teacher.dim(1);
  const int64_t H = f_teacher.dim(2), W = f_teacher.dim(3);
  const int64_t HW = H * W;
  Tensor<T> map({B, H, W});
  for (int64_t b = 0; b < B; ++b) {
    const T* e0 = f_teacher.data() + b * C * HW;
    const T* d0 = f_student.data() + b * C * HW;
    T* m = map.data() + b * HW;
    for (int64_t p = 0; p < HW; ++p) {
      double dot = 0, ne = 0, nd = 0;
      const T* e = e0 + p;
      const T* d = d0 + p;
      for (int64_t c = 0; c < C; ++c) {
        const double ev = e[c * HW], dv = d[c * HW];
        dot += ev * dv;
        ne += ev * ev;
        nd += dv * dv;
      }
      const double denom = (std::sqrt(ne) + kCosineEps) * (std::sqrt(nd) + kCosineEps);
      double v = 1.0 - dot / denom;
      if (v < 0.0) v = 0.0;
      if (v > 2.0) v = 2.0;
      m[p] = static_cast<T>(v);
    }
  }
  return map;
}

template <typename T>
AnomalyMapSet<T> anomaly_maps(const FeaturePyramid<T>& teacher,
                              const FeaturePyramid<T>& student) {
  if (teacher.size() != student.size()) {
    throw ShapeError("pyramid length mismatch: " + std::to_string(teacher.size()) +
                     " vs " + std::to_string(student.size()));
  }
  AnomalyMapSet<T> set;
  set.stage_ids = teacher.stage_ids;
  for (size_t k = 0; k < teacher.size(); ++k) {
    set.per_stage.push_back(anomaly_map(teacher.levels[k], student.levels[k]));
  }
  return set;
}

template <typename T>
T kd_loss_from_maps(const AnomalyMapSet<T>& maps);

// Scalar distillation loss: per stage the spatial mean of the anomaly map,
// summed over stages, averaged over the batch. Shares anomaly_map with the
// inference path so the training signal and the score maps cannot diverge.
template <typename T>
T kd_loss(const FeaturePyramid<T>& teacher, const FeaturePyramid<T>& student) {
  const AnomalyMapSet<T> maps = anomaly_maps(teacher, student);
  return kd_loss_from_maps(maps);
}

template <typename T>
T kd_loss_from_maps(const AnomalyMapSet<T>& maps) {
  RD_CHECK(!maps.per_stage.empty());
  const int64_t B = maps.batch();
  double total = 0;
  for (const Tensor<T>& m : maps.per_stage) {
    const int64_t HW = m.dim(1) * m.dim(2);
    double s = 0;
    const T* p = m.data();
    for (int64_t i = 0; i < m.numel(); ++i) s += p[i];
    total += s / static_cast<double>(HW);
  }
  return static_cast<T>(total / static_cast<double>(B));
}

// Analytic gradient of kd_loss with respect to each student level.
template <typename T>
std::vector<Tensor<T>> kd_loss_backward(const FeaturePyramid<T>& teacher,
                                        const FeaturePyramid<T>& student) {
  RD_CHECK(teacher.size() == student.size());
  std::vector<Tensor<T>> grads;
  const int64_t B = teacher.levels.empty() ? 0 : teacher.levels[0].dim(0);
  for (size_t k = 0; k < teacher.size(); ++k) {
    const Tensor<T>& fe = teacher.levels[k];
    const Tensor<T>& fd = student.levels[k];
    RD_CHECK(fe.same_shape(fd));
    const int64_t C = fe.dim(1), H = fe.dim(2), W = fe.dim(3);
    const int64_t HW = H * W;
    Tensor<T> g(fd.shape());
    const double scale = 1.0 / (static_cast<double>(B) * static_cast<double>(HW));
    for (int64_t b = 0; b < B; ++b) {
      const T* e0 = fe.data() + b * C * HW;
      const T* d0 = fd.data() + b * C * HW;
      T* g0 = g.data() + b * C * HW;
      for (int64_t p = 0; p < HW; ++p) {
        const T* e = e0 + p;
        const T* d = d0 + p;
        double dot = 0, ne2 = 0, nd2 = 0;
        for (int64_t c = 0; c < C; ++c) {
          const double ev = e[c * HW], dv = d[c * HW];
          dot += ev * dv;
          ne2 += ev * ev;
          nd2 += dv * dv;
        }
        const double norm_e = std::sqrt(ne2), norm_d = std::sqrt(nd2);
        const double Ne = norm_e + kCosineEps, Nd = norm_d + kCosineEps;
        const double cosv = dot / (Ne * Nd);
        const double raw = 1.0 - cosv;
        if (raw < 0.0 || raw > 2.0) {
          // Clamped in the forward pass; no gradient flows.
          for (int64_t c = 0; c < C; ++c) g0[p + c * HW] = T(0);
          continue;
        }
        const double a = 1.0 / (Ne * Nd);
        const double bcoef = norm_d > 0 ? dot / (Ne * Nd * Nd * norm_d) : 0.0;
        for (int64_t c = 0; c < C; ++c) {
          const double ev = e[c * HW], dv = d[c * HW];
          // dL/dd = -scale * dcos/dd
          g0[p + c * HW] = static_cast<T>(-scale * (ev * a - dv * bcoef));
        }
      }
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

}  // namespace revdistill
