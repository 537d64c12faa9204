#include <doctest.h>

#include "revdistill/core/gemm.hpp"
#include "revdistill/core/rng.hpp"
#include "revdistill/core/sha256.hpp"
#include "revdistill/core/tensor.hpp"

using namespace revdistill;

TEST_CASE("tensor basics") {
  Tensor<float> t({2, 3, 4, 5});
  CHECK(t.numel() == 120);
  CHECK(t.ndim() == 4);
  t.at(1, 2, 3, 4) = 7.0f;
  CHECK(t[119] == 7.0f);
  CHECK(t.shape_str() == "(2,3,4,5)");
  Tensor<double> d = t.cast<double>();
  CHECK(d[119] == 7.0);
}

TEST_CASE("sha256 known vectors") {
  CHECK(Sha256::hex_of("", 0) ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(Sha256::hex_of("abc", 3) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  // Multi-block message.
  std::string msg(1000, 'a');
  Sha256 h;
  for (int i = 0; i < 1000; ++i) h.update(msg.data(), msg.size());
  CHECK(h.hex() == "cdc76e5c9914fb9281a1c7e284d73e67f1809a48a497200e046d39ccc7112cd0");
}

TEST_CASE("rng determinism and ranges") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) {
    const double u = a.uniform();
    CHECK(u == b.uniform());
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  Rng c(1);
  double mean = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) mean += c.normal();
  mean /= n;
  CHECK(std::abs(mean) < 0.05);
  for (int i = 0; i < 1000; ++i) {
    const int64_t v = c.uniform_int(3, 7);
    CHECK(v >= 3);
    CHECK(v <= 7);
  }
}

TEST_CASE("gemm against hand loop") {
  const int m = 3, n = 4, k = 5;
  std::vector<float> a(m * k), b(k * n), c(m * n, 0.f), ref(m * n, 0.f);
  Rng rng(7);
  for (auto& v : a) v = static_cast<float>(rng.normal());
  for (auto& v : b) v = static_cast<float>(rng.normal());
  gemm(false, false, m, n, k, 1.0f, a.data(), k, b.data(), n, 0.0f, c.data(), n);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      for (int l = 0; l < k; ++l) ref[i * n + j] += a[i * k + l] * b[l * n + j];
    }
  }
  for (int i = 0; i < m * n; ++i) CHECK(c[i] == doctest::Approx(ref[i]).epsilon(1e-5));

  // Transposed A path.
  std::vector<float> ct(m * n, 0.f);
  std::vector<float> at(k * m);
  for (int i = 0; i < m; ++i) {
    for (int l = 0; l < k; ++l) at[l * m + i] = a[i * k + l];
  }
  gemm(true, false, m, n, k, 1.0f, at.data(), m, b.data(), n, 0.0f, ct.data(), n);
  for (int i = 0; i < m * n; ++i) CHECK(ct[i] == doctest::Approx(ref[i]).epsilon(1e-5));
}
