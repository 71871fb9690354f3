// Copyright 2026 the semrank authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <vector>

#include "semrank/kernels.hpp"
#include "semrank/rng.hpp"

using namespace semrank;
using namespace semrank::kernels;

namespace {
std::vector<float> random_vec(Rng& rng, std::size_t n) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.normal(0.0, 1.0));
  return v;
}
}  // namespace

TEST_CASE("matmul matches a plain triple loop") {
  Rng rng(11);
  const int n = 7, k = 13, m = 9;
  const auto a = random_vec(rng, n * k);
  const auto b = random_vec(rng, k * m);
  const auto bias = random_vec(rng, m);

  std::vector<float> expected(n * m);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      double acc = bias[j];
      for (int p = 0; p < k; ++p) acc += double(a[i * k + p]) * b[p * m + j];
      expected[i * m + j] = static_cast<float>(acc);
    }
  }

  std::vector<float> got(n * m);
  matmul_serial(a.data(), b.data(), bias.data(), got.data(), n, k, m);
  for (int i = 0; i < n * m; ++i) {
    CHECK(got[i] == doctest::Approx(expected[i]).epsilon(1e-5));
  }
}

TEST_CASE("omp kernels are bit-identical to serial") {
  Rng rng(5);
  const int n = 33, k = 64, m = 48;
  const auto a = random_vec(rng, n * k);
  const auto b = random_vec(rng, k * m);

  std::vector<float> serial(n * m), parallel(n * m);
  matmul_serial(a.data(), b.data(), nullptr, serial.data(), n, k, m);
  matmul_omp(a.data(), b.data(), nullptr, parallel.data(), n, k, m);
  CHECK(serial == parallel);

  const auto gain = random_vec(rng, k);
  std::vector<float> ln_s(n * k), ln_p(n * k);
  layer_norm_serial(a.data(), gain.data(), ln_s.data(), n, k, 1e-5f);
  layer_norm_omp(a.data(), gain.data(), ln_p.data(), n, k, 1e-5f);
  CHECK(ln_s == ln_p);

  std::vector<float> g_s(n * k), g_p(n * k);
  gelu_serial(a.data(), g_s.data(), long(n) * k);
  gelu_omp(a.data(), g_p.data(), long(n) * k);
  CHECK(g_s == g_p);
}

TEST_CASE("attention: single position attending to itself is the value row") {
  // One query over one slot: softmax over a single score is 1, so the
  // output must equal V exactly regardless of Q and K.
  const int heads = 2, dh = 4, d = heads * dh;
  Rng rng(3);
  const auto q = random_vec(rng, d);
  const auto k = random_vec(rng, d);
  const auto v = random_vec(rng, d);
  std::vector<float> out(d);
  MaskSpan span{0, 0, 0};
  attention_serial(q.data(), k.data(), v.data(), out.data(), 1, heads, dh, &span);
  for (int j = 0; j < d; ++j) CHECK(out[j] == doctest::Approx(v[j]));
}

TEST_CASE("attention matches a dense reference with causal and span masks") {
  const int heads = 2, dh = 8, d = heads * dh;
  const int total = 12, n_new = 12;
  Rng rng(17);
  const auto q = random_vec(rng, n_new * d);
  const auto kc = random_vec(rng, total * d);
  const auto vc = random_vec(rng, total * d);

  // Spans: first 4 slots causal prefix, items [4,9) and [9,12).
  std::vector<MaskSpan> spans;
  for (int p = 0; p < 4; ++p) spans.push_back({0, 0, p});
  for (int p = 4; p < 9; ++p) spans.push_back({4, 4, p});
  for (int p = 9; p < 12; ++p) spans.push_back({4, 9, p});

  std::vector<float> out(n_new * d);
  attention_serial(q.data(), kc.data(), vc.data(), out.data(), n_new, heads,
                   dh, spans.data());

  std::vector<float> out_omp(n_new * d);
  attention_omp(q.data(), kc.data(), vc.data(), out_omp.data(), n_new, heads,
                dh, spans.data());
  CHECK(out == out_omp);

  // Dense double-precision reference over the explicit allowed set.
  for (int i = 0; i < n_new; ++i) {
    std::vector<int> allowed;
    for (int s = 0; s < spans[i].prefix_end; ++s) allowed.push_back(s);
    for (int s = spans[i].span_start; s <= spans[i].pos; ++s) allowed.push_back(s);
    for (int h = 0; h < heads; ++h) {
      std::vector<double> scores;
      for (int s : allowed) {
        double dot = 0;
        for (int j = 0; j < dh; ++j) {
          dot += double(q[i * d + h * dh + j]) * kc[s * d + h * dh + j];
        }
        scores.push_back(dot / std::sqrt(double(dh)));
      }
      double mx = scores[0];
      for (double s : scores) mx = std::max(mx, s);
      double denom = 0;
      for (double& s : scores) {
        s = std::exp(s - mx);
        denom += s;
      }
      for (int j = 0; j < dh; ++j) {
        double acc = 0;
        for (std::size_t a = 0; a < allowed.size(); ++a) {
          acc += scores[a] / denom * vc[allowed[a] * d + h * dh + j];
        }
        CHECK(out[i * d + h * dh + j] ==
              doctest::Approx(acc).epsilon(1e-4));
      }
    }
  }
}
