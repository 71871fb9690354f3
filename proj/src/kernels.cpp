// Copyright 2026 the semrank authors
// SPDX-License-Identifier: Apache-2.0

#include "semrank/kernels.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <vector>

namespace semrank::kernels {

namespace {
std::atomic<Exec> g_exec{Exec::Parallel};

inline void matmul_row(const float* __restrict__ a_row,
                       const float* __restrict__ b, const float* bias,
                       float* __restrict__ c_row, int k, int m) {
  if (bias != nullptr) {
    std::memcpy(c_row, bias, sizeof(float) * static_cast<std::size_t>(m));
  } else {
    std::memset(c_row, 0, sizeof(float) * static_cast<std::size_t>(m));
  }
  for (int p = 0; p < k; ++p) {
    const float av = a_row[p];
    const float* __restrict__ b_row = b + static_cast<std::size_t>(p) * m;
    for (int j = 0; j < m; ++j) c_row[j] += av * b_row[j];
  }
}

inline void layer_norm_row(const float* __restrict__ x,
                           const float* __restrict__ gain,
                           float* __restrict__ out, int d, float eps) {
  float mean = 0.0f;
  for (int j = 0; j < d; ++j) mean += x[j];
  mean /= static_cast<float>(d);
  float var = 0.0f;
  for (int j = 0; j < d; ++j) {
    const float t = x[j] - mean;
    var += t * t;
  }
  var /= static_cast<float>(d);
  const float inv = 1.0f / std::sqrt(var + eps);
  for (int j = 0; j < d; ++j) out[j] = (x[j] - mean) * inv * gain[j];
}

inline float gelu_one(float v) {
  return 0.5f * v * (1.0f + std::erf(v * 0.70710678118654752f));
}

// Softmax(QK^T/sqrt(dh))V for one (query row, head) over the allowed slots.
inline void attention_one(const float* __restrict__ q_head,
                          const float* __restrict__ k_cache,
                          const float* __restrict__ v_cache, int n_heads,
                          int head_dim, int head, const MaskSpan& span,
                          float* __restrict__ scores,
                          float* __restrict__ out_head) {
  const float scale = 1.0f / std::sqrt(static_cast<float>(head_dim));
  const std::size_t stride = static_cast<std::size_t>(n_heads) * head_dim;
  const std::size_t head_off = static_cast<std::size_t>(head) * head_dim;

  float max_score = -1e30f;
  int n_scores = 0;
  auto score_range = [&](int lo, int hi) {  // slots [lo, hi)
    for (int s = lo; s < hi; ++s) {
      const float* __restrict__ krow = k_cache + s * stride + head_off;
      float dot = 0.0f;
      for (int j = 0; j < head_dim; ++j) dot += q_head[j] * krow[j];
      dot *= scale;
      scores[n_scores++] = dot;
      if (dot > max_score) max_score = dot;
    }
  };
  score_range(0, span.prefix_end);
  score_range(span.span_start, span.pos + 1);

  float denom = 0.0f;
  for (int s = 0; s < n_scores; ++s) {
    scores[s] = std::exp(scores[s] - max_score);
    denom += scores[s];
  }
  const float inv_denom = 1.0f / denom;

  for (int j = 0; j < head_dim; ++j) out_head[j] = 0.0f;
  int idx = 0;
  auto accum_range = [&](int lo, int hi) {
    for (int s = lo; s < hi; ++s) {
      const float w = scores[idx++] * inv_denom;
      const float* __restrict__ vrow = v_cache + s * stride + head_off;
      for (int j = 0; j < head_dim; ++j) out_head[j] += w * vrow[j];
    }
  };
  accum_range(0, span.prefix_end);
  accum_range(span.span_start, span.pos + 1);
}
}  // namespace

Exec default_exec() { return g_exec.load(std::memory_order_relaxed); }
void set_default_exec(Exec e) { g_exec.store(e, std::memory_order_relaxed); }

void matmul_serial(const float* a, const float* b, const float* bias, float* c,
                   int n, int k, int m) {
  for (int i = 0; i < n; ++i) {
    matmul_row(a + static_cast<std::size_t>(i) * k, b, bias,
               c + static_cast<std::size_t>(i) * m, k, m);
  }
}

void matmul_omp(const float* a, const float* b, const float* bias, float* c,
                int n, int k, int m) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    matmul_row(a + static_cast<std::size_t>(i) * k, b, bias,
               c + static_cast<std::size_t>(i) * m, k, m);
  }
}

void matmul(const float* a, const float* b, const float* bias, float* c, int n,
            int k, int m, Exec e) {
  if (e == Exec::Parallel && n > 1) {
    matmul_omp(a, b, bias, c, n, k, m);
  } else {
    matmul_serial(a, b, bias, c, n, k, m);
  }
}

void layer_norm_serial(const float* x, const float* gain, float* out, int n,
                       int d, float eps) {
  for (int i = 0; i < n; ++i) {
    layer_norm_row(x + static_cast<std::size_t>(i) * d, gain,
                   out + static_cast<std::size_t>(i) * d, d, eps);
  }
}

void layer_norm_omp(const float* x, const float* gain, float* out, int n,
                    int d, float eps) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    layer_norm_row(x + static_cast<std::size_t>(i) * d, gain,
                   out + static_cast<std::size_t>(i) * d, d, eps);
  }
}

void layer_norm(const float* x, const float* gain, float* out, int n, int d,
                float eps, Exec e) {
  if (e == Exec::Parallel && n > 1) {
    layer_norm_omp(x, gain, out, n, d, eps);
  } else {
    layer_norm_serial(x, gain, out, n, d, eps);
  }
}

void gelu_serial(const float* x, float* out, long n) {
  for (long i = 0; i < n; ++i) out[i] = gelu_one(x[i]);
}

void gelu_omp(const float* x, float* out, long n) {
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) out[i] = gelu_one(x[i]);
}

void gelu(const float* x, float* out, long n, Exec e) {
  if (e == Exec::Parallel && n > 4096) {
    gelu_omp(x, out, n);
  } else {
    gelu_serial(x, out, n);
  }
}

void add_inplace(float* a, const float* b, long n, Exec e) {
  (void)e;  // memory-bound; threading never pays off here
  for (long i = 0; i < n; ++i) a[i] += b[i];
}

void attention_serial(const float* q, const float* k_cache,
                      const float* v_cache, float* out, int n_new, int n_heads,
                      int head_dim, const MaskSpan* spans) {
  int max_slots = 0;
  for (int i = 0; i < n_new; ++i) {
    const int slots = spans[i].prefix_end + (spans[i].pos + 1 - spans[i].span_start);
    if (slots > max_slots) max_slots = slots;
  }
  std::vector<float> scores(static_cast<std::size_t>(max_slots));
  const int d_model = n_heads * head_dim;
  for (int i = 0; i < n_new; ++i) {
    for (int h = 0; h < n_heads; ++h) {
      attention_one(q + static_cast<std::size_t>(i) * d_model + h * head_dim,
                    k_cache, v_cache, n_heads, head_dim, h, spans[i],
                    scores.data(),
                    out + static_cast<std::size_t>(i) * d_model + h * head_dim);
    }
  }
}

void attention_omp(const float* q, const float* k_cache, const float* v_cache,
                   float* out, int n_new, int n_heads, int head_dim,
                   const MaskSpan* spans) {
  int max_slots = 0;
  for (int i = 0; i < n_new; ++i) {
    const int slots = spans[i].prefix_end + (spans[i].pos + 1 - spans[i].span_start);
    if (slots > max_slots) max_slots = slots;
  }
  const int d_model = n_heads * head_dim;
  const long work = static_cast<long>(n_new) * n_heads;
#pragma omp parallel
  {
    std::vector<float> scores(static_cast<std::size_t>(max_slots));
    // Later positions see more keys; chunked dynamic scheduling balances
    // the triangle without affecting the per-element arithmetic.
#pragma omp for schedule(dynamic, 16)
    for (long t = 0; t < work; ++t) {
      const int i = static_cast<int>(t / n_heads);
      const int h = static_cast<int>(t % n_heads);
      attention_one(q + static_cast<std::size_t>(i) * d_model + h * head_dim,
                    k_cache, v_cache, n_heads, head_dim, h, spans[i],
                    scores.data(),
                    out + static_cast<std::size_t>(i) * d_model + h * head_dim);
    }
  }
}

void attention(const float* q, const float* k_cache, const float* v_cache,
               float* out, int n_new, int n_heads, int head_dim,
               const MaskSpan* spans, Exec e) {
  if (e == Exec::Parallel && static_cast<long>(n_new) * n_heads > 1) {
    attention_omp(q, k_cache, v_cache, out, n_new, n_heads, head_dim, spans);
  } else {
    attention_serial(q, k_cache, v_cache, out, n_new, n_heads, head_dim, spans);
  }
}

}  // namespace semrank::kernels
