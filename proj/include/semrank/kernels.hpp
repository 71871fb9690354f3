// Copyright 2026 the semrank authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace semrank::kernels {

// Every kernel has a serial reference and an OpenMP variant. Both run the
// per-output-element arithmetic in the same order, so their results are
// bit-identical; tests hold them to exact equality.
enum class Exec { Serial, Parallel };

Exec default_exec();
void set_default_exec(Exec e);

// c[n x m] = a[n x k] * b[k x m], row-major. bias (length m) optional.
void matmul(const float* a, const float* b, const float* bias, float* c,
            int n, int k, int m, Exec e);
void matmul_serial(const float* a, const float* b, const float* bias, float* c,
                   int n, int k, int m);
void matmul_omp(const float* a, const float* b, const float* bias, float* c,
                int n, int k, int m);

// Per-row layer norm with learned scale, no bias. out may alias x.
void layer_norm(const float* x, const float* gain, float* out, int n, int d,
                float eps, Exec e);
void layer_norm_serial(const float* x, const float* gain, float* out, int n,
                       int d, float eps);
void layer_norm_omp(const float* x, const float* gain, float* out, int n,
                    int d, float eps);

// Elementwise exact GELU over n*d values.
void gelu(const float* x, float* out, long n, Exec e);
void gelu_serial(const float* x, float* out, long n);
void gelu_omp(const float* x, float* out, long n);

void add_inplace(float* a, const float* b, long n, Exec e);

// Attention over a contiguous kv layout [slot][head][head_dim].
// Query row i may attend key slots [0, prefix_end) plus [span_start, pos].
// Plain causal attention is {prefix_end = 0, span_start = 0, pos = slot}.
struct MaskSpan {
  int prefix_end;
  int span_start;
  int pos;
};

void attention(const float* q, const float* k_cache, const float* v_cache,
               float* out, int n_new, int n_heads, int head_dim,
               const MaskSpan* spans, Exec e);
void attention_serial(const float* q, const float* k_cache,
                      const float* v_cache, float* out, int n_new, int n_heads,
                      int head_dim, const MaskSpan* spans);
void attention_omp(const float* q, const float* k_cache, const float* v_cache,
                   float* out, int n_new, int n_heads, int head_dim,
                   const MaskSpan* spans);

}  // namespace semrank::kernels
