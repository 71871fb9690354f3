// Copyright 2026 the semrank authors
// SPDX-License-Identifier: Apache-2.0
//
// Compares the serial reference kernels against the OpenMP lanes and
// checks that both produce identical results while timing them. Run from
// the build tree: ./bench/semrank_bench [repeats]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#include <omp.h>

#include "semrank/engine.hpp"
#include "semrank/kernels.hpp"
#include "semrank/model.hpp"
#include "semrank/retrieval.hpp"
#include "semrank/rng.hpp"

using namespace semrank;
using namespace semrank::kernels;

namespace {

using Clock = std::chrono::steady_clock;

double time_ms(const std::function<void()>& fn, int repeats) {
  std::vector<double> times;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = Clock::now();
    fn();
    times.push_back(
        std::chrono::duration<double, std::milli>(Clock::now() - t0).count());
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

std::vector<float> random_vec(Rng& rng, std::size_t n) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.normal(0.0, 1.0));
  return v;
}

void report(const char* name, double serial_ms, double parallel_ms,
            bool identical) {
  std::printf("%-22s serial %9.3f ms   omp %9.3f ms   speedup %5.2fx   %s\n",
              name, serial_ms, parallel_ms, serial_ms / parallel_ms,
              identical ? "identical" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  const int repeats = argc > 1 ? std::atoi(argv[1]) : 5;
  std::printf("omp threads: %d, repeats: %d\n", omp_get_max_threads(), repeats);

  Rng rng(7);

  {
    const int n = 512, k = 256, m = 512;
    const auto a = random_vec(rng, std::size_t(n) * k);
    const auto b = random_vec(rng, std::size_t(k) * m);
    std::vector<float> cs(std::size_t(n) * m), cp(std::size_t(n) * m);
    const double ts = time_ms(
        [&] { matmul_serial(a.data(), b.data(), nullptr, cs.data(), n, k, m); },
        repeats);
    const double tp = time_ms(
        [&] { matmul_omp(a.data(), b.data(), nullptr, cp.data(), n, k, m); },
        repeats);
    report("matmul 512x256x512", ts, tp, cs == cp);
  }

  {
    const int heads = 4, dh = 16, d = heads * dh;
    const int total = 1024;
    const auto q = random_vec(rng, std::size_t(total) * d);
    const auto kc = random_vec(rng, std::size_t(total) * d);
    const auto vc = random_vec(rng, std::size_t(total) * d);
    std::vector<MaskSpan> spans;
    for (int p = 0; p < total; ++p) spans.push_back({0, 0, p});
    std::vector<float> os(std::size_t(total) * d), op(std::size_t(total) * d);
    const double ts = time_ms(
        [&] {
          attention_serial(q.data(), kc.data(), vc.data(), os.data(), total,
                           heads, dh, spans.data());
        },
        repeats);
    const double tp = time_ms(
        [&] {
          attention_omp(q.data(), kc.data(), vc.data(), op.data(), total,
                        heads, dh, spans.data());
        },
        repeats);
    report("attention 1024 causal", ts, tp, os == op);
  }

  {
    // Whole-model prefill through the kernel dispatcher.
    const auto cfg = ModelConfig::default_toy();
    const auto weights = init_model(cfg, 1);
    std::vector<int> tokens;
    for (int i = 0; i < 600; ++i) {
      tokens.push_back(static_cast<int>(rng.uniform_int(0, 255)));
    }
    std::vector<float> hs, hp;
    const double ts = time_ms(
        [&] {
          set_default_exec(Exec::Serial);
          KVCache cache = KVCache::empty(cfg);
          hs = prefill(weights, tokens, cache);
        },
        repeats);
    const double tp = time_ms(
        [&] {
          set_default_exec(Exec::Parallel);
          KVCache cache = KVCache::empty(cfg);
          hp = prefill(weights, tokens, cache);
        },
        repeats);
    set_default_exec(Exec::Parallel);
    report("prefill 600 tokens", ts, tp, hs == hp);
  }

  {
    // Exhaustive retrieval scan, serial vs sharded.
    const int n_docs = 200'000, d_emb = 32;
    Corpus corpus;
    corpus.feature_names = {"ctr"};
    for (int i = 0; i < n_docs; ++i) {
      DocumentRecord doc;
      doc.doc_id = i;
      doc.embedding.resize(d_emb);
      double norm = 0;
      for (auto& x : doc.embedding) {
        x = static_cast<float>(rng.normal(0, 1));
        norm += double(x) * x;
      }
      const auto inv = static_cast<float>(1.0 / std::sqrt(norm));
      for (auto& x : doc.embedding) x *= inv;
      doc.features = {static_cast<float>(rng.uniform())};
      corpus.docs.push_back(std::move(doc));
    }
    QuerySpec query;
    query.embedding = corpus.docs[0].embedding;
    query.k = 100;
    RARWeights w{1.0, {0.25}, 0.5};
    std::vector<RankedDoc> rs, rp;
    const double ts = time_ms(
        [&] { rs = exhaustive_topk(corpus, query, w, Exec::Serial); }, repeats);
    const double tp = time_ms(
        [&] { rp = exhaustive_topk(corpus, query, w, Exec::Parallel); },
        repeats);
    bool identical = rs.size() == rp.size();
    for (std::size_t i = 0; identical && i < rs.size(); ++i) {
      identical = rs[i].doc_id == rp[i].doc_id && rs[i].score == rp[i].score;
    }
    report("topk scan 200k docs", ts, tp, identical);
  }

  return 0;
}
