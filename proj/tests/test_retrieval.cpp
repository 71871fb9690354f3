// Copyright 2026 the semrank authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "semrank/datagen.hpp"
#include "semrank/error.hpp"
#include "semrank/ranking_math.hpp"
#include "semrank/retrieval.hpp"
#include "semrank/rng.hpp"
#include "test_util.hpp"

using namespace semrank;
using semrank::testutil::central_diff;
using semrank::testutil::rel_err;

namespace {
std::vector<float> unit_vector(Rng& rng, int d) {
  std::vector<float> v(static_cast<std::size_t>(d));
  double norm = 0;
  for (auto& x : v) {
    x = static_cast<float>(rng.normal(0, 1));
    norm += double(x) * x;
  }
  const auto inv = static_cast<float>(1.0 / std::sqrt(norm));
  for (auto& x : v) x *= inv;
  return v;
}

Corpus random_corpus(Rng& rng, int n_docs, int d_emb) {
  Corpus corpus;
  corpus.feature_names = {"ctr", "prox"};
  static const std::vector<std::string> kColors = {"red", "green", "blue"};
  static const std::vector<std::string> kSizes = {"s", "m", "l"};
  for (int i = 0; i < n_docs; ++i) {
    DocumentRecord doc;
    doc.doc_id = i;
    doc.embedding = unit_vector(rng, d_emb);
    doc.attributes["color"] =
        kColors[static_cast<std::size_t>(rng.uniform_int(0, 2))];
    doc.attributes["size"] =
        kSizes[static_cast<std::size_t>(rng.uniform_int(0, 2))];
    doc.features = {static_cast<float>(rng.uniform()),
                    static_cast<float>(rng.uniform())};
    corpus.docs.push_back(std::move(doc));
  }
  return corpus;
}

// Full-sort oracle with the same ordering rule.
std::vector<RankedDoc> topk_oracle(const Corpus& corpus, const QuerySpec& q,
                                   const RARWeights& w) {
  std::vector<RankedDoc> all;
  for (std::size_t i : filter_candidates(corpus, q.filters)) {
    all.push_back({corpus.docs[i].doc_id,
                   rar_score(q.embedding, corpus.docs[i], w)});
  }
  std::sort(all.begin(), all.end(), [](const RankedDoc& a, const RankedDoc& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.doc_id < b.doc_id;
  });
  if (all.size() > static_cast<std::size_t>(q.k)) {
    all.resize(static_cast<std::size_t>(q.k));
  }
  return all;
}

bool same_ranking(const std::vector<RankedDoc>& a,
                  const std::vector<RankedDoc>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].doc_id != b[i].doc_id || a[i].score != b[i].score) return false;
  }
  return true;
}
}  // namespace

TEST_CASE("cosine") {
  std::vector<float> e1{1, 0, 0, 0}, e2{0, 1, 0, 0};
  CHECK(cosine(e1, e1) == doctest::Approx(1.0));
  CHECK(cosine(e1, e2) == doctest::Approx(0.0));

  Rng rng(5);
  for (int t = 0; t < 100; ++t) {
    const auto a = unit_vector(rng, 32);
    const auto b = unit_vector(rng, 32);
    long double dot = 0, na = 0, nb = 0;
    for (int i = 0; i < 32; ++i) {
      dot += static_cast<long double>(a[i]) * b[i];
      na += static_cast<long double>(a[i]) * a[i];
      nb += static_cast<long double>(b[i]) * b[i];
    }
    const auto want = static_cast<double>(dot / std::sqrt(na * nb));
    CHECK(std::fabs(cosine(a, b) - want) <= 1e-6);
  }

  std::vector<float> zero(4, 0.0f);
  CHECK_THROWS_AS(cosine(zero, e1), Error);
}

TEST_CASE("rar_score") {
  Rng rng(8);
  DocumentRecord doc;
  doc.doc_id = 1;
  doc.embedding = unit_vector(rng, 8);
  doc.features = {2.0f};

  // w0 = 1 and zero feature weights reduce to plain cosine.
  const auto q = unit_vector(rng, 8);
  CHECK(rar_score(q, doc, {1.0, {0.0}, 0.5}) ==
        doctest::Approx(cosine(q, doc.embedding)));

  // cos = 0.8, w0 = 0.5, f1 = 2.0, w1 = 0.1 -> 0.6.
  DocumentRecord aligned;
  aligned.embedding = {0.8f, 0.6f};
  aligned.features = {2.0f};
  std::vector<float> qe{1.0f, 0.0f};
  CHECK(rar_score(qe, aligned, {0.5, {0.1}, 0.5}) == doctest::Approx(0.6));

  // Linear in the weights.
  RARWeights w{0.7, {0.3}, 0.5};
  RARWeights doubled{1.4, {0.6}, 0.5};
  CHECK(rar_score(q, doc, doubled) == doctest::Approx(2 * rar_score(q, doc, w)));

  DocumentRecord misaligned = doc;
  misaligned.features = {1.0f, 2.0f};
  CHECK_THROWS_AS(rar_score(q, misaligned, w), Error);
}

TEST_CASE("filter_candidates") {
  Rng rng(11);
  const auto corpus = random_corpus(rng, 500, 8);

  CHECK(filter_candidates(corpus, {}).size() == corpus.docs.size());

  // Contradictory predicates give the empty set.
  AttributeFilters contradictory{{"color", {}}};
  CHECK(filter_candidates(corpus, contradictory).empty());

  CHECK_THROWS_AS(filter_candidates(corpus, {{"nope", {"x"}}}), Error);

  // Linear-scan predicate oracle on random conjunctive filters.
  for (int t = 0; t < 20; ++t) {
    AttributeFilters filters;
    if (rng.bernoulli(0.7)) {
      filters["color"] = {rng.bernoulli(0.5) ? "red" : "green"};
    }
    if (rng.bernoulli(0.5)) filters["size"] = {"s", "m"};
    const auto got = filter_candidates(corpus, filters);
    std::vector<std::size_t> want;
    for (std::size_t i = 0; i < corpus.docs.size(); ++i) {
      bool ok = true;
      for (const auto& [attr, values] : filters) {
        const auto& actual = corpus.docs[i].attributes.at(attr);
        if (std::find(values.begin(), values.end(), actual) == values.end()) {
          ok = false;
        }
      }
      if (ok) want.push_back(i);
    }
    CHECK(got == want);
  }
}

TEST_CASE("exhaustive_topk equals the full-sort oracle") {
  Rng rng(21);
  for (int t = 0; t < 10; ++t) {
    const auto corpus = random_corpus(rng, 3000, 16);
    QuerySpec q;
    q.embedding = unit_vector(rng, 16);
    q.k = static_cast<int>(rng.uniform_int(1, 40));
    if (rng.bernoulli(0.5)) q.filters["color"] = {"red", "blue"};
    RARWeights w{1.0, {0.2, -0.1}, 0.5};

    const auto serial = exhaustive_topk(corpus, q, w, kernels::Exec::Serial);
    const auto oracle = topk_oracle(corpus, q, w);
    CHECK(same_ranking(serial, oracle));

    // Sharded parallel scan merges to exactly the serial result.
    const auto parallel = exhaustive_topk(corpus, q, w, kernels::Exec::Parallel);
    CHECK(same_ranking(serial, parallel));
  }
}

TEST_CASE("filter-then-score equals score-then-filter") {
  Rng rng(29);
  const auto corpus = random_corpus(rng, 2000, 8);
  RARWeights w{1.0, {0.4, -0.3}, 0.5};
  for (int t = 0; t < 10; ++t) {
    QuerySpec q;
    q.embedding = unit_vector(rng, 8);
    q.k = 30;
    q.filters["color"] = {rng.bernoulli(0.5) ? "red" : "blue"};

    const auto filtered_first = exhaustive_topk(corpus, q, w,
                                                kernels::Exec::Serial);

    // Score the whole corpus, then filter and cut.
    QuerySpec open = q;
    open.filters.clear();
    open.k = static_cast<int>(corpus.docs.size());
    const auto all = exhaustive_topk(corpus, open, w, kernels::Exec::Serial);
    std::vector<RankedDoc> scored_first;
    const auto keep = filter_candidates(corpus, q.filters);
    std::set<std::int64_t> keep_ids;
    for (std::size_t i : keep) keep_ids.insert(corpus.docs[i].doc_id);
    for (const auto& r : all) {
      if (keep_ids.contains(r.doc_id)) scored_first.push_back(r);
      if (scored_first.size() == static_cast<std::size_t>(q.k)) break;
    }
    CHECK(same_ranking(filtered_first, scored_first));
  }
}

TEST_CASE("exhaustive_topk edge rules") {
  Corpus corpus;
  corpus.feature_names = {};
  for (int i = 0; i < 4; ++i) {
    DocumentRecord doc;
    doc.doc_id = 3 - i;  // ids out of storage order
    doc.embedding = {1.0f, 0.0f};
    corpus.docs.push_back(doc);
  }
  QuerySpec q;
  q.embedding = {1.0f, 0.0f};
  q.k = 10;  // K over corpus size returns the whole sorted list
  RARWeights w{1.0, {}, 0.5};
  const auto all = exhaustive_topk(corpus, q, w, kernels::Exec::Serial);
  REQUIRE(all.size() == 4);
  // Equal scores everywhere: ascending doc_id.
  for (std::size_t i = 0; i < all.size(); ++i) {
    CHECK(all[i].doc_id == static_cast<std::int64_t>(i));
  }

  // Scaling all weights by c > 0 preserves the ordering.
  Rng rng(3);
  auto big = random_corpus(rng, 200, 8);
  QuerySpec q2;
  q2.embedding = unit_vector(rng, 8);
  q2.k = 50;
  RARWeights w2{0.8, {0.3, 0.4}, 0.5};
  RARWeights w2s{0.8 * 3, {0.3 * 3, 0.4 * 3}, 0.5};
  const auto base = exhaustive_topk(big, q2, w2, kernels::Exec::Serial);
  const auto scaled = exhaustive_topk(big, q2, w2s, kernels::Exec::Serial);
  REQUIRE(base.size() == scaled.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    CHECK(base[i].doc_id == scaled[i].doc_id);
  }
}

TEST_CASE("rar training: gradients, boundary, descent, separable accuracy") {
  const auto data = make_rar_training_set(17, 400);

  SUBCASE("gradient matches central differences") {
    Rng rng(31);
    for (int t = 0; t < 100; ++t) {
      RARWeights w{rng.normal(0, 1), {rng.normal(0, 1), rng.normal(0, 1),
                                      rng.normal(0, 1)}, 0.5};
      const double lambda = rng.uniform();
      const auto g = rar_loss(w, data, lambda);
      CHECK(rel_err(g.d_w0, central_diff([&](double x) {
              auto mod = w;
              mod.w0 = x;
              return rar_loss(mod, data, lambda).loss;
            }, w.w0)) <= 1e-4);
      for (std::size_t i = 0; i < w.w.size(); ++i) {
        CHECK(rel_err(g.d_w[i], central_diff([&](double x) {
                auto mod = w;
                mod.w[i] = x;
                return rar_loss(mod, data, lambda).loss;
              }, w.w[i])) <= 1e-4);
      }
    }
  }

  SUBCASE("lambda = 1 reduces to relevance-only BCE") {
    RARWeights w{0.4, {0.1, -0.2, 0.3}, 0.5};
    auto relevance_only = data;
    for (auto& p : relevance_only) p.engagement_label = p.relevance_label;
    CHECK(rar_loss(w, data, 1.0).loss ==
          doctest::Approx(rar_loss(w, relevance_only, 1.0).loss));
  }

  SUBCASE("descent and separable accuracy") {
    RARWeights init{0.0, {0.0, 0.0, 0.0}, 0.5};
    const double initial = rar_loss(init, data, 0.5).loss;
    const auto trained = train_rar(init, data, 0.5, 0.5, 500);
    const double final_loss = rar_loss(trained, data, 0.5).loss;
    CHECK(final_loss < initial);

    long correct = 0;
    for (const auto& pair : data) {
      double s = trained.w0 * pair.cos;
      for (std::size_t i = 0; i < trained.w.size(); ++i) {
        s += trained.w[i] * pair.features[i];
      }
      const int pred = logistic(s) > 0.5 ? 1 : 0;
      if (pred == pair.relevance_label) ++correct;
    }
    CHECK(static_cast<double>(correct) / static_cast<double>(data.size()) >=
          0.95);
  }

  SUBCASE("monotone non-increasing loss at a small rate") {
    RARWeights w{0.0, {0.0, 0.0, 0.0}, 0.5};
    double last = rar_loss(w, data, 0.5).loss;
    for (int epoch = 0; epoch < 50; ++epoch) {
      w = train_rar(w, data, 0.5, 1e-3, 1);
      const double now = rar_loss(w, data, 0.5).loss;
      CHECK(now <= last + 1e-12);
      last = now;
    }
  }
}

TEST_CASE("mine_hard_negatives") {
  // Grades [4,2,1,3,2] at ranks 1..5.
  std::vector<GradedCandidate> ranked{{10, 4, 1}, {20, 2, 2}, {30, 1, 3},
                                      {40, 3, 4}, {50, 2, 5}};
  const auto tuple = mine_hard_negatives(ranked, 7);
  REQUIRE(tuple.has_value());
  CHECK(tuple->positives.size() <= 2);
  CHECK(tuple->negatives.size() <= 3);
  for (auto id : tuple->positives) {
    CHECK((id == 10 || id == 40));
  }
  for (auto id : tuple->negatives) {
    CHECK((id == 20 || id == 30 || id == 50));
  }
  // Deterministic per seed.
  const auto replay = mine_hard_negatives(ranked, 7);
  CHECK(replay->positives == tuple->positives);
  CHECK(replay->negatives == tuple->negatives);

  // All positives: negatives empty is the skip-negative signal.
  std::vector<GradedCandidate> all4{{1, 4, 1}, {2, 4, 2}};
  const auto pos_only = mine_hard_negatives(all4, 3);
  REQUIRE(pos_only.has_value());
  CHECK(pos_only->positives.size() == 2);
  CHECK_FALSE(pos_only->has_negatives());

  // No positive: skip-query signal.
  std::vector<GradedCandidate> bad{{1, 1, 1}, {2, 2, 2}};
  CHECK_FALSE(mine_hard_negatives(bad, 3).has_value());

  // Bounds hold on random inputs.
  Rng rng(19);
  for (int t = 0; t < 50; ++t) {
    std::vector<GradedCandidate> cands;
    const int n = static_cast<int>(rng.uniform_int(1, 12));
    for (int i = 0; i < n; ++i) {
      cands.push_back({i, static_cast<int>(rng.uniform_int(1, 4)), i + 1});
    }
    const auto got = mine_hard_negatives(cands, rng.next_u64());
    if (got.has_value()) {
      CHECK(got->positives.size() >= 1);
      CHECK(got->positives.size() <= 2);
      CHECK(got->negatives.size() <= 3);
    }
  }
}

TEST_CASE("bucket_resize") {
  CHECK(bucket_resize({"b", 100, 0.5, 0.5}).gain == doctest::Approx(1.0));
  CHECK(bucket_resize({"b", 100, 0.5, 0.5}).resized == doctest::Approx(100));

  const auto grown = bucket_resize({"b", 1000, 0.5, 0.4});
  CHECK(grown.gain == doctest::Approx(1.25));
  CHECK(grown.resized == doctest::Approx(1250));

  // Treatment better than baseline downsizes the bucket.
  const auto shrunk = bucket_resize({"b", 1000, 0.4, 0.5});
  CHECK(shrunk.resized < 1000);

  CHECK_THROWS_AS(bucket_resize({"b", 100, 0.5, 0.0}), Error);
}
