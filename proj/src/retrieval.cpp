// Copyright 2026 the semrank authors
// SPDX-License-Identifier: Apache-2.0

#include "semrank/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <omp.h>

#include "semrank/error.hpp"
#include "semrank/ranking_math.hpp"
#include "semrank/rng.hpp"

namespace semrank {

void Corpus::validate() const {
  for (const auto& doc : docs) {
    if (doc.features.size() != feature_names.size()) {
      throw Error(ErrorCode::Alignment,
                  "doc " + std::to_string(doc.doc_id) +
                      " feature vector does not match the corpus schema");
    }
    double norm = 0;
    for (float v : doc.embedding) norm += double(v) * v;
    norm = std::sqrt(norm);
    if (std::fabs(norm - 1.0) > 1e-6) {
      throw Error(ErrorCode::SpecViolation,
                  "doc " + std::to_string(doc.doc_id) +
                      " embedding is not unit norm");
    }
  }
}

bool Corpus::has_attribute(const std::string& name) const {
  for (const auto& doc : docs) {
    if (doc.attributes.contains(name)) return true;
  }
  return false;
}

double cosine(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size() || a.empty()) {
    throw Error(ErrorCode::Alignment, "cosine: dimension mismatch");
  }
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += double(a[i]) * b[i];
    na += double(a[i]) * a[i];
    nb += double(b[i]) * b[i];
  }
  if (na == 0 || nb == 0) {
    throw Error(ErrorCode::DegenerateInput, "cosine of a zero vector");
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

double rar_score(std::span<const float> query_embedding,
                 const DocumentRecord& doc, const RARWeights& weights) {
  if (doc.features.size() != weights.w.size()) {
    throw Error(ErrorCode::Alignment,
                "feature count does not match RAR weight count");
  }
  double s = weights.w0 * cosine(query_embedding, doc.embedding);
  for (std::size_t i = 0; i < weights.w.size(); ++i) {
    s += weights.w[i] * doc.features[i];
  }
  return s;
}

std::vector<std::size_t> filter_candidates(const Corpus& corpus,
                                           const AttributeFilters& filters) {
  for (const auto& [attr, values] : filters) {
    if (!corpus.has_attribute(attr)) {
      throw Error(ErrorCode::SchemaUnknown, "unknown attribute: " + attr);
    }
    (void)values;
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < corpus.docs.size(); ++i) {
    const auto& doc = corpus.docs[i];
    bool pass = true;
    for (const auto& [attr, values] : filters) {
      const auto it = doc.attributes.find(attr);
      if (it == doc.attributes.end() ||
          std::find(values.begin(), values.end(), it->second) == values.end()) {
        pass = false;
        break;
      }
    }
    if (pass) out.push_back(i);
  }
  return out;
}

namespace {

bool ranked_before(const RankedDoc& a, const RankedDoc& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.doc_id < b.doc_id;
}

// Keeps the best k entries seen so far; worst at the heap top.
class TopK {
 public:
  explicit TopK(std::size_t k) : k_(k) {}

  void offer(const RankedDoc& d) {
    if (heap_.size() < k_) {
      heap_.push_back(d);
      std::push_heap(heap_.begin(), heap_.end(), ranked_before);
    } else if (ranked_before(d, heap_.front())) {
      std::pop_heap(heap_.begin(), heap_.end(), ranked_before);
      heap_.back() = d;
      std::push_heap(heap_.begin(), heap_.end(), ranked_before);
    }
  }

  std::vector<RankedDoc> sorted() && {
    std::sort(heap_.begin(), heap_.end(), ranked_before);
    return std::move(heap_);
  }

  const std::vector<RankedDoc>& entries() const { return heap_; }

 private:
  std::size_t k_;
  std::vector<RankedDoc> heap_;
};

}  // namespace

std::vector<RankedDoc> exhaustive_topk(const Corpus& corpus,
                                       const QuerySpec& query,
                                       const RARWeights& weights,
                                       kernels::Exec exec) {
  if (query.k < 1) {
    throw Error(ErrorCode::SpecViolation, "top-K requires K >= 1");
  }
  const auto candidates = filter_candidates(corpus, query.filters);
  const auto k = static_cast<std::size_t>(query.k);

  if (exec == kernels::Exec::Parallel && candidates.size() > 1024) {
    // Disjoint shards scanned concurrently, merged by the same ordering.
    std::vector<std::vector<RankedDoc>> shard_tops;
#pragma omp parallel
    {
#pragma omp single
      shard_tops.resize(static_cast<std::size_t>(omp_get_num_threads()));
      TopK local(k);
#pragma omp for schedule(static)
      for (long i = 0; i < static_cast<long>(candidates.size()); ++i) {
        const auto& doc = corpus.docs[candidates[static_cast<std::size_t>(i)]];
        local.offer({doc.doc_id, rar_score(query.embedding, doc, weights)});
      }
      shard_tops[static_cast<std::size_t>(omp_get_thread_num())] =
          std::move(local).sorted();
    }
    TopK merged(k);
    for (const auto& shard : shard_tops) {
      for (const auto& d : shard) merged.offer(d);
    }
    return std::move(merged).sorted();
  }

  TopK top(k);
  for (std::size_t i : candidates) {
    const auto& doc = corpus.docs[i];
    top.offer({doc.doc_id, rar_score(query.embedding, doc, weights)});
  }
  return std::move(top).sorted();
}

RarLossGrad rar_loss(const RARWeights& weights,
                     std::span<const LabeledPair> data, double lambda) {
  if (lambda < 0 || lambda > 1) {
    throw Error(ErrorCode::Parameter, "lambda must lie in [0, 1]");
  }
  if (data.empty()) {
    throw Error(ErrorCode::SpecViolation, "empty training set");
  }
  RarLossGrad out;
  out.d_w.assign(weights.w.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(data.size());
  for (const auto& pair : data) {
    if (pair.features.size() != weights.w.size()) {
      throw Error(ErrorCode::Alignment,
                  "labeled pair features do not match RAR weights");
    }
    double s = weights.w0 * pair.cos;
    for (std::size_t i = 0; i < weights.w.size(); ++i) {
      s += weights.w[i] * pair.features[i];
    }
    const double p = clamp_prob(logistic(s));
    const double lr = pair.relevance_label;
    const double le = pair.engagement_label;
    out.loss += inv_n * (lambda * -(lr * std::log(p) + (1 - lr) * std::log(1 - p)) +
                         (1 - lambda) *
                             -(le * std::log(p) + (1 - le) * std::log(1 - p)));
    const double ds = inv_n * (lambda * (p - lr) + (1 - lambda) * (p - le));
    out.d_w0 += ds * pair.cos;
    for (std::size_t i = 0; i < weights.w.size(); ++i) {
      out.d_w[i] += ds * pair.features[i];
    }
  }
  return out;
}

RARWeights train_rar(const RARWeights& init, std::span<const LabeledPair> data,
                     double lambda, double learning_rate, int epochs) {
  RARWeights w = init;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    const auto g = rar_loss(w, data, lambda);
    if (!std::isfinite(g.loss)) {
      throw Error(ErrorCode::Divergence,
                  "RAR loss diverged at epoch " + std::to_string(epoch) +
                      "; try a smaller learning rate");
    }
    w.w0 -= learning_rate * g.d_w0;
    for (std::size_t i = 0; i < w.w.size(); ++i) {
      w.w[i] -= learning_rate * g.d_w[i];
    }
  }
  w.lambda = lambda;
  return w;
}

std::optional<ContrastiveTuple> mine_hard_negatives(
    std::span<const GradedCandidate> ranked, std::uint64_t seed) {
  std::vector<std::size_t> positive_pool, negative_pool;  // in rank order
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    (ranked[i].grade > 2 ? positive_pool : negative_pool).push_back(i);
  }
  if (positive_pool.empty()) return std::nullopt;  // skip-query signal

  Rng rng = Rng::substream(seed, "hard_negatives");
  ContrastiveTuple tuple;
  for (std::size_t idx : rng.sample_indices(positive_pool.size(), 2)) {
    tuple.positives.push_back(ranked[positive_pool[idx]].doc_id);
  }
  for (std::size_t idx : rng.sample_indices(negative_pool.size(), 3)) {
    tuple.negatives.push_back(ranked[negative_pool[idx]].doc_id);
  }
  return tuple;
}

BucketResize bucket_resize(const QueryBucket& bucket) {
  if (bucket.precision_treatment <= 0) {
    throw Error(ErrorCode::UndefinedMetric,
                "bucket gain is undefined at zero treatment precision");
  }
  BucketResize out;
  out.gain = bucket.precision_baseline / bucket.precision_treatment;
  out.resized = bucket.target_population * out.gain;
  return out;
}

}  // namespace semrank
