// Copyright 2026 the semrank authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "semrank/kernels.hpp"

namespace semrank {

struct DocumentRecord {
  std::int64_t doc_id = 0;
  std::map<std::string, std::string> attributes;
  std::vector<float> embedding;  // unit vector
  std::vector<float> features;   // aligned with Corpus::feature_names
};

struct Corpus {
  std::vector<std::string> feature_names;
  std::vector<DocumentRecord> docs;

  // Unit-norm embeddings, consistent feature vectors, known attributes.
  void validate() const;
  bool has_attribute(const std::string& name) const;
};

using AttributeFilters = std::map<std::string, std::vector<std::string>>;

struct QuerySpec {
  std::int64_t query_id = 0;
  std::string text;  // used by the serving fixture lookup; may be empty
  std::vector<float> embedding;
  AttributeFilters filters;  // attr -> allowed values, conjunctive
  int k = 10;
};

// S(q,d) = w0 * cos(e_q, e_d) + sum_i w_i * f_i(d).
struct RARWeights {
  double w0 = 1.0;
  std::vector<double> w;
  double lambda = 0.5;  // relevance/engagement mix used in training
};

double cosine(std::span<const float> a, std::span<const float> b);

double rar_score(std::span<const float> query_embedding,
                 const DocumentRecord& doc, const RARWeights& weights);

// Indices of documents satisfying every predicate.
std::vector<std::size_t> filter_candidates(const Corpus& corpus,
                                           const AttributeFilters& filters);

struct RankedDoc {
  std::int64_t doc_id = 0;
  double score = 0;
};

// Exact top-K by score (descending, doc_id ascending on ties) over the
// filtered candidates. The parallel lane scans disjoint shards and merges;
// it returns exactly the serial result.
std::vector<RankedDoc> exhaustive_topk(
    const Corpus& corpus, const QuerySpec& query, const RARWeights& weights,
    kernels::Exec exec = kernels::default_exec());

// ---------------------------------------------------------------------------
// RAR training
// ---------------------------------------------------------------------------

struct LabeledPair {
  std::int64_t query_id = 0;
  std::int64_t doc_id = 0;
  double cos = 0;                 // precomputed <e_q, e_d>
  std::vector<double> features;   // f_i for this pair
  int relevance_label = 0;        // L_R, binarized grade > 2
  int engagement_label = 0;       // L_E
  int grade = 0;                  // ordinal 1..4
};

struct RarLossGrad {
  double loss = 0;
  double d_w0 = 0;
  std::vector<double> d_w;
};

// L_RAR = lambda * BCE(sigma(S), L_R) + (1 - lambda) * BCE(sigma(S), L_E),
// mean over pairs.
RarLossGrad rar_loss(const RARWeights& weights,
                     std::span<const LabeledPair> data, double lambda);

// Full-batch gradient descent. Throws Divergence if the loss leaves the
// finite range (suggesting a smaller rate).
RARWeights train_rar(const RARWeights& init, std::span<const LabeledPair> data,
                     double lambda, double learning_rate, int epochs);

// ---------------------------------------------------------------------------
// Hard-negative mining and bucket resizing
// ---------------------------------------------------------------------------

struct GradedCandidate {
  std::int64_t doc_id = 0;
  int grade = 0;  // 1..4
  int rank = 0;   // 1-based production rank
};

struct ContrastiveTuple {
  std::vector<std::int64_t> positives;  // up to 2, grade > 2
  std::vector<std::int64_t> negatives;  // up to 3, grade <= 2, top-ranked
  bool has_negatives() const { return !negatives.empty(); }
};

// nullopt = skip-query signal (no positive available). An empty negative
// set inside the tuple is the skip-negative signal.
std::optional<ContrastiveTuple> mine_hard_negatives(
    std::span<const GradedCandidate> ranked, std::uint64_t seed);

struct QueryBucket {
  std::string bucket_id;
  double target_population = 0;      // P_i
  double precision_baseline = 0;     // Precision@10 of the baseline
  double precision_treatment = 0;    // Precision@10 of the treatment
};

struct BucketResize {
  double gain = 0;     // G_i = baseline / treatment
  double resized = 0;  // B_i = P_i * G_i
};

BucketResize bucket_resize(const QueryBucket& bucket);

}  // namespace semrank
