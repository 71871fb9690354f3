// Copyright 2026 the semrank authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "semrank/ranking_math.hpp"
#include "semrank/retrieval.hpp"

namespace semrank {

// Synthetic stand-in for judged search traffic: cluster-planted embeddings,
// a categorical attribute schema, grades consistent with planted similarity,
// and exposure-biased action logs. Fully deterministic per seed.
struct DataGenConfig {
  std::uint64_t seed = 1;
  int n_docs = 1000;
  int n_queries = 50;
  int n_clusters = 10;
  int d_emb = 32;
  double doc_noise = 0.05;    // embedding spread inside a cluster
  double query_noise = 0.08;
  int page_size = 25;         // log rows per query
  // Grade mixture over {1,2,3,4}; per-query draws are assigned to documents
  // in similarity order so grades stay consistent with planted structure.
  std::vector<double> grade_mixture = {0.20, 0.35, 0.30, 0.15};
  // P(action | grade, rank) = base[grade-1] * exposure_decay^(rank-1).
  std::vector<double> click_base = {0.05, 0.15, 0.35, 0.60};
  std::vector<double> apply_base = {0.005, 0.02, 0.06, 0.12};  // rare action
  std::vector<double> dismiss_base = {0.30, 0.15, 0.05, 0.02};
  double exposure_decay = 0.90;
  double filter_fraction = 0.3;  // queries carrying attribute filters
};

struct GeneratorTruth {
  std::vector<int> doc_cluster;    // by corpus index
  std::vector<int> query_cluster;  // by query index
};

struct GeneratedData {
  Corpus corpus;
  std::vector<QuerySpec> queries;
  std::vector<LogRow> logs;
  GeneratorTruth truth;
};

GeneratedData gen_data(const DataGenConfig& config);

// Linearly separable RAR training set: the relevance label follows the
// cosine term, the engagement label needs the feature terms, and a margin
// band around the separating plane is rejected so a small learner can
// reach high accuracy.
std::vector<LabeledPair> make_rar_training_set(std::uint64_t seed, int n_pairs);

}  // namespace semrank
