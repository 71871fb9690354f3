// Copyright 2026 the semrank authors
// SPDX-License-Identifier: Apache-2.0

#include "semrank/datagen.hpp"

#include <algorithm>
#include <cmath>

#include "semrank/error.hpp"
#include "semrank/rng.hpp"

namespace semrank {

namespace {

std::vector<float> planted_embedding(Rng& rng, int cluster, int d_emb,
                                     double noise) {
  // Cluster centers are the standard basis vectors, so cross-cluster
  // cosines stay at noise level while in-cluster cosines stay near 1.
  std::vector<float> v(static_cast<std::size_t>(d_emb));
  for (auto& x : v) x = static_cast<float>(rng.normal(0.0, noise));
  v[static_cast<std::size_t>(cluster % d_emb)] += 1.0f;
  double norm = 0;
  for (float x : v) norm += double(x) * x;
  const float inv = static_cast<float>(1.0 / std::sqrt(norm));
  for (auto& x : v) x *= inv;
  return v;
}

int sample_grade(Rng& rng, const std::vector<double>& mixture) {
  const double u = rng.uniform();
  double acc = 0;
  for (std::size_t g = 0; g < mixture.size(); ++g) {
    acc += mixture[g];
    if (u < acc) return static_cast<int>(g) + 1;
  }
  return static_cast<int>(mixture.size());
}

}  // namespace

GeneratedData gen_data(const DataGenConfig& config) {
  if (config.n_docs < 1 || config.n_queries < 1 || config.n_clusters < 1 ||
      config.d_emb < 1 || config.page_size < 1) {
    throw Error(ErrorCode::Parameter, "all generator sizes must be >= 1");
  }
  if (config.n_clusters > config.d_emb) {
    throw Error(ErrorCode::Parameter,
                "planted clusters need n_clusters <= d_emb");
  }
  if (config.grade_mixture.size() != 4) {
    throw Error(ErrorCode::Parameter, "grade mixture must cover grades 1..4");
  }

  Rng doc_rng = Rng::substream(config.seed, "data.docs");
  Rng query_rng = Rng::substream(config.seed, "data.queries");
  Rng log_rng = Rng::substream(config.seed, "data.logs");

  static const std::vector<std::string> kRegions = {"na", "emea", "apac",
                                                    "latam"};
  static const std::vector<std::string> kIndustries = {"tech", "health",
                                                       "finance", "retail"};
  static const std::vector<std::string> kSeniorities = {"junior", "mid",
                                                        "senior"};

  GeneratedData out;
  out.corpus.feature_names = {"historical_ctr", "network_proximity",
                              "profile_popularity"};

  for (int i = 0; i < config.n_docs; ++i) {
    const int cluster = static_cast<int>(doc_rng.uniform_int(0, config.n_clusters - 1));
    DocumentRecord doc;
    doc.doc_id = i;
    doc.embedding = planted_embedding(doc_rng, cluster, config.d_emb,
                                      config.doc_noise);
    doc.attributes["cluster"] = "c" + std::to_string(cluster);
    doc.attributes["region"] =
        kRegions[static_cast<std::size_t>(doc_rng.uniform_int(0, 3))];
    doc.attributes["industry"] =
        kIndustries[static_cast<std::size_t>(doc_rng.uniform_int(0, 3))];
    doc.attributes["seniority"] =
        kSeniorities[static_cast<std::size_t>(doc_rng.uniform_int(0, 2))];
    // Feature names are alphabetical to match the corpus-file schema order.
    doc.features = {static_cast<float>(doc_rng.uniform() * 0.4),
                    static_cast<float>(doc_rng.uniform()),
                    static_cast<float>(doc_rng.uniform())};
    out.truth.doc_cluster.push_back(cluster);
    out.corpus.docs.push_back(std::move(doc));
  }

  for (int q = 0; q < config.n_queries; ++q) {
    const int cluster = q % config.n_clusters;
    QuerySpec query;
    query.query_id = q;
    query.text = "query " + std::to_string(q) + " cluster " +
                 std::to_string(cluster);
    query.embedding = planted_embedding(query_rng, cluster, config.d_emb,
                                        config.query_noise);
    query.k = config.page_size;
    if (query_rng.uniform() < config.filter_fraction) {
      const auto& values = query_rng.bernoulli(0.5) ? kRegions : kIndustries;
      const auto attr = (&values == &kRegions) ? "region" : "industry";
      std::vector<std::string> allowed;
      for (const auto& v : values) {
        if (query_rng.bernoulli(0.5)) allowed.push_back(v);
      }
      if (allowed.empty()) allowed.push_back(values[0]);
      query.filters[attr] = allowed;
    }
    out.truth.query_cluster.push_back(cluster);
    out.queries.push_back(std::move(query));
  }

  // Logs: each query's served page is the filtered cosine top-K, so log
  // rows line up with what retrieval returns for the same query. Grades
  // are drawn per page and assigned in similarity order.
  RARWeights cosine_only{1.0, {0.0, 0.0, 0.0}, 0.5};
  for (int q = 0; q < config.n_queries; ++q) {
    QuerySpec probe = out.queries[static_cast<std::size_t>(q)];
    probe.k = config.page_size;
    const auto page = exhaustive_topk(out.corpus, probe, cosine_only,
                                      kernels::Exec::Serial);

    std::vector<int> grades;
    for (std::size_t r = 0; r < page.size(); ++r) {
      grades.push_back(sample_grade(log_rng, config.grade_mixture));
    }
    std::sort(grades.begin(), grades.end(), std::greater<>());

    for (std::size_t r = 0; r < page.size(); ++r) {
      LogRow row;
      row.query_id = q;
      row.doc_id = page[r].doc_id;
      row.position = static_cast<int>(r) + 1;
      row.grade = grades[r];
      const double exposure = std::pow(config.exposure_decay, row.position - 1);
      const auto g = static_cast<std::size_t>(row.grade - 1);
      row.actions["click"] =
          log_rng.bernoulli(config.click_base[g] * exposure) ? 1 : 0;
      row.actions["apply"] =
          log_rng.bernoulli(config.apply_base[g] * exposure) ? 1 : 0;
      row.actions["dismiss"] =
          log_rng.bernoulli(config.dismiss_base[g] * exposure) ? 1 : 0;
      out.logs.push_back(std::move(row));
    }
  }
  return out;
}

std::vector<LabeledPair> make_rar_training_set(std::uint64_t seed, int n_pairs) {
  Rng rng = Rng::substream(seed, "data.rar");
  // One separating plane over [cos, f1, f2, f3] drives the grades and both
  // labels, and the margin band around it is rejected, so a linear scorer
  // can fit the set while cosine alone cannot (the feature terms carry
  // most of the signal).
  constexpr double kW[4] = {0.8, 1.6, -1.1, 0.5};
  constexpr double kBias = -0.4;
  constexpr double kMargin = 0.25;

  std::vector<LabeledPair> out;
  std::int64_t next_id = 0;
  while (static_cast<int>(out.size()) < n_pairs) {
    LabeledPair pair;
    pair.query_id = next_id / 8;  // a few pairs share a query id
    pair.doc_id = next_id++;
    pair.cos = rng.uniform() * 2.0 - 1.0;
    pair.features = {rng.uniform(), rng.uniform(), rng.uniform()};

    const double margin = kW[0] * pair.cos + kW[1] * pair.features[0] +
                          kW[2] * pair.features[1] + kW[3] * pair.features[2] +
                          kBias;
    if (std::fabs(margin) < kMargin) continue;
    pair.grade = margin > 1.0    ? 4
                 : margin > 0    ? 3
                 : margin > -1.0 ? 2
                                 : 1;
    pair.relevance_label = pair.grade > 2 ? 1 : 0;
    pair.engagement_label = pair.relevance_label;
    out.push_back(std::move(pair));
  }
  return out;
}

}  // namespace semrank
