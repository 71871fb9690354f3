// Copyright 2026 the semrank authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <deque>
#include <memory>
#include <mutex>
#include <thread>

#include "semrank/calibration.hpp"
#include "semrank/engine.hpp"
#include "semrank/json_io.hpp"
#include "semrank/midtier.hpp"
#include "semrank/prompt.hpp"
#include "semrank/retrieval.hpp"

namespace semrank {

struct ServiceConfig {
  ScoreMode mode = ScoreMode::Ibpc;
  int retrieval_k = 300;        // candidates pulled before depth control
  int default_page_size = 10;
  std::size_t cache_capacity = 4096;
  bool enable_cache = true;
  bool enable_pid = true;
  PIDConfig pid;
  double pid_target_ms = 50;
  std::string system_prompt =
      "You score search results for relevance and engagement.\n";
  // Final ordering: calibrated relevance unless a blend is configured
  // (task -> weight over the per-task probabilities).
  std::map<std::string, double> score_blend;
};

struct SearchRequest {
  std::string searcher_id;
  std::string query_text;
  AttributeFilters filters;
  int page_size = 10;
  bool latency_sensitive = true;
};

struct SearchResultEntry {
  std::int64_t doc_id = 0;
  int rank = 0;
  double final_score = 0;
  std::map<std::string, double> calibrated;  // calibrated probabilities
  std::map<std::string, double> raw;         // engine outputs
};

struct SearchDiagnostics {
  int depth_used = 0;
  int candidates_retrieved = 0;
  long cache_lookups = 0;
  long cache_hits = 0;
  double attention_flops = 0;  // scoring stage only; 0 when fully cached
  double linear_flops = 0;
  double retrieval_ms = 0;
  double scoring_ms = 0;
  double total_ms = 0;
  bool query_embedding_from_fixture = true;  // false = hashing fallback
  bool degraded = false;  // retrieval-order fallback was served
};

struct SearchResponse {
  std::vector<SearchResultEntry> results;
  SearchDiagnostics diagnostics;
};

struct HealthStatus {
  std::string model_version;
  std::size_t cache_entries = 0;
  std::size_t cache_capacity = 0;
  int current_depth = 0;
  long requests_served = 0;
  long cache_lookups = 0;
  long cache_hits = 0;
  double rolling_p50_ms = 0;
  double rolling_p99_ms = 0;
};

// Deterministic prompt rendering, shared by the service and the offline
// scoring tools so both paths produce identical token streams.
std::string render_document_text(const Corpus& corpus,
                                 const DocumentRecord& doc);
std::string render_query_context_text(const std::string& query_text,
                                      const AttributeFilters& filters);

// Query path: embed-or-lookup -> attribute filter -> exhaustive RAR top-K
// -> PID depth cut -> per-entity cache probe -> engine on misses ->
// calibrate -> sort. Deterministic for fixed state.
class SearchService {
 public:
  SearchService(ServiceConfig config, Corpus corpus,
                std::vector<QuerySpec> query_fixtures, ModelWeights weights,
                RARWeights rar_weights, CalibrationArtifact calibration);

  SearchResponse handle_search(const SearchRequest& request);
  HealthStatus health() const;

  // Raw engine passthrough used by POST /score.
  ScoreResult score_passthrough(const ScoreRequest& request);

  // Fixture lookup: canonical text match, hashing projection otherwise.
  std::pair<std::vector<float>, bool> query_embedding(
      const std::string& query_text) const;

  // Deterministic document rendering shared with offline tooling.
  std::string render_document(const DocumentRecord& doc) const;
  std::string render_query_context(const SearchRequest& request) const;

  const ServiceConfig& config() const { return config_; }
  const Corpus& corpus() const { return corpus_; }
  const ModelWeights& weights() const { return weights_; }
  const RARWeights& rar() const { return rar_; }
  const CalibrationArtifact& calibration() const { return calibration_; }

 private:
  ServiceConfig config_;
  Corpus corpus_;
  std::map<std::int64_t, std::size_t> corpus_index_;
  std::vector<QuerySpec> fixtures_;
  ModelWeights weights_;
  RARWeights rar_;
  CalibrationArtifact calibration_;

  ScoringEngine engine_;
  ScoreCache cache_;

  mutable std::mutex state_mu_;
  PIDState pid_;
  long requests_served_ = 0;
  long cache_lookups_ = 0;
  long cache_hits_ = 0;
  std::deque<double> rolling_latencies_;
};

// HTTP facade: POST /search, POST /score, GET /healthz, GET /metrics.
class HttpServer {
 public:
  explicit HttpServer(SearchService& service);
  ~HttpServer();

  // Binds 127.0.0.1 on an ephemeral port (or `port` if nonzero) and serves
  // on a background thread.
  int start(int port = 0);
  void stop();
  int port() const { return port_; }

 private:
  struct Impl;
  SearchService& service_;
  std::unique_ptr<Impl> impl_;
  std::thread thread_;
  int port_ = 0;
};

// Wire-format helpers shared by the HTTP layer and the CLI.
ScoreRequest parse_score_request_json(const std::string& body, int d_model,
                                      int max_seq);
std::string score_result_to_json(const ScoreResult& result);
std::string search_response_to_json(const SearchResponse& response);
std::string health_to_json(const HealthStatus& status);

}  // namespace semrank
