// Copyright 2026 the semrank authors
// SPDX-License-Identifier: Apache-2.0

#include "semrank/service.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "semrank/base64.hpp"
#include "semrank/error.hpp"

namespace semrank {

namespace {
using nlohmann::json;

double ms_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - start)
      .count();
}

double percentile_of(std::vector<double> values, double q) {
  if (values.empty()) return 0;
  std::sort(values.begin(), values.end());
  const auto idx = static_cast<std::size_t>(
      std::ceil(q * static_cast<double>(values.size()))) - 1;
  return values[std::min(idx, values.size() - 1)];
}
}  // namespace

SearchService::SearchService(ServiceConfig config, Corpus corpus,
                             std::vector<QuerySpec> query_fixtures,
                             ModelWeights weights, RARWeights rar_weights,
                             CalibrationArtifact calibration)
    : config_(std::move(config)),
      corpus_(std::move(corpus)),
      fixtures_(std::move(query_fixtures)),
      weights_(std::move(weights)),
      rar_(std::move(rar_weights)),
      calibration_(std::move(calibration)),
      engine_(weights_),
      cache_(config_.cache_capacity),
      pid_(PIDState::initial(config_.pid)) {
  corpus_.validate();
  for (std::size_t i = 0; i < corpus_.docs.size(); ++i) {
    corpus_index_[corpus_.docs[i].doc_id] = i;
  }
}

std::pair<std::vector<float>, bool> SearchService::query_embedding(
    const std::string& query_text) const {
  const auto canon = canonical_query(query_text, {});
  for (const auto& fixture : fixtures_) {
    if (!fixture.text.empty() && canonical_query(fixture.text, {}) == canon) {
      return {fixture.embedding, true};
    }
  }
  // Hashing projection fallback for unseen queries.
  const std::size_t d_emb =
      corpus_.docs.empty() ? 32 : corpus_.docs.front().embedding.size();
  std::vector<float> v(d_emb, 0.0f);
  std::istringstream words(canon);
  std::string word;
  bool any = false;
  while (words >> word) {
    const auto h = fnv1a64(word);
    v[h % d_emb] += (h >> 63) ? -1.0f : 1.0f;
    any = true;
  }
  if (!any) v[0] = 1.0f;
  double norm = 0;
  for (float x : v) norm += double(x) * x;
  if (norm == 0) {
    v[0] = 1.0f;
    norm = 1;
  }
  const auto inv = static_cast<float>(1.0 / std::sqrt(norm));
  for (auto& x : v) x *= inv;
  return {v, false};
}

std::string render_document_text(const Corpus& corpus,
                                 const DocumentRecord& doc) {
  NumericFeatureSpec spec;
  for (const auto& name : corpus.feature_names) {
    spec.fields.push_back({name, NumericFeatureSpec::Kind::Continuous, 2});
  }
  std::string text = "Document " + std::to_string(doc.doc_id) + "\n";
  for (const auto& [attr, value] : doc.attributes) {
    text += attr + ": " + value + "\n";
  }
  std::map<std::string, FeatureValue> features;
  for (std::size_t i = 0; i < corpus.feature_names.size(); ++i) {
    features[corpus.feature_names[i]] = {doc.features[i], 0, 0};
  }
  text += format_numeric_features(features, spec);
  return text;
}

std::string render_query_context_text(const std::string& query_text,
                                      const AttributeFilters& filters) {
  std::string text = "Query: " + query_text + "\n";
  for (const auto& [attr, values] : filters) {
    text += "Filter " + attr + ":";
    for (const auto& v : values) text += " " + v;
    text += "\n";
  }
  return text;
}

std::string SearchService::render_document(const DocumentRecord& doc) const {
  return render_document_text(corpus_, doc);
}

std::string SearchService::render_query_context(
    const SearchRequest& request) const {
  return render_query_context_text(request.query_text, request.filters);
}

SearchResponse SearchService::handle_search(const SearchRequest& request) {
  const auto t0 = std::chrono::steady_clock::now();
  if (request.page_size < 1) {
    throw Error(ErrorCode::SpecViolation, "page size must be >= 1");
  }

  SearchResponse response;
  auto& diag = response.diagnostics;

  auto [embedding, from_fixture] = query_embedding(request.query_text);
  diag.query_embedding_from_fixture = from_fixture;

  QuerySpec query;
  query.embedding = std::move(embedding);
  query.filters = request.filters;
  query.k = config_.retrieval_k;
  const auto candidates = exhaustive_topk(corpus_, query, rar_);
  diag.candidates_retrieved = static_cast<int>(candidates.size());
  diag.retrieval_ms = ms_since(t0);

  if (candidates.empty()) {
    diag.total_ms = ms_since(t0);
    return response;  // empty result with diagnostics
  }

  int depth;
  {
    std::lock_guard<std::mutex> lock(state_mu_);
    depth = config_.enable_pid ? pid_.depth : config_.pid.depth_max;
  }
  const auto depth_used =
      std::min<std::size_t>(static_cast<std::size_t>(depth), candidates.size());
  diag.depth_used = static_cast<int>(depth_used);

  // Per-entity cache probe under one query signature.
  const auto signature =
      fnv1a64(canonical_query(request.query_text, request.filters));
  std::map<std::int64_t, TaskScoreMap> scores;
  std::vector<std::size_t> miss_indices;  // into corpus_
  std::vector<std::int64_t> miss_ids;

  for (std::size_t c = 0; c < depth_used; ++c) {
    const auto doc_id = candidates[c].doc_id;
    if (config_.enable_cache) {
      diag.cache_lookups++;
      const CacheKey key{request.searcher_id, signature, doc_id,
                         weights_.version};
      if (auto cached = cache_.get(key)) {
        diag.cache_hits++;
        scores[doc_id] = *cached;
        continue;
      }
    }
    miss_indices.push_back(corpus_index_.at(doc_id));
    miss_ids.push_back(doc_id);
  }

  const auto t_score = std::chrono::steady_clock::now();
  bool degraded = false;
  if (!miss_ids.empty()) {
    // Any failure to build or score the batch (prompt overflow, payload
    // problems) degrades to the retrieval-order fallback.
    try {
      const auto query_context = render_query_context(request);
      ScoreRequest score_request;
      score_request.request_id =
          request.searcher_id + ":" + std::to_string(signature);
      score_request.mode = config_.mode;
      score_request.latency_sensitive = request.latency_sensitive;

      bool prefix_set = false;
      for (std::size_t m = 0; m < miss_indices.size(); ++m) {
        const auto& doc = corpus_.docs[miss_indices[m]];
        const auto parts = build_prompt(config_.system_prompt, query_context,
                                        render_document(doc),
                                        weights_.config.max_seq);
        if (!prefix_set) {
          score_request.prefix_tokens = parts.prefix_tokens;
          prefix_set = true;
        }
        ScoreItem item;
        item.id = std::to_string(doc.doc_id);
        if (config_.mode == ScoreMode::Mixed) {
          // One embedding token per item: the retrieval embedding padded (or
          // truncated) to the model width stands in for a cached item token.
          item.n_emb_tokens = 1;
          item.embedding.assign(
              static_cast<std::size_t>(weights_.config.d_model), 0.0f);
          const auto n = std::min<std::size_t>(doc.embedding.size(),
                                               item.embedding.size());
          std::copy(doc.embedding.begin(), doc.embedding.begin() + n,
                    item.embedding.begin());
        } else {
          item.tokens = parts.item_tokens;
        }
        score_request.items.push_back(std::move(item));
      }

      const auto result = engine_.score(score_request);
      diag.attention_flops = result.flops.attention_units;
      diag.linear_flops = result.flops.linear_units;
      for (std::size_t m = 0; m < result.items.size(); ++m) {
        scores[miss_ids[m]] = result.items[m].tasks;
        if (config_.enable_cache) {
          const CacheKey key{request.searcher_id, signature, miss_ids[m],
                             weights_.version};
          cache_.put(key, result.items[m].tasks);
        }
      }
    } catch (const Error&) {
      degraded = true;  // retrieval-order fallback
    }
  }
  diag.scoring_ms = ms_since(t_score);
  diag.degraded = degraded;

  for (std::size_t c = 0; c < depth_used; ++c) {
    const auto doc_id = candidates[c].doc_id;
    SearchResultEntry entry;
    entry.doc_id = doc_id;
    if (degraded) {
      entry.final_score = candidates[c].score;  // retrieval order
    } else {
      entry.raw = scores.at(doc_id);
      entry.calibrated = entry.raw;
      entry.calibrated[kRelevanceTask] = calibrate(
          calibration_.position.global, entry.raw.at(kRelevanceTask));
      if (config_.score_blend.empty()) {
        entry.final_score = entry.calibrated.at(kRelevanceTask);
      } else {
        double blended = 0;
        for (const auto& [task, weight] : config_.score_blend) {
          const auto it = entry.calibrated.find(task);
          if (it == entry.calibrated.end()) {
            throw Error(ErrorCode::Alignment,
                        "blend references unknown task: " + task);
          }
          blended += weight * it->second;
        }
        entry.final_score = blended;
      }
    }
    response.results.push_back(std::move(entry));
  }

  std::stable_sort(response.results.begin(), response.results.end(),
                   [](const SearchResultEntry& a, const SearchResultEntry& b) {
                     if (a.final_score != b.final_score) {
                       return a.final_score > b.final_score;
                     }
                     return a.doc_id < b.doc_id;
                   });
  if (response.results.size() >
      static_cast<std::size_t>(request.page_size)) {
    response.results.resize(static_cast<std::size_t>(request.page_size));
  }
  for (std::size_t r = 0; r < response.results.size(); ++r) {
    response.results[r].rank = static_cast<int>(r) + 1;
  }

  diag.total_ms = ms_since(t0);
  {
    std::lock_guard<std::mutex> lock(state_mu_);
    ++requests_served_;
    cache_lookups_ += diag.cache_lookups;
    cache_hits_ += diag.cache_hits;
    rolling_latencies_.push_back(diag.total_ms);
    if (rolling_latencies_.size() > 512) rolling_latencies_.pop_front();
    if (config_.enable_pid) {
      pid_update(pid_, diag.total_ms, config_.pid_target_ms, 1.0);
    }
  }
  return response;
}

HealthStatus SearchService::health() const {
  std::lock_guard<std::mutex> lock(state_mu_);
  HealthStatus status;
  status.model_version = weights_.version;
  status.cache_entries = cache_.size();
  status.cache_capacity = cache_.capacity();
  status.current_depth = config_.enable_pid ? pid_.depth : config_.pid.depth_max;
  status.requests_served = requests_served_;
  status.cache_lookups = cache_lookups_;
  status.cache_hits = cache_hits_;
  const std::vector<double> lat(rolling_latencies_.begin(),
                                rolling_latencies_.end());
  status.rolling_p50_ms = percentile_of(lat, 0.5);
  status.rolling_p99_ms = percentile_of(lat, 0.99);
  return status;
}

ScoreResult SearchService::score_passthrough(const ScoreRequest& request) {
  return engine_.score(request);
}

// ---------------------------------------------------------------------------
// Wire formats
// ---------------------------------------------------------------------------

ScoreRequest parse_score_request_json(const std::string& body, int d_model,
                                      int max_seq) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::PayloadInvalid,
                std::string("request body is not JSON: ") + e.what());
  }
  ScoreRequest request;
  request.request_id = j.value("request_id", "");
  if (j.contains("prefix_tokens")) {
    request.prefix_tokens = j.at("prefix_tokens").get<std::vector<int>>();
  } else if (j.contains("prefix_text")) {
    request.prefix_tokens =
        tokenize(j.at("prefix_text").get<std::string>(), max_seq);
  } else {
    throw Error(ErrorCode::PayloadInvalid,
                "request needs prefix_text or prefix_tokens");
  }
  request.mode = score_mode_from_name(j.value("mode", "ibpc"));
  request.latency_sensitive = j.value("latency_sensitive", false);

  if (!j.contains("items") || !j.at("items").is_array() ||
      j.at("items").empty()) {
    throw Error(ErrorCode::PayloadInvalid, "request needs a non-empty items[]");
  }
  for (const auto& item_json : j.at("items")) {
    ScoreItem item;
    item.id = item_json.value("id", "");
    if (item_json.contains("tokens")) {
      item.tokens = item_json.at("tokens").get<std::vector<int>>();
    } else if (item_json.contains("text")) {
      item.tokens = tokenize(item_json.at("text").get<std::string>(), max_seq);
    } else if (item_json.contains("embedding_b64")) {
      item.embedding =
          decode_f32_base64(item_json.at("embedding_b64").get<std::string>());
      if (item.embedding.empty() ||
          item.embedding.size() % static_cast<std::size_t>(d_model) != 0) {
        throw Error(ErrorCode::PayloadInvalid,
                    "embedding payload is not [n x " + std::to_string(d_model) +
                        "] for item " + item.id);
      }
      item.n_emb_tokens =
          static_cast<int>(item.embedding.size() / static_cast<std::size_t>(d_model));
    } else {
      throw Error(ErrorCode::PayloadInvalid,
                  "item needs text, tokens, or embedding_b64: " + item.id);
    }
    request.items.push_back(std::move(item));
  }
  return request;
}

std::string score_result_to_json(const ScoreResult& result) {
  json scores = json::array();
  for (const auto& item : result.items) {
    scores.push_back({{"id", item.item_id}, {"tasks", item.tasks}});
  }
  const json j = {{"request_id", result.request_id},
                  {"scores", scores},
                  {"flops",
                   {{"attention", result.flops.attention_units},
                    {"linear", result.flops.linear_units}}}};
  return j.dump();
}

std::string search_response_to_json(const SearchResponse& response) {
  json results = json::array();
  for (const auto& entry : response.results) {
    results.push_back({{"doc_id", entry.doc_id},
                       {"rank", entry.rank},
                       {"score", entry.final_score},
                       {"calibrated", entry.calibrated},
                       {"raw", entry.raw}});
  }
  const auto& d = response.diagnostics;
  const json j = {
      {"results", results},
      {"diagnostics",
       {{"depth_used", d.depth_used},
        {"candidates_retrieved", d.candidates_retrieved},
        {"cache_lookups", d.cache_lookups},
        {"cache_hits", d.cache_hits},
        {"attention_flops", d.attention_flops},
        {"linear_flops", d.linear_flops},
        {"retrieval_ms", d.retrieval_ms},
        {"scoring_ms", d.scoring_ms},
        {"total_ms", d.total_ms},
        {"query_embedding_from_fixture", d.query_embedding_from_fixture},
        {"degraded", d.degraded}}}};
  return j.dump();
}

std::string health_to_json(const HealthStatus& status) {
  const json j = {{"model_version", status.model_version},
                  {"cache_entries", status.cache_entries},
                  {"cache_capacity", status.cache_capacity},
                  {"current_depth", status.current_depth},
                  {"requests_served", status.requests_served},
                  {"cache_lookups", status.cache_lookups},
                  {"cache_hits", status.cache_hits},
                  {"rolling_p50_ms", status.rolling_p50_ms},
                  {"rolling_p99_ms", status.rolling_p99_ms}};
  return j.dump();
}

// ---------------------------------------------------------------------------
// HTTP facade
// ---------------------------------------------------------------------------

struct HttpServer::Impl {
  httplib::Server server;
};

HttpServer::HttpServer(SearchService& service)
    : service_(service), impl_(std::make_unique<Impl>()) {
  auto& server = impl_->server;

  server.Post("/search", [this](const httplib::Request& req,
                                httplib::Response& res) {
    try {
      const auto j = json::parse(req.body);
      SearchRequest request;
      request.searcher_id = j.value("searcher_id", "anonymous");
      request.query_text = j.value("query", j.value("query_text", ""));
      request.page_size = j.value("page_size", 10);
      request.latency_sensitive = j.value("latency_sensitive", true);
      if (j.contains("filters")) {
        for (const auto& [attr, values] : j.at("filters").items()) {
          request.filters[attr] = values.get<std::vector<std::string>>();
        }
      }
      res.set_content(search_response_to_json(service_.handle_search(request)),
                      "application/json");
    } catch (const Error& e) {
      res.status = 400;
      res.set_content(json{{"error", {{"code", error_code_name(e.code())},
                                      {"message", e.what()}}}}
                          .dump(),
                      "application/json");
    } catch (const std::exception& e) {
      res.status = 400;
      res.set_content(json{{"error", {{"code", "bad_request"},
                                      {"message", e.what()}}}}
                          .dump(),
                      "application/json");
    }
  });

  server.Post("/score", [this](const httplib::Request& req,
                               httplib::Response& res) {
    try {
      const auto& cfg = service_.weights().config;
      const auto request =
          parse_score_request_json(req.body, cfg.d_model, cfg.max_seq);
      res.set_content(score_result_to_json(service_.score_passthrough(request)),
                      "application/json");
    } catch (const Error& e) {
      res.status = 400;
      res.set_content(json{{"error", {{"code", error_code_name(e.code())},
                                      {"message", e.what()}}}}
                          .dump(),
                      "application/json");
    }
  });

  server.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(health_to_json(service_.health()), "application/json");
  });

  server.Get("/metrics", [this](const httplib::Request&, httplib::Response& res) {
    const auto status = service_.health();
    std::ostringstream out;
    out << "semrank_requests_served " << status.requests_served << '\n'
        << "semrank_cache_entries " << status.cache_entries << '\n'
        << "semrank_cache_lookups " << status.cache_lookups << '\n'
        << "semrank_cache_hits " << status.cache_hits << '\n'
        << "semrank_current_depth " << status.current_depth << '\n'
        << "semrank_p50_ms " << status.rolling_p50_ms << '\n'
        << "semrank_p99_ms " << status.rolling_p99_ms << '\n';
    res.set_content(out.str(), "text/plain");
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(int port) {
  auto& server = impl_->server;
  if (port == 0) {
    port_ = server.bind_to_any_port("127.0.0.1");
  } else {
    if (!server.bind_to_port("127.0.0.1", port)) {
      throw Error(ErrorCode::Io, "cannot bind port " + std::to_string(port));
    }
    port_ = port;
  }
  thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port_;
}

void HttpServer::stop() {
  if (thread_.joinable()) {
    impl_->server.stop();
    thread_.join();
  }
}

}  // namespace semrank
