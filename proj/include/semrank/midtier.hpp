// Copyright 2026 the semrank authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <list>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace semrank {

// ---------------------------------------------------------------------------
// Deterministic score cache
// ---------------------------------------------------------------------------

// Lowercase, collapse whitespace runs to one space, trim, then append the
// filters sorted by attribute and value. Semantically identical queries
// canonicalize (and therefore hash) identically.
std::string canonical_query(const std::string& query_text,
                            const std::map<std::string, std::vector<std::string>>&
                                filters);

std::uint64_t fnv1a64(const std::string& text);

struct CacheKey {
  std::string searcher_id;
  std::uint64_t query_signature = 0;
  std::int64_t entity_id = 0;
  std::string model_version;

  bool operator==(const CacheKey&) const = default;
};

struct CacheKeyHash {
  std::size_t operator()(const CacheKey& k) const;
};

using TaskScoreMap = std::map<std::string, double>;

// LRU over full entries; get refreshes recency, miss mutates nothing.
// Scores are deterministic per key for one model version, so putting a
// different map under an existing key is a consistency error.
class ScoreCache {
 public:
  explicit ScoreCache(std::size_t capacity);

  std::optional<TaskScoreMap> get(const CacheKey& key);
  void put(const CacheKey& key, const TaskScoreMap& scores);

  std::size_t size() const;
  std::size_t capacity() const { return capacity_; }

 private:
  struct Entry {
    CacheKey key;
    TaskScoreMap scores;
    std::uint64_t insertion_stamp = 0;
  };

  std::size_t capacity_;
  mutable std::mutex mu_;
  std::uint64_t next_stamp_ = 0;
  std::list<Entry> lru_;  // front = most recent
  std::unordered_map<CacheKey, std::list<Entry>::iterator, CacheKeyHash> index_;
};

// ---------------------------------------------------------------------------
// PID dynamic scoring depth
// ---------------------------------------------------------------------------

struct PIDConfig {
  double k_p = 0.4;
  double k_i = 0.05;
  double k_d = 0.1;
  int depth_min = 50;
  int depth_max = 250;
  double control_scale = 1.0;        // depth units per unit control output
  double integral_clamp_factor = 10;  // integral bounded by factor * target
};

struct PIDState {
  PIDConfig config;
  double integral = 0;
  double previous_error = 0;
  bool primed = false;  // first update has no derivative term
  int depth = 0;

  static PIDState initial(const PIDConfig& config);
};

// Positive latency error shrinks depth. Anti-windup: the integral stops
// accumulating while the depth output is pinned at a bound and the error
// keeps pushing outward; it is also hard-clamped to +-factor * target.
int pid_update(PIDState& state, double observed_latency_ms,
               double target_latency_ms, double dt);

// ---------------------------------------------------------------------------
// Retry budget
// ---------------------------------------------------------------------------

struct RetryPolicy {
  double attempt_timeout_ms = 200;
  double total_budget_ms = 500;
  int max_attempts = 3;

  void validate() const;
};

enum class RetryDecision { Proceed, Retry, GiveUp };

// Another attempt runs only if it could finish inside the budget and
// attempts remain; GiveUp tells the caller to serve the retrieval-order
// fallback.
RetryDecision retry_decision(double elapsed_ms, int attempt_index,
                             const RetryPolicy& policy);

// ---------------------------------------------------------------------------
// Traffic shaping
// ---------------------------------------------------------------------------

struct QueuedRequest {
  std::uint64_t id = 0;
  bool latency_sensitive = false;
};

struct ShapingResult {
  std::vector<QueuedRequest> admit;
  std::vector<QueuedRequest> defer;  // FIFO, arrival order preserved
};

// Latency-sensitive requests are always admitted; insensitive ones only
// while utilization is strictly below the threshold.
ShapingResult shape_traffic(const std::vector<QueuedRequest>& queue,
                            double utilization, double threshold);

}  // namespace semrank
