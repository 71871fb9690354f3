// Copyright 2026 the semrank authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "semrank/model.hpp"

namespace semrank {

enum class ScoreMode { Naive, Ibpc, MultiItem, Mixed };

const char* score_mode_name(ScoreMode mode);
ScoreMode score_mode_from_name(const std::string& name);

struct ScoreItem {
  std::string id;
  std::vector<int> tokens;          // token modes
  std::vector<float> embedding;     // mixed mode: [n_emb_tokens x d_model]
  int n_emb_tokens = 0;
};

struct ScoreRequest {
  std::string request_id;
  std::vector<int> prefix_tokens;  // shared across all items
  std::vector<ScoreItem> items;
  ScoreMode mode = ScoreMode::Ibpc;
  bool latency_sensitive = false;
};

// Proportional work units from the prefill cost model:
//   naive:     att = sum_i (T_q + T_i)^2          lin = sum_i (T_q + T_i)
//   amortized: att = T_q^2 + sum_i (2 T_i T_q + T_i^2)   lin = T_q + sum_i T_i
struct FlopReport {
  double attention_units = 0;
  double linear_units = 0;
  double t_q = 0;
  double t_i_mean = 0;
  double n_items = 0;
};

FlopReport flops(ScoreMode mode, long t_q, long t_i, long n_items);

struct ItemScores {
  std::string item_id;
  std::map<std::string, double> tasks;
};

struct ScoreResult {
  std::string request_id;
  std::vector<ItemScores> items;  // input order preserved
  ScoreMode mode = ScoreMode::Naive;
  FlopReport flops;
  double kv_incremental_per_item = 0;  // mean KV rows appended per item
};

// Mask for one-pass multi-item scoring: each item's span may attend the
// shared prefix and itself, never a sibling item.
struct MultiItemMask {
  int prefix_len = 0;
  std::vector<std::pair<int, int>> item_spans;  // [start, end) offsets

  // Number of (query, key) pairs the mask allows; used as a test oracle
  // target and exercised by the mask unit tests.
  long long allowed_pair_count() const;

  AttentionMask to_attention_mask() const;
};

MultiItemMask build_multi_item_mask(int prefix_len,
                                    const std::vector<int>& item_lengths);

ScoreResult score_naive(const ModelWeights& w, const ScoreRequest& request);
ScoreResult score_ibpc(const ModelWeights& w, const ScoreRequest& request);
ScoreResult score_multi_item(const ModelWeights& w, const ScoreRequest& request);
ScoreResult score_mixed(const ModelWeights& w, const ScoreRequest& request);

// Caller-side re-batching for multi-item requests that exceed max_seq:
// items are split into greedy chunks (each paying the prefix once) and the
// per-chunk results are merged in order. Scores are unchanged by the split.
ScoreResult score_multi_item_chunked(const ModelWeights& w,
                                     const ScoreRequest& request);

// Dispatch on request.mode; multi-item requests re-batch as needed.
ScoreResult score_by_mode(const ModelWeights& w, const ScoreRequest& request);

// Batch planning: greedy packing that preserves per-request item order.
// A request whose prefix reappears in a later batch pays its prefix again.
struct BatchEntry {
  std::size_t request_index = 0;
  std::size_t item_begin = 0;
  std::size_t item_end = 0;
};

struct Batch {
  std::vector<BatchEntry> entries;
  long token_count = 0;
};

std::vector<Batch> plan_batches(const std::vector<ScoreRequest>& requests,
                                long max_batch_tokens);

// Serializes model execution across callers; tokenization and result
// marshalling happen outside the lock.
class ScoringEngine {
 public:
  explicit ScoringEngine(const ModelWeights& weights) : weights_(weights) {}

  ScoreResult score(const ScoreRequest& request);
  const ModelWeights& weights() const { return weights_; }

 private:
  const ModelWeights& weights_;
  std::mutex exec_mu_;
};

}  // namespace semrank
