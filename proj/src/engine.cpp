// Copyright 2026 the semrank authors
// SPDX-License-Identifier: Apache-2.0

#include "semrank/engine.hpp"

#include <numeric>

#include "semrank/error.hpp"

namespace semrank {

const char* score_mode_name(ScoreMode mode) {
  switch (mode) {
    case ScoreMode::Naive: return "naive";
    case ScoreMode::Ibpc: return "ibpc";
    case ScoreMode::MultiItem: return "multi_item";
    case ScoreMode::Mixed: return "mixed";
  }
  return "unknown";
}

ScoreMode score_mode_from_name(const std::string& name) {
  if (name == "naive") return ScoreMode::Naive;
  if (name == "ibpc") return ScoreMode::Ibpc;
  if (name == "multi_item" || name == "multi-item") return ScoreMode::MultiItem;
  if (name == "mixed") return ScoreMode::Mixed;
  throw Error(ErrorCode::Parameter, "unknown scoring mode: " + name);
}

FlopReport flops(ScoreMode mode, long t_q, long t_i, long n_items) {
  if (t_q < 0 || t_i < 0 || n_items < 0) {
    throw Error(ErrorCode::Parameter, "flop counts must be non-negative");
  }
  FlopReport r;
  r.t_q = static_cast<double>(t_q);
  r.t_i_mean = static_cast<double>(t_i);
  r.n_items = static_cast<double>(n_items);
  const double tq = r.t_q, ti = r.t_i_mean, n = r.n_items;
  if (mode == ScoreMode::Naive) {
    r.attention_units = n * (tq + ti) * (tq + ti);
    r.linear_units = n * (tq + ti);
  } else {
    r.attention_units = tq * tq + n * (2.0 * ti * tq + ti * ti);
    r.linear_units = tq + n * ti;
  }
  return r;
}

namespace {

void require_token_mode(const ScoreRequest& request) {
  if (request.items.empty()) {
    throw Error(ErrorCode::SpecViolation, "request has no items");
  }
  for (const auto& item : request.items) {
    if (item.tokens.empty()) {
      throw Error(ErrorCode::SpecViolation,
                  "token-mode item has no tokens: " + item.id);
    }
  }
}

FlopReport actual_flops(bool amortized, long t_q,
                        const std::vector<long>& item_lengths) {
  FlopReport r;
  r.t_q = static_cast<double>(t_q);
  r.n_items = static_cast<double>(item_lengths.size());
  double ti_sum = 0;
  for (long l : item_lengths) ti_sum += static_cast<double>(l);
  r.t_i_mean = item_lengths.empty() ? 0 : ti_sum / r.n_items;
  const double tq = r.t_q;
  if (amortized) {
    r.attention_units = tq * tq;
    r.linear_units = tq;
    for (long l : item_lengths) {
      const double ti = static_cast<double>(l);
      r.attention_units += 2.0 * ti * tq + ti * ti;
      r.linear_units += ti;
    }
  } else {
    for (long l : item_lengths) {
      const double ti = static_cast<double>(l);
      r.attention_units += (tq + ti) * (tq + ti);
      r.linear_units += tq + ti;
    }
  }
  return r;
}

ItemScores score_from_hidden(const ModelWeights& w, const ScoreItem& item,
                             std::span<const float> hidden_rows, int row) {
  const int d = w.config.d_model;
  std::span<const float> last(hidden_rows.data() + static_cast<std::size_t>(row) * d,
                              static_cast<std::size_t>(d));
  return {item.id, task_scores(w, last)};
}

}  // namespace

ScoreResult score_naive(const ModelWeights& w, const ScoreRequest& request) {
  require_token_mode(request);
  ScoreResult result;
  result.request_id = request.request_id;
  result.mode = ScoreMode::Naive;

  std::vector<long> lengths;
  for (const auto& item : request.items) {
    std::vector<int> tokens = request.prefix_tokens;
    tokens.insert(tokens.end(), item.tokens.begin(), item.tokens.end());
    KVCache cache = KVCache::empty(w.config);
    const auto hidden = prefill(w, tokens, cache);
    result.items.push_back(score_from_hidden(
        w, item, hidden, static_cast<int>(tokens.size()) - 1));
    lengths.push_back(static_cast<long>(item.tokens.size()));
    result.kv_incremental_per_item += static_cast<double>(tokens.size());
  }
  result.kv_incremental_per_item /= static_cast<double>(request.items.size());
  result.flops = actual_flops(false, static_cast<long>(request.prefix_tokens.size()),
                              lengths);
  return result;
}

ScoreResult score_ibpc(const ModelWeights& w, const ScoreRequest& request) {
  require_token_mode(request);
  ScoreResult result;
  result.request_id = request.request_id;
  result.mode = ScoreMode::Ibpc;

  KVCache prefix_cache = KVCache::empty(w.config);
  prefill(w, request.prefix_tokens, prefix_cache);

  std::vector<long> lengths;
  for (const auto& item : request.items) {
    KVCache cache = prefix_cache;  // prefix KV computed once, shared
    const auto hidden = prefill(w, item.tokens, cache);
    result.items.push_back(score_from_hidden(
        w, item, hidden, static_cast<int>(item.tokens.size()) - 1));
    lengths.push_back(static_cast<long>(item.tokens.size()));
    result.kv_incremental_per_item += static_cast<double>(item.tokens.size());
  }
  result.kv_incremental_per_item /= static_cast<double>(request.items.size());
  result.flops = actual_flops(true, static_cast<long>(request.prefix_tokens.size()),
                              lengths);
  return result;
}

long long MultiItemMask::allowed_pair_count() const {
  const long long tq = prefix_len;
  long long count = tq * (tq + 1) / 2;
  for (const auto& [start, end] : item_spans) {
    const long long len = end - start;
    count += tq * len + len * (len + 1) / 2;
  }
  return count;
}

AttentionMask MultiItemMask::to_attention_mask() const {
  AttentionMask mask;
  for (const auto& [start, end] : item_spans) {
    for (int p = start; p < end; ++p) {
      mask.entries.push_back({prefix_len, start});
    }
  }
  return mask;
}

MultiItemMask build_multi_item_mask(int prefix_len,
                                    const std::vector<int>& item_lengths) {
  if (prefix_len < 0) {
    throw Error(ErrorCode::SpecViolation, "negative prefix length");
  }
  MultiItemMask mask;
  mask.prefix_len = prefix_len;
  int cursor = prefix_len;
  for (int len : item_lengths) {
    if (len < 1) {
      throw Error(ErrorCode::SpecViolation,
                  "zero-length item in multi-item mask");
    }
    mask.item_spans.emplace_back(cursor, cursor + len);
    cursor += len;
  }
  return mask;
}

ScoreResult score_multi_item(const ModelWeights& w, const ScoreRequest& request) {
  require_token_mode(request);

  std::vector<int> item_lengths;
  long total = static_cast<long>(request.prefix_tokens.size());
  for (const auto& item : request.items) {
    item_lengths.push_back(static_cast<int>(item.tokens.size()));
    total += static_cast<long>(item.tokens.size());
  }
  if (total > w.config.max_seq) {
    throw Error(ErrorCode::LengthOverflow,
                "multi-item sequence of " + std::to_string(total) +
                    " exceeds max_seq " + std::to_string(w.config.max_seq) +
                    "; split the request into smaller batches");
  }

  const auto mask = build_multi_item_mask(
      static_cast<int>(request.prefix_tokens.size()), item_lengths);
  const auto attn_mask = mask.to_attention_mask();

  KVCache cache = KVCache::empty(w.config);
  prefill(w, request.prefix_tokens, cache);

  // Every item sees prefix-relative positions; the mask keeps slots global.
  std::vector<int> tokens;
  std::vector<int> positions;
  for (const auto& item : request.items) {
    for (std::size_t j = 0; j < item.tokens.size(); ++j) {
      tokens.push_back(item.tokens[j]);
      positions.push_back(mask.prefix_len + static_cast<int>(j));
    }
  }
  const auto hidden = prefill(w, tokens, cache, &attn_mask, positions);

  ScoreResult result;
  result.request_id = request.request_id;
  result.mode = ScoreMode::MultiItem;
  int offset = 0;
  std::vector<long> lengths;
  for (const auto& item : request.items) {
    const int last = offset + static_cast<int>(item.tokens.size()) - 1;
    result.items.push_back(score_from_hidden(w, item, hidden, last));
    offset += static_cast<int>(item.tokens.size());
    lengths.push_back(static_cast<long>(item.tokens.size()));
  }
  result.kv_incremental_per_item =
      static_cast<double>(tokens.size()) / request.items.size();
  result.flops = actual_flops(true, static_cast<long>(request.prefix_tokens.size()),
                              lengths);
  return result;
}

ScoreResult score_mixed(const ModelWeights& w, const ScoreRequest& request) {
  if (request.items.empty()) {
    throw Error(ErrorCode::SpecViolation, "request has no items");
  }
  const int d = w.config.d_model;
  for (const auto& item : request.items) {
    if (item.n_emb_tokens < 1 ||
        item.embedding.size() !=
            static_cast<std::size_t>(item.n_emb_tokens) * d) {
      throw Error(ErrorCode::PayloadInvalid,
                  "item " + item.id + " embedding payload is not [n x " +
                      std::to_string(d) + "]");
    }
  }

  ScoreResult result;
  result.request_id = request.request_id;
  result.mode = ScoreMode::Mixed;

  KVCache prefix_cache = KVCache::empty(w.config);
  prefill(w, request.prefix_tokens, prefix_cache);

  std::vector<long> lengths;
  for (const auto& item : request.items) {
    KVCache cache = prefix_cache;
    const int before = cache.seq_len;
    const auto hidden =
        prefill_embeddings(w, item.embedding.data(), item.n_emb_tokens, cache);
    result.kv_incremental_per_item +=
        static_cast<double>(cache.seq_len - before);
    result.items.push_back(
        score_from_hidden(w, item, hidden, item.n_emb_tokens - 1));
    lengths.push_back(item.n_emb_tokens);
  }
  result.kv_incremental_per_item /= static_cast<double>(request.items.size());
  result.flops = actual_flops(true, static_cast<long>(request.prefix_tokens.size()),
                              lengths);
  return result;
}

std::vector<Batch> plan_batches(const std::vector<ScoreRequest>& requests,
                                long max_batch_tokens) {
  std::vector<Batch> batches;
  Batch current;

  auto flush = [&] {
    if (!current.entries.empty()) {
      batches.push_back(std::move(current));
      current = Batch{};
    }
  };

  for (std::size_t r = 0; r < requests.size(); ++r) {
    const auto& request = requests[r];
    const long prefix = static_cast<long>(request.prefix_tokens.size());
    std::size_t item = 0;
    while (item < request.items.size()) {
      const auto& it = request.items[item];
      const long item_tokens = it.n_emb_tokens > 0
                                   ? it.n_emb_tokens
                                   : static_cast<long>(it.tokens.size());
      if (prefix + item_tokens > max_batch_tokens) {
        throw Error(ErrorCode::OversizeItem,
                    "item " + it.id + " needs " +
                        std::to_string(prefix + item_tokens) +
                        " tokens, over budget " +
                        std::to_string(max_batch_tokens));
      }
      const bool request_open =
          !current.entries.empty() &&
          current.entries.back().request_index == r &&
          current.entries.back().item_end == item;
      const long cost = request_open ? item_tokens : prefix + item_tokens;
      if (current.token_count + cost > max_batch_tokens) {
        flush();
        continue;  // retry the same item in a fresh batch
      }
      if (request_open) {
        current.entries.back().item_end = item + 1;
      } else {
        current.entries.push_back({r, item, item + 1});
      }
      current.token_count += cost;
      ++item;
    }
  }
  flush();
  return batches;
}

ScoreResult score_multi_item_chunked(const ModelWeights& w,
                                     const ScoreRequest& request) {
  require_token_mode(request);
  const long prefix = static_cast<long>(request.prefix_tokens.size());

  std::vector<std::pair<std::size_t, std::size_t>> chunks;  // [begin, end)
  std::size_t begin = 0;
  long used = prefix;
  for (std::size_t i = 0; i < request.items.size(); ++i) {
    const long len = static_cast<long>(request.items[i].tokens.size());
    if (prefix + len > w.config.max_seq) {
      throw Error(ErrorCode::LengthOverflow,
                  "item " + request.items[i].id + " cannot fit max_seq even alone");
    }
    if (used + len > w.config.max_seq) {
      chunks.emplace_back(begin, i);
      begin = i;
      used = prefix;
    }
    used += len;
  }
  chunks.emplace_back(begin, request.items.size());
  if (chunks.size() == 1) return score_multi_item(w, request);

  ScoreResult merged;
  merged.request_id = request.request_id;
  merged.mode = ScoreMode::MultiItem;
  double kv_total = 0;
  double ti_sum = 0;
  for (const auto& [lo, hi] : chunks) {
    ScoreRequest part;
    part.request_id = request.request_id;
    part.prefix_tokens = request.prefix_tokens;
    part.mode = ScoreMode::MultiItem;
    part.items.assign(request.items.begin() + static_cast<long>(lo),
                      request.items.begin() + static_cast<long>(hi));
    auto result = score_multi_item(w, part);
    for (auto& item : result.items) merged.items.push_back(std::move(item));
    // Each chunk pays its own prefix pass.
    merged.flops.attention_units += result.flops.attention_units;
    merged.flops.linear_units += result.flops.linear_units;
    kv_total += result.kv_incremental_per_item * result.flops.n_items;
    ti_sum += result.flops.t_i_mean * result.flops.n_items;
  }
  merged.flops.t_q = static_cast<double>(prefix);
  merged.flops.n_items = static_cast<double>(request.items.size());
  merged.flops.t_i_mean = ti_sum / merged.flops.n_items;
  merged.kv_incremental_per_item = kv_total / merged.flops.n_items;
  return merged;
}

ScoreResult score_by_mode(const ModelWeights& w, const ScoreRequest& request) {
  switch (request.mode) {
    case ScoreMode::Naive: return score_naive(w, request);
    case ScoreMode::Ibpc: return score_ibpc(w, request);
    case ScoreMode::MultiItem: return score_multi_item_chunked(w, request);
    case ScoreMode::Mixed: return score_mixed(w, request);
  }
  throw Error(ErrorCode::Parameter, "unknown scoring mode");
}

ScoreResult ScoringEngine::score(const ScoreRequest& request) {
  std::lock_guard<std::mutex> lock(exec_mu_);
  return score_by_mode(weights_, request);
}

}  // namespace semrank
