// Copyright 2026 the semrank authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "semrank/tokenizer.hpp"

namespace semrank {

struct HeadSpec {
  std::string name;
  int arity = 1;  // 1 = logistic head; >1 = softmax, class 0 reported
};

// Toy decoder-only scorer: pre-norm blocks, GELU MLP, learned absolute
// positions, reserved Yes/No vocab ids for the relevance read-out and
// per-task linear heads for engagement.
struct ModelConfig {
  int n_layers = 2;
  int d_model = 64;
  int n_heads = 4;
  int d_ff = 256;
  int vocab_size = 300;
  int max_seq = kDefaultMaxSeq;
  int yes_token_id = kTokenYes;
  int no_token_id = kTokenNo;
  std::vector<HeadSpec> head_specs;

  int head_dim() const { return d_model / n_heads; }
  void validate() const;  // throws SpecViolation on a broken invariant

  // Default toy scale with the five engagement tasks.
  static ModelConfig default_toy();
};

struct LayerWeights {
  std::vector<float> wq, wk, wv, wo;      // [d_model x d_model]
  std::vector<float> ln1_gain, ln2_gain;  // [d_model]
  std::vector<float> w_mlp_in;            // [d_model x d_ff]
  std::vector<float> w_mlp_out;           // [d_ff x d_model]
};

struct TaskHead {
  std::string name;
  int arity = 1;
  std::vector<float> w;  // [d_model x arity]
  std::vector<float> b;  // [arity]
};

struct ModelWeights {
  ModelConfig config;
  std::string version;  // identifies the artifact in cache keys
  std::vector<float> tok_emb;  // [vocab_size x d_model]
  std::vector<float> pos_emb;  // [max_seq x d_model]
  std::vector<LayerWeights> layers;
  std::vector<float> ln_f_gain;  // [d_model]
  std::vector<float> w_vocab;    // [d_model x vocab_size]
  std::vector<TaskHead> heads;

  void check_shapes() const;
};

// Deterministic: same (config, seed) gives bit-identical weights.
ModelWeights init_model(const ModelConfig& config, std::uint64_t seed);

struct KVCache {
  int n_layers = 0;
  int n_heads = 0;
  int head_dim = 0;
  int max_seq = 0;
  int seq_len = 0;
  // Per layer, [seq_len x n_heads x head_dim] contiguous, grown on append.
  std::vector<std::vector<float>> k, v;

  static KVCache empty(const ModelConfig& config);
};

// Per-new-token attention permission: keys [0, prefix_end) plus
// [span_start, own position]. {0, 0} is plain causal attention.
struct AttentionMask {
  struct Entry {
    int prefix_end = 0;
    int span_start = 0;
  };
  std::vector<Entry> entries;
};

// Single forward pass over `tokens` appended after `cache`. Returns the
// final-normed hidden row for every new position ([n_new x d_model]) and
// leaves the new keys/values in `cache`. `positions` overrides the
// positional-embedding index per new token (defaults to the cache slot);
// multi-item scoring uses that to give every item prefix-relative
// positions while items occupy distinct slots.
std::vector<float> prefill(const ModelWeights& w, std::span<const int> tokens,
                           KVCache& cache, const AttentionMask* mask = nullptr,
                           std::span<const int> positions = {});

// Same forward pass with the token-embedding lookup bypassed: `rows` is
// [n_new x d_model] and enters the stack as if it were embedded tokens
// (positional embeddings still apply).
std::vector<float> prefill_embeddings(const ModelWeights& w, const float* rows,
                                      int n_new, KVCache& cache,
                                      const AttentionMask* mask = nullptr,
                                      std::span<const int> positions = {});

// p(yes) from two vocab logits, computed without overflow.
double yes_no_probability(std::span<const float> logits, int yes_id, int no_id);

std::vector<float> vocab_logits(const ModelWeights& w,
                                std::span<const float> hidden_row);

// One probability per configured engagement head.
std::map<std::string, double> multi_head_scores(std::span<const float> hidden_row,
                                                const ModelWeights& w);

// Engagement heads plus the Yes/No-logit relevance probability.
std::map<std::string, double> task_scores(const ModelWeights& w,
                                          std::span<const float> hidden_row);

inline constexpr const char* kRelevanceTask = "relevance";

}  // namespace semrank
