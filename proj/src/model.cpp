// Copyright 2026 the semrank authors
// SPDX-License-Identifier: Apache-2.0

#include "semrank/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "semrank/error.hpp"
#include "semrank/kernels.hpp"
#include "semrank/rng.hpp"

namespace semrank {

namespace {
constexpr float kLnEps = 1e-5f;
constexpr float kInitStd = 0.08f;

void fill_normal(Rng& rng, std::vector<float>& t, std::size_t n) {
  t.resize(n);
  for (auto& v : t) {
    // Clamped so the |w| < 10 weight invariant holds unconditionally.
    v = static_cast<float>(std::clamp(rng.normal(0.0, kInitStd), -1.0, 1.0));
  }
}
}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) {
    throw Error(ErrorCode::SpecViolation, "model config: " + msg);
  };
  if (n_layers < 1 || d_model < 1 || n_heads < 1 || d_ff < 1) {
    fail("all dimensions must be >= 1");
  }
  if (d_model % n_heads != 0) fail("d_model must be divisible by n_heads");
  if (max_seq < 1) fail("max_seq must be >= 1");
  if (yes_token_id == no_token_id) fail("yes and no token ids must differ");
  if (yes_token_id < 0 || yes_token_id >= vocab_size ||
      no_token_id < 0 || no_token_id >= vocab_size) {
    fail("yes/no token ids must be < vocab_size");
  }
  if (vocab_size < kMinVocabSize) {
    fail("vocab_size must cover bytes plus specials (>= " +
         std::to_string(kMinVocabSize) + ")");
  }
  for (const auto& h : head_specs) {
    if (h.arity < 1) fail("head arity must be >= 1: " + h.name);
  }
}

ModelConfig ModelConfig::default_toy() {
  ModelConfig cfg;
  cfg.head_specs = {{"click", 1}, {"apply", 1}, {"badfit", 1},
                    {"shortlist", 1}, {"dismiss", 1}};
  return cfg;
}

void ModelWeights::check_shapes() const {
  const auto d = static_cast<std::size_t>(config.d_model);
  auto fail = [](const std::string& msg) {
    throw Error(ErrorCode::SpecViolation, "model weights: " + msg);
  };
  if (tok_emb.size() != static_cast<std::size_t>(config.vocab_size) * d) {
    fail("tok_emb shape mismatch");
  }
  if (pos_emb.size() != static_cast<std::size_t>(config.max_seq) * d) {
    fail("pos_emb shape mismatch");
  }
  if (layers.size() != static_cast<std::size_t>(config.n_layers)) {
    fail("layer count mismatch");
  }
  for (const auto& l : layers) {
    if (l.wq.size() != d * d || l.wk.size() != d * d || l.wv.size() != d * d ||
        l.wo.size() != d * d || l.ln1_gain.size() != d || l.ln2_gain.size() != d ||
        l.w_mlp_in.size() != d * static_cast<std::size_t>(config.d_ff) ||
        l.w_mlp_out.size() != static_cast<std::size_t>(config.d_ff) * d) {
      fail("layer tensor shape mismatch");
    }
  }
  if (ln_f_gain.size() != d) fail("ln_f shape mismatch");
  if (w_vocab.size() != d * static_cast<std::size_t>(config.vocab_size)) {
    fail("w_vocab shape mismatch");
  }
  if (heads.size() != config.head_specs.size()) fail("head count mismatch");
  for (std::size_t i = 0; i < heads.size(); ++i) {
    const auto arity = static_cast<std::size_t>(config.head_specs[i].arity);
    if (heads[i].w.size() != d * arity || heads[i].b.size() != arity) {
      fail("head tensor shape mismatch: " + heads[i].name);
    }
  }
}

ModelWeights init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng = Rng::substream(seed, "init");

  ModelWeights w;
  w.config = config;
  {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "toy-%016llx",
                  static_cast<unsigned long long>(seed));
    w.version = buf;
  }

  const auto d = static_cast<std::size_t>(config.d_model);
  fill_normal(rng, w.tok_emb, static_cast<std::size_t>(config.vocab_size) * d);
  fill_normal(rng, w.pos_emb, static_cast<std::size_t>(config.max_seq) * d);

  w.layers.resize(static_cast<std::size_t>(config.n_layers));
  for (auto& l : w.layers) {
    fill_normal(rng, l.wq, d * d);
    fill_normal(rng, l.wk, d * d);
    fill_normal(rng, l.wv, d * d);
    fill_normal(rng, l.wo, d * d);
    l.ln1_gain.assign(d, 1.0f);
    l.ln2_gain.assign(d, 1.0f);
    fill_normal(rng, l.w_mlp_in, d * static_cast<std::size_t>(config.d_ff));
    fill_normal(rng, l.w_mlp_out, static_cast<std::size_t>(config.d_ff) * d);
  }
  w.ln_f_gain.assign(d, 1.0f);
  fill_normal(rng, w.w_vocab, d * static_cast<std::size_t>(config.vocab_size));

  for (const auto& spec : config.head_specs) {
    TaskHead head;
    head.name = spec.name;
    head.arity = spec.arity;
    fill_normal(rng, head.w, d * static_cast<std::size_t>(spec.arity));
    head.b.assign(static_cast<std::size_t>(spec.arity), 0.0f);
    w.heads.push_back(std::move(head));
  }
  return w;
}

KVCache KVCache::empty(const ModelConfig& config) {
  KVCache c;
  c.n_layers = config.n_layers;
  c.n_heads = config.n_heads;
  c.head_dim = config.head_dim();
  c.max_seq = config.max_seq;
  c.k.resize(static_cast<std::size_t>(config.n_layers));
  c.v.resize(static_cast<std::size_t>(config.n_layers));
  return c;
}

namespace {

std::vector<float> forward(const ModelWeights& w, const float* input_rows,
                           int n_new, KVCache& cache, const AttentionMask* mask) {
  const auto& cfg = w.config;
  const int d = cfg.d_model;
  const int base = cache.seq_len;
  const auto exec = kernels::default_exec();

  std::vector<kernels::MaskSpan> spans(static_cast<std::size_t>(n_new));
  for (int i = 0; i < n_new; ++i) {
    const int pos = base + i;
    if (mask != nullptr) {
      const auto& e = mask->entries[static_cast<std::size_t>(i)];
      if (e.prefix_end < 0 || e.span_start < e.prefix_end || e.span_start > pos) {
        throw Error(ErrorCode::MaskInvalid,
                    "mask entry " + std::to_string(i) +
                        " violates prefix_end <= span_start <= position");
      }
      spans[static_cast<std::size_t>(i)] = {e.prefix_end, e.span_start, pos};
    } else {
      spans[static_cast<std::size_t>(i)] = {0, 0, pos};
    }
  }

  std::vector<float> x(input_rows,
                       input_rows + static_cast<std::size_t>(n_new) * d);
  std::vector<float> normed(static_cast<std::size_t>(n_new) * d);
  std::vector<float> q(static_cast<std::size_t>(n_new) * d);
  std::vector<float> attn(static_cast<std::size_t>(n_new) * d);
  std::vector<float> proj(static_cast<std::size_t>(n_new) * d);
  std::vector<float> mlp_hidden(static_cast<std::size_t>(n_new) * cfg.d_ff);

  for (int layer = 0; layer < cfg.n_layers; ++layer) {
    const auto& lw = w.layers[static_cast<std::size_t>(layer)];
    auto& kc = cache.k[static_cast<std::size_t>(layer)];
    auto& vc = cache.v[static_cast<std::size_t>(layer)];
    kc.resize(static_cast<std::size_t>(base + n_new) * d);
    vc.resize(static_cast<std::size_t>(base + n_new) * d);

    kernels::layer_norm(x.data(), lw.ln1_gain.data(), normed.data(), n_new, d,
                        kLnEps, exec);
    kernels::matmul(normed.data(), lw.wq.data(), nullptr, q.data(), n_new, d, d,
                    exec);
    kernels::matmul(normed.data(), lw.wk.data(), nullptr,
                    kc.data() + static_cast<std::size_t>(base) * d, n_new, d, d,
                    exec);
    kernels::matmul(normed.data(), lw.wv.data(), nullptr,
                    vc.data() + static_cast<std::size_t>(base) * d, n_new, d, d,
                    exec);
    kernels::attention(q.data(), kc.data(), vc.data(), attn.data(), n_new,
                       cfg.n_heads, cfg.head_dim(), spans.data(), exec);
    kernels::matmul(attn.data(), lw.wo.data(), nullptr, proj.data(), n_new, d,
                    d, exec);
    kernels::add_inplace(x.data(), proj.data(),
                         static_cast<long>(n_new) * d, exec);

    kernels::layer_norm(x.data(), lw.ln2_gain.data(), normed.data(), n_new, d,
                        kLnEps, exec);
    kernels::matmul(normed.data(), lw.w_mlp_in.data(), nullptr,
                    mlp_hidden.data(), n_new, d, cfg.d_ff, exec);
    kernels::gelu(mlp_hidden.data(), mlp_hidden.data(),
                  static_cast<long>(n_new) * cfg.d_ff, exec);
    kernels::matmul(mlp_hidden.data(), lw.w_mlp_out.data(), nullptr,
                    proj.data(), n_new, cfg.d_ff, d, exec);
    kernels::add_inplace(x.data(), proj.data(),
                         static_cast<long>(n_new) * d, exec);
  }

  cache.seq_len = base + n_new;
  kernels::layer_norm(x.data(), w.ln_f_gain.data(), x.data(), n_new, d, kLnEps,
                      exec);
  return x;
}

void check_capacity(const ModelWeights& w, const KVCache& cache, int n_new,
                    const AttentionMask* mask,
                    std::span<const int> positions) {
  if (cache.seq_len + n_new > w.config.max_seq) {
    throw Error(ErrorCode::LengthOverflow,
                "prefill of " + std::to_string(n_new) + " tokens after " +
                    std::to_string(cache.seq_len) + " would exceed max_seq " +
                    std::to_string(w.config.max_seq));
  }
  if (mask != nullptr &&
      mask->entries.size() != static_cast<std::size_t>(n_new)) {
    throw Error(ErrorCode::MaskInvalid,
                "mask must cover every new position");
  }
  if (!positions.empty()) {
    if (positions.size() != static_cast<std::size_t>(n_new)) {
      throw Error(ErrorCode::SpecViolation,
                  "positions must match token count");
    }
    for (int p : positions) {
      if (p < 0 || p >= w.config.max_seq) {
        throw Error(ErrorCode::LengthOverflow, "position index out of range");
      }
    }
  }
}

}  // namespace

std::vector<float> prefill(const ModelWeights& w, std::span<const int> tokens,
                           KVCache& cache, const AttentionMask* mask,
                           std::span<const int> positions) {
  const int n_new = static_cast<int>(tokens.size());
  check_capacity(w, cache, n_new, mask, positions);
  const int d = w.config.d_model;

  std::vector<float> rows(static_cast<std::size_t>(n_new) * d);
  for (int i = 0; i < n_new; ++i) {
    const int tok = tokens[static_cast<std::size_t>(i)];
    if (tok < 0 || tok >= w.config.vocab_size) {
      throw Error(ErrorCode::SpecViolation,
                  "token id " + std::to_string(tok) + " out of vocabulary");
    }
    const int pos = positions.empty() ? cache.seq_len + i
                                      : positions[static_cast<std::size_t>(i)];
    const float* te = w.tok_emb.data() + static_cast<std::size_t>(tok) * d;
    const float* pe = w.pos_emb.data() + static_cast<std::size_t>(pos) * d;
    float* out = rows.data() + static_cast<std::size_t>(i) * d;
    for (int j = 0; j < d; ++j) out[j] = te[j] + pe[j];
  }
  return forward(w, rows.data(), n_new, cache, mask);
}

std::vector<float> prefill_embeddings(const ModelWeights& w, const float* rows,
                                      int n_new, KVCache& cache,
                                      const AttentionMask* mask,
                                      std::span<const int> positions) {
  check_capacity(w, cache, n_new, mask, positions);
  const int d = w.config.d_model;

  std::vector<float> input(static_cast<std::size_t>(n_new) * d);
  for (int i = 0; i < n_new; ++i) {
    const int pos = positions.empty() ? cache.seq_len + i
                                      : positions[static_cast<std::size_t>(i)];
    const float* pe = w.pos_emb.data() + static_cast<std::size_t>(pos) * d;
    const float* in = rows + static_cast<std::size_t>(i) * d;
    float* out = input.data() + static_cast<std::size_t>(i) * d;
    for (int j = 0; j < d; ++j) out[j] = in[j] + pe[j];
  }
  return forward(w, input.data(), n_new, cache, mask);
}

double yes_no_probability(std::span<const float> logits, int yes_id, int no_id) {
  if (yes_id < 0 || no_id < 0 ||
      yes_id >= static_cast<int>(logits.size()) ||
      no_id >= static_cast<int>(logits.size())) {
    throw Error(ErrorCode::SpecViolation, "yes/no logit index out of range");
  }
  const double diff = static_cast<double>(logits[static_cast<std::size_t>(no_id)]) -
                      static_cast<double>(logits[static_cast<std::size_t>(yes_id)]);
  if (diff > 0) {
    const double e = std::exp(-diff);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(diff));
}

std::vector<float> vocab_logits(const ModelWeights& w,
                                std::span<const float> hidden_row) {
  std::vector<float> logits(static_cast<std::size_t>(w.config.vocab_size));
  kernels::matmul_serial(hidden_row.data(), w.w_vocab.data(), nullptr,
                         logits.data(), 1, w.config.d_model,
                         w.config.vocab_size);
  return logits;
}

std::map<std::string, double> multi_head_scores(std::span<const float> hidden_row,
                                                const ModelWeights& w) {
  if (w.heads.empty()) {
    throw Error(ErrorCode::SpecViolation, "model has no task heads");
  }
  std::map<std::string, double> scores;
  for (const auto& head : w.heads) {
    std::vector<float> out(static_cast<std::size_t>(head.arity));
    kernels::matmul_serial(hidden_row.data(), head.w.data(), head.b.data(),
                           out.data(), 1, w.config.d_model, head.arity);
    double p;
    if (head.arity == 1) {
      const double z = out[0];
      p = z >= 0 ? 1.0 / (1.0 + std::exp(-z))
                 : std::exp(z) / (1.0 + std::exp(z));
    } else {
      double mx = out[0];
      for (float v : out) mx = std::max(mx, static_cast<double>(v));
      double denom = 0.0;
      for (float v : out) denom += std::exp(static_cast<double>(v) - mx);
      p = std::exp(static_cast<double>(out[0]) - mx) / denom;
    }
    scores[head.name] = p;
  }
  return scores;
}

std::map<std::string, double> task_scores(const ModelWeights& w,
                                          std::span<const float> hidden_row) {
  auto scores = multi_head_scores(hidden_row, w);
  const auto logits = vocab_logits(w, hidden_row);
  scores[kRelevanceTask] =
      yes_no_probability(logits, w.config.yes_token_id, w.config.no_token_id);
  return scores;
}

}  // namespace semrank
