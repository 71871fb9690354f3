// Copyright 2026 the semrank authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace semrank {

// Probabilities entering any log are clamped to [kProbClamp, 1 - kProbClamp].
inline constexpr double kProbClamp = 1e-7;

double logistic(double z);
double clamp_prob(double p);

// ---------------------------------------------------------------------------
// Contrastive losses
// ---------------------------------------------------------------------------

struct SimilarityLossGrad {
  double loss = 0;
  double d_pos = 0;
  std::vector<double> d_neg;
};

// -log( e^{s+/tau} / (e^{s+/tau} + sum e^{s-/tau}) ), log-sum-exp stable.
SimilarityLossGrad infonce_loss(double sim_pos, std::span<const double> sims_neg,
                                double tau);

// sum max(0, m - s+ + s-); the subgradient at the hinge kink is zero.
SimilarityLossGrad pairwise_margin_loss(double sim_pos,
                                        std::span<const double> sims_neg,
                                        double margin);

// lambda * L_InfoNCE + (1 - lambda) * L_pair.
double combined_retrieval_loss(double l_infonce, double l_pair, double lambda);

// ---------------------------------------------------------------------------
// Label transforms and pair construction
// ---------------------------------------------------------------------------

struct SoftLabelMap {
  enum class Mode { Linear, Sigmoid };
  Mode mode = Mode::Sigmoid;
  double steepness = 2.0;  // k
  double center = 2.5;     // c
};

// Grade {1..4} to a target in [0,1]: linear (g-1)/3 or logistic(k*(g-c)).
double soft_label_map(int grade, const SoftLabelMap& map);

struct ScoredDoc {
  std::int64_t doc_id = 0;
  double oracle_score = 0;
};

// Candidate pool = top-k of `ranked` plus k random of the rest; all ordered
// pairs with strictly different oracle scores, higher doc first.
std::vector<std::pair<std::int64_t, std::int64_t>> build_ranking_pairs(
    std::span<const ScoredDoc> ranked, int k, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Distillation and multi-task losses
// ---------------------------------------------------------------------------

struct TeacherSignal {
  struct Task {
    std::string name;
    double probability = 0.5;  // Bernoulli parameter
    double weight = 1.0;
  };
  std::vector<Task> tasks;
};

enum class KlDirection { Forward, Reverse };  // forward = KL(teacher || student)

struct KlLossGrad {
  double loss = 0;
  std::map<std::string, double> d_logit;  // w.r.t. student logits
};

KlLossGrad kl_distillation_loss(const TeacherSignal& teachers,
                                const std::map<std::string, double>& student,
                                KlDirection direction);

struct MultitaskBatch {
  std::vector<std::string> tasks;
  std::size_t n_rows = 0;
  std::vector<double> preds;        // [n_rows x tasks], probabilities
  std::vector<int> labels;          // [n_rows x tasks], 0/1
  std::vector<std::uint8_t> mask;   // [n_rows x tasks], 1 = contributes
};

struct MultitaskBceResult {
  double loss = 0;
  std::vector<double> d_pred;  // same shape as preds, zero where masked
  std::vector<std::string> degenerate_tasks;  // weighted but fully masked
};

// sum_t w_t * mean BCE over unmasked rows of task t.
MultitaskBceResult multitask_bce(const MultitaskBatch& batch,
                                 const std::map<std::string, double>& weights);

// ---------------------------------------------------------------------------
// Loss masking over interaction logs
// ---------------------------------------------------------------------------

struct LogRow {
  std::int64_t query_id = 0;
  std::int64_t doc_id = 0;
  int position = 0;  // 1-based display rank
  int grade = 0;     // 0..4
  std::map<std::string, int> actions;  // action -> 0/1
};

enum class ActionCell : std::uint8_t { Positive, Negative, MaskedOut };

struct MaskedActionBatch {
  std::vector<std::string> actions;
  struct Row {
    std::int64_t query_id = 0;
    std::int64_t doc_id = 0;
    std::vector<ActionCell> cells;  // aligned with `actions`
  };
  std::vector<Row> rows;
};

// Per (query, action): if no document received the action, every cell is
// masked out; otherwise positives keep the label and co-shown documents
// become negatives.
MaskedActionBatch apply_loss_mask(const std::vector<LogRow>& rows);

// ---------------------------------------------------------------------------
// Summarization reward
// ---------------------------------------------------------------------------

struct RewardParams {
  double lambda_len = 0;
  double lambda_qual = 0;
};

// correct ? 1 - lambda_len * len_norm + lambda_qual * quality : 0.
double summarization_reward(bool correct, double len_norm, double quality,
                            const RewardParams& params);

// ---------------------------------------------------------------------------
// Evaluation metrics
// ---------------------------------------------------------------------------

// Gain 2^g - 1, discount log2(rank + 1); empty or all-zero grades give 0.
double ndcg_at_k(std::span<const int> ranked_grades, int k);

// Pair-counting estimator, ties credited 0.5. Throws on single-class input.
double auroc(std::span<const double> scores, std::span<const int> labels);

// (P@K, R@K); recall is 0 when total_relevant is 0.
std::pair<double, double> precision_recall_at_k(std::span<const int> ranked_flags,
                                                int k, long total_relevant);

}  // namespace semrank
