// Copyright 2026 the semrank authors
// SPDX-License-Identifier: Apache-2.0

#include "semrank/ranking_math.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "semrank/error.hpp"
#include "semrank/rng.hpp"

namespace semrank {

double logistic(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double clamp_prob(double p) {
  return std::clamp(p, kProbClamp, 1.0 - kProbClamp);
}

SimilarityLossGrad infonce_loss(double sim_pos, std::span<const double> sims_neg,
                                double tau) {
  if (!(tau > 0)) {
    throw Error(ErrorCode::Parameter, "InfoNCE temperature must be > 0");
  }
  SimilarityLossGrad out;
  out.d_neg.assign(sims_neg.size(), 0.0);
  if (sims_neg.empty()) return out;  // denominator equals numerator

  const double zp = sim_pos / tau;
  double mx = zp;
  for (double s : sims_neg) mx = std::max(mx, s / tau);
  double sum = std::exp(zp - mx);
  for (double s : sims_neg) sum += std::exp(s / tau - mx);
  const double lse = mx + std::log(sum);
  out.loss = lse - zp;

  const double p_pos = std::exp(zp - lse);
  out.d_pos = (p_pos - 1.0) / tau;
  for (std::size_t i = 0; i < sims_neg.size(); ++i) {
    out.d_neg[i] = std::exp(sims_neg[i] / tau - lse) / tau;
  }
  return out;
}

SimilarityLossGrad pairwise_margin_loss(double sim_pos,
                                        std::span<const double> sims_neg,
                                        double margin) {
  if (!(margin > 0)) {
    throw Error(ErrorCode::Parameter, "margin must be > 0");
  }
  SimilarityLossGrad out;
  out.d_neg.assign(sims_neg.size(), 0.0);
  for (std::size_t i = 0; i < sims_neg.size(); ++i) {
    const double hinge = margin - sim_pos + sims_neg[i];
    if (hinge > 0) {  // strict: the kink itself contributes no gradient
      out.loss += hinge;
      out.d_pos -= 1.0;
      out.d_neg[i] += 1.0;
    }
  }
  return out;
}

double combined_retrieval_loss(double l_infonce, double l_pair, double lambda) {
  if (lambda < 0 || lambda > 1) {
    throw Error(ErrorCode::Parameter, "lambda must lie in [0, 1]");
  }
  return lambda * l_infonce + (1.0 - lambda) * l_pair;
}

double soft_label_map(int grade, const SoftLabelMap& map) {
  if (grade < 1 || grade > 4) {
    throw Error(ErrorCode::SpecViolation,
                "grade must be in {1..4}, got " + std::to_string(grade));
  }
  switch (map.mode) {
    case SoftLabelMap::Mode::Linear:
      return (grade - 1) / 3.0;
    case SoftLabelMap::Mode::Sigmoid:
      return logistic(map.steepness * (grade - map.center));
  }
  return 0;
}

std::vector<std::pair<std::int64_t, std::int64_t>> build_ranking_pairs(
    std::span<const ScoredDoc> ranked, int k, std::uint64_t seed) {
  if (ranked.size() < 2) {
    throw Error(ErrorCode::SpecViolation,
                "need at least two documents to form pairs");
  }
  const std::size_t n_top = std::min<std::size_t>(ranked.size(), k);
  std::vector<ScoredDoc> pool(ranked.begin(), ranked.begin() + n_top);

  Rng rng = Rng::substream(seed, "ranking_pairs");
  const std::size_t remainder = ranked.size() - n_top;
  for (std::size_t idx :
       rng.sample_indices(remainder, static_cast<std::size_t>(k))) {
    pool.push_back(ranked[n_top + idx]);
  }

  std::vector<std::pair<std::int64_t, std::int64_t>> pairs;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    for (std::size_t j = i + 1; j < pool.size(); ++j) {
      if (pool[i].oracle_score > pool[j].oracle_score) {
        pairs.emplace_back(pool[i].doc_id, pool[j].doc_id);
      } else if (pool[j].oracle_score > pool[i].oracle_score) {
        pairs.emplace_back(pool[j].doc_id, pool[i].doc_id);
      }
    }
  }
  return pairs;
}

namespace {
double binary_kl(double a, double b) {
  a = clamp_prob(a);
  b = clamp_prob(b);
  return a * std::log(a / b) + (1 - a) * std::log((1 - a) / (1 - b));
}
}  // namespace

KlLossGrad kl_distillation_loss(const TeacherSignal& teachers,
                                const std::map<std::string, double>& student,
                                KlDirection direction) {
  KlLossGrad out;
  for (const auto& task : teachers.tasks) {
    if (task.weight < 0 || !std::isfinite(task.weight)) {
      throw Error(ErrorCode::Parameter,
                  "negative or non-finite task weight: " + task.name);
    }
    const auto it = student.find(task.name);
    if (it == student.end()) {
      throw Error(ErrorCode::Alignment,
                  "student lacks probability for task: " + task.name);
    }
    const double t = clamp_prob(task.probability);
    const double s = clamp_prob(it->second);
    if (direction == KlDirection::Forward) {
      out.loss += task.weight * binary_kl(t, s);
      out.d_logit[task.name] = task.weight * (s - t);
    } else {
      out.loss += task.weight * binary_kl(s, t);
      const double d_ds = std::log(s / t) - std::log((1 - s) / (1 - t));
      out.d_logit[task.name] = task.weight * d_ds * s * (1 - s);
    }
  }
  return out;
}

MultitaskBceResult multitask_bce(const MultitaskBatch& batch,
                                 const std::map<std::string, double>& weights) {
  const std::size_t n_tasks = batch.tasks.size();
  const std::size_t n_cells = batch.n_rows * n_tasks;
  if (batch.preds.size() != n_cells || batch.labels.size() != n_cells ||
      batch.mask.size() != n_cells) {
    throw Error(ErrorCode::Alignment, "multitask batch shape mismatch");
  }

  MultitaskBceResult out;
  out.d_pred.assign(n_cells, 0.0);
  for (std::size_t t = 0; t < n_tasks; ++t) {
    const auto wit = weights.find(batch.tasks[t]);
    const double w = wit == weights.end() ? 1.0 : wit->second;
    if (w == 0.0) continue;

    long n_unmasked = 0;
    for (std::size_t r = 0; r < batch.n_rows; ++r) {
      if (batch.mask[r * n_tasks + t]) ++n_unmasked;
    }
    if (n_unmasked == 0) {
      out.degenerate_tasks.push_back(batch.tasks[t]);
      continue;
    }
    double task_loss = 0;
    for (std::size_t r = 0; r < batch.n_rows; ++r) {
      const std::size_t c = r * n_tasks + t;
      if (!batch.mask[c]) continue;
      const double p = clamp_prob(batch.preds[c]);
      const int y = batch.labels[c];
      task_loss += y ? -std::log(p) : -std::log(1 - p);
      out.d_pred[c] = w * (y ? -1.0 / p : 1.0 / (1 - p)) / n_unmasked;
    }
    out.loss += w * task_loss / n_unmasked;
  }
  return out;
}

MaskedActionBatch apply_loss_mask(const std::vector<LogRow>& rows) {
  MaskedActionBatch out;
  std::set<std::string> action_names;
  for (const auto& row : rows) {
    for (const auto& [name, value] : row.actions) action_names.insert(name);
  }
  out.actions.assign(action_names.begin(), action_names.end());

  // (query, action) -> does any row carry the action?
  std::map<std::pair<std::int64_t, std::string>, bool> any_positive;
  for (const auto& row : rows) {
    for (const auto& name : out.actions) {
      const auto it = row.actions.find(name);
      if (it != row.actions.end() && it->second != 0) {
        any_positive[{row.query_id, name}] = true;
      }
    }
  }

  for (const auto& row : rows) {
    MaskedActionBatch::Row r;
    r.query_id = row.query_id;
    r.doc_id = row.doc_id;
    for (const auto& name : out.actions) {
      const auto it = row.actions.find(name);
      const int label = it == row.actions.end() ? 0 : it->second;
      if (label != 0) {
        r.cells.push_back(ActionCell::Positive);
      } else if (any_positive.contains({row.query_id, name})) {
        r.cells.push_back(ActionCell::Negative);
      } else {
        r.cells.push_back(ActionCell::MaskedOut);
      }
    }
    out.rows.push_back(std::move(r));
  }
  return out;
}

double summarization_reward(bool correct, double len_norm, double quality,
                            const RewardParams& params) {
  if (len_norm < 0 || len_norm > 1 || quality < 0 || quality > 1) {
    throw Error(ErrorCode::Parameter,
                "length and quality terms must lie in [0, 1]");
  }
  if (params.lambda_len < 0 || params.lambda_qual < 0) {
    throw Error(ErrorCode::Parameter, "reward weights must be >= 0");
  }
  if (!correct) return 0.0;
  return 1.0 - params.lambda_len * len_norm + params.lambda_qual * quality;
}

namespace {
double dcg(std::span<const int> grades, int k) {
  double acc = 0;
  const int n = std::min<int>(k, static_cast<int>(grades.size()));
  for (int r = 0; r < n; ++r) {
    acc += (std::exp2(grades[static_cast<std::size_t>(r)]) - 1.0) /
           std::log2(r + 2.0);
  }
  return acc;
}
}  // namespace

double ndcg_at_k(std::span<const int> ranked_grades, int k) {
  if (k < 1) throw Error(ErrorCode::Parameter, "k must be >= 1");
  std::vector<int> ideal(ranked_grades.begin(), ranked_grades.end());
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  const double idcg = dcg(ideal, k);
  if (idcg == 0.0) return 0.0;
  return dcg(ranked_grades, k) / idcg;
}

double auroc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw Error(ErrorCode::Alignment, "scores and labels must align");
  }
  long n_pos = 0, n_neg = 0;
  for (int l : labels) (l ? n_pos : n_neg)++;
  if (n_pos == 0 || n_neg == 0) {
    throw Error(ErrorCode::UndefinedMetric,
                "AUROC needs at least one positive and one negative");
  }

  // Rank-sum with average ranks over ties == pair counting with 0.5 credit.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  double rank_sum_pos = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t t = i; t <= j; ++t) {
      if (labels[order[t]]) rank_sum_pos += avg_rank;
    }
    i = j + 1;
  }
  const double u = rank_sum_pos - static_cast<double>(n_pos) *
                                      (static_cast<double>(n_pos) + 1.0) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

std::pair<double, double> precision_recall_at_k(std::span<const int> ranked_flags,
                                                int k, long total_relevant) {
  if (k < 1) throw Error(ErrorCode::Parameter, "k must be >= 1");
  if (total_relevant < 0) {
    throw Error(ErrorCode::Parameter, "total_relevant must be >= 0");
  }
  long hits = 0;
  const int n = std::min<int>(k, static_cast<int>(ranked_flags.size()));
  for (int r = 0; r < n; ++r) hits += ranked_flags[static_cast<std::size_t>(r)] ? 1 : 0;
  const double p = static_cast<double>(hits) / k;
  const double rec = total_relevant == 0
                         ? 0.0
                         : static_cast<double>(hits) / static_cast<double>(total_relevant);
  return {p, rec};
}

}  // namespace semrank
