// Copyright 2026 the semrank authors
// SPDX-License-Identifier: Apache-2.0

#include "semrank/evaluation.hpp"

#include <algorithm>

#include "semrank/error.hpp"
#include "semrank/model.hpp"

namespace semrank {

std::vector<MetricRecord> evaluate_run(const std::vector<ScoredQueryRun>& runs,
                                       const std::vector<LogRow>& logs, int k) {
  if (k < 1) throw Error(ErrorCode::Parameter, "k must be >= 1");

  std::map<std::pair<std::int64_t, std::int64_t>, const LogRow*> log_by_pair;
  std::map<std::int64_t, long> relevant_by_query;
  for (const auto& row : logs) {
    log_by_pair[{row.query_id, row.doc_id}] = &row;
    if (row.grade > 2) ++relevant_by_query[row.query_id];
  }

  std::vector<std::string> offenders;
  double ndcg_sum = 0, p_sum = 0, r_sum = 0;
  long n_queries = 0;
  std::map<std::string, std::vector<double>> action_scores;
  std::map<std::string, std::vector<int>> action_labels;
  std::vector<double> relevance_preds;
  std::vector<int> click_outcomes;

  for (const auto& run : runs) {
    std::vector<int> grades;
    std::vector<int> flags;
    for (const auto& [doc_id, tasks] : run.items) {
      const auto it = log_by_pair.find({run.query_id, doc_id});
      if (it == log_by_pair.end()) {
        offenders.push_back(std::to_string(run.query_id) + ":" +
                            std::to_string(doc_id));
        continue;
      }
      const auto& row = *it->second;
      grades.push_back(row.grade);
      flags.push_back(row.grade > 2 ? 1 : 0);
      for (const auto& [action, label] : row.actions) {
        const auto tit = tasks.find(action);
        if (tit != tasks.end()) {
          action_scores[action].push_back(tit->second);
          action_labels[action].push_back(label);
        }
      }
      const auto rit = tasks.find(kRelevanceTask);
      if (rit != tasks.end()) {
        const auto cit = row.actions.find("click");
        if (cit != row.actions.end()) {
          relevance_preds.push_back(rit->second);
          click_outcomes.push_back(cit->second);
        }
      }
    }
    if (grades.empty()) continue;
    ndcg_sum += ndcg_at_k(grades, k);
    const auto [p, r] = precision_recall_at_k(
        flags, k, relevant_by_query[run.query_id]);
    p_sum += p;
    r_sum += r;
    ++n_queries;
  }

  if (!offenders.empty()) {
    std::string sample;
    for (std::size_t i = 0; i < std::min<std::size_t>(10, offenders.size());
         ++i) {
      sample += (i ? ", " : "") + offenders[i];
    }
    throw Error(ErrorCode::Reconciliation,
                "scored (query, doc) pairs missing from the logs: " + sample);
  }
  if (n_queries == 0) {
    throw Error(ErrorCode::Reconciliation, "no queries joined across files");
  }

  std::vector<MetricRecord> records;
  records.push_back({"ndcg", k, ndcg_sum / n_queries, "exp2"});
  records.push_back({"precision", k, p_sum / n_queries, ""});
  records.push_back({"recall", k, r_sum / n_queries, ""});
  for (const auto& [action, scores] : action_scores) {
    const auto& labels = action_labels[action];
    bool has_pos = false, has_neg = false;
    for (int l : labels) (l ? has_pos : has_neg) = true;
    if (has_pos && has_neg) {
      records.push_back({"auroc_" + action, 0, auroc(scores, labels), ""});
    }
  }
  if (!relevance_preds.empty()) {
    records.push_back({"oe_click_vs_relevance", 0,
                       observed_expected_ratio(relevance_preds, click_outcomes),
                       ""});
  }
  return records;
}

}  // namespace semrank
