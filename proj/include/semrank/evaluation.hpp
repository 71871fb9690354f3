// Copyright 2026 the semrank authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "semrank/json_io.hpp"
#include "semrank/ranking_math.hpp"

namespace semrank {

// One scored query from a run: items in final rank order.
struct ScoredQueryRun {
  std::int64_t query_id = 0;
  std::vector<std::pair<std::int64_t, std::map<std::string, double>>> items;
};

// Joins run outputs with interaction logs and produces the metric table:
// NDCG@K / P@K / R@K averaged over queries, AUROC per action that has a
// matching task score, and O/E of predicted relevance against clicks.
// Scored (query, doc) pairs missing from the logs raise a reconciliation
// error listing the offenders.
std::vector<MetricRecord> evaluate_run(const std::vector<ScoredQueryRun>& runs,
                                       const std::vector<LogRow>& logs, int k);

}  // namespace semrank
