// Copyright 2026 the semrank authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "semrank/datagen.hpp"
#include "semrank/error.hpp"
#include "semrank/evaluation.hpp"
#include "semrank/rng.hpp"

using namespace semrank;

namespace {
double record_value(const std::vector<MetricRecord>& records,
                    const std::string& metric) {
  for (const auto& r : records) {
    if (r.metric == metric) return r.value;
  }
  FAIL("missing metric record: " << metric);
  return 0;
}
}  // namespace

TEST_CASE("evaluate_run: perfect ranking scores NDCG 1.0") {
  std::vector<LogRow> logs;
  std::vector<ScoredQueryRun> runs;
  for (int q = 0; q < 3; ++q) {
    ScoredQueryRun run;
    run.query_id = q;
    for (int d = 0; d < 8; ++d) {
      LogRow row;
      row.query_id = q;
      row.doc_id = q * 100 + d;
      row.position = d + 1;
      row.grade = 4 - d / 2;  // grades descend with rank
      row.actions = {{"click", d == 0 ? 1 : 0}};
      logs.push_back(row);
      run.items.emplace_back(
          row.doc_id,
          std::map<std::string, double>{{"relevance", 1.0 - d * 0.1}});
    }
    runs.push_back(std::move(run));
  }
  const auto records = evaluate_run(runs, logs, 10);
  CHECK(record_value(records, "ndcg") == doctest::Approx(1.0));
  // Relevant docs (grade > 2) all sit in the page: recall 1.
  CHECK(record_value(records, "recall") == doctest::Approx(1.0));

  // Deterministic across repeated calls.
  const auto again = evaluate_run(runs, logs, 10);
  REQUIRE(records.size() == again.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(records[i].metric == again[i].metric);
    CHECK(records[i].value == again[i].value);
  }
}

TEST_CASE("evaluate_run: separable task scores AUROC above 0.95") {
  // Scores track the planted action probability, so ranking by score
  // separates positives from negatives almost perfectly.
  Rng rng(52);
  std::vector<LogRow> logs;
  std::vector<ScoredQueryRun> runs;
  for (int q = 0; q < 40; ++q) {
    ScoredQueryRun run;
    run.query_id = q;
    for (int d = 0; d < 20; ++d) {
      const double planted = rng.uniform();
      LogRow row;
      row.query_id = q;
      row.doc_id = q * 1000 + d;
      row.position = d + 1;
      row.grade = 1 + static_cast<int>(planted * 3.999);
      row.actions = {{"click", planted > 0.5 ? 1 : 0}};
      logs.push_back(row);
      run.items.emplace_back(
          row.doc_id, std::map<std::string, double>{
                          {"relevance", planted},
                          {"click", planted + rng.normal(0, 0.02)}});
    }
    runs.push_back(std::move(run));
  }
  const auto records = evaluate_run(runs, logs, 10);
  CHECK(record_value(records, "auroc_click") >= 0.95);
  CHECK(record_value(records, "oe_click_vs_relevance") ==
        doctest::Approx(1.0).epsilon(0.15));
}

TEST_CASE("evaluate_run: unjoinable ids raise a reconciliation error") {
  std::vector<LogRow> logs;
  LogRow row;
  row.query_id = 1;
  row.doc_id = 1;
  row.position = 1;
  row.grade = 3;
  row.actions = {{"click", 1}};
  logs.push_back(row);

  std::vector<ScoredQueryRun> runs(1);
  runs[0].query_id = 1;
  runs[0].items.emplace_back(1, std::map<std::string, double>{{"relevance", 0.8}});
  runs[0].items.emplace_back(99, std::map<std::string, double>{{"relevance", 0.2}});

  try {
    evaluate_run(runs, logs, 5);
    FAIL("expected a reconciliation error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Reconciliation);
    CHECK(std::string(e.what()).find("1:99") != std::string::npos);
  }
}

TEST_CASE("evaluate_run on generated fixtures joins cleanly") {
  DataGenConfig dg;
  dg.seed = 77;
  dg.n_docs = 200;
  dg.n_queries = 10;
  dg.n_clusters = 5;
  const auto data = gen_data(dg);

  // Score every logged row with its grade's soft label: the run then ranks
  // exactly like the judged page.
  std::map<std::int64_t, ScoredQueryRun> runs_by_query;
  for (const auto& row : data.logs) {
    auto& run = runs_by_query[row.query_id];
    run.query_id = row.query_id;
    run.items.emplace_back(
        row.doc_id, std::map<std::string, double>{
                        {"relevance", soft_label_map(row.grade, SoftLabelMap{})}});
  }
  std::vector<ScoredQueryRun> runs;
  for (auto& [qid, run] : runs_by_query) runs.push_back(std::move(run));

  const auto records = evaluate_run(runs, data.logs, 10);
  CHECK(record_value(records, "ndcg") == doctest::Approx(1.0));
}
