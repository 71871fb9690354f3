// Copyright 2026 the semrank authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "semrank/calibration.hpp"
#include "semrank/ranking_math.hpp"
#include "semrank/retrieval.hpp"

namespace semrank {

// JSON-lines fixtures. All writers are deterministic: identical inputs
// produce byte-identical files.

void save_corpus(const Corpus& corpus, const std::string& path);
Corpus load_corpus(const std::string& path);

void save_queries(const std::vector<QuerySpec>& queries, const std::string& path);
std::vector<QuerySpec> load_queries(const std::string& path);

void save_logs(const std::vector<LogRow>& rows, const std::string& path);
std::vector<LogRow> load_logs(const std::string& path);

// Calibration artifact: one serialized head per record, global + per-rank
// + optional per-bucket heads in a single file.
struct CalibrationArtifact {
  PositionCalibrator position;
  std::map<std::string, CalibrationHead> buckets;
};

void save_calibration(const CalibrationArtifact& artifact, const std::string& path);
CalibrationArtifact load_calibration(const std::string& path);

// Metric report records: {metric, k, value, gain_convention}.
struct MetricRecord {
  std::string metric;
  int k = 0;
  double value = 0;
  std::string gain_convention;  // e.g. "exp2" for NDCG, empty otherwise
};

void save_metrics(const std::vector<MetricRecord>& records,
                  const std::string& path);

std::string metrics_to_jsonl(const std::vector<MetricRecord>& records);

}  // namespace semrank
