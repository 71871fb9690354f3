// Copyright 2026 the semrank authors
// SPDX-License-Identifier: Apache-2.0

#include "semrank/json_io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "semrank/error.hpp"

namespace semrank {

namespace {
using nlohmann::json;

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot open for write: " + path);
  return out;
}

// Parsed line by line so a bad record reports its line number.
template <typename Fn>
void for_each_line(const std::string& path, Fn fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open: " + path);
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::Io, path + ":" + std::to_string(line_no) + ": " +
                                     e.what());
    }
    fn(j, line_no);
  }
}
}  // namespace

void save_corpus(const Corpus& corpus, const std::string& path) {
  auto out = open_out(path);
  for (const auto& doc : corpus.docs) {
    json features = json::object();
    for (std::size_t i = 0; i < corpus.feature_names.size(); ++i) {
      features[corpus.feature_names[i]] = doc.features[i];
    }
    const json j = {{"id", doc.doc_id},
                    {"attributes", doc.attributes},
                    {"embedding", doc.embedding},
                    {"features", features}};
    out << j.dump() << '\n';
  }
}

Corpus load_corpus(const std::string& path) {
  Corpus corpus;
  for_each_line(path, [&](const json& j, long line_no) {
    DocumentRecord doc;
    doc.doc_id = j.at("id").get<std::int64_t>();
    for (const auto& [k, v] : j.at("attributes").items()) {
      doc.attributes[k] = v.get<std::string>();
    }
    doc.embedding = j.at("embedding").get<std::vector<float>>();

    std::vector<std::string> names;
    for (const auto& [k, v] : j.at("features").items()) names.push_back(k);
    std::sort(names.begin(), names.end());
    if (corpus.feature_names.empty() && corpus.docs.empty()) {
      corpus.feature_names = names;
    } else if (names != corpus.feature_names) {
      throw Error(ErrorCode::Alignment,
                  path + ":" + std::to_string(line_no) +
                      ": feature names differ from the corpus schema");
    }
    for (const auto& name : corpus.feature_names) {
      doc.features.push_back(j.at("features").at(name).get<float>());
    }
    corpus.docs.push_back(std::move(doc));
  });
  corpus.validate();
  return corpus;
}

void save_queries(const std::vector<QuerySpec>& queries,
                  const std::string& path) {
  auto out = open_out(path);
  for (const auto& q : queries) {
    json j = {{"id", q.query_id},
              {"embedding", q.embedding},
              {"filters", q.filters},
              {"k", q.k}};
    if (!q.text.empty()) j["text"] = q.text;
    out << j.dump() << '\n';
  }
}

std::vector<QuerySpec> load_queries(const std::string& path) {
  std::vector<QuerySpec> queries;
  for_each_line(path, [&](const json& j, long) {
    QuerySpec q;
    q.query_id = j.at("id").get<std::int64_t>();
    q.embedding = j.at("embedding").get<std::vector<float>>();
    if (j.contains("filters")) {
      for (const auto& [k, v] : j.at("filters").items()) {
        q.filters[k] = v.get<std::vector<std::string>>();
      }
    }
    q.k = j.at("k").get<int>();
    if (j.contains("text")) q.text = j.at("text").get<std::string>();
    queries.push_back(std::move(q));
  });
  return queries;
}

void save_logs(const std::vector<LogRow>& rows, const std::string& path) {
  auto out = open_out(path);
  for (const auto& row : rows) {
    const json j = {{"query_id", row.query_id},
                    {"doc_id", row.doc_id},
                    {"position", row.position},
                    {"grade", row.grade},
                    {"actions", row.actions}};
    out << j.dump() << '\n';
  }
}

std::vector<LogRow> load_logs(const std::string& path) {
  std::vector<LogRow> rows;
  for_each_line(path, [&](const json& j, long) {
    LogRow row;
    row.query_id = j.at("query_id").get<std::int64_t>();
    row.doc_id = j.at("doc_id").get<std::int64_t>();
    row.position = j.at("position").get<int>();
    row.grade = j.at("grade").get<int>();
    for (const auto& [k, v] : j.at("actions").items()) {
      row.actions[k] = v.get<int>();
    }
    rows.push_back(std::move(row));
  });
  return rows;
}

namespace {
json head_to_json(const CalibrationHead& head, const std::string& head_id,
                  const json& rank, const json& bucket) {
  json breakpoints = json::array();
  json values = json::array();
  json counts = json::array();
  for (const auto& b : head.blocks) {
    breakpoints.push_back(json::array({b.lo, b.hi}));
    values.push_back(b.value);
    counts.push_back(b.count);
  }
  return {{"head_id", head_id}, {"breakpoints", breakpoints},
          {"values", values},   {"counts", counts},
          {"rank", rank},       {"bucket", bucket}};
}

CalibrationHead head_from_json(const json& j) {
  CalibrationHead head;
  const auto& bps = j.at("breakpoints");
  const auto& values = j.at("values");
  const auto& counts = j.at("counts");
  for (std::size_t i = 0; i < bps.size(); ++i) {
    head.blocks.push_back({bps[i][0].get<double>(), bps[i][1].get<double>(),
                           values[i].get<double>(), counts[i].get<long>()});
  }
  return head;
}
}  // namespace

void save_calibration(const CalibrationArtifact& artifact,
                      const std::string& path) {
  auto out = open_out(path);
  out << head_to_json(artifact.position.global, "global", "global", "none").dump()
      << '\n';
  for (int r = 1; r <= kMaxCalibratedRank; ++r) {
    const auto& head = artifact.position.rank_heads[static_cast<std::size_t>(r - 1)];
    if (head.has_value()) {
      out << head_to_json(*head, "rank_" + std::to_string(r), r, "none").dump()
          << '\n';
    }
  }
  for (const auto& [bucket, head] : artifact.buckets) {
    out << head_to_json(head, "bucket_" + bucket, "global", bucket).dump()
        << '\n';
  }
}

CalibrationArtifact load_calibration(const std::string& path) {
  CalibrationArtifact artifact;
  for_each_line(path, [&](const json& j, long line_no) {
    if (j.contains("meta")) return;  // provenance line, not a head record
    const auto head = head_from_json(j);
    const auto& bucket = j.at("bucket");
    if (bucket.is_string() && bucket.get<std::string>() != "none") {
      artifact.buckets[bucket.get<std::string>()] = head;
      return;
    }
    const auto& rank = j.at("rank");
    if (rank.is_number_integer()) {
      const int r = rank.get<int>();
      if (r < 1 || r > kMaxCalibratedRank) {
        throw Error(ErrorCode::Io, path + ":" + std::to_string(line_no) +
                                       ": rank out of range");
      }
      artifact.position.rank_heads[static_cast<std::size_t>(r - 1)] = head;
    } else {
      artifact.position.global = head;
    }
  });
  if (!artifact.position.global.fitted()) {
    throw Error(ErrorCode::Io, "calibration artifact lacks a global head");
  }
  return artifact;
}

std::string metrics_to_jsonl(const std::vector<MetricRecord>& records) {
  std::ostringstream out;
  for (const auto& r : records) {
    json j = {{"metric", r.metric}, {"k", r.k}, {"value", r.value}};
    if (!r.gain_convention.empty()) j["gain_convention"] = r.gain_convention;
    out << j.dump() << '\n';
  }
  return out.str();
}

void save_metrics(const std::vector<MetricRecord>& records,
                  const std::string& path) {
  auto out = open_out(path);
  out << metrics_to_jsonl(records);
}

}  // namespace semrank
