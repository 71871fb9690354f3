// Copyright 2026 the semrank authors
// SPDX-License-Identifier: Apache-2.0
//
// Operator entry points: data generation, offline scoring, retrieval,
// RAR training, calibration fitting, evaluation, benchmarking, load
// simulation, and serving. Single binary, one subcommand each.

#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "semrank/calibration.hpp"
#include "semrank/datagen.hpp"
#include "semrank/engine.hpp"
#include "semrank/error.hpp"
#include "semrank/evaluation.hpp"
#include "semrank/json_io.hpp"
#include "semrank/midtier.hpp"
#include "semrank/model.hpp"
#include "semrank/ranking_math.hpp"
#include "semrank/retrieval.hpp"
#include "semrank/rng.hpp"
#include "semrank/service.hpp"
#include "semrank/simulation.hpp"
#include "semrank/weights_io.hpp"

using json = nlohmann::json;
using namespace semrank;

namespace {

constexpr const char* kToolVersion = "semrank 1.0.0";

struct GlobalOptions {
  std::string config_path;
  std::uint64_t seed = 1;
  std::string mode = "ibpc";
  int depth = 250;
  int topk = 100;
  std::string out;
  json config = json::object();

  // Flags win over config-file values; this only fills unset flags.
  template <typename T>
  void config_default(const CLI::Option* opt, const char* key, T& value) const {
    if (opt->count() == 0 && config.contains(key)) {
      value = config.at(key).get<T>();
    }
  }

  std::string config_hash() const {
    json effective = config;
    effective["seed"] = seed;
    effective["mode"] = mode;
    effective["depth"] = depth;
    effective["topk"] = topk;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(effective.dump())));
    return buf;
  }

  json meta(const std::string& artifact_version = "") const {
    json m = {{"seed", seed},
              {"config_hash", config_hash()},
              {"tool", kToolVersion}};
    if (!artifact_version.empty()) m["artifact_version"] = artifact_version;
    return m;
  }
};

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot open for write: " + path);
  return out;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open: " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Io, path + ": " + e.what());
  }
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig cfg = ModelConfig::default_toy();
  if (j.contains("model")) {
    const auto& m = j.at("model");
    cfg.n_layers = m.value("n_layers", cfg.n_layers);
    cfg.d_model = m.value("d_model", cfg.d_model);
    cfg.n_heads = m.value("n_heads", cfg.n_heads);
    cfg.d_ff = m.value("d_ff", cfg.d_ff);
    cfg.vocab_size = m.value("vocab_size", cfg.vocab_size);
    cfg.max_seq = m.value("max_seq", cfg.max_seq);
  }
  return cfg;
}

// Loads weights, or initializes-and-saves them when the file is absent so
// fixtures bootstrap from one command.
ModelWeights load_or_init_weights(const std::string& path,
                                  const GlobalOptions& opts) {
  if (std::filesystem::exists(path)) return load_weights(path);
  std::cerr << "weights file absent; initializing toy model (seed "
            << opts.seed << ") at " << path << "\n";
  const auto weights = init_model(model_config_from_json(opts.config), opts.seed);
  save_weights(weights, path);
  return weights;
}

RARWeights load_rar(const std::string& path) {
  const auto j = read_json_file(path);
  RARWeights w;
  w.w0 = j.at("w0").get<double>();
  w.w = j.at("w").get<std::vector<double>>();
  w.lambda = j.value("lambda", 0.5);
  return w;
}

void save_rar(const RARWeights& w, const GlobalOptions& opts,
              const std::string& path) {
  json j = {{"w0", w.w0}, {"w", w.w}, {"lambda", w.lambda},
            {"meta", opts.meta()}};
  open_out(path) << j.dump(2) << '\n';
}

RARWeights rar_or_cosine(const std::string& path, std::size_t n_features) {
  if (!path.empty()) return load_rar(path);
  return RARWeights{1.0, std::vector<double>(n_features, 0.0), 0.5};
}

struct ScoredQuery {
  std::int64_t query_id = 0;
  std::vector<std::pair<std::int64_t, TaskScoreMap>> items;
};

std::vector<ScoredQuery> load_scored(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open: " + path);
  std::vector<ScoredQuery> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = json::parse(line);
    if (j.contains("meta")) continue;
    ScoredQuery sq;
    sq.query_id = j.at("query_id").get<std::int64_t>();
    for (const auto& item : j.at("items")) {
      TaskScoreMap tasks;
      for (const auto& [name, p] : item.at("tasks").items()) {
        tasks[name] = p.get<double>();
      }
      sq.items.emplace_back(item.at("doc_id").get<std::int64_t>(), tasks);
    }
    out.push_back(std::move(sq));
  }
  return out;
}

SimConfig sim_config_from_json(const json& j) {
  SimConfig cfg;
  const auto arrival = j.value("arrival", "poisson");
  cfg.arrival = arrival == "bursty" ? SimConfig::ArrivalKind::Bursty
                                    : SimConfig::ArrivalKind::Poisson;
  cfg.rate_per_ms = j.value("rate_per_ms", cfg.rate_per_ms);
  cfg.peak_rate_per_ms = j.value("peak_rate_per_ms", cfg.peak_rate_per_ms);
  cfg.off_rate_per_ms = j.value("off_rate_per_ms", cfg.off_rate_per_ms);
  cfg.peak_phase_ms = j.value("peak_phase_ms", cfg.peak_phase_ms);
  cfg.off_phase_ms = j.value("off_phase_ms", cfg.off_phase_ms);
  cfg.latency_sensitive_fraction =
      j.value("latency_sensitive_fraction", cfg.latency_sensitive_fraction);
  cfg.t_q_min = j.value("t_q_min", cfg.t_q_min);
  cfg.t_q_max = j.value("t_q_max", cfg.t_q_max);
  cfg.t_i_min = j.value("t_i_min", cfg.t_i_min);
  cfg.t_i_max = j.value("t_i_max", cfg.t_i_max);
  cfg.base_depth = j.value("base_depth", cfg.base_depth);
  cfg.alpha = j.value("alpha", cfg.alpha);
  cfg.beta = j.value("beta", cfg.beta);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.duration_ms = j.value("duration_ms", cfg.duration_ms);
  cfg.key_universe = j.value("key_universe", cfg.key_universe);
  cfg.zipf_s = j.value("zipf_s", cfg.zipf_s);
  cfg.cache_capacity = j.value("cache_capacity", cfg.cache_capacity);
  cfg.shadow_fraction = j.value("shadow_fraction", cfg.shadow_fraction);
  cfg.pid_target_ms = j.value("pid_target_ms", cfg.pid_target_ms);
  cfg.control_interval_ms = j.value("control_interval_ms", cfg.control_interval_ms);
  if (j.contains("pid")) {
    const auto& p = j.at("pid");
    cfg.pid.k_p = p.value("k_p", cfg.pid.k_p);
    cfg.pid.k_i = p.value("k_i", cfg.pid.k_i);
    cfg.pid.k_d = p.value("k_d", cfg.pid.k_d);
    cfg.pid.depth_min = p.value("depth_min", cfg.pid.depth_min);
    cfg.pid.depth_max = p.value("depth_max", cfg.pid.depth_max);
  }
  if (j.contains("retry")) {
    const auto& r = j.at("retry");
    cfg.retry.attempt_timeout_ms =
        r.value("attempt_timeout_ms", cfg.retry.attempt_timeout_ms);
    cfg.retry.total_budget_ms =
        r.value("total_budget_ms", cfg.retry.total_budget_ms);
    cfg.retry.max_attempts = r.value("max_attempts", cfg.retry.max_attempts);
  }
  cfg.insensitive_budget_factor =
      j.value("insensitive_budget_factor", cfg.insensitive_budget_factor);
  cfg.shaping_threshold = j.value("shaping_threshold", cfg.shaping_threshold);
  cfg.report_interval_ms = j.value("report_interval_ms", cfg.report_interval_ms);
  return cfg;
}

// ---------------------------------------------------------------------------
// Subcommand bodies
// ---------------------------------------------------------------------------

int cmd_gen_data(const GlobalOptions& opts, int n_docs, int n_queries,
                 int n_clusters, const std::string& out_dir) {
  DataGenConfig cfg;
  cfg.seed = opts.seed;
  cfg.n_docs = n_docs;
  cfg.n_queries = n_queries;
  cfg.n_clusters = n_clusters;
  const auto data = gen_data(cfg);

  std::filesystem::create_directories(out_dir);
  const auto dir = std::filesystem::path(out_dir);
  save_corpus(data.corpus, (dir / "corpus.jsonl").string());
  save_queries(data.queries, (dir / "queries.jsonl").string());
  save_logs(data.logs, (dir / "logs.jsonl").string());

  json manifest = {{"meta", opts.meta()},
                   {"files", {"corpus.jsonl", "queries.jsonl", "logs.jsonl"}},
                   {"n_docs", n_docs},
                   {"n_queries", n_queries},
                   {"n_clusters", n_clusters},
                   {"log_rows", data.logs.size()}};
  open_out((dir / "manifest.json").string()) << manifest.dump(2) << '\n';
  std::cout << "wrote " << data.corpus.docs.size() << " docs, "
            << data.queries.size() << " queries, " << data.logs.size()
            << " log rows to " << out_dir << "\n";
  return 0;
}

int cmd_retrieve(const GlobalOptions& opts, const std::string& corpus_path,
                 const std::string& queries_path, const std::string& rar_path) {
  const auto corpus = load_corpus(corpus_path);
  const auto queries = load_queries(queries_path);
  const auto rar = rar_or_cosine(rar_path, corpus.feature_names.size());

  auto out = open_out(opts.out);
  out << json{{"meta", opts.meta()}}.dump() << '\n';
  for (const auto& query : queries) {
    QuerySpec q = query;
    q.k = opts.topk;
    const auto top = exhaustive_topk(corpus, q, rar);
    json ranked = json::array();
    for (const auto& r : top) {
      ranked.push_back({{"doc_id", r.doc_id}, {"score", r.score}});
    }
    out << json{{"query_id", q.query_id}, {"ranked", ranked}}.dump() << '\n';
  }
  std::cout << "retrieved top-" << opts.topk << " for " << queries.size()
            << " queries -> " << opts.out << "\n";
  return 0;
}

int cmd_score(const GlobalOptions& opts, const std::string& weights_path,
              const std::string& corpus_path, const std::string& queries_path,
              const std::string& retrieved_path,
              const std::string& request_path,
              const std::string& calibration_path,
              const std::string& system_prompt) {
  const auto weights = load_or_init_weights(weights_path, opts);
  const auto mode = score_mode_from_name(opts.mode);

  // Raw wire-format request passthrough.
  if (!request_path.empty()) {
    std::ifstream in(request_path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open: " + request_path);
    const std::string body{std::istreambuf_iterator<char>(in),
                           std::istreambuf_iterator<char>()};
    auto request = parse_score_request_json(body, weights.config.d_model,
                                            weights.config.max_seq);
    request.mode = mode;
    const auto result = score_by_mode(weights, request);
    json response = json::parse(score_result_to_json(result));
    response["meta"] = opts.meta(weights.version);
    open_out(opts.out) << response.dump() << '\n';
    std::cout << "scored " << result.items.size() << " items -> " << opts.out
              << "\n";
    return 0;
  }

  // Pipeline mode: score retrieved candidates per query.
  const auto corpus = load_corpus(corpus_path);
  const auto queries = load_queries(queries_path);
  std::map<std::int64_t, const QuerySpec*> query_by_id;
  for (const auto& q : queries) query_by_id[q.query_id] = &q;

  std::map<std::int64_t, std::size_t> corpus_index;
  for (std::size_t i = 0; i < corpus.docs.size(); ++i) {
    corpus_index[corpus.docs[i].doc_id] = i;
  }

  CalibrationArtifact calibration;
  const bool calibrated = !calibration_path.empty();
  if (calibrated) calibration = load_calibration(calibration_path);

  std::ifstream in(retrieved_path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open: " + retrieved_path);

  auto out = open_out(opts.out);
  out << json{{"meta", opts.meta(weights.version)}}.dump() << '\n';

  std::string line;
  long queries_scored = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = json::parse(line);
    if (j.contains("meta")) continue;
    const auto query_id = j.at("query_id").get<std::int64_t>();
    const auto qit = query_by_id.find(query_id);
    if (qit == query_by_id.end()) {
      throw Error(ErrorCode::Reconciliation,
                  "retrieved query_id " + std::to_string(query_id) +
                      " is not in the query file");
    }

    ScoreRequest request;
    request.request_id = std::to_string(query_id);
    request.mode = mode;
    const auto query_context =
        render_query_context_text(qit->second->text, qit->second->filters);
    long taken = 0;
    for (const auto& r : j.at("ranked")) {
      if (taken >= opts.depth) break;
      ++taken;
      const auto doc_id = r.at("doc_id").get<std::int64_t>();
      const auto cit = corpus_index.find(doc_id);
      if (cit == corpus_index.end()) {
        throw Error(ErrorCode::Reconciliation,
                    "retrieved doc_id " + std::to_string(doc_id) +
                        " is not in the corpus");
      }
      const auto& doc = corpus.docs[cit->second];
      const auto parts = build_prompt(system_prompt, query_context,
                                      render_document_text(corpus, doc),
                                      weights.config.max_seq);
      if (request.prefix_tokens.empty()) {
        request.prefix_tokens = parts.prefix_tokens;
      }
      ScoreItem item;
      item.id = std::to_string(doc_id);
      if (mode == ScoreMode::Mixed) {
        item.n_emb_tokens = 1;
        item.embedding.assign(
            static_cast<std::size_t>(weights.config.d_model), 0.0f);
        const auto n = std::min(doc.embedding.size(), item.embedding.size());
        std::copy(doc.embedding.begin(), doc.embedding.begin() + n,
                  item.embedding.begin());
      } else {
        item.tokens = parts.item_tokens;
      }
      request.items.push_back(std::move(item));
    }
    if (request.items.empty()) continue;

    const auto result = score_by_mode(weights, request);
    json items = json::array();
    std::vector<std::int64_t> doc_ids;
    std::vector<std::pair<double, std::size_t>> order;
    for (std::size_t i = 0; i < result.items.size(); ++i) {
      json tasks = result.items[i].tasks;
      double final_score = result.items[i].tasks.at(kRelevanceTask);
      if (calibrated) {
        final_score = calibrate(calibration.position.global, final_score);
        tasks["calibrated_relevance"] = final_score;
      }
      order.push_back({final_score, i});
      doc_ids.push_back(std::stoll(result.items[i].item_id));
      items.push_back({{"doc_id", doc_ids.back()},
                       {"tasks", tasks},
                       {"final_score", final_score}});
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](const std::pair<double, std::size_t>& a,
                         const std::pair<double, std::size_t>& b) {
                       if (a.first != b.first) return a.first > b.first;
                       return doc_ids[a.second] < doc_ids[b.second];
                     });
    json sorted_items = json::array();
    for (const auto& [score, idx] : order) sorted_items.push_back(items[idx]);
    out << json{{"query_id", query_id},
                {"mode", score_mode_name(mode)},
                {"items", sorted_items},
                {"flops",
                 {{"attention", result.flops.attention_units},
                  {"linear", result.flops.linear_units}}}}
               .dump()
        << '\n';
    ++queries_scored;
  }
  std::cout << "scored " << queries_scored << " queries (" << opts.mode
            << ", depth " << opts.depth << ") -> " << opts.out << "\n";
  return 0;
}

int cmd_train_rar(const GlobalOptions& opts, int n_synthetic, double lambda,
                  double rate, int epochs) {
  const auto data = make_rar_training_set(opts.seed, n_synthetic);
  RARWeights init{0.0, std::vector<double>(data.front().features.size(), 0.0),
                  lambda};
  const double initial = rar_loss(init, data, lambda).loss;
  const auto trained = train_rar(init, data, lambda, rate, epochs);
  const double final_loss = rar_loss(trained, data, lambda).loss;

  save_rar(trained, opts, opts.out);
  std::cout << "L_RAR " << initial << " -> " << final_loss << " over "
            << epochs << " epochs; weights -> " << opts.out << "\n";
  if (!(final_loss <= initial)) {
    throw Error(ErrorCode::Divergence,
                "final loss above initial; lower the learning rate");
  }
  return 0;
}

int cmd_calibrate(const GlobalOptions& opts, const std::string& logs_path,
                  const std::string& scored_path, const std::string& action) {
  const auto logs = load_logs(logs_path);
  const auto scored = load_scored(scored_path);

  std::map<std::pair<std::int64_t, std::int64_t>, double> score_by_pair;
  for (const auto& sq : scored) {
    for (const auto& [doc_id, tasks] : sq.items) {
      const auto it = tasks.find(kRelevanceTask);
      if (it != tasks.end()) score_by_pair[{sq.query_id, doc_id}] = it->second;
    }
  }

  std::vector<PositionedPair> rows;
  std::vector<std::string> missing;
  for (const auto& row : logs) {
    const auto it = score_by_pair.find({row.query_id, row.doc_id});
    if (it == score_by_pair.end()) continue;  // unscored rows are fine
    const auto ait = row.actions.find(action);
    if (ait == row.actions.end()) {
      missing.push_back(std::to_string(row.query_id) + ":" +
                        std::to_string(row.doc_id));
      continue;
    }
    rows.push_back({row.position, it->second, ait->second});
  }
  if (!missing.empty()) {
    std::string sample;
    for (std::size_t i = 0; i < std::min<std::size_t>(5, missing.size()); ++i) {
      sample += (i ? ", " : "") + missing[i];
    }
    throw Error(ErrorCode::Reconciliation,
                "log rows lack action '" + action + "': " + sample);
  }
  if (rows.empty()) {
    throw Error(ErrorCode::Reconciliation,
                "no (score, outcome) pairs joined across files");
  }

  CalibrationArtifact artifact;
  artifact.position = fit_position_conditional(rows);
  {
    // Provenance line first, head records after (loaders skip the meta).
    auto out = open_out(opts.out);
    out << json{{"meta", opts.meta()}}.dump() << '\n';
  }
  {
    const auto tmp = opts.out + ".heads";
    save_calibration(artifact, tmp);
    std::ifstream heads(tmp, std::ios::binary);
    std::ofstream out(opts.out, std::ios::binary | std::ios::app);
    out << heads.rdbuf();
    heads.close();
    std::filesystem::remove(tmp);
  }

  std::vector<double> preds;
  std::vector<int> outcomes;
  for (const auto& r : rows) {
    preds.push_back(calibrate(artifact.position.global, r.raw_score));
    outcomes.push_back(r.outcome);
  }
  std::cout << "fit " << rows.size() << " pairs on action '" << action
            << "'; training-set O/E = "
            << observed_expected_ratio(preds, outcomes) << "; artifact -> "
            << opts.out << "\n";
  return 0;
}

int cmd_eval(const GlobalOptions& opts, const std::string& scored_path,
             const std::string& logs_path, int k) {
  const auto scored = load_scored(scored_path);
  const auto logs = load_logs(logs_path);

  std::vector<ScoredQueryRun> runs;
  for (const auto& sq : scored) {
    ScoredQueryRun run;
    run.query_id = sq.query_id;
    for (const auto& [doc_id, tasks] : sq.items) {
      run.items.emplace_back(doc_id,
                             std::map<std::string, double>(tasks.begin(),
                                                           tasks.end()));
    }
    runs.push_back(std::move(run));
  }
  const auto records = evaluate_run(runs, logs, k);

  for (const auto& rec : records) {
    std::cout << rec.metric;
    if (rec.k > 0) std::cout << "@" << rec.k;
    std::cout << " = " << rec.value << "\n";
  }
  if (!opts.out.empty()) {
    auto out = open_out(opts.out);
    out << json{{"meta", opts.meta()}}.dump() << '\n'
        << metrics_to_jsonl(records);
  }
  return 0;
}

int cmd_bench(const GlobalOptions& opts, const std::string& weights_path,
              int t_q, int t_i, int n_items, int runs);

int cmd_simulate(const GlobalOptions& opts, const std::string& sim_config_path,
                 bool no_cache, bool no_pid, bool no_retry, bool no_shaping) {
  SimConfig cfg;
  if (!sim_config_path.empty()) {
    cfg = sim_config_from_json(read_json_file(sim_config_path));
  }
  if (cfg.seed == 1) cfg.seed = opts.seed;
  SimToggles toggles;
  toggles.cache = !no_cache;
  toggles.pid = !no_pid;
  toggles.retry = !no_retry;
  toggles.shaping = !no_shaping;

  const auto metrics = run_simulation(cfg, toggles);
  const auto body = sim_metrics_to_jsonl(metrics);
  if (!opts.out.empty()) {
    auto out = open_out(opts.out);
    out << json{{"meta", opts.meta()}}.dump() << '\n' << body;
  }
  std::cout << body;
  return 0;
}

int cmd_serve(const GlobalOptions& opts, const std::string& corpus_path,
              const std::string& queries_path, const std::string& weights_path,
              const std::string& rar_path, const std::string& calibration_path,
              int port) {
  auto corpus = load_corpus(corpus_path);
  auto queries = load_queries(queries_path);
  auto weights = load_or_init_weights(weights_path, opts);
  auto rar = rar_or_cosine(rar_path, corpus.feature_names.size());

  CalibrationArtifact calibration;
  if (!calibration_path.empty()) {
    calibration = load_calibration(calibration_path);
  } else {
    // Identity-ish fallback: one pseudo-count per decile.
    std::vector<CalibrationPair> pairs;
    for (int i = 0; i <= 10; ++i) {
      pairs.push_back({i / 10.0, i >= 5 ? 1 : 0});
    }
    calibration.position.global = fit_isotonic(pairs);
  }

  ServiceConfig cfg;
  cfg.mode = score_mode_from_name(opts.mode);
  cfg.retrieval_k = opts.topk;
  cfg.pid.depth_max = opts.depth;

  SearchService service(cfg, std::move(corpus), std::move(queries),
                        std::move(weights), rar, calibration);
  HttpServer server(service);
  const int bound = server.start(port);
  std::cout << "serving on 127.0.0.1:" << bound
            << " (POST /search, POST /score, GET /healthz, GET /metrics)\n"
            << "press enter to stop\n";
  std::cin.get();
  server.stop();
  return 0;
}

int cmd_bench(const GlobalOptions& opts, const std::string& weights_path,
              int t_q, int t_i, int n_items, int runs) {
  const auto weights = load_or_init_weights(weights_path, opts);
  Rng rng = Rng::substream(opts.seed, "bench");

  ScoreRequest request;
  request.request_id = "bench";
  for (int i = 0; i < t_q; ++i) {
    request.prefix_tokens.push_back(static_cast<int>(rng.uniform_int(0, 255)));
  }
  for (int i = 0; i < n_items; ++i) {
    ScoreItem item;
    item.id = std::to_string(i);
    for (int j = 0; j < t_i; ++j) {
      item.tokens.push_back(static_cast<int>(rng.uniform_int(0, 255)));
    }
    request.items.push_back(std::move(item));
  }

  const auto baseline = score_naive(weights, request);

  struct Row {
    std::string mode;
    double median_ms;
    double items_per_s;
    double max_dev;
    double attention;
    double linear;
  };
  std::vector<Row> rows;
  std::vector<std::pair<double, double>> cost_samples;  // (units, ms)

  for (const auto mode : {ScoreMode::Naive, ScoreMode::Ibpc,
                          ScoreMode::MultiItem, ScoreMode::Mixed}) {
    ScoreRequest run_request = request;
    run_request.mode = mode;
    if (mode == ScoreMode::Mixed) {
      // Substitute-embedding construction so scores stay comparable.
      for (auto& item : run_request.items) {
        item.n_emb_tokens = static_cast<int>(item.tokens.size());
        item.embedding.resize(item.tokens.size() *
                              static_cast<std::size_t>(weights.config.d_model));
        for (std::size_t j = 0; j < item.tokens.size(); ++j) {
          const float* row = weights.tok_emb.data() +
                             static_cast<std::size_t>(item.tokens[j]) *
                                 weights.config.d_model;
          std::copy(row, row + weights.config.d_model,
                    item.embedding.begin() +
                        j * static_cast<std::size_t>(weights.config.d_model));
        }
        item.tokens.clear();
      }
    }

    std::vector<double> times;
    ScoreResult result;
    for (int r = 0; r < runs; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      result = score_by_mode(weights, run_request);
      times.push_back(std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count());
    }
    std::sort(times.begin(), times.end());
    const double median = times[times.size() / 2];

    double max_dev = 0;
    for (std::size_t i = 0; i < result.items.size(); ++i) {
      for (const auto& [task, p] : result.items[i].tasks) {
        max_dev = std::max(max_dev,
                           std::fabs(p - baseline.items[i].tasks.at(task)));
      }
    }
    rows.push_back({score_mode_name(mode), median,
                    n_items / (median / 1000.0), max_dev,
                    result.flops.attention_units, result.flops.linear_units});
    cost_samples.push_back(
        {result.flops.attention_units + result.flops.linear_units, median});
  }

  // Least-squares (alpha, beta) for the simulator's cost model.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& [x, y] : cost_samples) {
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double n = static_cast<double>(cost_samples.size());
  const double alpha = (n * sxy - sx * sy) / std::max(n * sxx - sx * sx, 1e-12);
  const double beta = std::max((sy - alpha * sx) / n, 0.0);

  std::printf("%-11s %12s %12s %14s %14s %12s\n", "mode", "median_ms",
              "items/s", "max_dev", "attention", "linear");
  for (const auto& r : rows) {
    std::printf("%-11s %12.3f %12.1f %14.3e %14.0f %12.0f\n", r.mode.c_str(),
                r.median_ms, r.items_per_s, r.max_dev, r.attention, r.linear);
  }
  const double speedup = rows[0].median_ms / rows[1].median_ms;
  std::printf("ibpc speedup over naive: %.2fx\n", speedup);
  std::printf("cost model fit: alpha=%.3e ms/unit, beta=%.3f ms\n", alpha, beta);

  if (!opts.out.empty()) {
    json jrows = json::array();
    for (const auto& r : rows) {
      jrows.push_back({{"mode", r.mode},
                       {"median_ms", r.median_ms},
                       {"items_per_s", r.items_per_s},
                       {"max_dev_vs_naive", r.max_dev},
                       {"attention_units", r.attention},
                       {"linear_units", r.linear}});
    }
    const json report = {{"meta", opts.meta(weights.version)},
                         {"t_q", t_q},
                         {"t_i", t_i},
                         {"n_items", n_items},
                         {"runs", runs},
                         {"modes", jrows},
                         {"ibpc_speedup", speedup},
                         {"cost_model", {{"alpha", alpha}, {"beta", beta}}}};
    open_out(opts.out) << report.dump(2) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{kToolVersion};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  GlobalOptions opts;
  auto* config_opt = app.add_option("--config", opts.config_path,
                                    "JSON config file; flags win over it")
                         ->envname("SEMRANK_CONFIG");
  auto* seed_opt = app.add_option("--seed", opts.seed, "root random seed")
                       ->envname("SEMRANK_SEED");
  auto* mode_opt =
      app.add_option("--mode", opts.mode,
                     "scoring mode: naive|ibpc|multi-item|mixed")
          ->envname("SEMRANK_MODE");
  auto* depth_opt = app.add_option("--depth", opts.depth, "scoring depth")
                        ->envname("SEMRANK_DEPTH");
  auto* topk_opt = app.add_option("--topk", opts.topk, "retrieval top-K")
                       ->envname("SEMRANK_TOPK");
  app.add_option("--out", opts.out, "output path")->envname("SEMRANK_OUT");
  bool parallel = false;
  app.add_flag("--parallel", parallel,
               "enable OpenMP kernels for offline subcommands (results are "
               "identical either way)")
      ->envname("SEMRANK_PARALLEL");

  // gen-data
  int n_docs = 1000, n_queries = 50, n_clusters = 10;
  std::string out_dir = "data";
  auto* gen = app.add_subcommand("gen-data", "generate synthetic fixtures");
  gen->add_option("--docs", n_docs, "corpus size");
  gen->add_option("--queries", n_queries, "query count");
  gen->add_option("--clusters", n_clusters, "planted cluster count");
  gen->add_option("--out-dir", out_dir, "output directory");

  // retrieve
  std::string corpus_path, queries_path, rar_path;
  auto* retrieve = app.add_subcommand("retrieve", "exhaustive RAR top-K");
  retrieve->add_option("--corpus", corpus_path, "corpus JSONL")->required();
  retrieve->add_option("--queries", queries_path, "query JSONL")->required();
  retrieve->add_option("--rar", rar_path, "RAR weights JSON (default cosine)");

  // score
  std::string weights_path = "weights.bin", retrieved_path, request_path,
              calibration_path;
  std::string system_prompt =
      "You score search results for relevance and engagement.\n";
  auto* score = app.add_subcommand("score", "prefill-only scoring");
  score->add_option("--weights", weights_path, "weight container path");
  score->add_option("--corpus", corpus_path, "corpus JSONL");
  score->add_option("--queries", queries_path, "query JSONL");
  score->add_option("--retrieved", retrieved_path, "retrieve output JSONL");
  score->add_option("--request", request_path, "raw wire-format request JSON");
  score->add_option("--calibration", calibration_path, "calibration artifact");
  score->add_option("--system-prompt", system_prompt, "shared system prefix");

  // train-rar
  int n_synthetic = 2000, epochs = 500;
  double lambda = 0.5, rate = 0.5;
  auto* train = app.add_subcommand("train-rar", "fit RAR weights");
  train->add_option("--synthetic", n_synthetic, "synthetic pair count");
  train->add_option("--lambda", lambda, "relevance/engagement mix");
  train->add_option("--rate", rate, "learning rate");
  train->add_option("--epochs", epochs, "full-batch epochs");

  // calibrate
  std::string logs_path, scored_path, action = "click";
  auto* calib = app.add_subcommand("calibrate", "fit isotonic calibration");
  calib->add_option("--logs", logs_path, "interaction log JSONL")->required();
  calib->add_option("--scored", scored_path, "score output JSONL")->required();
  calib->add_option("--action", action, "outcome action name");

  // eval
  int eval_k = 10;
  auto* eval = app.add_subcommand("eval", "metric table from a run");
  eval->add_option("--scored", scored_path, "score output JSONL")->required();
  eval->add_option("--logs", logs_path, "interaction log JSONL")->required();
  eval->add_option("--k", eval_k, "metric cutoff");

  // bench
  int bench_tq = 500, bench_ti = 50, bench_n = 100, bench_runs = 20;
  auto* bench = app.add_subcommand("bench", "compare scoring modes");
  bench->add_option("--weights", weights_path, "weight container path");
  bench->add_option("--tq", bench_tq, "prefix length");
  bench->add_option("--ti", bench_ti, "item length");
  bench->add_option("--n", bench_n, "items per request");
  bench->add_option("--runs", bench_runs, "timing repetitions");

  // simulate
  std::string sim_config_path;
  bool no_cache = false, no_pid = false, no_retry = false, no_shaping = false;
  auto* sim = app.add_subcommand("simulate", "deterministic load simulator");
  sim->add_option("--sim-config", sim_config_path, "SimConfig JSON file");
  sim->add_flag("--no-cache", no_cache, "disable the score cache");
  sim->add_flag("--no-pid", no_pid, "disable depth control");
  sim->add_flag("--no-retry", no_retry, "disable the retry budget");
  sim->add_flag("--no-shaping", no_shaping, "disable traffic shaping");

  // serve
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "run the HTTP search service");
  serve->add_option("--corpus", corpus_path, "corpus JSONL")->required();
  serve->add_option("--queries", queries_path, "query JSONL")->required();
  serve->add_option("--weights", weights_path, "weight container path");
  serve->add_option("--rar", rar_path, "RAR weights JSON");
  serve->add_option("--calibration", calibration_path, "calibration artifact");
  serve->add_option("--port", port, "listen port (0 = ephemeral)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (!opts.config_path.empty()) {
      opts.config = read_json_file(opts.config_path);
      opts.config_default(seed_opt, "seed", opts.seed);
      opts.config_default(mode_opt, "mode", opts.mode);
      opts.config_default(depth_opt, "depth", opts.depth);
      opts.config_default(topk_opt, "topk", opts.topk);
    }
    (void)config_opt;

    // Offline subcommands run single-threaded unless asked otherwise; the
    // server always uses the parallel kernels.
    kernels::set_default_exec(parallel || serve->parsed()
                                  ? kernels::Exec::Parallel
                                  : kernels::Exec::Serial);

    if (gen->parsed()) {
      return cmd_gen_data(opts, n_docs, n_queries, n_clusters, out_dir);
    }
    if (retrieve->parsed()) {
      if (opts.out.empty()) {
        throw Error(ErrorCode::Parameter, "retrieve requires --out");
      }
      return cmd_retrieve(opts, corpus_path, queries_path, rar_path);
    }
    if (score->parsed()) {
      if (opts.out.empty()) {
        throw Error(ErrorCode::Parameter, "score requires --out");
      }
      return cmd_score(opts, weights_path, corpus_path, queries_path,
                       retrieved_path, request_path, calibration_path,
                       system_prompt);
    }
    if (train->parsed()) {
      if (opts.out.empty()) {
        throw Error(ErrorCode::Parameter, "train-rar requires --out");
      }
      return cmd_train_rar(opts, n_synthetic, lambda, rate, epochs);
    }
    if (calib->parsed()) {
      if (opts.out.empty()) {
        throw Error(ErrorCode::Parameter, "calibrate requires --out");
      }
      return cmd_calibrate(opts, logs_path, scored_path, action);
    }
    if (eval->parsed()) {
      return cmd_eval(opts, scored_path, logs_path, eval_k);
    }
    if (bench->parsed()) {
      return cmd_bench(opts, weights_path, bench_tq, bench_ti, bench_n,
                       bench_runs);
    }
    if (sim->parsed()) {
      return cmd_simulate(opts, sim_config_path, no_cache, no_pid, no_retry,
                          no_shaping);
    }
    if (serve->parsed()) {
      return cmd_serve(opts, corpus_path, queries_path, weights_path, rar_path,
                       calibration_path, port);
    }
  } catch (const Error& e) {
    std::cerr << json{{"error", {{"code", error_code_name(e.code())},
                                 {"message", e.what()}}}}
                     .dump()
              << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", {{"code", "internal"}, {"message", e.what()}}}}
                     .dump()
              << "\n";
    return 1;
  }
  return 0;
}
