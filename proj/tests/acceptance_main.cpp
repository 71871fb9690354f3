// Copyright 2026 the semrank authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: every criterion runs at its pinned tolerance and
// prints one PASS/FAIL line. The process exits nonzero if any fail.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <list>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "semrank/calibration.hpp"
#include "semrank/datagen.hpp"
#include "semrank/engine.hpp"
#include "semrank/midtier.hpp"
#include "semrank/model.hpp"
#include "semrank/ranking_math.hpp"
#include "semrank/retrieval.hpp"
#include "semrank/rng.hpp"
#include "semrank/service.hpp"
#include "semrank/simulation.hpp"

using namespace semrank;

namespace {

int g_failures = 0;

void criterion(int n, const char* name, bool ok, const std::string& detail) {
  std::printf("%s criterion %2d: %s (%s)\n", ok ? "PASS" : "FAIL", n, name,
              detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof(buf), format, args);
  va_end(args);
  return buf;
}

double central_diff(const std::function<double(double)>& f, double x) {
  const double h = 1e-4;
  return (f(x + h) - f(x - h)) / (2 * h);
}

double rel_err(double got, double want) {
  return std::fabs(got - want) /
         std::max({std::fabs(got), std::fabs(want), 1e-8});
}

ScoreRequest seeded_request(Rng& rng, int t_q, int t_i, int n_items) {
  ScoreRequest req;
  for (int i = 0; i < t_q; ++i) {
    req.prefix_tokens.push_back(static_cast<int>(rng.uniform_int(0, 255)));
  }
  for (int i = 0; i < n_items; ++i) {
    ScoreItem item;
    item.id = std::to_string(i);
    for (int j = 0; j < t_i; ++j) {
      item.tokens.push_back(static_cast<int>(rng.uniform_int(0, 255)));
    }
    req.items.push_back(std::move(item));
  }
  return req;
}

double max_dev(const ScoreResult& a, const ScoreResult& b) {
  double dev = 0;
  for (std::size_t i = 0; i < a.items.size(); ++i) {
    for (const auto& [task, p] : a.items[i].tasks) {
      dev = std::max(dev, std::fabs(p - b.items[i].tasks.at(task)));
    }
  }
  return dev;
}

// --------------------------------------------------------------------------

void criterion_1_mode_equivalence(const ModelWeights& weights) {
  Rng rng(101);
  double dev_ibpc = 0, dev_multi = 0;
  for (int r = 0; r < 20; ++r) {
    const auto req = seeded_request(rng, 50, 150, 50);
    const auto naive = score_naive(weights, req);
    dev_ibpc = std::max(dev_ibpc, max_dev(naive, score_ibpc(weights, req)));
    dev_multi =
        std::max(dev_multi, max_dev(naive, score_multi_item_chunked(weights, req)));
  }
  criterion(1, "mode equivalence on 20 seeded requests",
            dev_ibpc <= 1e-5 && dev_multi <= 1e-5,
            fmt("max |ibpc-naive| = %.2e, max |multi-naive| = %.2e, tol 1e-5",
                dev_ibpc, dev_multi));
}

void criterion_2_flop_formulas() {
  const auto n1 = flops(ScoreMode::Naive, 50, 150, 50);
  const auto a1 = flops(ScoreMode::Ibpc, 50, 150, 50);
  const auto n2 = flops(ScoreMode::Naive, 500, 50, 100);
  const auto a2 = flops(ScoreMode::Ibpc, 500, 50, 100);
  const bool ok = n1.attention_units == 2'000'000 &&
                  a1.attention_units == 1'877'500 &&
                  n2.attention_units == 30'250'000 &&
                  a2.attention_units == 5'500'000;
  criterion(2, "FLOP formulas match hand arithmetic exactly", ok,
            fmt("(50,150,50): %.0f vs %.0f; (500,50,100): %.0f vs %.0f",
                n1.attention_units, a1.attention_units, n2.attention_units,
                a2.attention_units));
}

void criterion_3_wall_clock(const ModelWeights& weights) {
  Rng rng(103);
  const auto req = seeded_request(rng, 500, 50, 100);
  auto median_ms = [&](ScoreMode mode) {
    ScoreRequest r = req;
    r.mode = mode;
    std::vector<double> times;
    for (int run = 0; run < 20; ++run) {
      const auto t0 = std::chrono::steady_clock::now();
      score_by_mode(weights, r);
      times.push_back(std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count());
    }
    std::sort(times.begin(), times.end());
    return times[times.size() / 2];
  };
  const double naive_ms = median_ms(ScoreMode::Naive);
  const double ibpc_ms = median_ms(ScoreMode::Ibpc);
  const double speedup = naive_ms / ibpc_ms;
  criterion(3, "IBPC wall-clock amortization at (500,50,100)", speedup >= 1.5,
            fmt("median naive %.0f ms, ibpc %.0f ms, speedup %.2fx >= 1.5x",
                naive_ms, ibpc_ms, speedup));
}

void criterion_4_mixed_equivalence(const ModelWeights& weights) {
  Rng rng(104);
  auto req = seeded_request(rng, 40, 12, 10);
  ScoreRequest mixed = req;
  mixed.mode = ScoreMode::Mixed;
  const int d = weights.config.d_model;
  for (auto& item : mixed.items) {
    item.n_emb_tokens = static_cast<int>(item.tokens.size());
    item.embedding.resize(item.tokens.size() * static_cast<std::size_t>(d));
    for (std::size_t j = 0; j < item.tokens.size(); ++j) {
      const float* row =
          weights.tok_emb.data() + static_cast<std::size_t>(item.tokens[j]) * d;
      std::copy(row, row + d, item.embedding.begin() + j * d);
    }
    item.tokens.clear();
  }
  const double dev = max_dev(score_ibpc(weights, req), score_mixed(weights, mixed));

  ScoreRequest one_tok = mixed;
  for (auto& item : one_tok.items) {
    item.n_emb_tokens = 1;
    item.embedding.resize(static_cast<std::size_t>(d));
  }
  const auto r = score_mixed(weights, one_tok);
  criterion(4, "mixed-input equivalence and 1-token KV growth",
            dev <= 1e-6 && r.kv_incremental_per_item == 1.0,
            fmt("substitute-embedding dev %.2e <= 1e-6, per-item KV %.1f",
                dev, r.kv_incremental_per_item));
}

void criterion_5_gradient_checks() {
  Rng rng(105);
  double worst = 0;
  const char* worst_name = "none";
  auto track = [&](const char* name, double err) {
    if (err > worst) {
      worst = err;
      worst_name = name;
    }
  };

  for (int t = 0; t < 100; ++t) {
    // InfoNCE.
    {
      const double tau = 0.2 + rng.uniform();
      const double sp = rng.normal(0, 1);
      std::vector<double> sn{rng.normal(0, 1), rng.normal(0, 1),
                             rng.normal(0, 1)};
      const auto g = infonce_loss(sp, sn, tau);
      track("infonce", rel_err(g.d_pos, central_diff([&](double x) {
              return infonce_loss(x, sn, tau).loss;
            }, sp)));
      for (std::size_t i = 0; i < sn.size(); ++i) {
        track("infonce", rel_err(g.d_neg[i], central_diff([&](double x) {
                auto m = sn;
                m[i] = x;
                return infonce_loss(sp, m, tau).loss;
              }, sn[i])));
      }
    }
    // Pairwise margin (sampled clear of the kink).
    {
      const double m = 0.2 + rng.uniform();
      double sp = rng.normal(0, 1);
      std::vector<double> sn{rng.normal(0, 1), rng.normal(0, 1)};
      bool near = false;
      for (double s : sn) near |= std::fabs(m - sp + s) < 1e-3;
      if (!near) {
        const auto g = pairwise_margin_loss(sp, sn, m);
        track("pairwise", rel_err(g.d_pos, central_diff([&](double x) {
                return pairwise_margin_loss(x, sn, m).loss;
              }, sp)));
      }
    }
    // Multitask BCE.
    {
      MultitaskBatch batch;
      batch.tasks = {"x", "y"};
      batch.n_rows = 2;
      for (int c = 0; c < 4; ++c) {
        batch.preds.push_back(0.05 + 0.9 * rng.uniform());
        batch.labels.push_back(rng.bernoulli(0.5) ? 1 : 0);
        batch.mask.push_back(1);
      }
      const std::map<std::string, double> w{{"x", 0.6}, {"y", 1.4}};
      const auto g = multitask_bce(batch, w);
      for (int c = 0; c < 4; ++c) {
        track("bce", rel_err(g.d_pred[static_cast<std::size_t>(c)],
                             central_diff([&](double x) {
                               auto m = batch;
                               m.preds[static_cast<std::size_t>(c)] = x;
                               return multitask_bce(m, w).loss;
                             }, batch.preds[static_cast<std::size_t>(c)])));
      }
    }
    // KL distillation.
    {
      TeacherSignal teachers;
      teachers.tasks = {{"a", 0.1 + 0.8 * rng.uniform(), 0.5 + rng.uniform()}};
      const double z = rng.normal(0, 1.5);
      const auto dir = t % 2 ? KlDirection::Forward : KlDirection::Reverse;
      const std::map<std::string, double> student{{"a", logistic(z)}};
      const auto g = kl_distillation_loss(teachers, student, dir);
      track("kl", rel_err(g.d_logit.at("a"), central_diff([&](double x) {
              const std::map<std::string, double> s{{"a", logistic(x)}};
              return kl_distillation_loss(teachers, s, dir).loss;
            }, z)));
    }
  }
  // RAR objective.
  {
    const auto data = make_rar_training_set(105, 300);
    for (int t = 0; t < 100; ++t) {
      RARWeights w{rng.normal(0, 1),
                   {rng.normal(0, 1), rng.normal(0, 1), rng.normal(0, 1)},
                   0.5};
      const double lambda = rng.uniform();
      const auto g = rar_loss(w, data, lambda);
      track("rar", rel_err(g.d_w0, central_diff([&](double x) {
              auto m = w;
              m.w0 = x;
              return rar_loss(m, data, lambda).loss;
            }, w.w0)));
      for (std::size_t i = 0; i < w.w.size(); ++i) {
        track("rar", rel_err(g.d_w[i], central_diff([&](double x) {
                auto m = w;
                m.w[i] = x;
                return rar_loss(m, data, lambda).loss;
              }, w.w[i])));
      }
    }
  }
  criterion(5, "analytic gradients vs central differences", worst <= 1e-4,
            fmt("worst relative error %.2e (%s), tol 1e-4", worst, worst_name));
}

void criterion_6_loss_value_oracles() {
  Rng rng(106);
  double worst = 0;
  for (int t = 0; t < 100; ++t) {
    const double tau = 0.1 + 2 * rng.uniform();
    const long double sp = rng.normal(0, 2);
    std::vector<double> sn;
    std::vector<long double> snl;
    const int n = static_cast<int>(rng.uniform_int(1, 8));
    for (int i = 0; i < n; ++i) {
      sn.push_back(rng.normal(0, 2));
      snl.push_back(sn.back());
    }
    long double mx = sp / tau;
    for (auto s : snl) mx = std::max(mx, s / static_cast<long double>(tau));
    long double sum = std::exp(sp / tau - mx);
    for (auto s : snl) sum += std::exp(s / tau - mx);
    const long double want = mx + std::log(sum) - sp / tau;
    worst = std::max(worst,
                     std::fabs(infonce_loss(static_cast<double>(sp), sn, tau).loss -
                               static_cast<double>(want)));
  }
  const double ln2_case =
      infonce_loss(0.5, std::vector<double>{0.5}, 1.0).loss;
  const double ln2_err = std::fabs(ln2_case - std::log(2.0));
  criterion(6, "InfoNCE value oracles", worst <= 1e-10 && ln2_err <= 1e-9,
            fmt("max |loss - lse oracle| = %.2e <= 1e-10, ln2 err = %.2e",
                worst, ln2_err));
}

void criterion_7_retrieval_exactness() {
  Rng rng(107);
  static const std::vector<std::string> kRegions = {"na", "emea", "apac"};
  bool all_exact = true;
  long checked = 0;
  for (int corpus_i = 0; corpus_i < 10; ++corpus_i) {
    Corpus corpus;
    corpus.feature_names = {"ctr", "prox"};
    for (int i = 0; i < 10'000; ++i) {
      DocumentRecord doc;
      doc.doc_id = i;
      doc.embedding.resize(16);
      double norm = 0;
      for (auto& x : doc.embedding) {
        x = static_cast<float>(rng.normal(0, 1));
        norm += double(x) * x;
      }
      const auto inv = static_cast<float>(1.0 / std::sqrt(norm));
      for (auto& x : doc.embedding) x *= inv;
      doc.attributes["region"] =
          kRegions[static_cast<std::size_t>(rng.uniform_int(0, 2))];
      doc.attributes["level"] = rng.bernoulli(0.5) ? "junior" : "senior";
      doc.features = {static_cast<float>(rng.uniform()),
                      static_cast<float>(rng.uniform())};
      corpus.docs.push_back(std::move(doc));
    }
    QuerySpec q;
    q.embedding = corpus.docs[0].embedding;
    q.k = static_cast<int>(rng.uniform_int(10, 200));
    if (rng.bernoulli(0.7)) {
      q.filters["region"] = {kRegions[static_cast<std::size_t>(
          rng.uniform_int(0, 2))]};
    }
    if (rng.bernoulli(0.5)) q.filters["level"] = {"junior"};
    RARWeights w{1.0, {0.3, -0.2}, 0.5};

    std::vector<RankedDoc> oracle;
    for (std::size_t i : filter_candidates(corpus, q.filters)) {
      oracle.push_back(
          {corpus.docs[i].doc_id, rar_score(q.embedding, corpus.docs[i], w)});
    }
    std::sort(oracle.begin(), oracle.end(),
              [](const RankedDoc& a, const RankedDoc& b) {
                if (a.score != b.score) return a.score > b.score;
                return a.doc_id < b.doc_id;
              });
    if (oracle.size() > static_cast<std::size_t>(q.k)) {
      oracle.resize(static_cast<std::size_t>(q.k));
    }

    for (const auto exec : {kernels::Exec::Serial, kernels::Exec::Parallel}) {
      const auto got = exhaustive_topk(corpus, q, w, exec);
      if (got.size() != oracle.size()) {
        all_exact = false;
        continue;
      }
      for (std::size_t i = 0; i < got.size(); ++i) {
        if (got[i].doc_id != oracle[i].doc_id ||
            got[i].score != oracle[i].score) {
          all_exact = false;
        }
      }
      checked += static_cast<long>(got.size());
    }
  }
  criterion(7, "exhaustive top-K equals the full-sort oracle", all_exact,
            fmt("10 corpora x 10k docs, serial+sharded, %ld rows exact",
                checked));
}

void criterion_8_rar_training() {
  const auto data = make_rar_training_set(108, 2000);
  RARWeights init{0.0, {0.0, 0.0, 0.0}, 0.5};
  const double initial = rar_loss(init, data, 0.5).loss;
  const auto trained = train_rar(init, data, 0.5, 0.5, 500);
  const double final_loss = rar_loss(trained, data, 0.5).loss;

  long correct = 0;
  std::vector<double> rar_scores, cos_scores;
  std::vector<int> labels;
  for (const auto& pair : data) {
    double s = trained.w0 * pair.cos;
    for (std::size_t i = 0; i < trained.w.size(); ++i) {
      s += trained.w[i] * pair.features[i];
    }
    correct += (logistic(s) > 0.5 ? 1 : 0) == pair.relevance_label;
    rar_scores.push_back(s);
    cos_scores.push_back(pair.cos);
    labels.push_back(pair.engagement_label);
  }
  const double accuracy =
      static_cast<double>(correct) / static_cast<double>(data.size());
  const double rar_auc = auroc(rar_scores, labels);
  const double cos_auc = auroc(cos_scores, labels);
  criterion(8, "RAR training on the separable synthetic set",
            final_loss < initial && accuracy >= 0.95 && rar_auc >= cos_auc,
            fmt("loss %.4f -> %.4f, accuracy %.3f >= 0.95, AUROC rar %.3f >= "
                "cosine %.3f",
                initial, final_loss, accuracy, rar_auc, cos_auc));
}

void criterion_9_loss_masking() {
  // Hand-enumerated 3-query fixture.
  std::vector<LogRow> rows;
  auto add = [&](std::int64_t q, std::int64_t d, int click, int save) {
    LogRow row;
    row.query_id = q;
    row.doc_id = d;
    row.position = 1;
    row.actions = {{"click", click}, {"save", save}};
    rows.push_back(row);
  };
  add(1, 1, 1, 0);  // A
  add(1, 2, 0, 0);  // B
  add(1, 3, 0, 0);  // C
  add(2, 4, 0, 1);  // D
  add(2, 5, 0, 0);  // E
  add(3, 6, 1, 0);  // F
  add(3, 7, 1, 0);  // G
  const auto masked = apply_loss_mask(rows);

  const std::vector<double> preds{0.7, 0.4, 0.2, 0.6, 0.3, 0.9, 0.5};
  MultitaskBatch batch;
  batch.tasks = masked.actions;  // {"click", "save"}
  batch.n_rows = masked.rows.size();
  for (std::size_t r = 0; r < masked.rows.size(); ++r) {
    for (std::size_t a = 0; a < masked.actions.size(); ++a) {
      const auto cell = masked.rows[r].cells[a];
      batch.preds.push_back(preds[r]);
      batch.labels.push_back(cell == ActionCell::Positive ? 1 : 0);
      batch.mask.push_back(cell == ActionCell::MaskedOut ? 0 : 1);
    }
  }
  const std::map<std::string, double> weights{{"click", 1.0}, {"save", 2.0}};
  const double got = multitask_bce(batch, weights).loss;
  // Click group: A+, B-, C- (query 1), F+, G+ (query 3); query 2 masked.
  // Save group: D+, E- (query 2); queries 1 and 3 masked.
  const double hand =
      1.0 * (-std::log(0.7) - std::log(1 - 0.4) - std::log(1 - 0.2) -
             std::log(0.9) - std::log(0.5)) /
          5.0 +
      2.0 * (-std::log(0.6) - std::log(1 - 0.3)) / 2.0;
  const double fixture_err = std::fabs(got - hand);

  // Property: no negative in a positive-free (query, action) group.
  Rng rng(109);
  bool property_ok = true;
  for (int t = 0; t < 50; ++t) {
    std::vector<LogRow> random_rows;
    for (int q = 0; q < 5; ++q) {
      const int n = static_cast<int>(rng.uniform_int(1, 5));
      for (int d = 0; d < n; ++d) {
        LogRow row;
        row.query_id = q;
        row.doc_id = q * 10 + d;
        row.position = d + 1;
        row.actions = {{"x", rng.bernoulli(0.1) ? 1 : 0},
                       {"y", rng.bernoulli(0.3) ? 1 : 0}};
        random_rows.push_back(row);
      }
    }
    const auto mb = apply_loss_mask(random_rows);
    for (std::size_t a = 0; a < mb.actions.size(); ++a) {
      std::set<std::int64_t> with_pos;
      for (const auto& row : mb.rows) {
        if (row.cells[a] == ActionCell::Positive) with_pos.insert(row.query_id);
      }
      for (const auto& row : mb.rows) {
        if (row.cells[a] == ActionCell::Negative &&
            !with_pos.contains(row.query_id)) {
          property_ok = false;
        }
      }
    }
  }

  // Rare-action probability: masked training vs plain pointwise training.
  DataGenConfig dg;
  dg.seed = 901;
  dg.n_docs = 400;
  dg.n_queries = 600;
  dg.n_clusters = 8;
  const auto logs = gen_data(dg).logs;
  const auto masked_logs = apply_loss_mask(logs);
  std::size_t apply_col = 0;
  for (std::size_t a = 0; a < masked_logs.actions.size(); ++a) {
    if (masked_logs.actions[a] == "apply") apply_col = a;
  }

  // One logistic unit over [1, soft(grade), exposure(position)].
  auto featurize = [&](const LogRow& row) {
    return std::array<double, 3>{
        1.0, soft_label_map(row.grade, SoftLabelMap{}),
        std::pow(0.9, row.position - 1)};
  };
  auto train = [&](bool use_mask) {
    std::array<double, 3> w{0, 0, 0};
    for (int epoch = 0; epoch < 300; ++epoch) {
      std::array<double, 3> grad{0, 0, 0};
      long n = 0;
      for (std::size_t r = 0; r < logs.size(); ++r) {
        if (use_mask &&
            masked_logs.rows[r].cells[apply_col] == ActionCell::MaskedOut) {
          continue;
        }
        const auto x = featurize(logs[r]);
        const int y = logs[r].actions.at("apply");
        double z = 0;
        for (int j = 0; j < 3; ++j) z += w[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(j)];
        const double p = logistic(z);
        for (int j = 0; j < 3; ++j) {
          grad[static_cast<std::size_t>(j)] += (p - y) * x[static_cast<std::size_t>(j)];
        }
        ++n;
      }
      for (int j = 0; j < 3; ++j) {
        w[static_cast<std::size_t>(j)] -= 2.0 * grad[static_cast<std::size_t>(j)] / std::max<long>(n, 1);
      }
    }
    double mean = 0;
    for (const auto& row : logs) {
      const auto x = featurize(row);
      double z = 0;
      for (int j = 0; j < 3; ++j) z += w[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(j)];
      mean += logistic(z);
    }
    return mean / static_cast<double>(logs.size());
  };
  const double masked_mean = train(true);
  const double unmasked_mean = train(false);

  criterion(9, "loss masking: fixture, property, rare-action lift",
            fixture_err <= 1e-12 && property_ok && masked_mean > unmasked_mean,
            fmt("fixture err %.1e, property %s, mean apply score %.4f (masked) "
                "> %.4f (unmasked)",
                fixture_err, property_ok ? "holds" : "VIOLATED", masked_mean,
                unmasked_mean));
}

void criterion_10_calibration() {
  Rng rng(110);

  // PAV vs exhaustive monotone oracle on <= 8-point inputs.
  double worst_fit = 0;
  for (int t = 0; t < 500; ++t) {
    std::vector<CalibrationPair> pairs;
    const int n = static_cast<int>(rng.uniform_int(1, 8));
    for (int i = 0; i < n; ++i) {
      pairs.push_back({rng.uniform_int(0, 5) / 5.0, rng.bernoulli(0.5) ? 1 : 0});
    }
    const auto head = fit_isotonic(pairs);

    // Oracle: enumerate contiguous-block partitions with monotone means.
    std::vector<CalibrationPair> sorted = pairs;
    std::sort(sorted.begin(), sorted.end(),
              [](const CalibrationPair& a, const CalibrationPair& b) {
                return a.raw_score < b.raw_score;
              });
    struct Pt {
      double score, sum;
      long count;
    };
    std::vector<Pt> pts;
    for (const auto& p : sorted) {
      if (!pts.empty() && pts.back().score == p.raw_score) {
        pts.back().sum += p.outcome;
        pts.back().count += 1;
      } else {
        pts.push_back({p.raw_score, static_cast<double>(p.outcome), 1});
      }
    }
    const std::size_t m = pts.size();
    std::vector<double> best;
    double best_sse = 1e300;
    for (unsigned mask = 0; mask < (1u << (m - 1)); ++mask) {
      std::vector<double> fit(m);
      double prev = -1e300;
      bool ok = true;
      std::size_t start = 0;
      for (std::size_t i = 0; i < m && ok; ++i) {
        if (!(i + 1 == m || ((mask >> i) & 1u))) continue;
        double sum = 0;
        long count = 0;
        for (std::size_t j = start; j <= i; ++j) {
          sum += pts[j].sum;
          count += pts[j].count;
        }
        const double mean = sum / count;
        if (mean < prev - 1e-12) ok = false;
        prev = mean;
        for (std::size_t j = start; j <= i; ++j) fit[j] = mean;
        start = i + 1;
      }
      if (!ok) continue;
      double sse = 0;
      for (std::size_t j = 0; j < m; ++j) {
        sse += pts[j].count * fit[j] * fit[j] - 2 * fit[j] * pts[j].sum;
      }
      if (sse < best_sse - 1e-12) {
        best_sse = sse;
        best = fit;
      }
    }
    for (std::size_t j = 0; j < m; ++j) {
      worst_fit =
          std::max(worst_fit, std::fabs(calibrate(head, pts[j].score) - best[j]));
    }
  }

  // Training-set O/E.
  std::vector<CalibrationPair> train_pairs;
  for (int i = 0; i < 2000; ++i) {
    const double s = rng.uniform();
    train_pairs.push_back({s, rng.bernoulli(0.15 + 0.7 * s) ? 1 : 0});
  }
  const auto head = fit_isotonic(train_pairs);
  std::vector<double> preds;
  std::vector<int> outcomes;
  for (const auto& p : train_pairs) {
    preds.push_back(calibrate(head, p.raw_score));
    outcomes.push_back(p.outcome);
  }
  const double oe = observed_expected_ratio(preds, outcomes);

  // Planted per-rank decay recovery.
  std::vector<PositionedPair> rows;
  const double base = 0.75, decay = 0.85;
  for (int r = 1; r <= 25; ++r) {
    const double rate = base * std::pow(decay, r - 1);
    for (int i = 0; i < 3000; ++i) {
      rows.push_back({r, 0.5, rng.bernoulli(rate) ? 1 : 0});
    }
  }
  const auto position = fit_position_conditional(rows);
  double worst_rank_err = 0;
  for (int r = 1; r <= 25; ++r) {
    const double want = base * std::pow(decay, r - 1);
    worst_rank_err = std::max(
        worst_rank_err, std::fabs(position.calibrate_at_rank(r, 0.5) - want));
  }

  criterion(10, "calibration: PAV oracle, O/E, positional recovery",
            worst_fit <= 1e-9 && std::fabs(oe - 1.0) <= 1e-6 &&
                worst_rank_err <= 0.05,
            fmt("PAV dev %.1e, O/E %.8f, worst per-rank err %.3f <= 0.05",
                worst_fit, oe, worst_rank_err));
}

void criterion_11_pid() {
  const PIDConfig cfg;

  // Bounds under adversarial inputs.
  bool bounds_ok = true;
  {
    auto state = PIDState::initial(cfg);
    Rng rng(111);
    for (int i = 0; i < 5000; ++i) {
      const int d = pid_update(state, rng.uniform() * 2e5 - 1e5, 150.0, 1.0);
      bounds_ok &= d >= cfg.depth_min && d <= cfg.depth_max;
    }
  }

  // Convergence: plant latency = c * depth, settled within 50 steps.
  int settled_at = -1;
  {
    auto state = PIDState::initial(cfg);
    const double c = 1.0, target = 150.0;
    std::vector<double> lat;
    double latency = c * state.depth;
    for (int step = 1; step <= 100; ++step) {
      pid_update(state, latency, target, 1.0);
      latency = c * state.depth;
      lat.push_back(latency);
    }
    settled_at = 1;
    for (int s = static_cast<int>(lat.size()); s-- > 0;) {
      if (std::fabs(lat[static_cast<std::size_t>(s)] - target) > 0.1 * target) {
        settled_at = s + 2;
        break;
      }
    }
  }

  // Bursty workload: peak-phase mean depth strictly below off-peak.
  SimConfig sim;
  sim.arrival = SimConfig::ArrivalKind::Bursty;
  sim.peak_rate_per_ms = 0.08;
  sim.off_rate_per_ms = 0.01;
  sim.peak_phase_ms = 10'000;
  sim.off_phase_ms = 10'000;
  sim.duration_ms = 80'000;
  sim.alpha = 5e-5;
  sim.pid_target_ms = 40;
  sim.retry = RetryPolicy{400, 2000, 3};
  sim.seed = 11;
  const auto metrics = run_simulation(sim, SimToggles{});

  criterion(11, "PID: bounds, 50-step convergence, peak depth drop",
            bounds_ok && settled_at > 0 && settled_at <= 50 &&
                metrics.peak_mean_depth < metrics.off_mean_depth,
            fmt("bounds %s, settled at step %d <= 50, peak depth %.0f < "
                "off-peak %.0f",
                bounds_ok ? "held" : "VIOLATED", settled_at,
                metrics.peak_mean_depth, metrics.off_mean_depth));
}

void criterion_12_cache() {
  // Hand-traced LRU fixture.
  bool trace_ok = true;
  {
    ScoreCache cache(2);
    const CacheKey a{"s", 1, 1, "v"}, b{"s", 1, 2, "v"}, c{"s", 1, 3, "v"};
    cache.put(a, {{"r", 0.1}});
    cache.put(b, {{"r", 0.2}});
    cache.put(c, {{"r", 0.3}});
    trace_ok &= !cache.get(a).has_value();  // A evicted
    trace_ok &= cache.get(b).has_value() && cache.get(c).has_value();
    cache.put(b, {{"r", 0.2}});  // idempotent
    trace_ok &= cache.size() == 2;
  }

  // Zipf(1.0) replay: 10k requests over 1k keys vs the offline oracle.
  SimConfig sim;
  sim.rate_per_ms = 0.1;
  sim.duration_ms = 100'000;
  sim.key_universe = 1000;
  sim.zipf_s = 1.0;
  sim.cache_capacity = 256;
  sim.alpha = 1e-6;
  sim.shadow_fraction = 1.0;  // shadow-check every hit
  sim.seed = 12;
  SimToggles toggles;
  toggles.pid = toggles.retry = toggles.shaping = false;
  const auto metrics = run_simulation(sim, toggles);

  std::list<std::size_t> lru;
  std::unordered_map<std::size_t, std::list<std::size_t>::iterator> index;
  long hits = 0;
  for (std::size_t key : metrics.key_trace) {
    const auto it = index.find(key);
    if (it != index.end()) {
      ++hits;
      lru.erase(it->second);
    }
    lru.push_front(key);
    index[key] = lru.begin();
    if (lru.size() > sim.cache_capacity) {
      index.erase(lru.back());
      lru.pop_back();
    }
  }
  const double oracle_rate =
      static_cast<double>(hits) / static_cast<double>(metrics.key_trace.size());
  const double rate_gap = std::fabs(metrics.cache_hit_rate - oracle_rate);

  criterion(12, "cache: LRU traces, Zipf replay, shadow-checked hits",
            trace_ok && rate_gap <= 0.03 && metrics.shadow_checks >= 1000 &&
                metrics.shadow_deviations == 0,
            fmt("trace %s, |hit rate %.4f - oracle %.4f| = %.4f <= 0.03, "
                "%ld shadow checks, %ld deviations",
                trace_ok ? "exact" : "WRONG", metrics.cache_hit_rate,
                oracle_rate, rate_gap, metrics.shadow_checks,
                metrics.shadow_deviations));
}

void criterion_13_metrics() {
  const double ndcg_misordered = ndcg_at_k(std::vector<int>{0, 1}, 2);
  const double ndcg_ideal = ndcg_at_k(std::vector<int>{4, 3, 2, 1}, 4);
  const double auc = auroc(std::vector<double>{0.9, 0.8, 0.3},
                           std::vector<int>{1, 0, 1});
  const auto [p, r] = precision_recall_at_k(std::vector<int>{1, 0, 1, 0}, 2, 2);
  const bool ok = std::fabs(ndcg_misordered - 1.0 / std::log2(3.0)) <= 1e-9 &&
                  ndcg_ideal == 1.0 && auc == 0.5 && p == 0.5 && r == 0.5 &&
                  ndcg_at_k(std::vector<int>{2, 2}, 2) == 1.0 &&
                  precision_recall_at_k(std::vector<int>{0, 0}, 2, 0) ==
                      std::pair<double, double>{0.0, 0.0};
  criterion(13, "metric fixtures match hand-computed values", ok,
            fmt("ndcg [0,1] = %.4f, ideal = %.1f, auroc = %.1f, P/R = %.1f/%.1f",
                ndcg_misordered, ndcg_ideal, auc, p, r));
}

void criterion_14_service_composition() {
  DataGenConfig dg;
  dg.seed = 914;
  dg.n_docs = 1000;
  dg.n_queries = 20;
  dg.n_clusters = 10;
  dg.filter_fraction = 0.0;
  const auto data = gen_data(dg);

  ModelConfig mc;
  mc.n_layers = 1;
  mc.d_model = 32;
  mc.n_heads = 4;
  mc.d_ff = 64;
  mc.vocab_size = kMinVocabSize;
  mc.max_seq = 2048;
  mc.head_specs = {{"click", 1}, {"apply", 1}};
  const auto weights = init_model(mc, 914);

  RARWeights rar{1.0, {0.1, 0.05, 0.05}, 0.5};
  CalibrationArtifact calibration;
  {
    Rng rng(914);
    std::vector<CalibrationPair> pairs;
    for (int i = 0; i < 500; ++i) {
      const double s = rng.uniform();
      pairs.push_back({s, rng.bernoulli(0.2 + 0.6 * s) ? 1 : 0});
    }
    calibration.position.global = fit_isotonic(pairs);
  }

  ServiceConfig cfg;
  cfg.mode = ScoreMode::Ibpc;
  cfg.retrieval_k = 80;
  cfg.enable_pid = false;
  cfg.pid.depth_max = 50;
  SearchService service(cfg, data.corpus, data.queries, weights, rar,
                        calibration);

  SearchRequest request;
  request.searcher_id = "acceptance";
  request.query_text = data.queries[3].text;
  request.page_size = 25;
  const auto response = service.handle_search(request);

  // Step-by-step pipeline with the same module operations.
  QuerySpec probe;
  probe.embedding = data.queries[3].embedding;
  probe.k = cfg.retrieval_k;
  const auto candidates = exhaustive_topk(data.corpus, probe, rar);
  std::map<std::int64_t, std::size_t> by_id;
  for (std::size_t i = 0; i < data.corpus.docs.size(); ++i) {
    by_id[data.corpus.docs[i].doc_id] = i;
  }
  ScoreRequest sr;
  sr.mode = ScoreMode::Ibpc;
  const auto query_context =
      render_query_context_text(request.query_text, request.filters);
  const std::size_t depth = std::min<std::size_t>(50, candidates.size());
  for (std::size_t c = 0; c < depth; ++c) {
    const auto& doc = data.corpus.docs[by_id.at(candidates[c].doc_id)];
    const auto parts =
        build_prompt(cfg.system_prompt, query_context,
                     render_document_text(data.corpus, doc), mc.max_seq);
    if (sr.prefix_tokens.empty()) sr.prefix_tokens = parts.prefix_tokens;
    sr.items.push_back({std::to_string(doc.doc_id), parts.item_tokens, {}, 0});
  }
  const auto scored = score_ibpc(weights, sr);
  std::vector<std::pair<double, std::int64_t>> expected;
  for (const auto& item : scored.items) {
    expected.push_back({calibrate(calibration.position.global,
                                  item.tasks.at(kRelevanceTask)),
                        std::stoll(item.item_id)});
  }
  std::stable_sort(expected.begin(), expected.end(),
                   [](const std::pair<double, std::int64_t>& a,
                      const std::pair<double, std::int64_t>& b) {
                     if (a.first != b.first) return a.first > b.first;
                     return a.second < b.second;
                   });
  expected.resize(static_cast<std::size_t>(request.page_size));

  bool equal = response.results.size() == expected.size();
  for (std::size_t i = 0; equal && i < expected.size(); ++i) {
    equal = response.results[i].doc_id == expected[i].second &&
            response.results[i].final_score == expected[i].first;
  }

  // Repeat: fully cached, scoring-stage flops zero, identical ranking.
  const auto repeat = service.handle_search(request);
  bool repeat_ok = repeat.diagnostics.attention_flops == 0.0 &&
                   repeat.diagnostics.cache_hits ==
                       repeat.diagnostics.cache_lookups &&
                   repeat.results.size() == response.results.size();
  for (std::size_t i = 0; repeat_ok && i < repeat.results.size(); ++i) {
    repeat_ok = repeat.results[i].doc_id == response.results[i].doc_id &&
                repeat.results[i].final_score == response.results[i].final_score;
  }

  criterion(14, "service equals the step-by-step pipeline; cached repeat",
            equal && repeat_ok,
            fmt("ranking %s over %zu results, repeat flops %.0f with %ld/%ld "
                "hits",
                equal ? "identical" : "DIVERGED", response.results.size(),
                repeat.diagnostics.attention_flops,
                repeat.diagnostics.cache_hits,
                repeat.diagnostics.cache_lookups));
}

}  // namespace

int main() {
  const auto suite_start = std::chrono::steady_clock::now();
  const auto weights = init_model(ModelConfig::default_toy(), 2026);

  criterion_1_mode_equivalence(weights);
  criterion_2_flop_formulas();
  criterion_3_wall_clock(weights);
  criterion_4_mixed_equivalence(weights);
  criterion_5_gradient_checks();
  criterion_6_loss_value_oracles();
  criterion_7_retrieval_exactness();
  criterion_8_rar_training();
  criterion_9_loss_masking();
  criterion_10_calibration();
  criterion_11_pid();
  criterion_12_cache();
  criterion_13_metrics();
  criterion_14_service_composition();

  const double total_s = std::chrono::duration<double>(
                             std::chrono::steady_clock::now() - suite_start)
                             .count();
  std::printf("%d/14 criteria passed in %.1f s\n", 14 - g_failures, total_s);
  return g_failures == 0 ? 0 : 1;
}
