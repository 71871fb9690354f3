// Copyright 2026 the semrank authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "semrank/midtier.hpp"

namespace semrank {

// Deterministic single-server load simulator. Service time follows the
// scoring-engine cost model: alpha * (attention + linear units of the
// amortized prefill at the controller's depth) + beta.
struct SimConfig {
  enum class ArrivalKind { Poisson, Bursty };
  ArrivalKind arrival = ArrivalKind::Poisson;
  double rate_per_ms = 0.02;       // Poisson arrivals; 0 = no traffic
  double peak_rate_per_ms = 0.06;  // bursty two-state process
  double off_rate_per_ms = 0.01;
  double peak_phase_ms = 5000;
  double off_phase_ms = 5000;

  double latency_sensitive_fraction = 0.5;
  int t_q_min = 40, t_q_max = 60;   // uniform prompt-length draws
  int t_i_min = 10, t_i_max = 20;
  int base_depth = 250;             // N_i when the controller is off

  double alpha = 2e-6;  // ms per flop unit, fit against engine timings
  double beta = 2.0;    // fixed per-request overhead ms
  double cache_hit_service_ms = 0.1;

  std::uint64_t seed = 1;
  double duration_ms = 60'000;

  std::size_t key_universe = 1000;
  double zipf_s = 1.0;
  std::size_t cache_capacity = 256;
  double shadow_fraction = 0.01;  // fraction of hits re-scored for equality

  PIDConfig pid;
  double pid_target_ms = 150;
  double control_interval_ms = 100;

  RetryPolicy retry;
  // Latency-insensitive work gets a stretched budget so deferral into idle
  // windows does not instantly expire it.
  double insensitive_budget_factor = 10;

  double shaping_threshold = 0.75;

  double report_interval_ms = 1000;
};

struct SimToggles {
  bool cache = true;
  bool pid = true;
  bool retry = true;
  bool shaping = true;
};

struct SimClassStats {
  long completed = 0;
  double p50_ms = 0;
  double p99_ms = 0;
  double mean_ms = 0;
};

struct SimIntervalRecord {
  double t_ms = 0;
  std::string request_class;  // "sensitive" | "insensitive"
  double p50_ms = 0;
  double p99_ms = 0;
  double hit_rate = 0;
  double mean_depth = 0;
  long deferred = 0;
  double flops = 0;
};

struct SimMetrics {
  long arrivals = 0;
  SimClassStats sensitive, insensitive, overall;
  long cache_lookups = 0;
  long cache_hits = 0;
  double cache_hit_rate = 0;
  double mean_depth = 0;       // time-weighted over the run
  double peak_mean_depth = 0;  // bursty runs only
  double off_mean_depth = 0;
  long deferred_count = 0;  // distinct requests deferred at least once
  long gave_up = 0;         // served via retrieval-order fallback
  double total_flops = 0;
  long shadow_checks = 0;
  long shadow_deviations = 0;
  double max_over_budget_ms = 0;  // max(end-to-end - allowed bound), retry on
  std::vector<SimIntervalRecord> intervals;
  std::vector<std::size_t> key_trace;  // arrival-order cache keys
};

SimMetrics run_simulation(const SimConfig& config, const SimToggles& toggles);

std::string sim_metrics_to_jsonl(const SimMetrics& metrics);

}  // namespace semrank
