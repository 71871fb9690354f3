// Copyright 2026 the semrank authors
// SPDX-License-Identifier: Apache-2.0

#include "semrank/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <queue>
#include <sstream>

#include <json.hpp>

#include "semrank/engine.hpp"
#include "semrank/error.hpp"
#include "semrank/rng.hpp"

namespace semrank {

namespace {

struct SimRequest {
  std::uint64_t id = 0;
  double arrival_ms = 0;
  bool latency_sensitive = false;
  std::size_t key = 0;
  int t_q = 0;
  int t_i = 0;
  int attempt = 0;
  bool deferred_once = false;
  bool in_service = false;
  bool expired = false;  // budget ran out mid-attempt
  bool done = false;
};

enum class EventKind : int {
  ServiceEnd = 0,   // lowest tie-break: free the server first
  BudgetExpire = 1,
  Arrival = 2,
  ControlTick = 3,
  Report = 4,
};

struct Event {
  double t = 0;
  std::uint64_t seq = 0;
  EventKind kind = EventKind::Arrival;
  std::uint64_t request_id = 0;
  bool timeout_fail = false;  // ServiceEnd only: attempt hit its timeout

  bool operator>(const Event& other) const {
    if (t != other.t) return t > other.t;
    if (kind != other.kind) return static_cast<int>(kind) > static_cast<int>(other.kind);
    return seq > other.seq;
  }
};

double percentile(std::vector<double>& sorted_values, double q) {
  if (sorted_values.empty()) return 0;
  const auto idx = static_cast<std::size_t>(
      std::ceil(q * static_cast<double>(sorted_values.size()))) - 1;
  return sorted_values[std::min(idx, sorted_values.size() - 1)];
}

SimClassStats stats_from(std::vector<double> latencies) {
  SimClassStats s;
  s.completed = static_cast<long>(latencies.size());
  if (latencies.empty()) return s;
  std::sort(latencies.begin(), latencies.end());
  s.p50_ms = percentile(latencies, 0.50);
  s.p99_ms = percentile(latencies, 0.99);
  double sum = 0;
  for (double v : latencies) sum += v;
  s.mean_ms = sum / static_cast<double>(latencies.size());
  return s;
}

// Deterministic per-key score map standing in for the engine output.
TaskScoreMap key_scores(std::size_t key) {
  const std::uint64_t h = fnv1a64("key:" + std::to_string(key));
  TaskScoreMap m;
  m["relevance"] = static_cast<double>(h >> 11) * 0x1.0p-53;
  m["click"] = static_cast<double>((h * 0x9e3779b97f4a7c15ull) >> 11) * 0x1.0p-53;
  return m;
}

}  // namespace

SimMetrics run_simulation(const SimConfig& config, const SimToggles& toggles) {
  if (config.alpha < 0 || config.beta < 0) {
    throw Error(ErrorCode::Parameter, "cost model factors must be >= 0");
  }
  config.retry.validate();

  Rng arrival_rng = Rng::substream(config.seed, "sim.arrivals");
  Rng class_rng = Rng::substream(config.seed, "sim.class");
  Rng key_rng = Rng::substream(config.seed, "sim.keys");
  Rng length_rng = Rng::substream(config.seed, "sim.lengths");
  Rng shadow_rng = Rng::substream(config.seed, "sim.shadow");
  ZipfSampler zipf(std::max<std::size_t>(config.key_universe, 1), config.zipf_s);

  std::priority_queue<Event, std::vector<Event>, std::greater<>> events;
  std::uint64_t seq = 0;
  auto push = [&](double t, EventKind kind, std::uint64_t req = 0,
                  bool timeout_fail = false) {
    events.push({t, seq++, kind, req, timeout_fail});
  };

  // Pre-generate the arrival process (deterministic, bounded by duration).
  std::vector<SimRequest> requests;
  {
    double t = 0;
    double phase_end = config.peak_phase_ms;
    bool peak = true;
    std::uint64_t next_id = 0;
    while (true) {
      double rate = config.rate_per_ms;
      if (config.arrival == SimConfig::ArrivalKind::Bursty) {
        rate = peak ? config.peak_rate_per_ms : config.off_rate_per_ms;
      }
      if (rate <= 0) {
        if (config.arrival == SimConfig::ArrivalKind::Poisson) break;
        t = phase_end;  // idle phase: jump to the switch
        peak = !peak;
        phase_end += peak ? config.peak_phase_ms : config.off_phase_ms;
        if (t >= config.duration_ms) break;
        continue;
      }
      double dt = arrival_rng.exponential(rate);
      if (config.arrival == SimConfig::ArrivalKind::Bursty &&
          t + dt > phase_end) {
        // Clip at the boundary and resample under the next phase's rate.
        t = phase_end;
        peak = !peak;
        phase_end += peak ? config.peak_phase_ms : config.off_phase_ms;
        if (t >= config.duration_ms) break;
        continue;
      }
      t += dt;
      if (t >= config.duration_ms) break;
      SimRequest req;
      req.id = next_id++;
      req.arrival_ms = t;
      req.latency_sensitive =
          class_rng.bernoulli(config.latency_sensitive_fraction);
      req.key = zipf.sample(key_rng);
      req.t_q = static_cast<int>(
          length_rng.uniform_int(config.t_q_min, config.t_q_max));
      req.t_i = static_cast<int>(
          length_rng.uniform_int(config.t_i_min, config.t_i_max));
      requests.push_back(req);
    }
  }

  SimMetrics metrics;
  metrics.arrivals = static_cast<long>(requests.size());
  for (const auto& r : requests) metrics.key_trace.push_back(r.key);

  for (const auto& r : requests) push(r.arrival_ms, EventKind::Arrival, r.id);
  if (toggles.retry) {
    for (const auto& r : requests) {
      const double budget = r.latency_sensitive
                                ? config.retry.total_budget_ms
                                : config.retry.total_budget_ms *
                                      config.insensitive_budget_factor;
      push(r.arrival_ms + budget, EventKind::BudgetExpire, r.id);
    }
  }
  if (toggles.pid) {
    push(config.control_interval_ms, EventKind::ControlTick);
  }
  push(config.report_interval_ms, EventKind::Report);

  ScoreCache cache(std::max<std::size_t>(config.cache_capacity, 1));
  PIDState pid = PIDState::initial(config.pid);
  pid.depth = std::min(pid.depth, config.base_depth);

  std::deque<std::uint64_t> queue;
  bool server_busy = false;
  double busy_until = 0;
  double window_busy_ms = 0;       // busy time inside the control window
  double window_start_ms = 0;
  double last_busy_mark = 0;

  double now = 0;
  double depth_weight_time = 0, depth_weighted_sum = 0;
  double peak_depth_time = 0, peak_depth_sum = 0;
  double off_depth_time = 0, off_depth_sum = 0;
  double last_depth_t = 0;

  std::vector<double> lat_sensitive, lat_insensitive;
  std::vector<double> interval_lat_s, interval_lat_i;
  long interval_hits = 0, interval_lookups = 0, interval_deferred = 0;
  double interval_flops = 0;
  double pid_lat_sum = 0;
  long pid_lat_count = 0;

  auto is_peak_phase = [&](double t) {
    if (config.arrival != SimConfig::ArrivalKind::Bursty) return false;
    const double cycle = config.peak_phase_ms + config.off_phase_ms;
    const double in_cycle = std::fmod(t, cycle);
    return in_cycle < config.peak_phase_ms;
  };

  auto account_depth = [&](double t) {
    const double dt = t - last_depth_t;
    if (dt > 0) {
      const int depth = toggles.pid ? pid.depth : config.base_depth;
      depth_weight_time += dt;
      depth_weighted_sum += dt * depth;
      if (config.arrival == SimConfig::ArrivalKind::Bursty) {
        if (is_peak_phase(last_depth_t)) {
          peak_depth_time += dt;
          peak_depth_sum += dt * depth;
        } else {
          off_depth_time += dt;
          off_depth_sum += dt * depth;
        }
      }
    }
    last_depth_t = t;
  };

  auto utilization = [&](double t) {
    const double span = t - window_start_ms;
    if (span <= 0) return server_busy ? 1.0 : 0.0;
    double busy = window_busy_ms;
    if (server_busy) busy += std::min(t, busy_until) - last_busy_mark;
    return std::clamp(busy / span, 0.0, 1.0);
  };

  auto complete = [&](SimRequest& req, double t, bool degraded) {
    if (req.done) return;
    req.done = true;
    const double latency = t - req.arrival_ms;
    (req.latency_sensitive ? lat_sensitive : lat_insensitive).push_back(latency);
    (req.latency_sensitive ? interval_lat_s : interval_lat_i).push_back(latency);
    if (degraded) {
      ++metrics.gave_up;
    } else {
      pid_lat_sum += latency;
      ++pid_lat_count;
    }
    if (toggles.retry) {
      const double allowed =
          (req.latency_sensitive
               ? config.retry.total_budget_ms
               : config.retry.total_budget_ms * config.insensitive_budget_factor) +
          config.retry.attempt_timeout_ms;
      metrics.max_over_budget_ms =
          std::max(metrics.max_over_budget_ms, latency - allowed);
    }
  };

  auto start_service = [&](SimRequest& req, double t) {
    req.in_service = true;
    server_busy = true;
    last_busy_mark = t;

    if (toggles.retry) {
      const RetryPolicy policy{
          config.retry.attempt_timeout_ms,
          req.latency_sensitive
              ? config.retry.total_budget_ms
              : config.retry.total_budget_ms * config.insensitive_budget_factor,
          config.retry.max_attempts};
      const auto decision = retry_decision(t - req.arrival_ms, req.attempt, policy);
      if (decision == RetryDecision::GiveUp) {
        // Retrieval-order fallback: no model work, server freed immediately.
        req.in_service = false;
        server_busy = false;
        complete(req, t, true);
        push(t, EventKind::ServiceEnd, req.id);  // re-runs the scheduler
        return;
      }
    }

    if (toggles.cache) {
      ++metrics.cache_lookups;
      ++interval_lookups;
      const CacheKey key{"sim", static_cast<std::uint64_t>(req.key),
                         static_cast<std::int64_t>(req.key), "sim-model"};
      if (auto cached = cache.get(key)) {
        ++metrics.cache_hits;
        ++interval_hits;
        if (shadow_rng.uniform() < config.shadow_fraction) {
          ++metrics.shadow_checks;
          if (*cached != key_scores(req.key)) ++metrics.shadow_deviations;
        }
        busy_until = t + config.cache_hit_service_ms;
        push(busy_until, EventKind::ServiceEnd, req.id);
        return;
      }
    }

    const int depth = toggles.pid ? pid.depth : config.base_depth;
    const auto cost = flops(ScoreMode::Ibpc, req.t_q, req.t_i, depth);
    const double units = cost.attention_units + cost.linear_units;
    const double service_ms = config.alpha * units + config.beta;
    metrics.total_flops += units;
    interval_flops += units;

    double end = t + service_ms;
    bool timeout_fail = false;
    if (toggles.retry && service_ms > config.retry.attempt_timeout_ms) {
      end = t + config.retry.attempt_timeout_ms;  // wasted partial attempt
      timeout_fail = true;
    }
    busy_until = end;
    push(end, EventKind::ServiceEnd, req.id, timeout_fail);
  };

  auto schedule_next = [&](double t) {
    if (server_busy || queue.empty()) return;
    std::size_t pick = queue.size();
    if (toggles.shaping) {
      std::vector<QueuedRequest> snapshot;
      snapshot.reserve(queue.size());
      for (auto id : queue) {
        snapshot.push_back({id, requests[id].latency_sensitive});
      }
      const auto shaped =
          shape_traffic(snapshot, utilization(t), config.shaping_threshold);
      if (shaped.admit.empty()) {
        for (const auto& d : shaped.defer) {
          if (!requests[d.id].deferred_once) {
            requests[d.id].deferred_once = true;
            ++metrics.deferred_count;
            ++interval_deferred;
          }
        }
        return;  // everything deferred; an arrival or tick will retry
      }
      const auto first = shaped.admit.front().id;
      for (std::size_t i = 0; i < queue.size(); ++i) {
        if (queue[i] == first) {
          pick = i;
          break;
        }
      }
      for (const auto& d : shaped.defer) {
        if (!requests[d.id].deferred_once) {
          requests[d.id].deferred_once = true;
          ++metrics.deferred_count;
          ++interval_deferred;
        }
      }
    } else {
      pick = 0;
    }
    const auto id = queue[pick];
    queue.erase(queue.begin() + static_cast<long>(pick));
    start_service(requests[id], t);
  };

  auto flush_interval = [&](double t) {
    for (int cls = 0; cls < 2; ++cls) {
      auto& lats = cls == 0 ? interval_lat_s : interval_lat_i;
      const auto s = stats_from(lats);
      SimIntervalRecord rec;
      rec.t_ms = t;
      rec.request_class = cls == 0 ? "sensitive" : "insensitive";
      rec.p50_ms = s.p50_ms;
      rec.p99_ms = s.p99_ms;
      rec.hit_rate = interval_lookups > 0
                         ? static_cast<double>(interval_hits) / interval_lookups
                         : 0.0;
      rec.mean_depth = toggles.pid ? pid.depth : config.base_depth;
      rec.deferred = interval_deferred;
      rec.flops = interval_flops;
      metrics.intervals.push_back(rec);
      lats.clear();
    }
    interval_hits = interval_lookups = 0;
    interval_deferred = 0;
    interval_flops = 0;
  };

  const double drain_deadline =
      config.duration_ms + 10 * config.retry.total_budget_ms *
                               std::max(1.0, config.insensitive_budget_factor);

  while (!events.empty()) {
    const Event ev = events.top();
    events.pop();
    if (ev.t > drain_deadline) {
      break;  // runaway guard; drains long after the last arrival
    }
    account_depth(ev.t);
    now = ev.t;

    switch (ev.kind) {
      case EventKind::Arrival: {
        queue.push_back(ev.request_id);
        schedule_next(now);
        break;
      }
      case EventKind::ServiceEnd: {
        auto& req = requests[ev.request_id];
        if (server_busy && req.in_service) {
          window_busy_ms += now - last_busy_mark;
          server_busy = false;
        }
        if (!req.done) {
          if (ev.timeout_fail) {
            ++req.attempt;
            if (req.expired) {
              complete(req, now, true);
            } else {
              req.in_service = false;
              queue.push_back(req.id);  // retry from the queue tail
            }
          } else if (req.in_service) {
            if (toggles.cache) {
              const CacheKey key{"sim", static_cast<std::uint64_t>(req.key),
                                 static_cast<std::int64_t>(req.key), "sim-model"};
              cache.put(key, key_scores(req.key));
            }
            complete(req, now, false);
          }
        }
        req.in_service = false;
        schedule_next(now);
        break;
      }
      case EventKind::BudgetExpire: {
        auto& req = requests[ev.request_id];
        if (req.done) break;
        if (req.in_service) {
          req.expired = true;  // resolved when the attempt ends
        } else {
          for (std::size_t i = 0; i < queue.size(); ++i) {
            if (queue[i] == req.id) {
              queue.erase(queue.begin() + static_cast<long>(i));
              break;
            }
          }
          complete(req, now, true);
        }
        break;
      }
      case EventKind::ControlTick: {
        if (pid_lat_count > 0) {
          pid_update(pid, pid_lat_sum / pid_lat_count, config.pid_target_ms,
                     config.control_interval_ms);
        }
        pid_lat_sum = 0;
        pid_lat_count = 0;
        window_busy_ms = 0;
        window_start_ms = now;
        if (server_busy) last_busy_mark = now;
        // Ticks continue through the drain so deferred work is re-examined.
        if (now + config.control_interval_ms <= drain_deadline) {
          push(now + config.control_interval_ms, EventKind::ControlTick);
        }
        schedule_next(now);  // utilization window reset may unblock deferred work
        break;
      }
      case EventKind::Report: {
        flush_interval(now);
        if (now + config.report_interval_ms <= config.duration_ms) {
          push(now + config.report_interval_ms, EventKind::Report);
        }
        break;
      }
    }
  }
  account_depth(std::max(now, config.duration_ms));

  metrics.sensitive = stats_from(lat_sensitive);
  metrics.insensitive = stats_from(lat_insensitive);
  std::vector<double> all = lat_sensitive;
  all.insert(all.end(), lat_insensitive.begin(), lat_insensitive.end());
  metrics.overall = stats_from(std::move(all));
  metrics.cache_hit_rate =
      metrics.cache_lookups > 0
          ? static_cast<double>(metrics.cache_hits) / metrics.cache_lookups
          : 0.0;
  metrics.mean_depth =
      depth_weight_time > 0 ? depth_weighted_sum / depth_weight_time : 0.0;
  metrics.peak_mean_depth =
      peak_depth_time > 0 ? peak_depth_sum / peak_depth_time : 0.0;
  metrics.off_mean_depth =
      off_depth_time > 0 ? off_depth_sum / off_depth_time : 0.0;
  return metrics;
}

std::string sim_metrics_to_jsonl(const SimMetrics& metrics) {
  std::ostringstream out;
  for (const auto& rec : metrics.intervals) {
    const nlohmann::json j = {
        {"t", rec.t_ms},           {"class", rec.request_class},
        {"p50", rec.p50_ms},       {"p99", rec.p99_ms},
        {"hit_rate", rec.hit_rate}, {"mean_depth", rec.mean_depth},
        {"deferred", rec.deferred}, {"flops", rec.flops}};
    out << j.dump() << '\n';
  }
  const nlohmann::json summary = {
      {"summary", true},
      {"arrivals", metrics.arrivals},
      {"completed", metrics.overall.completed},
      {"p50", metrics.overall.p50_ms},
      {"p99", metrics.overall.p99_ms},
      {"sensitive_p99", metrics.sensitive.p99_ms},
      {"insensitive_p99", metrics.insensitive.p99_ms},
      {"hit_rate", metrics.cache_hit_rate},
      {"mean_depth", metrics.mean_depth},
      {"peak_mean_depth", metrics.peak_mean_depth},
      {"off_mean_depth", metrics.off_mean_depth},
      {"deferred", metrics.deferred_count},
      {"gave_up", metrics.gave_up},
      {"total_flops", metrics.total_flops},
      {"shadow_checks", metrics.shadow_checks},
      {"shadow_deviations", metrics.shadow_deviations}};
  out << summary.dump() << '\n';
  return out.str();
}

}  // namespace semrank
