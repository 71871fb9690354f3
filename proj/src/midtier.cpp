// Copyright 2026 the semrank authors
// SPDX-License-Identifier: Apache-2.0

#include "semrank/midtier.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "semrank/error.hpp"

namespace semrank {

std::string canonical_query(
    const std::string& query_text,
    const std::map<std::string, std::vector<std::string>>& filters) {
  std::string canon;
  canon.reserve(query_text.size());
  bool pending_space = false;
  for (char c : query_text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !canon.empty();
      continue;
    }
    if (pending_space) {
      canon.push_back(' ');
      pending_space = false;
    }
    canon.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  // std::map iterates attributes sorted; values sorted locally.
  for (const auto& [attr, values] : filters) {
    std::vector<std::string> sorted_values(values.begin(), values.end());
    std::sort(sorted_values.begin(), sorted_values.end());
    canon.push_back('|');
    canon.append(attr);
    canon.push_back('=');
    for (std::size_t i = 0; i < sorted_values.size(); ++i) {
      if (i > 0) canon.push_back(',');
      canon.append(sorted_values[i]);
    }
  }
  return canon;
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::size_t CacheKeyHash::operator()(const CacheKey& k) const {
  std::uint64_t h = fnv1a64(k.searcher_id);
  h ^= k.query_signature + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  h ^= static_cast<std::uint64_t>(k.entity_id) + 0x9e3779b97f4a7c15ull +
       (h << 6) + (h >> 2);
  h ^= fnv1a64(k.model_version) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  return static_cast<std::size_t>(h);
}

ScoreCache::ScoreCache(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) {
    throw Error(ErrorCode::Parameter, "cache capacity must be >= 1");
  }
}

std::optional<TaskScoreMap> ScoreCache::get(const CacheKey& key) {
  std::lock_guard<std::mutex> lock(mu_);
  const auto it = index_.find(key);
  if (it == index_.end()) return std::nullopt;
  lru_.splice(lru_.begin(), lru_, it->second);  // refresh recency
  return it->second->scores;
}

void ScoreCache::put(const CacheKey& key, const TaskScoreMap& scores) {
  std::lock_guard<std::mutex> lock(mu_);
  const auto it = index_.find(key);
  if (it != index_.end()) {
    if (it->second->scores != scores) {
      throw Error(ErrorCode::Consistency,
                  "conflicting scores for one cache key; scores must be "
                  "deterministic per (key, model version)");
    }
    lru_.splice(lru_.begin(), lru_, it->second);
    return;
  }
  lru_.push_front({key, scores, next_stamp_++});
  index_[key] = lru_.begin();
  if (lru_.size() > capacity_) {
    index_.erase(lru_.back().key);
    lru_.pop_back();
  }
}

std::size_t ScoreCache::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return lru_.size();
}

PIDState PIDState::initial(const PIDConfig& config) {
  PIDState s;
  s.config = config;
  s.depth = config.depth_max;  // fresh start scores as deep as allowed
  return s;
}

int pid_update(PIDState& state, double observed_latency_ms,
               double target_latency_ms, double dt) {
  if (!(dt > 0)) throw Error(ErrorCode::Parameter, "dt must be > 0");
  const auto& cfg = state.config;
  const double error = observed_latency_ms - target_latency_ms;

  const double integral_limit =
      cfg.integral_clamp_factor * std::fabs(target_latency_ms);
  double integral = state.integral + error * dt;
  integral = std::clamp(integral, -integral_limit, integral_limit);

  const double derivative =
      state.primed ? (error - state.previous_error) / dt : 0.0;
  const double control =
      cfg.k_p * error + cfg.k_i * integral + cfg.k_d * derivative;

  const double raw_depth =
      static_cast<double>(state.depth) - control * cfg.control_scale;
  const int new_depth = static_cast<int>(std::lround(
      std::clamp(raw_depth, static_cast<double>(cfg.depth_min),
                 static_cast<double>(cfg.depth_max))));

  const bool saturated_low = raw_depth < cfg.depth_min && error > 0;
  const bool saturated_high = raw_depth > cfg.depth_max && error < 0;
  if (!saturated_low && !saturated_high) {
    state.integral = integral;  // conditional integration anti-windup
  }
  state.previous_error = error;
  state.primed = true;
  state.depth = new_depth;
  return new_depth;
}

void RetryPolicy::validate() const {
  if (max_attempts < 1) {
    throw Error(ErrorCode::Parameter, "retry policy needs >= 1 attempt");
  }
  if (attempt_timeout_ms < 0 || attempt_timeout_ms > total_budget_ms) {
    throw Error(ErrorCode::Parameter,
                "per-attempt timeout must lie within the total budget");
  }
}

RetryDecision retry_decision(double elapsed_ms, int attempt_index,
                             const RetryPolicy& policy) {
  policy.validate();
  const bool attempts_left = attempt_index < policy.max_attempts;
  const bool fits_budget = elapsed_ms < policy.total_budget_ms &&
                           elapsed_ms + policy.attempt_timeout_ms <=
                               policy.total_budget_ms;
  if (!attempts_left || !fits_budget) return RetryDecision::GiveUp;
  return attempt_index == 0 ? RetryDecision::Proceed : RetryDecision::Retry;
}

ShapingResult shape_traffic(const std::vector<QueuedRequest>& queue,
                            double utilization, double threshold) {
  if (!(threshold > 0) || threshold > 1) {
    throw Error(ErrorCode::Parameter, "threshold must lie in (0, 1]");
  }
  ShapingResult out;
  const bool admit_insensitive = utilization < threshold;  // strict boundary
  for (const auto& req : queue) {
    if (req.latency_sensitive || admit_insensitive) {
      out.admit.push_back(req);
    } else {
      out.defer.push_back(req);
    }
  }
  return out;
}

}  // namespace semrank
