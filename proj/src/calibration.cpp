// Copyright 2026 the semrank authors
// SPDX-License-Identifier: Apache-2.0

#include "semrank/calibration.hpp"

#include <algorithm>
#include <cmath>

#include "semrank/error.hpp"

namespace semrank {

CalibrationHead fit_isotonic(std::span<const CalibrationPair> pairs) {
  if (pairs.empty()) {
    throw Error(ErrorCode::SpecViolation, "isotonic fit needs >= 1 pair");
  }
  std::vector<CalibrationPair> sorted(pairs.begin(), pairs.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const CalibrationPair& a, const CalibrationPair& b) {
              return a.raw_score < b.raw_score;
            });

  // Points with equal raw score must share a fitted value: pre-pool them.
  struct Point {
    double score;
    double sum;
    long count;
  };
  std::vector<Point> points;
  for (const auto& p : sorted) {
    if (!points.empty() && points.back().score == p.raw_score) {
      points.back().sum += p.outcome;
      points.back().count += 1;
    } else {
      points.push_back({p.raw_score, static_cast<double>(p.outcome), 1});
    }
  }

  // Pool adjacent violators: merge while the running means decrease.
  struct Block {
    double lo, hi, sum;
    long count;
    double mean() const { return sum / static_cast<double>(count); }
  };
  std::vector<Block> stack;
  for (const auto& pt : points) {
    stack.push_back({pt.score, pt.score, pt.sum, pt.count});
    while (stack.size() > 1 &&
           stack[stack.size() - 2].mean() > stack.back().mean()) {
      Block top = stack.back();
      stack.pop_back();
      stack.back().hi = top.hi;
      stack.back().sum += top.sum;
      stack.back().count += top.count;
    }
  }

  CalibrationHead head;
  for (const auto& b : stack) {
    head.blocks.push_back({b.lo, b.hi, b.mean(), b.count});
  }
  return head;
}

double calibrate(const CalibrationHead& head, double raw_score) {
  if (!head.fitted()) {
    throw Error(ErrorCode::StateInvalid, "calibration head is not fitted");
  }
  const auto& blocks = head.blocks;
  if (raw_score <= blocks.front().hi) {
    return std::clamp(blocks.front().value, 0.0, 1.0);
  }
  for (std::size_t b = 0; b + 1 < blocks.size(); ++b) {
    // Invariant here: raw_score > blocks[b].hi.
    if (raw_score < blocks[b + 1].lo) {
      // Linear ramp across the gap between adjacent block spans.
      const double t =
          (raw_score - blocks[b].hi) / (blocks[b + 1].lo - blocks[b].hi);
      return std::clamp(
          blocks[b].value + t * (blocks[b + 1].value - blocks[b].value), 0.0,
          1.0);
    }
    if (raw_score <= blocks[b + 1].hi) {
      return std::clamp(blocks[b + 1].value, 0.0, 1.0);
    }
  }
  return std::clamp(blocks.back().value, 0.0, 1.0);
}

const CalibrationHead& PositionCalibrator::head_for_rank(int rank) const {
  if (rank >= 1 && rank <= kMaxCalibratedRank) {
    const auto& head = rank_heads[static_cast<std::size_t>(rank - 1)];
    if (head.has_value()) return *head;
  }
  return global;
}

double PositionCalibrator::calibrate_at_rank(int rank, double raw_score) const {
  return calibrate(head_for_rank(rank), raw_score);
}

PositionCalibrator fit_position_conditional(
    std::span<const PositionedPair> rows) {
  std::array<std::vector<CalibrationPair>, kMaxCalibratedRank> per_rank;
  std::vector<CalibrationPair> all;
  for (const auto& row : rows) {
    if (row.position < 1 || row.position > kMaxCalibratedRank) continue;
    per_rank[static_cast<std::size_t>(row.position - 1)].push_back(
        {row.raw_score, row.outcome});
    all.push_back({row.raw_score, row.outcome});
  }
  if (all.empty()) {
    throw Error(ErrorCode::SpecViolation,
                "no rows within ranks 1.." + std::to_string(kMaxCalibratedRank));
  }

  PositionCalibrator out;
  out.global = fit_isotonic(all);
  for (int r = 0; r < kMaxCalibratedRank; ++r) {
    const auto& bucket = per_rank[static_cast<std::size_t>(r)];
    if (!bucket.empty()) {
      out.rank_heads[static_cast<std::size_t>(r)] = fit_isotonic(bucket);
    }
  }
  return out;
}

std::map<std::string, CalibrationHead> fit_bucketed(
    std::span<const BucketedPair> rows) {
  std::map<std::string, std::vector<CalibrationPair>> grouped;
  for (const auto& row : rows) {
    grouped[row.bucket].push_back({row.raw_score, row.outcome});
  }
  std::map<std::string, CalibrationHead> out;
  for (const auto& [bucket, pairs] : grouped) {
    out[bucket] = fit_isotonic(pairs);
  }
  return out;
}

double observed_expected_ratio(std::span<const double> predictions,
                               std::span<const int> outcomes) {
  if (predictions.size() != outcomes.size()) {
    throw Error(ErrorCode::Alignment, "predictions and outcomes must align");
  }
  double expected = 0, observed = 0;
  for (double p : predictions) expected += p;
  for (int o : outcomes) observed += o;
  if (expected <= 0) {
    throw Error(ErrorCode::UndefinedMetric,
                "O/E is undefined for zero expected sum");
  }
  return observed / expected;
}

}  // namespace semrank
