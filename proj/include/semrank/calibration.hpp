// Copyright 2026 the semrank authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace semrank {

inline constexpr int kMaxCalibratedRank = 25;

// Monotone step fit from pool-adjacent-violators. Each block covers the
// raw-score span [lo, hi] of its training points and carries their outcome
// mean; lookups are constant inside a block span and linearly interpolated
// between adjacent spans, which keeps training scores mapping exactly to
// their block means.
struct CalibrationHead {
  struct Block {
    double lo = 0;
    double hi = 0;
    double value = 0;
    long count = 0;
  };
  std::vector<Block> blocks;

  bool fitted() const { return !blocks.empty(); }
};

struct CalibrationPair {
  double raw_score = 0;
  int outcome = 0;  // binary
};

CalibrationHead fit_isotonic(std::span<const CalibrationPair> pairs);

double calibrate(const CalibrationHead& head, double raw_score);

// One independent head per display rank 1..25 (the loss-masking analogue:
// the rank-r head only ever sees rank-r rows), plus a global head over all
// in-range rows for absent-rank fallback.
struct PositionCalibrator {
  std::array<std::optional<CalibrationHead>, kMaxCalibratedRank> rank_heads;
  CalibrationHead global;

  const CalibrationHead& head_for_rank(int rank) const;
  double calibrate_at_rank(int rank, double raw_score) const;
};

struct PositionedPair {
  int position = 0;  // 1-based rank; rows past 25 are ignored
  double raw_score = 0;
  int outcome = 0;
};

PositionCalibrator fit_position_conditional(std::span<const PositionedPair> rows);

// Optional per-categorical-bucket heads: one PAV fit per bucket value.
struct BucketedPair {
  std::string bucket;
  double raw_score = 0;
  int outcome = 0;
};

std::map<std::string, CalibrationHead> fit_bucketed(
    std::span<const BucketedPair> rows);

// (sum outcomes) / (sum predictions); 1.0 means calibrated.
double observed_expected_ratio(std::span<const double> predictions,
                               std::span<const int> outcomes);

}  // namespace semrank
