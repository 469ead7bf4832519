#pragma once

// AUROC by the rank-sum statistic, with a subject-level percentile bootstrap.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "sdi/error.hpp"
#include "sdi/rng.hpp"
#include "sdi/stats/correlation.hpp"

namespace sdi::stats {

// Mann-Whitney U / (n_pos * n_neg) with average ranks for ties.
inline double auroc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ArgumentError("auroc: length mismatch");
  const std::vector<double> r = average_ranks(scores);
  double rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i]) {
      rank_sum += r[i];
      ++pos;
    }
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw DataError("auroc: both classes must be present");
  const double p = static_cast<double>(pos);
  const double u = rank_sum - p * (p + 1) / 2;
  return u / (p * static_cast<double>(neg));
}

// Linear-interpolated sample quantile (type 7) of sorted values.
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw DataError("quantile of empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct Interval {
  double low = NAN;
  double high = NAN;
  int replicates = 0;  // replicates that produced a statistic
};

inline Interval percentile_interval(std::vector<double> values, double confidence, int replicates) {
  Interval ci;
  ci.replicates = replicates;
  if (values.empty()) return ci;
  std::sort(values.begin(), values.end());
  ci.low = quantile_sorted(values, (1 - confidence) / 2);
  ci.high = quantile_sorted(values, 1 - (1 - confidence) / 2);
  return ci;
}

// Resamples whole subjects with replacement. `subjects` may be empty, in
// which case every observation is its own subject. Replicates that lose a
// class are skipped.
inline Interval auroc_bootstrap_ci(std::span<const double> scores, std::span<const int> labels,
                                   std::span<const int> subjects = {}, int B = 1000, std::uint64_t seed = 0,
                                   double confidence = 0.95) {
  if (!subjects.empty() && subjects.size() != scores.size()) throw ArgumentError("auroc_bootstrap_ci: subject length");
  auroc(scores, labels);  // validates classes
  std::vector<std::vector<std::size_t>> groups;
  if (subjects.empty()) {
    for (std::size_t i = 0; i < scores.size(); ++i) groups.push_back({i});
  } else {
    std::map<int, std::size_t> index;
    for (std::size_t i = 0; i < subjects.size(); ++i) {
      auto [it, inserted] = index.try_emplace(subjects[i], groups.size());
      if (inserted) groups.emplace_back();
      groups[it->second].push_back(i);
    }
  }
  std::vector<double> stats;
  int ok = 0;
  for (int b = 0; b < B; ++b) {
    Rng rng(seed, static_cast<std::uint64_t>(b) + 1);
    std::vector<double> s;
    std::vector<int> l;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      for (std::size_t i : groups[rng.below(groups.size())]) {
        s.push_back(scores[i]);
        l.push_back(labels[i]);
      }
    }
    try {
      stats.push_back(auroc(s, l));
      ++ok;
    } catch (const DataError&) {
    }
  }
  return percentile_interval(std::move(stats), confidence, ok);
}

}  // namespace sdi::stats
