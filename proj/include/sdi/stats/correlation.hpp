#pragma once

// Rank and linear correlation, stage concordance, and the binned
// depth-decrease vs arousal analysis.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "sdi/epochs.hpp"
#include "sdi/error.hpp"

namespace sdi::stats {

// 1-based ranks; tied values share the average of their positions.
inline std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ArgumentError("pearson: length mismatch");
  if (x.size() < 2) throw DataError("pearson: need at least 2 pairs");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) throw DataError("pearson: zero variance");
  return sxy / std::sqrt(sxx * syy);
}

inline double spearman(std::span<const double> x, std::span<const double> y) {
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

// Spearman correlation of SDI with W=0..N3=3, REM epochs left out.
inline double spearman_concordance(std::span<const double> sdi, std::span<const int> stages) {
  if (sdi.size() != stages.size()) throw ArgumentError("spearman_concordance: length mismatch");
  std::vector<double> s, y;
  for (std::size_t i = 0; i < sdi.size(); ++i) {
    if (!valid_stage(stages[i])) throw DataError("spearman_concordance: invalid stage code");
    if (stages[i] == kRem) continue;
    s.push_back(sdi[i]);
    y.push_back(stages[i]);
  }
  if (s.size() < 3) throw DataError("spearman_concordance: fewer than 3 non-REM epochs");
  if (std::all_of(y.begin(), y.end(), [&](double v) { return v == y.front(); }))
    throw DataError("spearman_concordance: all stages equal");
  return spearman(s, y);
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
};

inline LinearFit least_squares(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw DataError("least_squares: need at least 2 paired points");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0) throw DataError("least_squares: zero variance in x");
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

struct DecreasePairs {
  std::vector<double> decrease;
  std::vector<double> arousal;
};

// d_t = sdi_{t-1} - sdi_t paired with the arousal proportion of epoch
// t + offset (offset 0: the same epoch, 1: the following one).
inline DecreasePairs pair_decreases(std::span<const double> sdi, std::span<const double> arousal, int offset = 0) {
  if (sdi.size() != arousal.size()) throw ArgumentError("pair_decreases: length mismatch");
  if (offset < 0) throw ArgumentError("pair_decreases: offset must be non-negative");
  DecreasePairs p;
  for (std::size_t t = 1; t + static_cast<std::size_t>(offset) < sdi.size(); ++t) {
    p.decrease.push_back(sdi[t - 1] - sdi[t]);
    p.arousal.push_back(arousal[t + static_cast<std::size_t>(offset)]);
  }
  return p;
}

struct Bin {
  double lo = 0.0, hi = 0.0;
  std::size_t count = 0;
  double mean_decrease = NAN;
  double mean_arousal = NAN;
  double ci_low = NAN, ci_high = NAN;  // two-sided CI of the mean arousal proportion
  bool empty = true;
};

struct BinnedCorrelation {
  int n_bins = 10;
  std::vector<Bin> bins;
  std::size_t pairs_used = 0;
  std::size_t pairs_excluded = 0;  // negative decreases
  LinearFit fit;
  double r = NAN;
};

enum class NegativeDecrease { kExclude, kClamp };

// Bins decreases into n_bins equal intervals of [0,1] (the last closed).
// The fitted line and Pearson r use, per nonempty bin, the mean decrease
// within the bin against the mean arousal proportion.
inline BinnedCorrelation decile_arousal_analysis(std::span<const double> decrease, std::span<const double> arousal,
                                                 int n_bins = 10, NegativeDecrease negative = NegativeDecrease::kExclude,
                                                 double confidence = 0.95) {
  if (decrease.size() != arousal.size()) throw ArgumentError("decile_arousal_analysis: length mismatch");
  if (n_bins < 2) throw ArgumentError("decile_arousal_analysis: need at least 2 bins");
  BinnedCorrelation out;
  out.n_bins = n_bins;
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(n_bins));
  std::vector<double> d(decrease.begin(), decrease.end());
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] < 0) {
      if (negative == NegativeDecrease::kExclude) {
        ++out.pairs_excluded;
        continue;
      }
      d[i] = 0.0;
    }
    const double v = std::min(d[i], 1.0);
    auto k = static_cast<std::size_t>(std::floor(v * n_bins));
    if (k >= static_cast<std::size_t>(n_bins)) k = static_cast<std::size_t>(n_bins) - 1;
    members[k].push_back(i);
    ++out.pairs_used;
  }
  std::vector<double> bx, by;
  for (int k = 0; k < n_bins; ++k) {
    Bin b;
    b.lo = static_cast<double>(k) / n_bins;
    b.hi = static_cast<double>(k + 1) / n_bins;
    const auto& idx = members[static_cast<std::size_t>(k)];
    b.count = idx.size();
    if (!idx.empty()) {
      b.empty = false;
      double sd_sum = 0, sa = 0;
      for (std::size_t i : idx) {
        sd_sum += d[i];
        sa += arousal[i];
      }
      const double n = static_cast<double>(idx.size());
      b.mean_decrease = sd_sum / n;
      b.mean_arousal = sa / n;
      if (idx.size() >= 2) {
        double ss = 0;
        for (std::size_t i : idx) ss += (arousal[i] - b.mean_arousal) * (arousal[i] - b.mean_arousal);
        const double se = std::sqrt(ss / (n - 1)) / std::sqrt(n);
        const boost::math::students_t dist(n - 1);
        const double q = boost::math::quantile(dist, 0.5 + confidence / 2);
        b.ci_low = b.mean_arousal - q * se;
        b.ci_high = b.mean_arousal + q * se;
      }
      bx.push_back(b.mean_decrease);
      by.push_back(b.mean_arousal);
    }
    out.bins.push_back(b);
  }
  if (bx.size() < 2) throw DataError("decile_arousal_analysis: fewer than 2 nonempty bins");
  out.fit = least_squares(bx, by);
  try {
    out.r = pearson(bx, by);
  } catch (const DataError&) {
    out.r = NAN;  // constant bin means
  }
  return out;
}

}  // namespace sdi::stats
