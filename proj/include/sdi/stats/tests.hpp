#pragma once

// Two-group comparisons: Welch t-test, Cohen's d, 2x2 chi-square.

#include <array>
#include <cmath>
#include <span>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "sdi/error.hpp"

namespace sdi::stats {

struct Moments {
  double n = 0, mean = 0, var = 0;  // sample variance (n - 1)
};

inline Moments moments(std::span<const double> x) {
  Moments m;
  m.n = static_cast<double>(x.size());
  for (double v : x) m.mean += v;
  m.mean /= m.n;
  for (double v : x) m.var += (v - m.mean) * (v - m.mean);
  m.var /= m.n - 1;
  return m;
}

struct TTest {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
};

inline TTest welch_t(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw DataError("welch_t: each group needs at least 2 values");
  const Moments ma = moments(a), mb = moments(b);
  const double va = ma.var / ma.n, vb = mb.var / mb.n;
  if (va + vb == 0) throw DataError("welch_t: zero variance in both groups");
  TTest r;
  r.t = (mb.mean - ma.mean) / std::sqrt(va + vb);
  r.df = (va + vb) * (va + vb) / (va * va / (ma.n - 1) + vb * vb / (mb.n - 1));
  const boost::math::students_t dist(r.df);
  r.p = 2 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t)));
  return r;
}

// (mean(disturbed) - mean(normal)) / pooled SD.
inline double cohens_d(std::span<const double> normal, std::span<const double> disturbed) {
  if (normal.size() < 2 || disturbed.size() < 2) throw DataError("cohens_d: each group needs at least 2 values");
  const Moments a = moments(normal), b = moments(disturbed);
  const double pooled = std::sqrt(((a.n - 1) * a.var + (b.n - 1) * b.var) / (a.n + b.n - 2));
  if (pooled == 0) throw DataError("cohens_d: zero variance in both groups");
  return (b.mean - a.mean) / pooled;
}

struct ChiSquare {
  double statistic = 0.0;
  double p = 1.0;
};

// Pearson chi-square with 1 df, no continuity correction.
inline ChiSquare chi_square_2x2(const std::array<std::array<double, 2>, 2>& t) {
  double total = 0;
  std::array<double, 2> row{}, col{};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      if (t[i][j] < 0) throw DataError("chi_square_2x2: negative count");
      row[i] += t[i][j];
      col[j] += t[i][j];
      total += t[i][j];
    }
  if (row[0] == 0 || row[1] == 0 || col[0] == 0 || col[1] == 0)
    throw DataError("chi_square_2x2: a row or column total is zero");
  ChiSquare r;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      const double e = row[i] * col[j] / total;
      r.statistic += (t[i][j] - e) * (t[i][j] - e) / e;
    }
  r.p = boost::math::cdf(boost::math::complement(boost::math::chi_squared(1.0), r.statistic));
  return r;
}

}  // namespace sdi::stats
