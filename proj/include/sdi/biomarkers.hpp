#pragma once

// Per-night biomarkers of the SDI series and whole-night summary metrics.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "sdi/annotator.hpp"
#include "sdi/csv.hpp"
#include "sdi/epochs.hpp"
#include "sdi/error.hpp"

namespace sdi {

inline constexpr double kShallowThreshold = 0.2;
inline constexpr double kEpochMinutes = 0.5;

inline double rb(std::span<const double> sdi, double threshold = kShallowThreshold) {
  if (sdi.empty()) throw DataError("rb: empty series");
  std::size_t below = 0;
  for (double v : sdi) below += v < threshold;
  return static_cast<double>(below) / static_cast<double>(sdi.size());
}

// Sum over all epochs divided by the number of sleep epochs.
inline double ap(std::span<const double> sdi, std::size_t tst_epochs) {
  if (tst_epochs == 0) throw DataError("ap: no sleep epochs");
  double s = 0.0;
  for (double v : sdi) s += v;
  return s / static_cast<double>(tst_epochs);
}

namespace bio_detail {
inline double mean(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}
}  // namespace bio_detail

inline double cv(std::span<const double> x) {
  if (x.size() < 3) throw DataError("cv: need at least 3 values");
  const double m = bio_detail::mean(x);
  if (m == 0.0) throw DataError("cv: zero mean");
  if (std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; })) return 0.0;
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size() - 1)) / m;
}

// Adjusted Fisher-Pearson skewness; nullopt for a constant series.
inline std::optional<double> skewness(std::span<const double> x) {
  if (x.size() < 3) throw DataError("skewness: need at least 3 values");
  if (std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; })) return std::nullopt;
  const double m = bio_detail::mean(x);
  double m2 = 0.0, m3 = 0.0;
  for (double v : x) {
    const double d = v - m;
    m2 += d * d;
    m3 += d * d * d;
  }
  const double n = static_cast<double>(x.size());
  m2 /= n;
  m3 /= n;
  if (m2 <= 0.0) return std::nullopt;
  return std::sqrt(n * (n - 1.0)) / (n - 2.0) * m3 / std::pow(m2, 1.5);
}

// Mean SDI over REM epochs; nullopt without REM.
inline std::optional<double> mdr(std::span<const double> sdi, const std::vector<bool>& rem) {
  if (rem.size() != sdi.size()) throw ArgumentError("mdr: mask length mismatch");
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < sdi.size(); ++i)
    if (rem[i]) {
      s += sdi[i];
      ++n;
    }
  if (n == 0) return std::nullopt;
  return s / static_cast<double>(n);
}

inline double pr(const std::vector<bool>& rem, std::size_t tst_epochs) {
  if (tst_epochs == 0) throw DataError("pr: no sleep epochs");
  return static_cast<double>(std::count(rem.begin(), rem.end(), true)) / static_cast<double>(tst_epochs);
}

namespace bio_detail {
inline double population_sd(std::span<const double> x) {
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size()));
}

// Number of templates j with Chebyshev distance <= r from template i.
inline bool within(std::span<const double> x, std::size_t i, std::size_t j, int m, double r) {
  for (int k = 0; k < m; ++k)
    if (std::fabs(x[i + static_cast<std::size_t>(k)] - x[j + static_cast<std::size_t>(k)]) > r) return false;
  return true;
}

inline double phi(std::span<const double> x, int m, double r) {
  const std::size_t count = x.size() - static_cast<std::size_t>(m) + 1;
  double s = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t c = 0;
    for (std::size_t j = 0; j < count; ++j) c += within(x, i, j, m, r);
    s += std::log(static_cast<double>(c) / static_cast<double>(count));
  }
  return s / static_cast<double>(count);
}
}  // namespace bio_detail

// Approximate entropy Phi_m - Phi_{m+1}, Chebyshev distance, self-matches
// counted, tolerance r = r_factor * population SD.
inline double apen(std::span<const double> x, int m = 2, double r_factor = 0.2) {
  if (x.size() < 16) throw DataError("apen: need at least 16 values");
  if (m < 1) throw ArgumentError("apen: m must be positive");
  const double r = r_factor * bio_detail::population_sd(x);
  if (r == 0.0) return 0.0;
  return bio_detail::phi(x, m, r) - bio_detail::phi(x, m + 1, r);
}

// Sample entropy -log(A/B) without self-matches; nullopt when no template
// of length m+1 matches.
inline std::optional<double> sampen(std::span<const double> x, int m = 2, double r_factor = 0.2) {
  if (x.size() < 16) throw DataError("sampen: need at least 16 values");
  const double r = r_factor * bio_detail::population_sd(x);
  const std::size_t count = x.size() - static_cast<std::size_t>(m);
  std::size_t a = 0, b = 0;
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t j = i + 1; j < count; ++j) {
      if (!bio_detail::within(x, i, j, m, r)) continue;
      ++b;
      if (std::fabs(x[i + static_cast<std::size_t>(m)] - x[j + static_cast<std::size_t>(m)]) <= r) ++a;
    }
  if (a == 0 || b == 0) return std::nullopt;
  return -std::log(static_cast<double>(a) / static_cast<double>(b));
}

// Box sizes for DFA: integers log-spaced over [4, n/4].
inline std::vector<std::size_t> dfa_scales(std::size_t n) {
  const double lo = 4.0, hi = std::floor(static_cast<double>(n) / 4.0);
  std::vector<std::size_t> s;
  const int points = 24;
  for (int k = 0; k < points; ++k) {
    const double v = std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * k / (points - 1));
    const auto r = static_cast<std::size_t>(std::llround(v));
    if (s.empty() || r != s.back()) s.push_back(r);
  }
  return s;
}

// Order-1 DFA exponent. Profile of the mean-centred series; per box size,
// non-overlapping windows from the start and from the end; F(s) is the RMS
// of linear-detrended residuals; alpha is the least-squares slope of
// log F against log s.
inline double dfa(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 64) throw DataError("dfa: need at least 64 values");
  const double m = bio_detail::mean(x);
  std::vector<double> y(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    acc += x[i] - m;
    y[i] = acc;
  }
  const std::vector<std::size_t> scales = dfa_scales(n);
  if (scales.size() < 10) throw DataError("dfa: fewer than 10 box sizes");
  std::vector<double> lx, ly;
  for (std::size_t s : scales) {
    const std::size_t windows = n / s;
    // Window-local abscissa 0..s-1 has closed-form sums.
    const double sd = static_cast<double>(s);
    const double sx = sd * (sd - 1) / 2, sxx = (sd - 1) * sd * (2 * sd - 1) / 6;
    const double det = sd * sxx - sx * sx;
    double total = 0.0;
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t w = 0; w < windows; ++w) {
        const std::size_t start = pass == 0 ? w * s : n - (w + 1) * s;
        double sy = 0.0, sxy = 0.0;
        for (std::size_t k = 0; k < s; ++k) {
          sy += y[start + k];
          sxy += static_cast<double>(k) * y[start + k];
        }
        const double slope = (sd * sxy - sx * sy) / det;
        const double icept = (sy - slope * sx) / sd;
        double rss = 0.0;
        for (std::size_t k = 0; k < s; ++k) {
          const double e = y[start + k] - (icept + slope * static_cast<double>(k));
          rss += e * e;
        }
        total += rss / sd;
      }
    }
    const double f = std::sqrt(total / static_cast<double>(2 * windows));
    if (!(f > 0)) throw DataError("dfa: zero fluctuation (constant series)");
    lx.push_back(std::log(sd));
    ly.push_back(std::log(f));
  }
  const double mx = bio_detail::mean(lx), my = bio_detail::mean(ly);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    num += (lx[i] - mx) * (ly[i] - my);
    den += (lx[i] - mx) * (lx[i] - mx);
  }
  return num / den;
}

struct NightMetrics {
  double tst_minutes = 0.0;
  double se = 0.0;
  double auc = 0.0;  // index * minutes
  std::size_t sleep_epochs = 0;
};

// Sleep epochs are staged non-W when stages are given, else sdi >= 0.2.
inline std::vector<bool> sleep_mask(std::span<const double> sdi, const std::optional<std::vector<int>>& stages) {
  std::vector<bool> m(sdi.size());
  if (stages && stages->size() != sdi.size()) throw DataError("stage list length does not match the SDI series");
  for (std::size_t i = 0; i < sdi.size(); ++i) m[i] = stages ? (*stages)[i] != kWake : sdi[i] >= kShallowThreshold;
  return m;
}

inline NightMetrics night_metrics(std::span<const double> sdi, const std::optional<std::vector<int>>& stages = {}) {
  if (sdi.empty()) throw DataError("night_metrics: empty night");
  NightMetrics r;
  const std::vector<bool> sleep = sleep_mask(sdi, stages);
  r.sleep_epochs = static_cast<std::size_t>(std::count(sleep.begin(), sleep.end(), true));
  r.tst_minutes = static_cast<double>(r.sleep_epochs) * kEpochMinutes;
  r.se = r.tst_minutes / (static_cast<double>(sdi.size()) * kEpochMinutes);
  double s = 0.0;
  for (double v : sdi) s += v;
  r.auc = s * kEpochMinutes;
  return r;
}

struct BiomarkerOptions {
  double rb_threshold = kShallowThreshold;
  int apen_m = 2;
  double apen_r = 0.2;
  bool sample_entropy = false;  // report SampEn in the APPe slot
  bool labeled_rem = true;      // use stage labels for the REM mask when present
};

// Missing entries (no REM, constant series, too short) are nullopt.
struct BiomarkerVector {
  std::optional<double> RB, CV, AP, SK, MDR, PR, APPe, DETRf;
  NightMetrics metrics;
};

inline constexpr std::array<const char*, 8> kBiomarkerNames{"RB", "CV", "AP", "SK", "MDR", "PR", "APPe", "DETRf"};

inline std::array<std::optional<double>, 8> biomarker_values(const BiomarkerVector& b) {
  return {b.RB, b.CV, b.AP, b.SK, b.MDR, b.PR, b.APPe, b.DETRf};
}

inline BiomarkerVector compute_biomarkers(const SdiNight& night, const BiomarkerOptions& opt = {}) {
  const std::span<const double> sdi(night.sdi);
  BiomarkerVector b;
  b.metrics = night_metrics(sdi, night.stage);
  std::vector<bool> rem;
  if (night.stage && opt.labeled_rem) {
    rem.resize(sdi.size());
    for (std::size_t i = 0; i < sdi.size(); ++i) rem[i] = (*night.stage)[i] == kRem;
  } else {
    rem = rem_mask(night.rem_prob);
  }
  auto guard = [](auto&& f) -> std::optional<double> {
    try {
      return f();
    } catch (const DataError&) {
      return std::nullopt;
    }
  };
  const std::size_t tst = b.metrics.sleep_epochs;
  b.RB = rb(sdi, opt.rb_threshold);
  b.CV = guard([&] { return cv(sdi); });
  b.AP = guard([&] { return ap(sdi, tst); });
  b.SK = guard([&] { return skewness(sdi); });
  b.MDR = mdr(sdi, rem);
  b.PR = guard([&] { return pr(rem, tst); });
  b.APPe = guard([&]() -> std::optional<double> {
    return opt.sample_entropy ? sampen(sdi, opt.apen_m, opt.apen_r) : std::optional<double>(apen(sdi, opt.apen_m, opt.apen_r));
  });
  b.DETRf = guard([&] { return dfa(sdi); });
  return b;
}

struct FeatureRow {
  std::string recording_id;
  BiomarkerVector values;
};

inline std::string opt_text(const std::optional<double>& v) { return v ? format_double(*v) : "NA"; }

inline std::string features_to_csv(const std::vector<FeatureRow>& rows) {
  std::ostringstream out;
  out << "recording_id,RB,CV,AP,SK,MDR,PR,APPe,DETRf,TST,SE,AUC\n";
  for (const auto& r : rows) {
    out << r.recording_id;
    for (const auto& v : biomarker_values(r.values)) out << "," << opt_text(v);
    out << "," << format_double(r.values.metrics.tst_minutes) << "," << format_double(r.values.metrics.se) << ","
        << format_double(r.values.metrics.auc) << "\n";
  }
  return out.str();
}

inline std::vector<FeatureRow> features_from_csv(std::string_view text) {
  const CsvTable t = parse_csv(text);
  auto value = [](const std::string& s, const char* what) -> std::optional<double> {
    if (s == "NA") return std::nullopt;
    return parse_double(s, what);
  };
  std::vector<FeatureRow> out;
  for (const auto& row : t.rows) {
    FeatureRow r;
    r.recording_id = row[t.column("recording_id")];
    std::array<std::optional<double>*, 8> slots{&r.values.RB,  &r.values.CV, &r.values.AP,   &r.values.SK,
                                                &r.values.MDR, &r.values.PR, &r.values.APPe, &r.values.DETRf};
    for (std::size_t k = 0; k < 8; ++k) *slots[k] = value(row[t.column(kBiomarkerNames[k])], kBiomarkerNames[k]);
    r.values.metrics.tst_minutes = value(row[t.column("TST")], "TST").value_or(NAN);
    r.values.metrics.se = value(row[t.column("SE")], "SE").value_or(NAN);
    r.values.metrics.auc = value(row[t.column("AUC")], "AUC").value_or(NAN);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace sdi
