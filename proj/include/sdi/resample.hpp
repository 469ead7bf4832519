#pragma once

// Sample-rate conversion to the 100 Hz model rate: 63-tap windowed-sinc
// low-pass at 0.45 * dst_rate before linear interpolation when
// downsampling, linear interpolation alone when upsampling.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "sdi/error.hpp"

namespace sdi {

inline constexpr int kAntiAliasTaps = 63;
inline constexpr double kAntiAliasCutoff = 0.45;  // fraction of dst_rate

// Hamming-windowed sinc; cutoff given in cycles per input sample.
// Taps sum to one.
inline std::vector<double> lowpass_taps(double cutoff, int taps = kAntiAliasTaps) {
  if (taps <= 0 || taps % 2 == 0) throw ArgumentError("lowpass_taps: tap count must be odd and positive");
  if (!(cutoff > 0.0 && cutoff <= 0.5)) throw ArgumentError("lowpass_taps: cutoff must be in (0, 0.5]");
  std::vector<double> h(static_cast<std::size_t>(taps));
  const int half = taps / 2;
  double sum = 0.0;
  for (int k = -half; k <= half; ++k) {
    const double x = 2.0 * cutoff * k;
    const double sinc = k == 0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
    const double window = 0.54 + 0.46 * std::cos(std::numbers::pi * k / half);
    h[static_cast<std::size_t>(k + half)] = 2.0 * cutoff * sinc * window;
    sum += h[static_cast<std::size_t>(k + half)];
  }
  for (auto& v : h) v /= sum;
  return h;
}

// Zero-phase FIR with edge replication. Filters deviations from the centre
// sample, so a constant input comes back bit-identical.
inline std::vector<double> fir_filter(std::span<const double> x, std::span<const double> taps) {
  const auto n = static_cast<long>(x.size());
  const long half = static_cast<long>(taps.size()) / 2;
  std::vector<double> y(x.size());
  for (long i = 0; i < n; ++i) {
    const double centre = x[static_cast<std::size_t>(i)];
    double acc = 0.0;
    for (long k = -half; k <= half; ++k) {
      const long j = std::clamp(i + k, 0L, n - 1);
      acc += taps[static_cast<std::size_t>(k + half)] * (x[static_cast<std::size_t>(j)] - centre);
    }
    y[static_cast<std::size_t>(i)] = centre + acc;
  }
  return y;
}

inline std::vector<double> resample(std::span<const double> samples, double src_rate, double dst_rate = 100.0) {
  if (samples.empty()) throw ArgumentError("resample: empty input");
  if (!(src_rate > 0.0) || !(dst_rate > 0.0)) throw ArgumentError("resample: rates must be positive");
  if (src_rate == dst_rate) return {samples.begin(), samples.end()};

  std::vector<double> source(samples.begin(), samples.end());
  if (dst_rate < src_rate) {
    const auto taps = lowpass_taps(kAntiAliasCutoff * dst_rate / src_rate);
    source = fir_filter(source, taps);
  }
  const auto out_len = static_cast<std::size_t>(std::llround(static_cast<double>(samples.size()) * dst_rate / src_rate));
  std::vector<double> out(out_len);
  const double step = src_rate / dst_rate;
  const std::size_t last = source.size() - 1;
  for (std::size_t k = 0; k < out_len; ++k) {
    const double pos = static_cast<double>(k) * step;
    const auto i0 = std::min(static_cast<std::size_t>(pos), last);
    const std::size_t i1 = std::min(i0 + 1, last);
    const double t = std::min(pos - static_cast<double>(i0), 1.0);
    out[k] = source[i0] + t * (source[i1] - source[i0]);
  }
  return out;
}

}  // namespace sdi
