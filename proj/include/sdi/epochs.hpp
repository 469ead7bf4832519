#pragma once

// 30-second epoching of the four study channels at 100 Hz.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "sdi/edf.hpp"
#include "sdi/error.hpp"
#include "sdi/resample.hpp"

namespace sdi {

inline constexpr int kChannels = 4;        // EEG, EOG, EMG, ECG
inline constexpr int kEpochSamples = 3000;  // 30 s at 100 Hz
inline constexpr double kModelRate = 100.0;
inline constexpr double kEpochSeconds = 30.0;

enum Stage : int { kWake = 0, kN1 = 1, kN2 = 2, kN3 = 3, kRem = 4 };
inline constexpr int kStageCount = 5;

inline const char* stage_name(int code) {
  static constexpr std::array<const char*, 5> names{"W", "N1", "N2", "N3", "R"};
  return code >= 0 && code < kStageCount ? names[static_cast<std::size_t>(code)] : "?";
}

inline bool valid_stage(int code) { return code >= 0 && code < kStageCount; }

struct ArousalEvent {
  double start = 0.0;     // seconds from recording start
  double duration = 0.0;  // seconds
};
using ArousalEvents = std::vector<ArousalEvent>;

inline void validate_arousals(const ArousalEvents& events) {
  for (const auto& e : events) {
    if (!(e.start >= 0.0)) throw DataError("arousal event with negative start");
    if (!(e.duration > 0.0)) throw DataError("arousal event with non-positive duration");
  }
}

// One epoch is channel-major: values[c * kEpochSamples + t].
using Epoch = std::vector<float>;

struct EpochGrid {
  std::vector<Epoch> epochs;
  std::optional<std::vector<int>> stage;
  std::optional<std::vector<double>> arousal_proportion;

  std::size_t size() const { return epochs.size(); }
};

// Overlap of all events with [30 i, 30 (i+1)) seconds, as a fraction of 30 s.
inline double arousal_proportion(const ArousalEvents& events, long epoch_index) {
  if (epoch_index < 0) throw ArgumentError("arousal_proportion: negative epoch index");
  const double lo = kEpochSeconds * static_cast<double>(epoch_index);
  const double hi = lo + kEpochSeconds;
  double overlap = 0.0;
  for (const auto& e : events) {
    const double a = std::max(lo, e.start);
    const double b = std::min(hi, e.start + e.duration);
    if (b > a) overlap += b - a;
  }
  return std::clamp(overlap / kEpochSeconds, 0.0, 1.0);
}

inline EpochGrid segment_epochs(const Recording& recording, const std::optional<std::vector<int>>& stages = std::nullopt,
                                const std::optional<ArousalEvents>& arousals = std::nullopt) {
  if (recording.channels.size() != kChannels)
    throw DataError("segment_epochs: expected 4 channels, got " + std::to_string(recording.channels.size()));
  const std::size_t length = recording.channels[0].samples.size();
  for (const auto& ch : recording.channels) {
    if (std::fabs(ch.sampling_rate - kModelRate) > 1e-9)
      throw DataError("segment_epochs: channel '" + ch.label + "' is not at 100 Hz");
    if (ch.samples.size() != length) throw DataError("segment_epochs: channel length mismatch");
  }
  const std::size_t n = length / kEpochSamples;
  EpochGrid grid;
  grid.epochs.resize(n, Epoch(kChannels * kEpochSamples));
  for (std::size_t e = 0; e < n; ++e) {
    for (std::size_t c = 0; c < kChannels; ++c) {
      const auto& src = recording.channels[c].samples;
      for (std::size_t t = 0; t < kEpochSamples; ++t) {
        const double v = src[e * kEpochSamples + t];
        if (!std::isfinite(v)) throw DataError("segment_epochs: non-finite sample");
        grid.epochs[e][c * kEpochSamples + t] = static_cast<float>(v);
      }
    }
  }
  if (stages) {
    if (stages->size() != n)
      throw DataError("segment_epochs: stage list length " + std::to_string(stages->size()) + " != epoch count " +
                      std::to_string(n));
    for (int s : *stages)
      if (!valid_stage(s)) throw DataError("segment_epochs: invalid stage code " + std::to_string(s));
    grid.stage = *stages;
  }
  if (arousals) {
    validate_arousals(*arousals);
    std::vector<double> props(n);
    for (std::size_t e = 0; e < n; ++e) props[e] = arousal_proportion(*arousals, static_cast<long>(e));
    grid.arousal_proportion = std::move(props);
  }
  return grid;
}

// Resamples every channel to the model rate.
inline Recording resample_recording(const Recording& recording, double dst_rate = kModelRate) {
  Recording out = recording;
  for (auto& ch : out.channels) {
    if (ch.samples.empty()) throw DataError("channel '" + ch.label + "' is empty");
    ch.samples = resample(ch.samples, ch.sampling_rate, dst_rate);
    ch.sampling_rate = dst_rate;
  }
  // Channels at different source rates can round to lengths one sample apart.
  std::size_t shortest = out.channels.empty() ? 0 : out.channels[0].samples.size();
  for (const auto& ch : out.channels) shortest = std::min(shortest, ch.samples.size());
  for (auto& ch : out.channels) ch.samples.resize(shortest);
  return out;
}

}  // namespace sdi
