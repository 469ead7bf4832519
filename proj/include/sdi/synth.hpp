#pragma once

// Seeded synthetic PSG nights and cohorts with a known latent depth.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sdi/annotations.hpp"
#include "sdi/csv.hpp"
#include "sdi/edf.hpp"
#include "sdi/epochs.hpp"
#include "sdi/error.hpp"
#include "sdi/rng.hpp"

namespace sdi {

using TransitionMatrix = std::array<std::array<double, kStageCount>, kStageCount>;

struct DepthRange {
  double lo = 0.0, hi = 0.0;
  double mid() const { return 0.5 * (lo + hi); }
};

inline TransitionMatrix default_transitions() {
  //   W     N1    N2    N3    R
  return {{{0.850, 0.120, 0.020, 0.000, 0.010},
           {0.060, 0.690, 0.220, 0.000, 0.030},
           {0.005, 0.045, 0.850, 0.060, 0.040},
           {0.000, 0.010, 0.070, 0.920, 0.000},
           {0.010, 0.060, 0.040, 0.000, 0.890}}};
}

struct SynthProfile {
  int n_epochs = 960;
  TransitionMatrix transitions = default_transitions();
  std::array<DepthRange, kStageCount> depth{{{0.0, 0.1}, {0.1, 0.35}, {0.3, 0.7}, {0.7, 1.0}, {0.2, 0.6}}};
  double arousal_rate = 10.0;     // background events per hour of sleep
  double shift_arousal = 0.8;     // chance that a lightening stage change starts with an arousal
  double arousal_depression = 0.6;  // latent depth lost per unit arousal proportion
  double noise_level = 1.0;
  int onset_epochs = 10;  // wake epochs before the chain starts
  std::uint64_t seed = 0;

  void validate() const {
    if (n_epochs < 1) throw ArgumentError("synth: n_epochs must be positive");
    for (int i = 0; i < kStageCount; ++i) {
      double sum = 0.0;
      for (double p : transitions[i]) {
        if (!(p >= 0.0 && p <= 1.0)) throw ArgumentError("synth: transition probabilities must lie in [0,1]");
        sum += p;
      }
      if (std::fabs(sum - 1.0) > 1e-9)
        throw ArgumentError(std::string("synth: transition row ") + stage_name(i) + " sums to " + std::to_string(sum));
    }
    for (const auto& r : depth)
      if (!(r.lo >= 0.0 && r.lo <= r.hi && r.hi <= 1.0)) throw ArgumentError("synth: depth ranges must lie in [0,1]");
    if (!(arousal_rate >= 0.0) || !(noise_level >= 0.0) || !(arousal_depression >= 0.0))
      throw ArgumentError("synth: rates and levels must be non-negative");
    if (!(shift_arousal >= 0.0 && shift_arousal <= 1.0)) throw ArgumentError("synth: shift_arousal must lie in [0,1]");
    if (onset_epochs < 0) throw ArgumentError("synth: onset_epochs must be non-negative");
  }
};

struct SynthNight {
  Recording recording;
  std::vector<int> stages;
  ArousalEvents arousals;
  std::vector<double> latent_depth;
};

namespace synth_detail {

// RBJ band-pass, 0 dB peak gain.
class Biquad {
 public:
  Biquad(double lo, double hi, double rate) {
    const double f0 = std::sqrt(lo * hi);
    const double q = f0 / (hi - lo);
    const double w0 = 2.0 * std::numbers::pi * f0 / rate;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double a0 = 1.0 + alpha;
    b0_ = alpha / a0;
    b2_ = -alpha / a0;
    a1_ = -2.0 * std::cos(w0) / a0;
    a2_ = (1.0 - alpha) / a0;
  }

  double operator()(double x) {
    const double y = b0_ * x + b2_ * x2_ - a1_ * y1_ - a2_ * y2_;
    x2_ = x1_;
    x1_ = x;
    y2_ = y1_;
    y1_ = y;
    return y;
  }

 private:
  double b0_, b2_, a1_, a2_;
  double x1_ = 0, x2_ = 0, y1_ = 0, y2_ = 0;
};

// White noise through two cascaded band-passes, scaled to unit variance.
class BandNoise {
 public:
  BandNoise(double lo, double hi, double rate, Rng rng) : f1_(lo, hi, rate), f2_(lo, hi, rate), rng_(rng) {
    Biquad g1(lo, hi, rate), g2(lo, hi, rate);
    double energy = 0.0;
    for (int i = 0; i < 20000; ++i) {
      const double h = g2(g1(i == 0 ? 1.0 : 0.0));
      energy += h * h;
    }
    scale_ = 1.0 / std::sqrt(energy);
    for (int i = 0; i < 500; ++i) (*this)();  // settle the filter state
  }

  double operator()() { return scale_ * f2_(f1_(rng_.normal())); }

 private:
  Biquad f1_, f2_;
  Rng rng_;
  double scale_ = 1.0;
};

inline int draw_stage(const TransitionMatrix& m, int from, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (int s = 0; s < kStageCount; ++s) {
    acc += m[from][s];
    if (u < acc) return s;
  }
  for (int s = kStageCount - 1; s >= 0; --s)
    if (m[from][s] > 0) return s;
  return from;
}

inline bool overlaps(const ArousalEvents& events, double start, double duration) {
  for (const auto& e : events)
    if (start < e.start + e.duration && e.start < start + duration) return true;
  return false;
}

}  // namespace synth_detail

inline SynthNight gen_night(const SynthProfile& profile) {
  using namespace synth_detail;
  profile.validate();
  const auto n = static_cast<std::size_t>(profile.n_epochs);
  SynthNight night;

  Rng hyp(profile.seed, 1);
  night.stages.resize(n);
  int s = kWake;
  for (std::size_t t = 0; t < n; ++t) {
    if (static_cast<int>(t) >= profile.onset_epochs) s = draw_stage(profile.transitions, s, hyp);
    night.stages[t] = s;
  }

  // Position inside each stage's range follows a reflected random walk.
  Rng drift(profile.seed, 2);
  night.latent_depth.resize(n);
  double z = drift.uniform();
  for (std::size_t t = 0; t < n; ++t) {
    z += drift.normal(0.0, 0.08);
    while (z < 0.0 || z > 1.0) z = z < 0.0 ? -z : 2.0 - z;
    const DepthRange& r = profile.depth[static_cast<std::size_t>(night.stages[t])];
    night.latent_depth[t] = r.lo + (r.hi - r.lo) * z;
  }

  Rng ar(profile.seed, 3);
  for (std::size_t t = 1; t < n; ++t) {
    const int a = night.stages[t - 1], b = night.stages[t];
    const double drop = profile.depth[static_cast<std::size_t>(a)].mid() - profile.depth[static_cast<std::size_t>(b)].mid();
    if (b == kWake || drop <= 0.0 || !ar.bernoulli(profile.shift_arousal)) continue;
    const double duration = std::clamp(3.0 + 24.0 * drop, 3.0, 15.0);
    night.arousals.push_back({kEpochSeconds * static_cast<double>(t) + ar.uniform(0.0, 2.0), duration});
  }
  std::vector<std::size_t> asleep;
  for (std::size_t t = 0; t < n; ++t)
    if (night.stages[t] != kWake) asleep.push_back(t);
  if (!asleep.empty() && profile.arousal_rate > 0.0) {
    const double hours = static_cast<double>(asleep.size()) * kEpochSeconds / 3600.0;
    for (double clock = ar.exponential(profile.arousal_rate); clock < hours; clock += ar.exponential(profile.arousal_rate)) {
      const std::size_t t = asleep[ar.below(asleep.size())];
      const double duration = ar.uniform(3.0, 15.0);
      const double start = kEpochSeconds * static_cast<double>(t) + ar.uniform(0.0, kEpochSeconds - duration);
      if (!overlaps(night.arousals, start, duration)) night.arousals.push_back({start, duration});
    }
  }
  std::sort(night.arousals.begin(), night.arousals.end(),
            [](const ArousalEvent& x, const ArousalEvent& y) { return x.start < y.start; });
  std::vector<double> prop(n);
  for (std::size_t t = 0; t < n; ++t) {
    prop[t] = arousal_proportion(night.arousals, static_cast<long>(t));
    night.latent_depth[t] = std::max(0.0, night.latent_depth[t] - profile.arousal_depression * prop[t]);
  }

  constexpr double fs = kModelRate;
  const std::size_t L = kEpochSamples;
  std::vector<double> eeg(n * L), eog(n * L), emg(n * L), ecg(n * L);
  BandNoise delta(0.5, 4.0, fs, Rng(profile.seed, 10)), theta(4.0, 8.0, fs, Rng(profile.seed, 11)),
      alpha(8.0, 12.0, fs, Rng(profile.seed, 12)), sigma(12.0, 15.0, fs, Rng(profile.seed, 13)),
      beta(15.0, 30.0, fs, Rng(profile.seed, 14)), burst(16.0, 40.0, fs, Rng(profile.seed, 15)),
      emg_hf(20.0, 45.0, fs, Rng(profile.seed, 16)), emg_lf(1.0, 10.0, fs, Rng(profile.seed, 17)),
      eog_lf(0.3, 2.0, fs, Rng(profile.seed, 18)), emg_burst(20.0, 45.0, fs, Rng(profile.seed, 21));
  std::vector<char> aroused(n * L, 0);
  for (const auto& e : night.arousals) {
    const auto a = static_cast<std::size_t>(std::ceil(e.start * fs));
    const auto b = std::min(n * L, static_cast<std::size_t>(std::ceil((e.start + e.duration) * fs)));
    for (std::size_t k = a; k < b; ++k) aroused[k] = 1;
  }
  Rng white(profile.seed, 19), events(profile.seed, 20);

  for (std::size_t t = 0; t < n; ++t) {
    const int st = night.stages[t];
    const double d = night.latent_depth[t];
    const double a_delta = 5.0 + 45.0 * d;
    const double a_beta = 3.0 + 17.0 * (1.0 - d);
    const double a_alpha = st == kWake ? 20.0 : st == kN1 ? 6.0 : 3.0;
    const double a_emg = st == kRem ? 1.0 : 3.0 + 20.0 * (1.0 - d);
    for (std::size_t i = 0; i < L; ++i) {
      const std::size_t k = t * L + i;
      const double dl = delta();
      eeg[k] = a_delta * dl + 12.0 * theta() + a_alpha * alpha() + 2.0 * sigma() + a_beta * beta() +
               5.0 * profile.noise_level * white.normal();
      eog[k] = 0.3 * a_delta * dl + 8.0 * eog_lf() + 3.0 * profile.noise_level * white.normal();
      emg[k] = a_emg * emg_hf() + 2.0 * emg_lf() + profile.noise_level * white.normal();
      const double hf = burst(), hf_emg = emg_burst();
      if (aroused[k]) {
        eeg[k] += 35.0 * hf;
        emg[k] += 25.0 * hf_emg;
      }
    }
    if (st == kN2 || st == kN3) {
      const int spindles = static_cast<int>(events.below(st == kN2 ? 5 : 2));
      for (int j = 0; j < spindles; ++j) {
        const double len = events.uniform(0.5, 1.5), at = events.uniform(0.0, kEpochSeconds - len);
        const double f = events.uniform(12.0, 14.0), ph = events.uniform(0.0, 2.0 * std::numbers::pi);
        const auto i0 = static_cast<std::size_t>(at * fs), m = static_cast<std::size_t>(len * fs);
        for (std::size_t i = 0; i < m; ++i) {
          const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(m));
          eeg[t * L + i0 + i] += 25.0 * w * std::sin(2.0 * std::numbers::pi * f * static_cast<double>(i) / fs + ph);
        }
      }
    }
    if (st == kRem) {
      // Saccades: fast step away from baseline, hold, return.
      const int saccades = 3 + static_cast<int>(events.below(8));
      for (int j = 0; j < saccades; ++j) {
        const double hold = events.uniform(0.3, 1.0), at = events.uniform(0.0, kEpochSeconds - hold - 0.2);
        const double amp = (events.bernoulli(0.5) ? 1.0 : -1.0) * events.uniform(60.0, 120.0);
        for (double u = 0.0; u < hold + 0.2; u += 1.0 / fs) {
          const double shape = 0.5 * (std::tanh((u - 0.05) / 0.02) - std::tanh((u - hold - 0.05) / 0.02));
          const auto i = static_cast<std::size_t>((at + u) * fs);
          if (i < L) eog[t * L + i] += amp * shape;
        }
      }
    } else if (st == kWake) {
      const int blinks = static_cast<int>(events.below(5));
      for (int j = 0; j < blinks; ++j) {
        const double at = events.uniform(0.3, kEpochSeconds - 0.3);
        for (int i = -30; i <= 30; ++i) {
          const auto idx = static_cast<long>(at * fs) + i;
          const double u = i / fs;
          eog[t * L + static_cast<std::size_t>(idx)] += 150.0 * std::exp(-u * u / (2 * 0.05 * 0.05));
        }
      }
    } else if (st == kN1) {
      const double f = events.uniform(0.2, 0.4), ph = events.uniform(0.0, 2.0 * std::numbers::pi);
      for (std::size_t i = 0; i < L; ++i)
        eog[t * L + i] += 30.0 * std::sin(2.0 * std::numbers::pi * f * static_cast<double>(i) / fs + ph);
    }
  }

  // ECG: Gaussian R waves at a jittered, depth-dependent rate.
  Rng heart(profile.seed, 30);
  const double total = static_cast<double>(n * L) / fs;
  for (double beat = heart.uniform(0.0, 1.0); beat < total;) {
    const auto t = std::min(n - 1, static_cast<std::size_t>(beat / kEpochSeconds));
    const double rate = 62.0 + 8.0 * (1.0 - night.latent_depth[t]);
    const auto c = static_cast<long>(beat * fs);
    for (long i = std::max(0L, c - 6); i <= c + 6 && i < static_cast<long>(n * L); ++i) {
      const double u = static_cast<double>(i - c) / fs;
      ecg[static_cast<std::size_t>(i)] += 1000.0 * std::exp(-u * u / (2 * 0.015 * 0.015));
    }
    beat += 60.0 / rate + heart.normal(0.0, 0.03);
  }
  for (std::size_t k = 0; k < n * L; ++k) {
    ecg[k] += 20.0 * profile.noise_level * heart.normal();
    emg[k] += 0.05 * ecg[k];
  }

  night.recording.channels = {{"EEG C4-A1", fs, std::move(eeg)},
                              {"EOG(L)", fs, std::move(eog)},
                              {"EMG chin", fs, std::move(emg)},
                              {"ECG", fs, std::move(ecg)}};
  night.recording.patient_info = "X X X synthetic-" + std::to_string(profile.seed);
  night.recording.recording_info = "Startdate X X X synth";
  return night;
}

inline EpochGrid night_grid(const SynthNight& night) {
  return segment_epochs(night.recording, night.stages, night.arousals);
}

inline std::string night_annotations_json(const SynthNight& night) {
  Annotations a;
  a.stages = night.stages;
  a.arousals = night.arousals;
  return annotations_to_json(a);
}

inline std::vector<std::uint8_t> night_edf(const SynthNight& night) {
  const auto specs = default_signal_specs(night.recording);
  return write_edf(night.recording, specs);
}

// Mean periodogram power in [lo, hi) Hz, by direct DFT. A sine of amplitude A
// whose frequency falls on a bin inside the band contributes A^2/2.
inline double band_power(std::span<const double> x, double rate, double lo, double hi) {
  const std::size_t n = x.size();
  if (n == 0) throw ArgumentError("band_power: empty signal");
  double total = 0.0;
  const double df = rate / static_cast<double>(n);
  const auto k0 = static_cast<std::size_t>(std::ceil(lo / df));
  for (std::size_t k = std::max<std::size_t>(k0, 1); static_cast<double>(k) * df < hi && 2 * k < n; ++k) {
    double re = 0.0, im = 0.0;
    const double w = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      re += x[i] * std::cos(w * static_cast<double>(i));
      im -= x[i] * std::sin(w * static_cast<double>(i));
    }
    total += 2.0 * (re * re + im * im) / (static_cast<double>(n) * static_cast<double>(n));
  }
  return total;
}

// ---------------------------------------------------------------- cohorts

struct PlantedEffects {
  double odds_ratio = 1.6;    // disturbed vs normal, binary outcome
  double hazard_ratio = 1.5;  // disturbed vs normal, time to event
  double age_log_or = 0.02, sex_log_or = 0.2, bmi_log_or = 0.03;
  double age_log_hr = 0.03, sex_log_hr = 0.25, bmi_log_hr = 0.0;
  double outcome_intercept = -0.6;
  double baseline_hazard = 1.0 / 3000.0;  // per day
  double follow_up = 5000.0;              // days of administrative censoring
};

struct Subject {
  std::string id;
  int disturbed = 0;
  double age = 0.0;
  int sex = 0;  // 1 = male
  double bmi = 0.0;
  int race = 0;  // category code 0..2
  int outcome = 0;
  double time = 0.0;
  int event = 0;
};

struct SynthCohort {
  std::vector<Subject> subjects;
  std::vector<SynthProfile> profiles;
  PlantedEffects planted;
  std::uint64_t seed = 0;
  double disturbed_fraction = 0.0;

  SynthNight night(std::size_t i) const { return gen_night(profiles.at(i)); }
};

inline SynthProfile disturbed_profile(SynthProfile p) {
  for (auto& r : p.depth) {
    r.lo *= 0.75;
    r.hi *= 0.75;
  }
  for (auto& row : p.transitions) {
    for (auto& v : row) v *= 0.9;
    row[kWake] += 0.04;
    row[kN1] += 0.06;
  }
  p.arousal_rate *= 3.0;
  return p;
}

inline SynthCohort gen_cohort(int n_subjects, double disturbed_fraction, std::uint64_t seed,
                              const SynthProfile& base = {}, const PlantedEffects& planted = {}) {
  if (n_subjects < 2) throw ArgumentError("gen_cohort: need at least 2 subjects");
  if (!(disturbed_fraction >= 0.0 && disturbed_fraction <= 1.0))
    throw ArgumentError("gen_cohort: disturbed_fraction must lie in [0,1]");
  base.validate();
  SynthCohort c;
  c.planted = planted;
  c.seed = seed;
  c.disturbed_fraction = disturbed_fraction;
  const auto n = static_cast<std::size_t>(n_subjects);
  std::vector<int> group(n, 0);
  const auto n_dist = static_cast<std::size_t>(std::llround(disturbed_fraction * static_cast<double>(n)));
  std::fill(group.begin(), group.begin() + static_cast<long>(n_dist), 1);
  Rng rng(seed, 0xc040);
  rng.shuffle(std::span<int>(group));
  for (std::size_t i = 0; i < n; ++i) {
    Subject s;
    char id[32];
    std::snprintf(id, sizeof id, "subj%04zu", i);
    s.id = id;
    s.disturbed = group[i];
    s.age = std::clamp(rng.normal(63.0, 10.0), 40.0, 90.0);
    s.sex = rng.bernoulli(0.5) ? 1 : 0;
    s.bmi = std::clamp(rng.normal(28.0, 5.0), 16.0, 50.0);
    s.race = static_cast<int>(rng.below(3));
    const double logit = planted.outcome_intercept + std::log(planted.odds_ratio) * s.disturbed +
                         planted.age_log_or * (s.age - 63.0) + planted.sex_log_or * s.sex +
                         planted.bmi_log_or * (s.bmi - 28.0);
    s.outcome = rng.bernoulli(1.0 / (1.0 + std::exp(-logit))) ? 1 : 0;
    const double lp = std::log(planted.hazard_ratio) * s.disturbed + planted.age_log_hr * (s.age - 63.0) +
                      planted.sex_log_hr * s.sex + planted.bmi_log_hr * (s.bmi - 28.0);
    const double t_event = rng.exponential(planted.baseline_hazard * std::exp(lp));
    const double t_censor = rng.uniform(0.5, 1.0) * planted.follow_up;
    s.time = std::max(1.0, std::min(t_event, t_censor));
    s.event = t_event <= t_censor ? 1 : 0;
    SynthProfile p = s.disturbed ? disturbed_profile(base) : base;
    p.seed = splitmix64(seed ^ (0x9e3779b97f4a7c15ULL * (i + 1)));
    c.subjects.push_back(s);
    c.profiles.push_back(p);
  }
  return c;
}

inline std::string subjects_to_csv(const std::vector<Subject>& subjects) {
  std::string out = "subject_id,disturbed,age,sex,bmi,race,outcome,time,event\n";
  for (const auto& s : subjects)
    out += s.id + "," + std::to_string(s.disturbed) + "," + format_double(s.age) + "," + std::to_string(s.sex) + "," +
           format_double(s.bmi) + "," + std::to_string(s.race) + "," + std::to_string(s.outcome) + "," +
           format_double(s.time) + "," + std::to_string(s.event) + "\n";
  return out;
}

inline std::vector<Subject> subjects_from_csv(std::string_view text) {
  const CsvTable t = parse_csv(text);
  std::vector<Subject> out;
  for (const auto& row : t.rows) {
    Subject s;
    s.id = row[t.column("subject_id")];
    auto num = [&](const char* name) { return parse_double(row[t.column(name)], name); };
    auto flag = [&](const char* name) { return static_cast<int>(parse_long(row[t.column(name)], name)); };
    s.disturbed = t.has_column("disturbed") ? flag("disturbed") : 0;
    s.age = num("age");
    s.sex = flag("sex");
    s.bmi = num("bmi");
    s.race = flag("race");
    s.outcome = flag("outcome");
    s.time = num("time");
    s.event = flag("event");
    out.push_back(s);
  }
  return out;
}

inline nlohmann::json planted_json(const PlantedEffects& p) {
  return {{"odds_ratio", p.odds_ratio},     {"hazard_ratio", p.hazard_ratio}, {"age_log_or", p.age_log_or},
          {"sex_log_or", p.sex_log_or},     {"bmi_log_or", p.bmi_log_or},     {"age_log_hr", p.age_log_hr},
          {"sex_log_hr", p.sex_log_hr},     {"bmi_log_hr", p.bmi_log_hr},     {"outcome_intercept", p.outcome_intercept},
          {"baseline_hazard", p.baseline_hazard}, {"follow_up", p.follow_up}};
}

inline std::string ground_truth_json(const SynthNight& night, const SynthProfile& profile) {
  nlohmann::json doc;
  doc["seed"] = profile.seed;
  doc["n_epochs"] = profile.n_epochs;
  doc["arousal_rate"] = profile.arousal_rate;
  doc["latent_depth"] = night.latent_depth;
  doc["stages"] = night.stages;
  return doc.dump(1) + "\n";
}

}  // namespace sdi
