#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "sdi/biomarkers.hpp"
#include "sdi/edf.hpp"
#include "sdi/stats/logistic.hpp"
#include "sdi/stats/survival.hpp"
#include "sdi/synth.hpp"

namespace sdi {
namespace {

SynthProfile short_profile(std::uint64_t seed, int n_epochs = 240) {
  SynthProfile p;
  p.n_epochs = n_epochs;
  p.seed = seed;
  return p;
}

std::vector<double> eeg_epoch(const SynthNight& n, std::size_t t) {
  const auto& s = n.recording.channels[0].samples;
  return {s.begin() + static_cast<long>(t * kEpochSamples), s.begin() + static_cast<long>((t + 1) * kEpochSamples)};
}

TEST(SynthProfile, Validation) {
  SynthProfile p;
  EXPECT_NO_THROW(p.validate());
  p.transitions[2][2] += 0.1;
  EXPECT_THROW(p.validate(), ArgumentError);
  p = SynthProfile{};
  p.transitions[0] = {1.2, -0.2, 0, 0, 0};
  EXPECT_THROW(p.validate(), ArgumentError);
  p = SynthProfile{};
  p.depth[3] = {0.7, 1.2};
  EXPECT_THROW(p.validate(), ArgumentError);
  p = SynthProfile{};
  p.n_epochs = 0;
  EXPECT_THROW(gen_night(p), ArgumentError);
}

TEST(GenNight, SameSeedIsBitIdentical) {
  const auto a = gen_night(short_profile(11, 60));
  const auto b = gen_night(short_profile(11, 60));
  for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(a.recording.channels[c].samples, b.recording.channels[c].samples);
  EXPECT_EQ(a.stages, b.stages);
  EXPECT_EQ(a.latent_depth, b.latent_depth);
  ASSERT_EQ(a.arousals.size(), b.arousals.size());
  for (std::size_t i = 0; i < a.arousals.size(); ++i) {
    EXPECT_EQ(a.arousals[i].start, b.arousals[i].start);
    EXPECT_EQ(a.arousals[i].duration, b.arousals[i].duration);
  }
  const auto c = gen_night(short_profile(12, 60));
  EXPECT_NE(a.recording.channels[0].samples, c.recording.channels[0].samples);
}

TEST(GenNight, ShapesAndArousalPlacement) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto n = gen_night(short_profile(seed));
    ASSERT_EQ(n.stages.size(), 240u);
    ASSERT_EQ(n.latent_depth.size(), 240u);
    ASSERT_EQ(n.recording.channels.size(), 4u);
    for (const auto& ch : n.recording.channels) {
      EXPECT_EQ(ch.sampling_rate, 100.0);
      EXPECT_EQ(ch.samples.size(), 240u * kEpochSamples);
    }
    for (double d : n.latent_depth) EXPECT_TRUE(d >= 0.0 && d <= 1.0);
    for (const auto& e : n.arousals) {
      EXPECT_GE(e.duration, 3.0);
      EXPECT_LE(e.duration, 15.0);
      const auto first = static_cast<std::size_t>(e.start / kEpochSeconds);
      const auto last = static_cast<std::size_t>(std::ceil((e.start + e.duration) / kEpochSeconds)) - 1;
      for (std::size_t t = first; t <= last; ++t) EXPECT_NE(n.stages[t], kWake) << "event at " << e.start;
    }
  }
}

TEST(GenNight, DeltaPowerOfN3ExceedsWake) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto n = gen_night(short_profile(100 + seed));
    double p3 = 0, pw = 0;
    int c3 = 0, cw = 0;
    for (std::size_t t = 0; t < n.stages.size(); ++t) {
      if (n.stages[t] != kN3 && n.stages[t] != kWake) continue;
      const auto x = eeg_epoch(n, t);
      const double p = band_power(x, 100.0, 0.5, 4.0);
      (n.stages[t] == kN3 ? p3 : pw) += p;
      ++(n.stages[t] == kN3 ? c3 : cw);
    }
    ASSERT_GT(c3, 0) << "seed " << seed;
    ASSERT_GT(cw, 0);
    EXPECT_GT(p3 / c3, pw / cw) << "seed " << seed;
  }
}

TEST(GenNight, ArousedEpochsAreShallowerThanSameStageNeighbours) {
  double aroused = 0, neighbours = 0;
  int count = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto n = gen_night(short_profile(200 + seed));
    std::vector<double> prop(n.stages.size());
    for (std::size_t t = 0; t < prop.size(); ++t) prop[t] = arousal_proportion(n.arousals, static_cast<long>(t));
    for (std::size_t t = 0; t < prop.size(); ++t) {
      if (prop[t] == 0) continue;
      double s = 0;
      int k = 0;
      for (long dt = -3; dt <= 3; ++dt) {
        const long u = static_cast<long>(t) + dt;
        if (dt == 0 || u < 0 || u >= static_cast<long>(prop.size())) continue;
        if (prop[static_cast<std::size_t>(u)] == 0 && n.stages[static_cast<std::size_t>(u)] == n.stages[t]) {
          s += n.latent_depth[static_cast<std::size_t>(u)];
          ++k;
        }
      }
      if (k == 0) continue;
      aroused += n.latent_depth[t];
      neighbours += s / k;
      ++count;
    }
  }
  ASSERT_GT(count, 50);
  EXPECT_LT(aroused / count, neighbours / count);
}

TEST(GenNight, LatentDepthIncreasesWithStage) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto n = gen_night(short_profile(300 + seed, 480));
    std::array<double, kStageCount> sum{};
    std::array<int, kStageCount> cnt{};
    for (std::size_t t = 0; t < n.stages.size(); ++t) {
      sum[static_cast<std::size_t>(n.stages[t])] += n.latent_depth[t];
      ++cnt[static_cast<std::size_t>(n.stages[t])];
    }
    for (int s = kWake; s <= kN3; ++s) ASSERT_GT(cnt[static_cast<std::size_t>(s)], 0) << "seed " << seed;
    for (int s = kWake; s < kN3; ++s)
      EXPECT_LT(sum[static_cast<std::size_t>(s)] / cnt[static_cast<std::size_t>(s)],
                sum[static_cast<std::size_t>(s + 1)] / cnt[static_cast<std::size_t>(s + 1)])
          << "seed " << seed << " stage " << s;
  }
}

TEST(GenNight, RemShowsEyeMovementsAndAtonia) {
  const auto n = gen_night(short_profile(5, 480));
  auto channel_sd = [&](std::size_t c, std::size_t t) {
    const auto& s = n.recording.channels[c].samples;
    double m = 0, v = 0;
    for (std::size_t i = 0; i < kEpochSamples; ++i) m += s[t * kEpochSamples + i];
    m /= kEpochSamples;
    for (std::size_t i = 0; i < kEpochSamples; ++i) v += std::pow(s[t * kEpochSamples + i] - m, 2);
    return std::sqrt(v / kEpochSamples);
  };
  double eog_rem = 0, eog_n2 = 0, emg_rem = 0, emg_n2 = 0;
  int cr = 0, c2 = 0;
  for (std::size_t t = 0; t < n.stages.size(); ++t) {
    if (n.stages[t] == kRem) {
      eog_rem += channel_sd(1, t), emg_rem += channel_sd(2, t), ++cr;
    } else if (n.stages[t] == kN2) {
      eog_n2 += channel_sd(1, t), emg_n2 += channel_sd(2, t), ++c2;
    }
  }
  ASSERT_GT(cr, 0);
  ASSERT_GT(c2, 0);
  EXPECT_GT(eog_rem / cr, eog_n2 / c2);
  EXPECT_LT(emg_rem / cr, emg_n2 / c2);
}

TEST(GenNight, EdfRoundTripAndGrid) {
  const auto n = gen_night(short_profile(3, 20));
  const auto bytes = night_edf(n);
  const Recording back = parse_edf(bytes);
  ASSERT_EQ(back.channels.size(), 4u);
  const Recording sel = select_channels(back, ChannelMap{});
  EXPECT_EQ(sel.channels[0].label, "EEG C4-A1");
  const auto specs = default_signal_specs(n.recording);
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t i = 0; i < n.recording.channels[c].samples.size(); i += 37)
      EXPECT_NEAR(back.channels[c].samples[i], n.recording.channels[c].samples[i], specs[c].gain() * 0.5 + 1e-9);
  const EpochGrid g = night_grid(n);
  EXPECT_EQ(g.size(), 20u);
  EXPECT_EQ(*g.stage, n.stages);
  const Annotations a = parse_annotations_json(night_annotations_json(n));
  EXPECT_EQ(*a.stages, n.stages);
  EXPECT_EQ(a.arousals.size(), n.arousals.size());
}

TEST(BandPower, SineOnABinGivesHalfSquaredAmplitude) {
  std::vector<double> x(3000);
  const double f = 2.0, amp = 7.0;  // 2 Hz is bin 60 at 30 s
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = amp * std::sin(2 * std::numbers::pi * f * static_cast<double>(i) / 100.0);
  EXPECT_NEAR(band_power(x, 100.0, 0.5, 4.0), amp * amp / 2, 1e-9);
  EXPECT_NEAR(band_power(x, 100.0, 15.0, 30.0), 0.0, 1e-9);
}

TEST(BandPower, FullBandMatchesVarianceOfOddLengthSeries) {
  // Parseval: summing every positive-frequency bin recovers the variance.
  Rng rng(4, 0);
  std::vector<double> x(1001);
  double m = 0;
  for (auto& v : x) m += (v = rng.normal());
  m /= static_cast<double>(x.size());
  double var = 0;
  for (double v : x) var += (v - m) * (v - m);
  var /= static_cast<double>(x.size());
  EXPECT_NEAR(band_power(x, 100.0, 0.0, 50.0), var, 1e-9);
}

TEST(BandNoise, UnitVariance) {
  synth_detail::BandNoise b(0.5, 4.0, 100.0, Rng(1, 0));
  double s = 0, ss = 0;
  const int n = 400000;
  for (int i = 0; i < n; ++i) {
    const double v = b();
    s += v;
    ss += v * v;
  }
  EXPECT_NEAR(ss / n - (s / n) * (s / n), 1.0, 0.08);
}

TEST(GenCohort, GroupCountsAndNegativeControl) {
  const auto c = gen_cohort(40, 0.25, 9);
  EXPECT_EQ(c.subjects.size(), 40u);
  EXPECT_EQ(std::count_if(c.subjects.begin(), c.subjects.end(), [](const Subject& s) { return s.disturbed == 1; }), 10);
  const auto none = gen_cohort(40, 0.0, 9);
  for (const auto& s : none.subjects) EXPECT_EQ(s.disturbed, 0);
  for (const auto& p : none.profiles) EXPECT_EQ(p.arousal_rate, SynthProfile{}.arousal_rate);
  EXPECT_THROW(gen_cohort(1, 0.5, 0), ArgumentError);
  EXPECT_THROW(gen_cohort(10, 1.5, 0), ArgumentError);
}

TEST(GenCohort, SubjectTableRoundTrip) {
  const auto c = gen_cohort(12, 0.5, 3);
  const auto back = subjects_from_csv(subjects_to_csv(c.subjects));
  ASSERT_EQ(back.size(), c.subjects.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].id, c.subjects[i].id);
    EXPECT_EQ(back[i].disturbed, c.subjects[i].disturbed);
    EXPECT_EQ(back[i].event, c.subjects[i].event);
    EXPECT_NEAR(back[i].time, c.subjects[i].time, 1e-9 * c.subjects[i].time);
  }
}

struct CohortColumns {
  std::vector<double> time;
  std::vector<int> event, outcome, group;
  std::vector<std::vector<double>> covariates, cox_rows;
};

CohortColumns columns(const SynthCohort& c) {
  CohortColumns k;
  for (const auto& s : c.subjects) {
    k.time.push_back(s.time);
    k.event.push_back(s.event);
    k.outcome.push_back(s.outcome);
    k.group.push_back(s.disturbed);
    const std::vector<double> cov{s.age, static_cast<double>(s.sex), s.bmi, s.race == 1 ? 1.0 : 0.0,
                                  s.race == 2 ? 1.0 : 0.0};
    k.covariates.push_back(cov);
    std::vector<double> row{static_cast<double>(s.disturbed)};
    row.insert(row.end(), cov.begin(), cov.end());
    k.cox_rows.push_back(row);
  }
  return k;
}

TEST(GenCohort, PlantedHazardRatioRecovered) {
  const auto c = gen_cohort(2000, 0.5, 2024);
  const auto k = columns(c);
  const auto fit = stats::cox_ph(k.time, k.event, k.cox_rows);
  EXPECT_GE(fit.hazard_ratio[0], 1.3);
  EXPECT_LE(fit.hazard_ratio[0], 1.7);
  EXPECT_NEAR(fit.beta[1], c.planted.age_log_hr, 0.01);
}

TEST(GenCohort, PlantedOddsRatioRecovered) {
  const auto c = gen_cohort(2000, 0.5, 2025);
  const auto k = columns(c);
  const auto r = stats::logistic_or(k.outcome, k.group, k.covariates, 0);
  EXPECT_NEAR(r.odds_ratio, 1.6, 0.2 * 1.6);
}

TEST(GenCohort, DisturbedNightsHaveShallowerProfiles) {
  // Latent depth stands in for a perfect annotator.
  const auto c = gen_cohort(12, 0.5, 77, short_profile(0, 480));
  std::array<std::vector<double>, 2> rbv, apv, cvv;
  for (std::size_t i = 0; i < c.subjects.size(); ++i) {
    const auto n = c.night(i);
    SdiNight sn;
    sn.sdi = n.latent_depth;
    sn.rem_prob.assign(n.stages.size(), 0.0);
    sn.stage = n.stages;
    const auto b = compute_biomarkers(sn);
    const auto g = static_cast<std::size_t>(c.subjects[i].disturbed);
    rbv[g].push_back(*b.RB);
    apv[g].push_back(*b.AP);
    cvv[g].push_back(*b.CV);
  }
  auto avg = [](const std::vector<double>& v) { return bio_detail::mean(v); };
  EXPECT_GT(avg(rbv[1]), avg(rbv[0]));
  EXPECT_LT(avg(apv[1]), avg(apv[0]));
  EXPECT_GT(avg(cvv[1]), avg(cvv[0]));
}

}  // namespace
}  // namespace sdi
