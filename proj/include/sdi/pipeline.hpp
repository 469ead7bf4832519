#pragma once

// File-level pipeline steps shared by the command-line tool and the tests:
// loading nights, batch annotation, and the JSON analysis report.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sdi/annotations.hpp"
#include "sdi/annotator.hpp"
#include "sdi/biomarkers.hpp"
#include "sdi/csv.hpp"
#include "sdi/edf.hpp"
#include "sdi/epochs.hpp"
#include "sdi/error.hpp"
#include "sdi/io.hpp"
#include "sdi/stats/correlation.hpp"
#include "sdi/stats/logistic.hpp"
#include "sdi/stats/roc.hpp"
#include "sdi/stats/survival.hpp"
#include "sdi/stats/tests.hpp"
#include "sdi/synth.hpp"

namespace sdi {

namespace fs = std::filesystem;

// JSON sidecar by default; a .csv path is read as an epoch_index,stage table.
inline Annotations load_annotations(const std::string& path) {
  const std::string text = read_text_file(path);
  if (fs::path(path).extension() == ".csv") {
    Annotations a;
    a.stages = parse_stage_csv(text);
    return a;
  }
  return parse_annotations_json(text);
}

inline EpochGrid load_night(const std::string& edf_path, const std::optional<std::string>& annotation_path,
                            const ChannelMap& map = {}) {
  const Recording raw = parse_edf(read_binary_file(edf_path));
  const Recording rec = resample_recording(select_channels(raw, map));
  if (!annotation_path) return segment_epochs(rec);
  const Annotations a = load_annotations(*annotation_path);
  return segment_epochs(rec, a.stages, a.arousals);
}

struct RecordingFiles {
  std::string id;
  std::string edf;
  std::optional<std::string> annotations;
};

// Every <id>.edf in `dir`, sorted by id, paired with <id>.json when present.
inline std::vector<RecordingFiles> list_recordings(const std::string& dir) {
  if (!fs::is_directory(dir)) throw DataError("'" + dir + "' is not a directory");
  std::vector<RecordingFiles> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".edf") continue;
    RecordingFiles r;
    r.id = entry.path().stem().string();
    r.edf = entry.path().string();
    const fs::path side = entry.path().parent_path() / (r.id + ".json");
    if (fs::exists(side)) r.annotations = side.string();
    out.push_back(r);
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  if (out.empty()) throw DataError("no .edf files in '" + dir + "'");
  return out;
}

struct NamedNight {
  std::string id;
  SdiNight night;
};

inline constexpr const char* kSdiSuffix = ".sdi.csv";

inline std::vector<NamedNight> load_sdi_dir(const std::string& dir) {
  if (!fs::is_directory(dir)) throw DataError("'" + dir + "' is not a directory");
  std::vector<NamedNight> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    const std::string suffix = kSdiSuffix;
    if (name.size() <= suffix.size() || name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) continue;
    out.push_back({name.substr(0, name.size() - suffix.size()), night_from_csv(read_text_file(entry.path().string()))});
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  if (out.empty()) throw DataError("no *.sdi.csv files in '" + dir + "'");
  return out;
}

// ---------------------------------------------------------------- analysis

struct AnalyzeOptions {
  int offset = 0;
  int n_bins = 10;
  stats::NegativeDecrease negative = stats::NegativeDecrease::kExclude;
  int bootstrap = 1000;
  std::uint64_t seed = 0;
  double confidence = 0.95;
};

namespace report_detail {

inline nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

template <typename F>
nlohmann::json guarded(F&& f) {
  try {
    return f();
  } catch (const NumericError& e) {
    return {{"error", e.what()}};
  } catch (const DataError& e) {
    return {{"error", e.what()}};
  }
}

}  // namespace report_detail

inline nlohmann::json night_statistics(const std::vector<NamedNight>& nights, const AnalyzeOptions& opt) {
  using namespace report_detail;
  nlohmann::json out;
  out["n_nights"] = nights.size();

  nlohmann::json per_night = nlohmann::json::array();
  double sum = 0;
  std::size_t counted = 0;
  std::vector<double> scores, dec, aro;
  std::vector<int> labels, subjects;
  std::array<std::vector<double>, kStageCount> by_stage;
  for (std::size_t i = 0; i < nights.size(); ++i) {
    const auto& [id, n] = nights[i];
    if (n.stage) {
      double rho = NAN;
      try {
        rho = stats::spearman_concordance(n.sdi, *n.stage);
        sum += rho;
        ++counted;
      } catch (const DataError&) {
      }
      per_night.push_back({{"id", id}, {"spearman", finite_or_null(rho)}});
      for (std::size_t t = 0; t < n.n_epochs(); ++t) {
        scores.push_back(n.rem_prob[t]);
        labels.push_back((*n.stage)[t] == kRem ? 1 : 0);
        subjects.push_back(static_cast<int>(i));
        by_stage[static_cast<std::size_t>((*n.stage)[t])].push_back(n.sdi[t]);
      }
    }
    if (n.arousal_proportion) {
      const auto p = stats::pair_decreases(n.sdi, *n.arousal_proportion, opt.offset);
      dec.insert(dec.end(), p.decrease.begin(), p.decrease.end());
      aro.insert(aro.end(), p.arousal.begin(), p.arousal.end());
    }
  }
  if (counted == 0) throw DataError("analyze: no night has stage labels usable for concordance");
  out["concordance"] = {{"mean_spearman", sum / static_cast<double>(counted)}, {"n_nights", counted}, {"per_night", per_night}};

  nlohmann::json medians;
  for (int s = 0; s < kStageCount; ++s)
    medians[stage_name(s)] = by_stage[static_cast<std::size_t>(s)].empty()
                                 ? nlohmann::json()
                                 : nlohmann::json(median(by_stage[static_cast<std::size_t>(s)]));
  out["stage_median_sdi"] = medians;

  out["rem_auroc"] = guarded([&]() -> nlohmann::json {
    const double a = stats::auroc(scores, labels);
    const auto ci = stats::auroc_bootstrap_ci(scores, labels, subjects, opt.bootstrap, opt.seed, opt.confidence);
    const auto pos = std::count(labels.begin(), labels.end(), 1);
    return {{"estimate", a},
            {"ci", {finite_or_null(ci.low), finite_or_null(ci.high)}},
            {"replicates", ci.replicates},
            {"n_rem", pos},
            {"n_other", static_cast<long>(labels.size()) - pos}};
  });

  if (dec.empty()) {
    out["arousal_correlation"] = {{"error", "no arousal annotations"}};
  } else {
    out["arousal_correlation"] = guarded([&]() -> nlohmann::json {
      const auto b = stats::decile_arousal_analysis(dec, aro, opt.n_bins, opt.negative, opt.confidence);
      nlohmann::json bins = nlohmann::json::array();
      for (const auto& x : b.bins)
        bins.push_back({{"lo", x.lo},
                        {"hi", x.hi},
                        {"count", x.count},
                        {"mean_decrease", finite_or_null(x.mean_decrease)},
                        {"mean_arousal", finite_or_null(x.mean_arousal)},
                        {"ci_low", finite_or_null(x.ci_low)},
                        {"ci_high", finite_or_null(x.ci_high)}});
      return {{"n_bins", b.n_bins},           {"offset", opt.offset},
              {"pairs_used", b.pairs_used},   {"pairs_excluded", b.pairs_excluded},
              {"slope", b.fit.slope},         {"intercept", b.fit.intercept},
              {"r", finite_or_null(b.r)},     {"bins", bins}};
    });
  }
  return out;
}

// Binned rows of an arousal_correlation block, for plotting.
inline std::string binned_to_csv(const nlohmann::json& block) {
  std::string out = "lo,hi,count,mean_decrease,mean_arousal,ci_low,ci_high\n";
  auto cell = [](const nlohmann::json& v) { return v.is_null() ? std::string("NA") : format_double(v.get<double>()); };
  for (const auto& b : block.at("bins"))
    out += cell(b["lo"]) + "," + cell(b["hi"]) + "," + std::to_string(b["count"].get<std::size_t>()) + "," +
           cell(b["mean_decrease"]) + "," + cell(b["mean_arousal"]) + "," + cell(b["ci_low"]) + "," + cell(b["ci_high"]) +
           "\n";
  return out;
}

inline stats::BinnedCorrelation binned_from_csv(std::string_view text) {
  const CsvTable t = parse_csv(text);
  stats::BinnedCorrelation b;
  auto val = [](const std::string& s) { return s == "NA" ? NAN : parse_double(s); };
  std::vector<double> x, y;
  for (const auto& row : t.rows) {
    stats::Bin bin;
    bin.lo = val(row[t.column("lo")]);
    bin.hi = val(row[t.column("hi")]);
    bin.count = static_cast<std::size_t>(parse_long(row[t.column("count")]));
    bin.mean_decrease = val(row[t.column("mean_decrease")]);
    bin.mean_arousal = val(row[t.column("mean_arousal")]);
    bin.ci_low = val(row[t.column("ci_low")]);
    bin.ci_high = val(row[t.column("ci_high")]);
    bin.empty = bin.count == 0;
    if (!bin.empty) {
      x.push_back(bin.mean_decrease);
      y.push_back(bin.mean_arousal);
    }
    b.bins.push_back(bin);
  }
  b.n_bins = static_cast<int>(b.bins.size());
  if (x.size() >= 2) {
    b.fit = stats::least_squares(x, y);
    try {
      b.r = stats::pearson(x, y);
    } catch (const DataError&) {
    }
  }
  return b;
}

// Group labels keyed by recording id: 1 = disturbed.
using GroupMap = std::map<std::string, int>;

inline GroupMap groups_from_clusters_csv(std::string_view text) {
  const CsvTable t = parse_csv(text);
  GroupMap g;
  for (const auto& row : t.rows) g[row[t.column("recording_id")]] = row[t.column("label")] == "disturbed" ? 1 : 0;
  return g;
}

inline nlohmann::json group_comparisons(const std::vector<FeatureRow>& features, const GroupMap& groups) {
  using namespace report_detail;
  nlohmann::json out;
  for (std::size_t k = 0; k < kBiomarkerNames.size(); ++k) {
    std::array<std::vector<double>, 2> v;
    for (const auto& r : features) {
      const auto it = groups.find(r.recording_id);
      if (it == groups.end()) continue;
      const auto x = biomarker_values(r.values)[k];
      if (x && std::isfinite(*x)) v[static_cast<std::size_t>(it->second)].push_back(*x);
    }
    out[kBiomarkerNames[k]] = guarded([&]() -> nlohmann::json {
      const auto t = stats::welch_t(v[0], v[1]);
      const auto m0 = stats::moments(v[0]), m1 = stats::moments(v[1]);
      return {{"n", {v[0].size(), v[1].size()}},
              {"mean", {m0.mean, m1.mean}},
              {"sd", {std::sqrt(m0.var), std::sqrt(m1.var)}},
              {"t", t.t},
              {"df", t.df},
              {"p", t.p},
              {"cohens_d", stats::cohens_d(v[0], v[1])}};
    });
  }
  return out;
}

// Covariate columns age, sex, bmi and race indicators; constant columns are
// dropped so small cohorts stay estimable.
inline std::vector<std::vector<double>> adjustment_covariates(const std::vector<Subject>& s, std::vector<std::string>& names) {
  std::vector<std::vector<double>> cols(5);
  const char* all[] = {"age", "sex", "bmi", "race1", "race2"};
  for (const auto& x : s) {
    cols[0].push_back(x.age);
    cols[1].push_back(x.sex);
    cols[2].push_back(x.bmi);
    cols[3].push_back(x.race == 1);
    cols[4].push_back(x.race == 2);
  }
  std::vector<std::size_t> keep;
  for (std::size_t j = 0; j < cols.size(); ++j)
    if (std::any_of(cols[j].begin(), cols[j].end(), [&](double v) { return v != cols[j][0]; })) keep.push_back(j);
  names.clear();
  for (std::size_t j : keep) names.push_back(all[j]);
  std::vector<std::vector<double>> rows(s.size());
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j : keep) rows[i].push_back(cols[j][i]);
  return rows;
}

inline nlohmann::json outcome_statistics(const std::vector<Subject>& all, const GroupMap& groups, const AnalyzeOptions& opt) {
  using namespace report_detail;
  std::vector<Subject> s;
  std::vector<int> g;
  for (const auto& x : all) {
    const auto it = groups.find(x.id);
    if (it == groups.end()) continue;
    s.push_back(x);
    g.push_back(it->second);
  }
  nlohmann::json out;
  out["n"] = {std::count(g.begin(), g.end(), 0), std::count(g.begin(), g.end(), 1)};
  if (s.size() < 4) throw DataError("analyze: fewer than 4 subjects matched to a group");
  std::vector<int> outcome, event;
  std::vector<double> time;
  for (const auto& x : s) {
    outcome.push_back(x.outcome);
    event.push_back(x.event);
    time.push_back(x.time);
  }
  std::vector<std::string> names;
  const auto cov = adjustment_covariates(s, names);
  out["covariates"] = names;

  out["chi_square"] = guarded([&]() -> nlohmann::json {
    std::array<std::array<double, 2>, 2> tab{};
    for (std::size_t i = 0; i < s.size(); ++i) tab[static_cast<std::size_t>(g[i])][static_cast<std::size_t>(outcome[i])] += 1;
    const auto c = stats::chi_square_2x2(tab);
    return {{"table", tab}, {"statistic", c.statistic}, {"p", c.p}};
  });
  auto or_block = [&](const std::vector<std::vector<double>>& c) {
    return guarded([&]() -> nlohmann::json {
      const auto r = stats::logistic_or(outcome, g, c, opt.bootstrap, opt.seed, opt.confidence);
      return {{"odds_ratio", r.odds_ratio},
              {"ci", {finite_or_null(r.ci.low), finite_or_null(r.ci.high)}},
              {"replicates", r.ci.replicates},
              {"n", r.n}};
    });
  };
  out["odds_ratio"] = {{"unadjusted", or_block({})}, {"adjusted", or_block(cov)}};

  nlohmann::json km;
  for (int grp = 0; grp < 2; ++grp) {
    std::vector<double> tt;
    std::vector<int> ee;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (g[i] == grp) {
        tt.push_back(time[i]);
        ee.push_back(event[i]);
      }
    km[grp ? "disturbed" : "normal"] = guarded([&]() -> nlohmann::json {
      if (tt.empty()) throw DataError("empty group");
      const auto k = stats::km_estimate(tt, ee);
      nlohmann::json median_time;
      for (std::size_t j = 0; j < k.survival.size(); ++j)
        if (k.survival[j] <= 0.5) {
          median_time = k.times[j];
          break;
        }
      return {{"n", tt.size()},
              {"events", std::count(ee.begin(), ee.end(), 1)},
              {"median_time", median_time},
              {"final_survival", k.survival.empty() ? 1.0 : k.survival.back()}};
    });
  }
  out["kaplan_meier"] = km;
  out["logrank"] = guarded([&]() -> nlohmann::json {
    const auto r = stats::logrank(time, event, g);
    return {{"statistic", r.statistic}, {"p", r.p}, {"observed_disturbed", r.observed_1}, {"expected_disturbed", r.expected_1}};
  });
  auto cox_block = [&](bool adjusted) {
    return guarded([&]() -> nlohmann::json {
      std::vector<std::vector<double>> rows(s.size());
      for (std::size_t i = 0; i < s.size(); ++i) {
        rows[i].push_back(g[i]);
        if (adjusted) rows[i].insert(rows[i].end(), cov[i].begin(), cov[i].end());
      }
      const auto f = stats::cox_ph(time, event, rows, stats::CoxTies::kBreslow, 100, 1e-8, opt.confidence);
      return {{"hazard_ratio", f.hazard_ratio[0]}, {"ci", {f.ci_low[0], f.ci_high[0]}}, {"se", f.se[0]}};
    });
  };
  out["cox"] = {{"unadjusted", cox_block(false)}, {"adjusted", cox_block(true)}};
  return out;
}

}  // namespace sdi
