// sdi: synth | train | annotate | features | cluster | analyze | plot
//
// Exit codes: 0 success, 1 usage, 2 data, 3 numeric failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sdi/annotator.hpp"
#include "sdi/biomarkers.hpp"
#include "sdi/checkpoint.hpp"
#include "sdi/gmm.hpp"
#include "sdi/io.hpp"
#include "sdi/pipeline.hpp"
#include "sdi/svg.hpp"
#include "sdi/synth.hpp"
#include "sdi/trainer.hpp"

namespace {

using namespace sdi;
using nlohmann::json;

void add_channel_flags(CLI::App* cmd, ChannelMap& map) {
  cmd->add_option("--eeg", map.eeg_label, "EEG label pattern (case-insensitive substring)");
  cmd->add_option("--eog", map.eog_label, "EOG label pattern");
  cmd->add_option("--emg", map.emg_label, "EMG label pattern");
  cmd->add_option("--ecg", map.ecg_label, "ECG label pattern");
}

// Every option of a subcommand with its effective value, for the report.
json echo_flags(const CLI::App* cmd) {
  json out = json::object();
  for (const CLI::Option* opt : cmd->get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name.empty()) continue;
    if (opt->count() > 0) {
      const auto& r = opt->results();
      out[name] = r.size() == 1 ? json(r[0]) : json(r);
    } else {
      out[name] = opt->get_default_str();
    }
  }
  return out;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------- synth

struct SynthArgs {
  std::string out;
  int subjects = 20;
  double disturbed_fraction = 0.3;
  int epochs = 960;
  double arousal_rate = 10.0;
  double noise = 1.0;
  std::uint64_t seed = 0;
  bool force = false;
};

void run_synth(const SynthArgs& a) {
  SynthProfile base;
  base.n_epochs = a.epochs;
  base.arousal_rate = a.arousal_rate;
  base.noise_level = a.noise;
  const SynthCohort cohort = gen_cohort(a.subjects, a.disturbed_fraction, a.seed, base);
  const fs::path dir(a.out);
  json manifest;
  manifest["seed"] = a.seed;
  manifest["n_subjects"] = a.subjects;
  manifest["disturbed_fraction"] = a.disturbed_fraction;
  manifest["n_epochs"] = a.epochs;
  manifest["planted"] = planted_json(cohort.planted);
  manifest["subjects"] = json::array();
  for (std::size_t i = 0; i < cohort.subjects.size(); ++i) {
    const auto& s = cohort.subjects[i];
    const SynthNight night = cohort.night(i);
    write_file_atomic((dir / (s.id + ".edf")).string(), night_edf(night), a.force);
    write_file_atomic((dir / (s.id + ".json")).string(), night_annotations_json(night), a.force);
    write_file_atomic((dir / (s.id + ".truth.json")).string(), ground_truth_json(night, cohort.profiles[i]), a.force);
    manifest["subjects"].push_back({{"id", s.id}, {"disturbed", s.disturbed}, {"seed", cohort.profiles[i].seed}});
  }
  write_file_atomic((dir / "subjects.csv").string(), subjects_to_csv(cohort.subjects), a.force);
  write_file_atomic((dir / "cohort.json").string(), dump(manifest), a.force);
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string data, out, log;
  int steps = 1200;
  int batch = 32;
  double lr = 5e-4;
  double alpha = 1.0;
  std::string mode = "joint";
  std::string margin_policy = "chain_sum";
  std::string size = "desk";
  double train_fraction = 0.7;
  std::uint64_t seed = 0;
  bool force = false;
  ChannelMap channels;
};

void run_train(const TrainArgs& a) {
  for (const std::string& p : {a.out, a.out + ".bin"})
    if (!a.force && fs::exists(p)) throw ArgumentError("refusing to overwrite '" + p + "' (pass --force)");
  if (!a.log.empty() && !a.force && fs::exists(a.log))
    throw ArgumentError("refusing to overwrite '" + a.log + "' (pass --force)");
  const auto recs = list_recordings(a.data);
  SplitSpec spec;
  spec.train_fraction = a.train_fraction;
  spec.seed = a.seed;
  const Split split = split_recordings(recs.size(), spec);
  EpochPool pool;
  json train_ids = json::array(), test_ids = json::array();
  for (std::size_t i : split.train) {
    if (!recs[i].annotations) throw DataError("train: recording '" + recs[i].id + "' has no annotation sidecar");
    pool.append(load_night(recs[i].edf, recs[i].annotations, a.channels), static_cast<int>(i));
    train_ids.push_back(recs[i].id);
  }
  for (std::size_t i : split.test) test_ids.push_back(recs[i].id);

  ModelConfig mc = a.size == "paper" ? ModelConfig::paper() : ModelConfig::desk();
  if (a.size != "paper" && a.size != "desk") throw ArgumentError("--size must be desk or paper");
  SdiModel<float> model(mc);
  model.init(a.seed);
  TrainConfig tc;
  tc.max_steps = a.steps;
  tc.batch_size = a.batch;
  tc.learning_rate = a.lr;
  tc.seed = a.seed;
  tc.mode = parse_mode(a.mode);
  tc.loss.alpha = a.alpha;
  if (a.margin_policy == "strict")
    tc.loss.table = MarginTable::standard(MarginPolicy::kStrict);
  else if (a.margin_policy != "chain_sum")
    throw ArgumentError("--margin-policy must be chain_sum or strict");
  std::string log = "step,rank_loss,clas_loss,total\n";
  const TrainResult res = train(model, pool, tc, [&](const LossRecord& r) {
    log += std::to_string(r.step) + "," + format_double(r.rank_loss) + "," + format_double(r.clas_loss) + "," +
           format_double(r.total) + "\n";
  });
  json meta;
  meta["train_ids"] = train_ids;
  meta["test_ids"] = test_ids;
  meta["steps"] = a.steps;
  meta["batch"] = a.batch;
  meta["learning_rate"] = a.lr;
  meta["alpha"] = a.alpha;
  meta["mode"] = mode_name(tc.mode);
  meta["margin_policy"] = a.margin_policy;
  meta["seed"] = a.seed;
  meta["train_fraction"] = a.train_fraction;
  meta["train_epochs"] = pool.size();
  meta["no_pair_batches"] = res.no_pair_batches;
  if (!res.trace.empty()) meta["final_loss"] = res.trace.back().total;
  write_checkpoint(a.out, model, a.force, meta);
  if (!a.log.empty()) write_file_atomic(a.log, log, a.force);
}

// ---------------------------------------------------------------- annotate

struct AnnotateArgs {
  std::string model, input, annotations, out, data, out_dir;
  bool force = false;
  ChannelMap channels;
};

void run_annotate(const AnnotateArgs& a) {
  const bool single = !a.input.empty();
  if (single == !a.data.empty()) throw ArgumentError("annotate: give either --input or --data");
  if (single && a.out.empty()) throw ArgumentError("annotate: --input needs --out");
  if (!single && a.out_dir.empty()) throw ArgumentError("annotate: --data needs --out-dir");
  const SdiModel<float> model = read_checkpoint(a.model);
  auto one = [&](const std::string& edf, const std::optional<std::string>& side, const std::string& out) {
    if (!a.force && fs::exists(out)) throw ArgumentError("refusing to overwrite '" + out + "' (pass --force)");
    const EpochGrid grid = load_night(edf, side, a.channels);
    write_file_atomic(out, night_to_csv(annotate_night(grid, model)), a.force);
  };
  if (single) {
    one(a.input, a.annotations.empty() ? std::nullopt : std::optional<std::string>(a.annotations), a.out);
    return;
  }
  for (const auto& r : list_recordings(a.data))
    one(r.edf, r.annotations, (fs::path(a.out_dir) / (r.id + kSdiSuffix)).string());
}

// ---------------------------------------------------------------- features

struct FeatureArgs {
  std::string sdi_dir, out;
  std::vector<std::string> sdi;
  double rb_threshold = kShallowThreshold;
  int apen_m = 2;
  double apen_r = 0.2;
  bool sample_entropy = false;
  bool predicted_rem = false;
  bool force = false;
};

void run_features(const FeatureArgs& a) {
  std::vector<NamedNight> nights;
  if (!a.sdi_dir.empty()) nights = load_sdi_dir(a.sdi_dir);
  for (const auto& p : a.sdi) {
    std::string id = fs::path(p).filename().string();
    if (id.size() > std::string(kSdiSuffix).size() && id.ends_with(kSdiSuffix))
      id.resize(id.size() - std::string(kSdiSuffix).size());
    nights.push_back({id, night_from_csv(read_text_file(p))});
  }
  if (nights.empty()) throw ArgumentError("features: give --sdi-dir or --sdi");
  BiomarkerOptions opt;
  opt.rb_threshold = a.rb_threshold;
  opt.apen_m = a.apen_m;
  opt.apen_r = a.apen_r;
  opt.sample_entropy = a.sample_entropy;
  opt.labeled_rem = !a.predicted_rem;
  std::vector<FeatureRow> rows;
  for (const auto& n : nights) rows.push_back({n.id, compute_biomarkers(n.night, opt)});
  write_file_atomic(a.out, features_to_csv(rows), a.force);
}

// ---------------------------------------------------------------- cluster

struct ClusterArgs {
  std::string features, out, summary;
  int components = 2;
  std::string covariance = "full";
  int max_iter = 500;
  std::uint64_t seed = 0;
  bool force = false;
};

void run_cluster(const ClusterArgs& a) {
  if (!a.summary.empty() && !a.force && fs::exists(a.summary))
    throw ArgumentError("refusing to overwrite '" + a.summary + "' (pass --force)");
  const auto rows = features_from_csv(read_text_file(a.features));
  std::vector<std::vector<std::optional<double>>> raw;
  std::vector<std::string> ids;
  for (const auto& r : rows) {
    const auto v = biomarker_values(r.values);
    raw.emplace_back(v.begin(), v.end());
    ids.push_back(r.recording_id);
  }
  const Rows x = impute_median(raw);
  GmmOptions opt;
  opt.components = a.components;
  opt.max_iter = a.max_iter;
  opt.seed = a.seed;
  if (a.covariance == "diagonal")
    opt.covariance = CovarianceType::kDiagonal;
  else if (a.covariance != "full")
    throw ArgumentError("--covariance must be full or diagonal");
  const GmmModel m = fit_gmm(x, opt);
  write_file_atomic(a.out, assignments_to_csv(ids, assign_subtypes(m, x)), a.force);
  if (!a.summary.empty()) {
    json s;
    s["components"] = a.components;
    s["weights"] = m.weights;
    s["disturbed_component"] = m.disturbed;
    s["iterations"] = m.iterations;
    s["converged"] = m.converged;
    s["log_likelihood"] = m.log_likelihood;
    json means = json::array();
    for (const auto& mu : m.means) means.push_back(m.scale.invert(std::vector<double>(mu.data(), mu.data() + mu.size())));
    s["means"] = means;
    s["features"] = kBiomarkerNames;
    write_file_atomic(a.summary, dump(s), a.force);
  }
}

// ---------------------------------------------------------------- analyze

struct AnalyzeArgs {
  std::string sdi_dir, model, features, clusters, subjects, out, binned_out;
  AnalyzeOptions opt;
  std::string negative = "exclude";
  bool force = false;
};

void run_analyze(const AnalyzeArgs& a, const CLI::App* cmd) {
  if (!a.binned_out.empty() && !a.force && fs::exists(a.binned_out))
    throw ArgumentError("refusing to overwrite '" + a.binned_out + "' (pass --force)");
  if (!a.force && fs::exists(a.out)) throw ArgumentError("refusing to overwrite '" + a.out + "' (pass --force)");
  AnalyzeOptions opt = a.opt;
  if (a.negative == "clamp")
    opt.negative = stats::NegativeDecrease::kClamp;
  else if (a.negative != "exclude")
    throw ArgumentError("--negative must be exclude or clamp");
  if (opt.offset != 0 && opt.offset != 1) throw ArgumentError("--offset must be 0 or 1");

  std::vector<NamedNight> nights = load_sdi_dir(a.sdi_dir);
  json report;
  report["flags"] = echo_flags(cmd);
  if (!a.model.empty()) {
    const json meta = checkpoint_metadata(read_text_file(a.model));
    if (meta.contains("test_ids")) {
      const auto keep = meta["test_ids"].get<std::vector<std::string>>();
      std::erase_if(nights, [&](const NamedNight& n) { return std::find(keep.begin(), keep.end(), n.id) == keep.end(); });
      if (nights.empty()) throw DataError("analyze: none of the model's held-out recordings are in '" + a.sdi_dir + "'");
      report["evaluated_ids"] = "held_out";
    }
  }
  try {
    report["nights"] = night_statistics(nights, opt);
  } catch (const DataError& e) {
    throw DataError(std::string("analyze (night statistics): ") + e.what());
  }

  GroupMap groups;
  std::string source;
  if (!a.clusters.empty()) {
    groups = groups_from_clusters_csv(read_text_file(a.clusters));
    source = "clusters";
  }
  std::vector<Subject> subjects;
  if (!a.subjects.empty()) {
    subjects = subjects_from_csv(read_text_file(a.subjects));
    if (groups.empty()) {
      for (const auto& s : subjects) groups[s.id] = s.disturbed;
      source = "subject_table";
    }
  }
  if (!groups.empty()) report["group_source"] = source;
  if (!a.features.empty() && !groups.empty()) {
    try {
      report["group_comparisons"] = group_comparisons(features_from_csv(read_text_file(a.features)), groups);
    } catch (const DataError& e) {
      throw DataError(std::string("analyze (group comparisons): ") + e.what());
    }
  }
  if (!subjects.empty()) {
    try {
      report["outcomes"] = outcome_statistics(subjects, groups, opt);
    } catch (const DataError& e) {
      throw DataError(std::string("analyze (outcomes): ") + e.what());
    }
  }
  write_file_atomic(a.out, dump(report), a.force);
  const json& ac = report["nights"]["arousal_correlation"];
  if (!a.binned_out.empty() && ac.contains("bins")) write_file_atomic(a.binned_out, binned_to_csv(ac), a.force);
}

// ---------------------------------------------------------------- plot

struct PlotArgs {
  std::string sdi, stages, out, sdi_dir, annotations_dir, out_dir, binned, title;
  bool force = false;
};

SdiNight night_with_sidecar(SdiNight n, const std::string& sidecar) {
  const Annotations a = load_annotations(sidecar);
  if (a.stages) {
    if (a.stages->size() != n.n_epochs())
      throw DataError("plot: sidecar has " + std::to_string(a.stages->size()) + " stages for " +
                      std::to_string(n.n_epochs()) + " epochs");
    n.stage = a.stages;
  }
  if (!a.arousals.empty() || !n.arousal_proportion) {
    std::vector<double> p(n.n_epochs());
    for (std::size_t t = 0; t < p.size(); ++t) p[t] = arousal_proportion(a.arousals, static_cast<long>(t));
    n.arousal_proportion = p;
  }
  return n;
}

void run_plot(const PlotArgs& a) {
  if (!a.binned.empty()) {
    if (a.out.empty()) throw ArgumentError("plot: --binned needs --out");
    write_file_atomic(a.out, decile_svg(binned_from_csv(read_text_file(a.binned)), a.title), a.force);
    return;
  }
  if (!a.sdi.empty()) {
    if (a.out.empty()) throw ArgumentError("plot: --sdi needs --out");
    SdiNight n = night_from_csv(read_text_file(a.sdi));
    if (!a.stages.empty()) n = night_with_sidecar(std::move(n), a.stages);
    NightPlotOptions o;
    o.title = a.title;
    write_file_atomic(a.out, night_svg(n, o), a.force);
    return;
  }
  if (a.sdi_dir.empty() || a.out_dir.empty()) throw ArgumentError("plot: give --binned, --sdi, or --sdi-dir with --out-dir");
  for (const auto& [id, night] : load_sdi_dir(a.sdi_dir)) {
    SdiNight n = night;
    if (!a.annotations_dir.empty()) {
      const fs::path side = fs::path(a.annotations_dir) / (id + ".json");
      if (fs::exists(side)) n = night_with_sidecar(std::move(n), side.string());
    }
    NightPlotOptions o;
    o.title = id;
    write_file_atomic((fs::path(a.out_dir) / (id + ".svg")).string(), night_svg(n, o), a.force);
  }
}

int fail(const std::string& cmd, const std::exception& e, int code) {
  std::cerr << "sdi" << (cmd.empty() ? "" : " " + cmd) << ": error: " << e.what() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sleep depth index pipeline"};
  app.set_config("--config", "", "TOML file of option values; [subcommand] sections apply to that subcommand");
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic cohort (EDF + sidecars + subject table)");
  synth->add_option("--out", sa.out, "Output directory")->required();
  synth->add_option("--subjects", sa.subjects, "Number of subjects")->check(CLI::Range(2, 100000));
  synth->add_option("--disturbed-fraction", sa.disturbed_fraction, "Fraction of disturbed sleepers")->check(CLI::Range(0.0, 1.0));
  synth->add_option("--epochs", sa.epochs, "Epochs per night")->check(CLI::PositiveNumber);
  synth->add_option("--arousal-rate", sa.arousal_rate, "Background arousals per hour of sleep");
  synth->add_option("--noise", sa.noise, "Noise level");
  synth->add_option("--seed", sa.seed, "Seed");
  synth->add_flag("--force", sa.force, "Overwrite existing outputs");

  TrainArgs ta;
  auto* trn = app.add_subcommand("train", "Train the depth/REM model on labelled recordings");
  trn->add_option("--data", ta.data, "Directory of <id>.edf + <id>.json")->required()->check(CLI::ExistingDirectory);
  trn->add_option("--out", ta.out, "Checkpoint path (weights go to PATH.bin)")->required();
  trn->add_option("--log", ta.log, "Per-step loss CSV");
  trn->add_option("--steps", ta.steps, "Optimizer steps")->check(CLI::NonNegativeNumber);
  trn->add_option("--batch", ta.batch, "Batch size")->check(CLI::PositiveNumber);
  trn->add_option("--lr", ta.lr, "Adam learning rate");
  trn->add_option("--alpha", ta.alpha, "Weight of the REM classification loss");
  trn->add_option("--mode", ta.mode, "joint or classification_only")->check(CLI::IsMember({"joint", "classification_only"}));
  trn->add_option("--margin-policy", ta.margin_policy, "chain_sum or strict");
  trn->add_option("--size", ta.size, "Model size preset: desk or paper");
  trn->add_option("--train-fraction", ta.train_fraction, "Fraction of recordings used for training")
      ->check(CLI::Range(0.0, 1.0));
  trn->add_option("--seed", ta.seed, "Seed");
  trn->add_flag("--force", ta.force, "Overwrite existing outputs");
  add_channel_flags(trn, ta.channels);

  AnnotateArgs aa;
  auto* ann = app.add_subcommand("annotate", "Score every epoch of one night or a directory of nights");
  ann->add_option("--model", aa.model, "Checkpoint")->required()->check(CLI::ExistingFile);
  ann->add_option("--input", aa.input, "EDF file")->check(CLI::ExistingFile);
  ann->add_option("--annotations", aa.annotations, "Sidecar (JSON or stage CSV)")->check(CLI::ExistingFile);
  ann->add_option("--out", aa.out, "Output CSV");
  ann->add_option("--data", aa.data, "Directory of recordings")->check(CLI::ExistingDirectory);
  ann->add_option("--out-dir", aa.out_dir, "Output directory for <id>.sdi.csv");
  ann->add_flag("--force", aa.force, "Overwrite existing outputs");
  add_channel_flags(ann, aa.channels);

  FeatureArgs fa;
  auto* feat = app.add_subcommand("features", "Per-night biomarkers from SDI series");
  feat->add_option("--sdi-dir", fa.sdi_dir, "Directory of <id>.sdi.csv")->check(CLI::ExistingDirectory);
  feat->add_option("--sdi", fa.sdi, "SDI CSV files")->check(CLI::ExistingFile);
  feat->add_option("--out", fa.out, "Feature CSV")->required();
  feat->add_option("--rb-threshold", fa.rb_threshold, "Shallow-sleep threshold");
  feat->add_option("--apen-m", fa.apen_m, "Entropy embedding dimension");
  feat->add_option("--apen-r", fa.apen_r, "Entropy tolerance factor");
  feat->add_flag("--sample-entropy", fa.sample_entropy, "Report sample entropy instead of ApEn");
  feat->add_flag("--predicted-rem", fa.predicted_rem, "Use the REM head even when labels exist");
  feat->add_flag("--force", fa.force, "Overwrite existing outputs");

  ClusterArgs ca;
  auto* clu = app.add_subcommand("cluster", "Gaussian-mixture subtyping of feature rows");
  clu->add_option("--features", ca.features, "Feature CSV")->required()->check(CLI::ExistingFile);
  clu->add_option("--out", ca.out, "Assignment CSV")->required();
  clu->add_option("--summary", ca.summary, "Model summary JSON");
  clu->add_option("--components", ca.components, "Mixture components")->check(CLI::Range(1, 20));
  clu->add_option("--covariance", ca.covariance, "full or diagonal");
  clu->add_option("--max-iter", ca.max_iter, "EM iteration cap")->check(CLI::PositiveNumber);
  clu->add_option("--seed", ca.seed, "Seed");
  clu->add_flag("--force", ca.force, "Overwrite existing outputs");

  AnalyzeArgs na;
  auto* ana = app.add_subcommand("analyze", "Statistics report (JSON)");
  ana->add_option("--sdi-dir", na.sdi_dir, "Directory of <id>.sdi.csv")->required()->check(CLI::ExistingDirectory);
  ana->add_option("--model", na.model, "Checkpoint; restricts night statistics to its held-out recordings")
      ->check(CLI::ExistingFile);
  ana->add_option("--features", na.features, "Feature CSV")->check(CLI::ExistingFile);
  ana->add_option("--clusters", na.clusters, "Assignment CSV")->check(CLI::ExistingFile);
  ana->add_option("--subjects", na.subjects, "Subject table CSV")->check(CLI::ExistingFile);
  ana->add_option("--out", na.out, "Report JSON")->required();
  ana->add_option("--binned-out", na.binned_out, "Binned decrease/arousal CSV");
  ana->add_option("--offset", na.opt.offset, "Pair the decrease at t with arousal at t + offset (0 or 1)");
  ana->add_option("--n-bins", na.opt.n_bins, "Decrease bins over [0,1]")->check(CLI::Range(2, 1000));
  ana->add_option("--negative", na.negative, "Negative decreases: exclude or clamp");
  ana->add_option("--bootstrap", na.opt.bootstrap, "Bootstrap replicates")->check(CLI::NonNegativeNumber);
  ana->add_option("--confidence", na.opt.confidence, "Interval level")->check(CLI::Range(0.5, 0.999));
  ana->add_option("--seed", na.opt.seed, "Seed");
  ana->add_flag("--force", na.force, "Overwrite existing outputs");

  PlotArgs pa;
  auto* plt = app.add_subcommand("plot", "Whole-night SVG figures or the binned arousal plot");
  plt->add_option("--sdi", pa.sdi, "SDI CSV")->check(CLI::ExistingFile);
  plt->add_option("--stages", pa.stages, "Sidecar with stages and arousals")->check(CLI::ExistingFile);
  plt->add_option("--out", pa.out, "SVG path");
  plt->add_option("--sdi-dir", pa.sdi_dir, "Directory of <id>.sdi.csv")->check(CLI::ExistingDirectory);
  plt->add_option("--annotations-dir", pa.annotations_dir, "Directory of <id>.json sidecars")->check(CLI::ExistingDirectory);
  plt->add_option("--out-dir", pa.out_dir, "Directory for <id>.svg");
  plt->add_option("--binned", pa.binned, "Binned CSV from analyze --binned-out")->check(CLI::ExistingFile);
  plt->add_option("--title", pa.title, "Figure title");
  plt->add_flag("--force", pa.force, "Overwrite existing outputs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  std::string cmd;
  try {
    if (synth->parsed()) cmd = "synth", run_synth(sa);
    else if (trn->parsed()) cmd = "train", run_train(ta);
    else if (ann->parsed()) cmd = "annotate", run_annotate(aa);
    else if (feat->parsed()) cmd = "features", run_features(fa);
    else if (clu->parsed()) cmd = "cluster", run_cluster(ca);
    else if (ana->parsed()) cmd = "analyze", run_analyze(na, ana);
    else if (plt->parsed()) cmd = "plot", run_plot(pa);
  } catch (const ArgumentError& e) {
    return fail(cmd, e, 1);
  } catch (const NumericError& e) {
    return fail(cmd, e, 3);
  } catch (const DataError& e) {
    return fail(cmd, e, 2);
  } catch (const FormatError& e) {
    return fail(cmd, e, 2);
  } catch (const std::exception& e) {
    return fail(cmd, e, 2);
  }
  return 0;
}
