// Acceptance runner: one PASS/FAIL line per criterion.
//
//   acceptance            run everything
//   acceptance 1 3 10     run a subset
//
// Exit status counts failures other than the known ones in kExpectedFailures.

#include <algorithm>
#include <array>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "json.hpp"

#include "sdi/annotator.hpp"
#include "sdi/biomarkers.hpp"
#include "sdi/checkpoint.hpp"
#include "sdi/edf.hpp"
#include "sdi/gmm.hpp"
#include "sdi/grad_check.hpp"
#include "sdi/model.hpp"
#include "sdi/ranking.hpp"
#include "sdi/rng.hpp"
#include "sdi/stats/correlation.hpp"
#include "sdi/stats/logistic.hpp"
#include "sdi/stats/roc.hpp"
#include "sdi/stats/survival.hpp"
#include "sdi/stats/tests.hpp"
#include "sdi/synth.hpp"
#include "sdi/trainer.hpp"

#ifndef SDI_CLI_PATH
#define SDI_CLI_PATH "sdi"
#endif

namespace fs = std::filesystem;
using namespace sdi;
using clk = std::chrono::steady_clock;

namespace {

// Pooled-SD Cohen's d at the given RB moments is 1.327, not 1.63.
const std::set<int> kExpectedFailures{8};

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

double seconds_since(clk::time_point t) { return std::chrono::duration<double>(clk::now() - t).count(); }

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

// ---------------------------------------------------------------- ranking

const MarginTable kChain = MarginTable::standard(MarginPolicy::kChainSum);
const MarginTable kStrict = MarginTable::standard(MarginPolicy::kStrict);
const UncertainSet kU = UncertainSet::standard();

// Margin rules restated on sorted stage pairs; -1 uncertain, -2 excluded.
double oracle_margin(int a, int b, bool chain) {
  if (a == b) return -2;
  const int lo = std::min(a, b), hi = std::max(a, b);
  if (hi == 4) return lo == 0 ? 1.2 : -1;
  static const double adj[3] = {1.0, 0.5, 1.5};
  if (hi - lo == 1) return adj[lo];
  if (!chain) return -2;
  double s = 0;
  for (int k = lo; k < hi; ++k) s += adj[k];
  return s;
}

double oracle_rank_loss(const std::vector<double>& p, const std::vector<int>& y, bool chain) {
  double total = 0;
  int count = 0;
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = i + 1; j < p.size(); ++j) {
      const double v = oracle_margin(y[i], y[j], chain);
      if (v < 0) continue;
      const double sgn = y[i] > y[j] ? 1.0 : -1.0;
      total += std::max(0.0, v - sgn * (p[i] - p[j]));
      ++count;
    }
  return count ? total / count : 0.0;
}

// Stages drawn from a random subset of the five, so single-stage, REM-only
// and no-pair batches all turn up.
std::pair<std::vector<double>, std::vector<int>> random_batch(Rng& rng, int n, bool dyadic) {
  std::vector<int> pool;
  while (pool.empty())
    for (int s = 0; s < 5; ++s)
      if (rng.bernoulli(0.6)) pool.push_back(s);
  std::vector<double> p(static_cast<std::size_t>(n));
  std::vector<int> y(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    p[i] = dyadic ? static_cast<double>(static_cast<int>(rng.below(64)) - 32) / 8.0 : 2.0 * rng.normal();
    y[i] = pool[rng.below(pool.size())];
  }
  return {p, y};
}

void ac1(Outcome& o) {
  const auto t0 = clk::now();
  Rng rng(2001);
  int mismatches = 0, no_pair = 0, with_uncertain = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(15));
    const auto [p, y] = random_batch(rng, n, false);
    for (bool chain : {true, false}) {
      const auto r = rank_loss(p, y, chain ? kChain : kStrict, kU);
      mismatches += r.value != oracle_rank_loss(p, y, chain);
      no_pair += chain && r.no_pairs;
    }
    with_uncertain += std::count(y.begin(), y.end(), kRem) > 0 && std::count(y.begin(), y.end(), kRem) < n;
  }
  const double secs = seconds_since(t0);
  o.detail << "200 batches x 2 policies, mismatches=" << mismatches << ", no-pair batches=" << no_pair
           << ", batches with REM/NREM mix=" << with_uncertain << ", " << fmt(secs, 2) << " s";
  o.check(mismatches == 0, "exact equality");
  o.check(secs < 10, "runtime < 10 s");
}

// --------------------------------------------------------------- gradients

using TD = Tensor<double>;
using VD = Var<double>;
using TpD = Tape<double>;

VD project(TpD& tape, VD x, std::uint64_t seed) {
  Rng rng(seed, 99);
  TD w(x.value().shape());
  for (auto& v : w.values()) v = rng.uniform(0.5, 1.5) * (rng.bernoulli(0.5) ? 1.0 : -1.0);
  return ops::sum(ops::mul(x, tape.constant(w)));
}

struct OpCase {
  std::string name;
  std::function<VD(TpD&, const std::vector<VD>&)> build;
  std::vector<std::vector<int>> shapes;
  bool positive = false;
};

double per_op_worst(std::string& worst) {
  const std::vector<OpCase> cases{
      {"matmul", [](TpD&, const std::vector<VD>& p) { return ops::matmul(p[0], p[1]); }, {{3, 4}, {4, 5}}},
      {"add", [](TpD&, const std::vector<VD>& p) { return ops::add(p[0], p[1]); }, {{3, 4}, {3, 4}}},
      {"sub", [](TpD&, const std::vector<VD>& p) { return ops::sub(p[0], p[1]); }, {{3, 4}, {3, 4}}},
      {"mul", [](TpD&, const std::vector<VD>& p) { return ops::mul(p[0], p[1]); }, {{3, 4}, {3, 4}}},
      {"add_row", [](TpD&, const std::vector<VD>& p) { return ops::add_row(p[0], p[1]); }, {{3, 4}, {4}}},
      {"scale", [](TpD&, const std::vector<VD>& p) { return ops::scale(p[0], -1.7); }, {{3, 4}}},
      {"reshape", [](TpD&, const std::vector<VD>& p) { return ops::reshape(p[0], {6, 2}); }, {{3, 4}}},
      {"transpose", [](TpD&, const std::vector<VD>& p) { return ops::transpose(p[0]); }, {{3, 4}}},
      {"concat_rows", [](TpD&, const std::vector<VD>& p) { return ops::concat_rows(std::vector<VD>{p[0], p[1]}); },
       {{3, 4}, {2, 4}}},
      {"concat_cols", [](TpD&, const std::vector<VD>& p) { return ops::concat_cols(std::vector<VD>{p[0], p[1]}); },
       {{3, 4}, {3, 2}}},
      {"slice_rows", [](TpD&, const std::vector<VD>& p) { return ops::slice_rows(p[0], 1, 2); }, {{4, 3}}},
      {"slice_cols", [](TpD&, const std::vector<VD>& p) { return ops::slice_cols(p[0], 1, 2); }, {{3, 4}}},
      {"gather_rows", [](TpD&, const std::vector<VD>& p) { return ops::gather_rows(p[0], {2, 0, 2, 1}); }, {{3, 4}}},
      {"softmax", [](TpD&, const std::vector<VD>& p) { return ops::softmax_rows(p[0]); }, {{3, 5}}},
      {"log_softmax", [](TpD&, const std::vector<VD>& p) { return ops::log_softmax_rows(p[0]); }, {{3, 5}}},
      {"layer_norm", [](TpD&, const std::vector<VD>& p) { return ops::layer_norm_rows(p[0], p[1], p[2]); },
       {{3, 6}, {6}, {6}}},
      {"gelu", [](TpD&, const std::vector<VD>& p) { return ops::gelu(p[0]); }, {{3, 4}}},
      {"sigmoid", [](TpD&, const std::vector<VD>& p) { return ops::sigmoid(p[0]); }, {{3, 4}}},
      {"log", [](TpD&, const std::vector<VD>& p) { return ops::log(p[0]); }, {{3, 4}}, true},
      {"relu", [](TpD&, const std::vector<VD>& p) { return ops::relu(p[0]); }, {{3, 4}}},
      {"mean", [](TpD&, const std::vector<VD>& p) { return ops::mean(p[0]); }, {{3, 4}}},
  };
  double worst_err = 0;
  for (const auto& c : cases)
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      Rng rng(seed, 17);
      std::vector<TD> params;
      for (const auto& s : c.shapes) {
        TD t(s);
        for (auto& v : t.values()) {
          v = rng.normal();
          if (c.positive) v = 0.2 + std::fabs(v);
          else if (std::fabs(v) < 0.05) v += v < 0 ? -0.1 : 0.1;
        }
        params.push_back(t);
      }
      auto f = [&](TpD& tape, const std::vector<VD>& p) { return project(tape, c.build(tape, p), seed); };
      const double e = grad_check(f, params).max_relative_error;
      if (e > worst_err) {
        worst_err = e;
        worst = c.name;
      }
    }

  // Both loss terms through the tape; wide step since the hinge is piecewise linear.
  Rng rng(2002);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(10));
    std::vector<double> p(static_cast<std::size_t>(n));
    std::vector<int> y(static_cast<std::size_t>(n)), rem(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      p[i] = 2.0 * rng.normal();
      y[i] = static_cast<int>(rng.below(5));
      rem[i] = y[i] == kRem;
    }
    for (bool moved = true; moved;) {
      moved = false;
      for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
          const PairMargin m = pair_margin(y[i], y[j], kChain, kU);
          if (m.kind == PairKind::kMargin && std::fabs(m.margin - stage_sign(y[i], y[j]) * (p[i] - p[j])) < 0.05) {
            p[i] += 0.1;
            moved = true;
          }
        }
    }
    TD lg({n, 2});
    for (auto& v : lg.values()) v = rng.normal();
    auto f = [&](TpD&, const std::vector<VD>& v) {
      return ops::add(ops::rank_loss(v[0], y, kChain, kU), ops::rem_cross_entropy(v[1], rem));
    };
    GradCheckOptions opt;
    opt.step = 1e-2;
    const double e = grad_check(f, {TD({n}, p), lg}, opt).max_relative_error;
    if (e > worst_err) {
      worst_err = e;
      worst = "rank_loss+rem_ce";
    }
  }
  return worst_err;
}

void ac2(Outcome& o) {
  const auto t0 = clk::now();
  const ModelConfig cfg = ModelConfig::desk();
  SdiModel<double> m(cfg);
  m.init(21);
  Rng rng(2003);
  // Move off the near-zero init so every block carries signal.
  for (auto& p : m.parameters())
    for (auto& v : p.value.values()) v += 0.1 * rng.normal();
  std::vector<std::vector<float>> batch;
  for (int i = 0; i < 6; ++i) {
    std::vector<float> e(static_cast<std::size_t>(cfg.channels * cfg.samples));
    for (std::size_t c = 0; c < static_cast<std::size_t>(cfg.channels); ++c)
      for (std::size_t t = 0; t < static_cast<std::size_t>(cfg.samples); ++t)
        e[c * static_cast<std::size_t>(cfg.samples) + t] = static_cast<float>(std::pow(10.0, c) * rng.normal() + c);
    batch.push_back(e);
  }
  const std::vector<int> y{0, 1, 2, 3, 4, 2};
  const std::vector<int> rem{0, 0, 0, 0, 1, 0};
  std::vector<TD> params;
  for (const auto& p : m.parameters()) params.push_back(p.value);
  auto f = [&](TpD& tape, const std::vector<VD>& w) {
    std::vector<VD> depth, logits;
    for (const auto& e : batch) {
      const auto out = m.forward(tape, w, e);
      depth.push_back(out.raw_depth);
      logits.push_back(out.rem_logits);
    }
    const VD p = ops::reshape(ops::concat_rows(depth), {6});
    return ops::add(ops::rank_loss(p, y, kChain, kU), ops::rem_cross_entropy(ops::concat_rows(logits), rem));
  };
  GradCheckOptions opt;
  opt.max_coords_per_parameter = 6;
  opt.seed = 5;
  const auto r = grad_check(f, params, opt);
  std::string worst_op;
  const double op_err = per_op_worst(worst_op);
  const double secs = seconds_since(t0);
  o.detail << "desk model, batch 6, " << r.coordinates_checked << " coords over " << params.size()
           << " tensors: max rel err " << r.max_relative_error << " (" << m.parameters()[r.worst_parameter].name
           << "); per-op max " << op_err << " (" << worst_op << "); " << fmt(secs, 1) << " s";
  o.check(r.max_relative_error < 1e-3, "model rel err < 1e-3");
  o.check(op_err < 1e-4, "per-op rel err < 1e-4");
  o.check(secs < 120, "runtime < 2 min");
}

void ac3(Outcome& o) {
  const double a = pair_penalty(0.0, 2.0, 0, 1, kChain, kU);
  const double b = pair_penalty(0.3, 0.3, 1, 2, kChain, kU);
  const double c = pair_penalty(2.0, 0.0, 3, 2, kChain, kU);
  o.detail << "examples " << a << ", " << b << ", " << c;
  o.check(a == 0.0 && b == 0.5 && c == 0.0, "hand values 0, 0.5, 0");
  Rng rng(2004);
  int broken = 0;
  for (int trial = 0; trial < 200; ++trial) {
    auto [p, y] = random_batch(rng, 2 + static_cast<int>(rng.below(15)), true);
    const double shift = static_cast<double>(static_cast<int>(rng.below(200)) - 100) / 4.0;
    std::vector<double> q(p);
    for (auto& v : q) v += shift;
    for (const MarginTable* t : {&kChain, &kStrict}) broken += rank_loss(p, y, *t, kU).value != rank_loss(q, y, *t, kU).value;
    const std::size_t i = rng.below(p.size()), j = rng.below(p.size());
    if (i != j && pair_margin(y[i], y[j], kChain, kU).kind == PairKind::kMargin)
      broken += pair_penalty(p[i], p[j], y[i], y[j], kChain, kU) != pair_penalty(q[i], q[j], y[i], y[j], kChain, kU);
  }
  o.detail << "; translation invariance violations " << broken << "/200 batches";
  o.check(broken == 0, "exact translation invariance");
}

// ------------------------------------------------------- synthetic training

struct Evaluation {
  double spearman = 0;
  std::array<double, 5> median{};
  double auroc = 0;
  stats::DecreasePairs pairs;
};

struct OrdinalRun {
  double gen_seconds = 0, train_seconds = 0, annotate_seconds = 0;
  std::size_t train_nights = 0, test_nights = 0, train_epochs = 0;
  Evaluation joint;
  std::optional<double> classification_only_auroc;
  double ablation_train_seconds = 0;
};

constexpr int kNights = 60;
constexpr int kNightEpochs = 360;
constexpr int kSteps = 1200;

double median_of(std::vector<double> v) {
  if (v.empty()) return NAN;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Evaluation evaluate(const SdiModel<float>& model, const std::vector<EpochGrid>& grids, const std::vector<std::size_t>& ids) {
  Evaluation ev;
  std::vector<double> scores;
  std::vector<int> labels;
  std::array<std::vector<double>, 5> per;
  for (std::size_t i : ids) {
    const SdiNight n = annotate_night(grids[i], model);
    ev.spearman += stats::spearman_concordance(n.sdi, *n.stage) / static_cast<double>(ids.size());
    for (std::size_t t = 0; t < n.sdi.size(); ++t) {
      scores.push_back(n.rem_prob[t]);
      labels.push_back((*n.stage)[t] == kRem);
      per[static_cast<std::size_t>((*n.stage)[t])].push_back(n.sdi[t]);
    }
    const auto pr = stats::pair_decreases(n.sdi, *n.arousal_proportion);
    ev.pairs.decrease.insert(ev.pairs.decrease.end(), pr.decrease.begin(), pr.decrease.end());
    ev.pairs.arousal.insert(ev.pairs.arousal.end(), pr.arousal.begin(), pr.arousal.end());
  }
  for (std::size_t s = 0; s < 5; ++s) ev.median[s] = median_of(per[s]);
  ev.auroc = stats::auroc(scores, labels);
  return ev;
}

TrainConfig train_config() {
  TrainConfig tc;
  tc.learning_rate = 5e-4;
  tc.batch_size = 32;
  tc.max_steps = kSteps;
  tc.seed = 1;
  return tc;
}

OrdinalRun& ordinal_run(bool with_ablation) {
  static std::optional<OrdinalRun> run;
  static std::vector<EpochGrid> grids;
  static EpochPool pool;
  static Split split;
  if (!run) {
    run.emplace();
    auto t0 = clk::now();
    split = split_recordings(kNights, {});
    grids.resize(kNights);
    for (int i = 0; i < kNights; ++i) {
      SynthProfile p;
      p.n_epochs = kNightEpochs;
      p.seed = 1000 + static_cast<std::uint64_t>(i);
      grids[static_cast<std::size_t>(i)] = night_grid(gen_night(p));
    }
    for (std::size_t i : split.train) {
      pool.append(grids[i], static_cast<int>(i));
      grids[i] = EpochGrid{};
    }
    run->gen_seconds = seconds_since(t0);
    run->train_nights = split.train.size();
    run->test_nights = split.test.size();
    run->train_epochs = pool.size();

    t0 = clk::now();
    SdiModel<float> model(ModelConfig::desk());
    model.init(1);
    train(model, pool, train_config());
    run->train_seconds = seconds_since(t0);
    t0 = clk::now();
    run->joint = evaluate(model, grids, split.test);
    run->annotate_seconds = seconds_since(t0);
  }
  if (with_ablation && !run->classification_only_auroc) {
    const auto t0 = clk::now();
    SdiModel<float> model(ModelConfig::desk());
    model.init(1);
    TrainConfig tc = train_config();
    tc.mode = parse_mode("classification_only");
    train(model, pool, tc);
    run->ablation_train_seconds = seconds_since(t0);
    run->classification_only_auroc = evaluate(model, grids, split.test).auroc;
  }
  return *run;
}

void ac4(Outcome& o) {
  const OrdinalRun& r = ordinal_run(false);
  const auto& m = r.joint.median;
  const double total = r.gen_seconds + r.train_seconds + r.annotate_seconds;
  o.detail << kNights << " nights x " << kNightEpochs << " epochs (" << r.train_nights << " train / " << r.test_nights
           << " held out), " << kSteps << " steps: held-out Spearman " << fmt(r.joint.spearman) << ", medians W "
           << fmt(m[kWake], 3) << " N1 " << fmt(m[kN1], 3) << " N2 " << fmt(m[kN2], 3) << " N3 " << fmt(m[kN3], 3)
           << " R " << fmt(m[kRem], 3) << "; " << fmt(total, 0) << " s (train " << fmt(r.train_seconds, 0) << " s)";
  o.check(r.joint.spearman >= 0.80, "Spearman >= 0.80");
  o.check(m[kWake] < m[kN1] && m[kN1] < m[kN2] && m[kN2] < m[kN3], "W < N1 < N2 < N3");
  o.check(total <= 900, "runtime <= 15 min");
}

void ac5(Outcome& o) {
  const OrdinalRun& r = ordinal_run(true);
  const double ablation = *r.classification_only_auroc;
  o.detail << "held-out REM AUROC joint " << fmt(r.joint.auroc) << ", classification_only " << fmt(ablation)
           << ", delta (joint - classification_only) " << fmt(r.joint.auroc - ablation);
  o.check(r.joint.auroc >= 0.95, "AUROC >= 0.95");
  o.check(std::isfinite(ablation), "ablation AUROC reported");
}

void ac6(Outcome& o) {
  const OrdinalRun& r = ordinal_run(false);
  const auto b = stats::decile_arousal_analysis(r.joint.pairs.decrease, r.joint.pairs.arousal, 10);
  Rng rng(2006);
  std::vector<double> d(50000), a(50000);
  for (std::size_t i = 0; i < d.size(); ++i) {
    d[i] = rng.uniform();
    a[i] = 0.1 + 0.8 * d[i] + 0.02 * rng.normal();
  }
  const auto planted = stats::decile_arousal_analysis(d, a, 10);
  const double rel = std::fabs(planted.fit.slope - 0.8) / 0.8;
  o.detail << "annotated held-out SDI: r " << fmt(b.r) << " over " << b.pairs_used << " pairs; planted slope "
           << fmt(planted.fit.slope) << " (rel err " << fmt(100 * rel, 2) << "%)";
  o.check(b.r >= 0.9, "r >= 0.9");
  o.check(rel <= 0.05, "planted slope within 5%");
}

// -------------------------------------------------------------- biomarkers

std::vector<double> white(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  std::vector<double> x(n);
  for (double& v : x) v = rng.normal();
  return x;
}

void ac7(Outcome& o) {
  const double c = apen(std::vector<double>(64, 0.3));
  std::vector<double> alt(512);
  for (std::size_t i = 0; i < alt.size(); ++i) alt[i] = static_cast<double>(i % 2);
  const double p2 = apen(alt);
  double a_white = 0, a_walk = 0, w_lo = 9, w_hi = -9, k_lo = 9, k_hi = -9;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto x = white(100 + seed, 4096);
    std::vector<double> walk(x.size());
    double acc = 0;
    for (std::size_t i = 0; i < x.size(); ++i) walk[i] = acc += x[i];
    const double aw = dfa(x), ak = dfa(walk);
    a_white += aw / 20;
    a_walk += ak / 20;
    w_lo = std::min(w_lo, aw);
    w_hi = std::max(w_hi, aw);
    k_lo = std::min(k_lo, ak);
    k_hi = std::max(k_hi, ak);
  }
  double hand = 0;
  hand = std::max(hand, std::fabs(rb(std::vector<double>{0.1, 0.3, 0.15, 0.5}) - 0.5));
  hand = std::max(hand, std::fabs(rb(std::vector<double>{0.2, 0.3, 0.9}) - 0.0));
  hand = std::max(hand, std::fabs(ap(std::vector<double>(10, 0.5), 10) - 0.5));
  hand = std::max(hand, std::fabs(ap(std::vector<double>{1, 1, 0, 0}, 4) - 0.5));
  hand = std::max(hand, std::fabs(cv(std::vector<double>(6, 0.4)) - 0.0));
  hand = std::max(hand, std::fabs(cv(std::vector<double>{1, 2, 3, 4, 5}) - std::sqrt(2.5) / 3.0));
  o.detail << "ApEn(const) " << c << ", ApEn(period 2) " << fmt(p2, 5) << ", DFA white mean " << fmt(a_white, 3)
           << " [" << fmt(w_lo, 3) << "," << fmt(w_hi, 3) << "], walk mean " << fmt(a_walk, 3) << " [" << fmt(k_lo, 3)
           << "," << fmt(k_hi, 3) << "], hand max err " << hand;
  o.check(c == 0.0, "ApEn(constant) = 0");
  o.check(p2 < 0.05, "period-2 ApEn < 0.05");
  o.check(a_white >= 0.40 && a_white <= 0.60, "white DFA in [0.40,0.60]");
  o.check(a_walk >= 1.35 && a_walk <= 1.65, "walk DFA in [1.35,1.65]");
  o.check(hand <= 1e-12, "hand examples to 1e-12");
}

void ac8(Outcome& o) {
  Rng rng(2008);
  std::vector<double> normal(1000), disturbed(1000);
  for (auto& v : normal) v = 0.32 + 0.11 * rng.normal();
  for (auto& v : disturbed) v = 0.51 + 0.17 * rng.normal();
  const double d = std::fabs(stats::cohens_d(normal, disturbed));
  const double closed = 0.19 / std::sqrt((0.11 * 0.11 + 0.17 * 0.17) / 2);
  o.detail << "Cohen's d " << fmt(d, 3) << " (population value " << fmt(closed, 3) << "), target 1.63 +/- 0.15";
  o.check(std::fabs(d - 1.63) <= 0.15, "|d - 1.63| <= 0.15");
}

// --------------------------------------------------------------------- GMM

Rows blobs(std::uint64_t seed, int per, double sep, std::vector<int>& truth) {
  Rng rng(seed);
  Rows x;
  truth.clear();
  for (int k = 0; k < 2; ++k)
    for (int i = 0; i < per; ++i) {
      std::vector<double> r(8);
      for (double& v : r) v = rng.normal() + (k == 1 ? sep : 0.0);
      x.push_back(r);
      truth.push_back(k);
    }
  return x;
}

void ac9(Outcome& o) {
  std::vector<int> truth;
  const Rows x = blobs(1, 200, 6.0 / std::sqrt(8.0), truth);
  GmmOptions opt;
  opt.seed = 3;
  const GmmModel m = fit_gmm(x, opt);
  const auto a = assign_subtypes(m, x);
  int agree = 0;
  for (std::size_t i = 0; i < x.size(); ++i) agree += (a[i].label == "disturbed") == (truth[i] == 1);
  const double acc = static_cast<double>(agree) / static_cast<double>(x.size());

  int drops = 0, iterations = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Rows y = blobs(seed, 60, 1.0, truth);
    GmmOptions o2;
    o2.seed = seed;
    o2.tol = 0;
    o2.max_iter = 200;
    const GmmModel g = fit_gmm(y, o2);
    iterations += static_cast<int>(g.log_likelihood.size());
    for (std::size_t t = 1; t < g.log_likelihood.size(); ++t) drops += g.log_likelihood[t] < g.log_likelihood[t - 1];
  }

  const Rows z = blobs(2, 50, 1.5, truth);
  GmmOptions o3;
  o3.seed = 9;
  const auto p1 = assign_subtypes(fit_gmm(z, o3), z);
  const auto p2 = assign_subtypes(fit_gmm(z, o3), z);
  bool same = p1.size() == p2.size();
  for (std::size_t i = 0; same && i < p1.size(); ++i)
    same = p1[i].posterior_disturbed == p2[i].posterior_disturbed && p1[i].label == p2[i].label;

  o.detail << "two-blob accuracy " << fmt(acc, 4) << ", LL decreases " << drops << " over " << iterations
           << " EM iterations, seeded refit identical: " << (same ? "yes" : "no");
  o.check(acc >= 0.99, "accuracy >= 0.99");
  o.check(drops == 0, "nondecreasing LL");
  o.check(same, "determinism");
}

// -------------------------------------------------------------- statistics

double brute_auroc(const std::vector<double>& s, const std::vector<int>& l) {
  double num = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (l[i] == 1 && l[j] == 0) {
        pairs += 1;
        num += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return num / pairs;
}

double enumerated_pll(const std::vector<double>& t, const std::vector<int>& e, const std::vector<double>& x, double b) {
  double ll = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!e[i]) continue;
    double s = 0;
    for (std::size_t j = 0; j < t.size(); ++j)
      if (t[j] >= t[i]) s += std::exp(b * x[j]);
    ll += b * x[i] - std::log(s);
  }
  return ll;
}

void ac10(Outcome& o) {
  Rng rng(2010);
  int auroc_mismatch = 0;
  for (int rep = 0; rep < 300; ++rep) {
    const std::size_t n = 2 + rng.below(199);
    std::vector<double> s(n);
    std::vector<int> l(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = std::round(rng.uniform() * 20) / 20;
      l[i] = rng.bernoulli(0.4);
    }
    l[0] = 0;
    l[1] = 1;
    auroc_mismatch += stats::auroc(s, l) != brute_auroc(s, l);
  }

  // 2x2 table: group 0 has 30 without / 40 with the outcome, group 1 has 20 / 10.
  std::vector<int> y, g;
  const int table[2][2] = {{30, 40}, {20, 10}};
  for (int grp = 0; grp < 2; ++grp)
    for (int out = 0; out < 2; ++out)
      for (int k = 0; k < table[grp][out]; ++k) {
        g.push_back(grp);
        y.push_back(out);
      }
  const double or_hat = stats::logistic_or(y, g, {}, 0).odds_ratio;

  const auto km = stats::km_estimate(std::vector<double>{1, 2}, std::vector<int>{1, 1});
  const bool km_ok = km.at(0.99) == 1.0 && km.at(1.0) == 0.5 && km.at(1.99) == 0.5 && km.at(2.0) == 0.0;

  const std::vector<double> t{2, 3, 5, 7, 11, 13, 17, 19};
  const std::vector<int> e{1, 1, 0, 1, 1, 1, 0, 1};
  const std::vector<double> xc{1, 0, 1, 1, 0, 1, 0, 0};
  std::vector<std::vector<double>> rows;
  for (double v : xc) rows.push_back({v});
  const auto fit = stats::cox_ph(t, e, rows);
  double best = -1e300, arg = 0;
  for (double b = -5; b <= 5; b += 1e-4) {
    const double ll = enumerated_pll(t, e, xc, b);
    if (ll > best) {
      best = ll;
      arg = b;
    }
  }

  const SynthCohort c = gen_cohort(2000, 0.5, 2024);
  std::vector<double> times;
  std::vector<int> events;
  std::vector<std::vector<double>> cox_rows;
  for (const auto& s : c.subjects) {
    times.push_back(s.time);
    events.push_back(s.event);
    cox_rows.push_back({static_cast<double>(s.disturbed), s.age, static_cast<double>(s.sex), s.bmi,
                        s.race == 1 ? 1.0 : 0.0, s.race == 2 ? 1.0 : 0.0});
  }
  const double hr = stats::cox_ph(times, events, cox_rows).hazard_ratio[0];

  o.detail << "AUROC mismatches " << auroc_mismatch << "/300, OR " << fmt(or_hat, 8) << ", KM "
           << (km_ok ? "exact" : "wrong") << ", Cox beta " << fmt(fit.beta[0], 5) << " vs grid " << fmt(arg, 5)
           << ", planted HR 1.5 -> " << fmt(hr, 3) << " (n=2000)";
  o.check(auroc_mismatch == 0, "AUROC exact");
  o.check(std::fabs(or_hat - 0.375) <= 1e-6, "OR 0.375 to 1e-6");
  o.check(km_ok, "KM hand example");
  o.check(std::fabs(fit.beta[0] - arg) <= 1e-3, "Cox beta vs grid to 1e-3");
  o.check(hr >= 1.3 && hr <= 1.7, "HR in [1.3,1.7]");
}

// --------------------------------------------------------------- CLI runs

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char ch : s) out += ch == '\'' ? std::string("'\\''") : std::string(1, ch);
  return out + "'";
}

int run_in(const fs::path& dir, const std::string& args, const std::string& log) {
  const std::string cmd = "cd " + shell_quote(dir.string()) + " && " + shell_quote(SDI_CLI_PATH) + " " + args + " >>" +
                          shell_quote(log) + " 2>&1";
  const int rc = std::system(cmd.c_str());
  return rc == -1 ? -1 : WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  return out;
}

fs::path scratch_root() {
  const fs::path p = fs::temp_directory_path() / ("sdi_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(p);
  return p;
}

struct Step {
  std::string name, args;
};

// Returns the first failing step, or empty.
std::string run_pipeline(const fs::path& dir, const std::vector<Step>& steps, const std::string& log) {
  for (const auto& s : steps) {
    const int rc = run_in(dir, s.args, log);
    if (rc != 0) return s.name + " exited " + std::to_string(rc);
  }
  return {};
}

std::vector<Step> pipeline_steps(int subjects, int epochs, int train_steps, int bootstrap) {
  const std::string n = std::to_string(subjects), ep = std::to_string(epochs), st = std::to_string(train_steps),
                    bs = std::to_string(bootstrap);
  return {
      {"synth", "synth --out data --subjects " + n + " --epochs " + ep + " --seed 7"},
      {"train", "train --data data --out model.json --log train_log.csv --steps " + st + " --seed 7"},
      {"annotate", "annotate --model model.json --data data --out-dir sdi"},
      {"features", "features --sdi-dir sdi --out features.csv"},
      {"cluster", "cluster --features features.csv --out clusters.csv --summary gmm.json --seed 7"},
      {"analyze", "analyze --sdi-dir sdi --model model.json --features features.csv --clusters clusters.csv "
                  "--subjects data/subjects.csv --out report.json --binned-out binned.csv --bootstrap " + bs},
      {"plot", "plot --sdi-dir sdi --annotations-dir data --out-dir figures"},
      {"plot-binned", "plot --binned binned.csv --out figures/arousal_deciles.svg"},
  };
}

void ac11(Outcome& o) {
  Rng rng(2011);
  int edf_bad = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng r2(seed, 11);
    Recording rec;
    rec.start_datetime = {2001, 2, 3, 4, 5, 6};
    std::vector<SignalSpec> specs;
    const int channels = 1 + static_cast<int>(r2.below(4));
    const int records = 1 + static_cast<int>(r2.below(5));
    for (int c = 0; c < channels; ++c) {
      SignalSpec s;
      s.label = "ch" + std::to_string(c);
      s.physical_min = -r2.uniform(1.0, 500.0);
      s.physical_max = r2.uniform(1.0, 500.0);
      s.samples_per_record = 1 + static_cast<int>(r2.below(256));
      Channel ch{s.label, static_cast<double>(s.samples_per_record), {}};
      for (int i = 0; i < s.samples_per_record * records; ++i) ch.samples.push_back(r2.uniform(s.physical_min, s.physical_max));
      rec.channels.push_back(ch);
      specs.push_back(s);
    }
    const auto bytes = write_edf(rec, specs);
    const EdfFile f = read_edf(bytes);
    bool ok = f.recording.channels.size() == rec.channels.size();
    for (std::size_t c = 0; ok && c < rec.channels.size(); ++c) {
      const double half = 0.5 * f.signals[c].gain() + 1e-12;
      ok = f.recording.channels[c].samples.size() == rec.channels[c].samples.size();
      for (std::size_t i = 0; ok && i < rec.channels[c].samples.size(); ++i)
        ok = std::fabs(f.recording.channels[c].samples[i] - rec.channels[c].samples[i]) <= half;
    }
    ok = ok && write_edf(f.recording, f.signals) == bytes;
    edf_bad += !ok;
  }

  SdiModel<float> m(ModelConfig::desk());
  m.init(rng());
  const Checkpoint ck = save_checkpoint(m, {{"note", "acceptance"}});
  const SdiModel<float> back = load_checkpoint(ck.manifest, ck.blob);
  bool bits = back.parameters().size() == m.parameters().size();
  for (std::size_t k = 0; bits && k < m.parameters().size(); ++k)
    for (std::size_t i = 0; bits && i < m.parameters()[k].value.size(); ++i)
      bits = std::bit_cast<std::uint32_t>(back.parameters()[k].value[i]) ==
             std::bit_cast<std::uint32_t>(m.parameters()[k].value[i]);
  bits = bits && save_checkpoint(back, {{"note", "acceptance"}}).blob == ck.blob;

  const fs::path root = scratch_root() / "ac11";
  const fs::path a = root / "run_a", b = root / "run_b";
  fs::create_directories(a);
  fs::create_directories(b);
  const std::string log = (root / "cli.log").string();
  const auto steps = pipeline_steps(10, 160, 20, 50);
  std::string failed = run_pipeline(a, steps, log);
  if (failed.empty()) failed = run_pipeline(b, steps, log);
  std::size_t files = 0;
  std::vector<std::string> differ;
  if (failed.empty()) {
    const auto ta = tree(a), tb = tree(b);
    files = ta.size();
    for (const auto& [k, v] : ta) {
      const auto it = tb.find(k);
      if (it == tb.end() || it->second != v) differ.push_back(k);
    }
    if (ta.size() != tb.size()) differ.push_back("<file set>");
  }
  o.detail << "EDF round trips bad " << edf_bad << "/20, checkpoint bit-exact " << (bits ? "yes" : "no")
           << ", CLI pipeline twice: " << (failed.empty() ? std::to_string(files) + " files, " +
                                                                std::to_string(differ.size()) + " differ"
                                                          : failed);
  for (const auto& d : differ) o.detail << " " << d;
  o.check(edf_bad == 0, "EDF round trip");
  o.check(bits, "checkpoint bit-exact");
  o.check(failed.empty(), "CLI runs succeed (log " + log + ")");
  o.check(failed.empty() && differ.empty(), "byte-identical outputs");
  if (o.pass) fs::remove_all(root);
}

void ac12(Outcome& o) {
  const fs::path root = scratch_root() / "ac12";
  fs::create_directories(root);
  const std::string log = (root / "cli.log").string();
  const auto t0 = clk::now();
  std::string failed;
  std::vector<std::pair<std::string, double>> timings;
  for (const auto& s : pipeline_steps(20, 960, 1200, 1000)) {
    const auto ts = clk::now();
    const int rc = run_in(root, s.args, log);
    timings.emplace_back(s.name, seconds_since(ts));
    if (rc != 0) {
      failed = s.name + " exited " + std::to_string(rc);
      break;
    }
  }
  const double secs = seconds_since(t0);
  o.detail << "20 subjects x 960 epochs: " << fmt(secs, 0) << " s (";
  for (std::size_t i = 0; i < timings.size(); ++i)
    o.detail << (i ? ", " : "") << timings[i].first << " " << fmt(timings[i].second, 0);
  o.detail << ")";
  o.check(failed.empty(), failed + " (log " + log + ")");
  o.check(secs <= 1200, "runtime <= 20 min");
  if (!failed.empty()) return;

  bool report_ok = false;
  try {
    const auto j = nlohmann::json::parse(slurp(root / "report.json"));
    const auto& n = j.at("nights");
    report_ok = n.at("n_nights").get<int>() > 0 && n.at("concordance").at("mean_spearman").is_number() &&
                n.at("rem_auroc").at("estimate").is_number() && n.at("arousal_correlation").at("r").is_number() &&
                j.contains("group_comparisons") && j.contains("outcomes");
    o.detail << "; report: held-out nights " << n.at("n_nights") << ", Spearman "
             << fmt(n.at("concordance").at("mean_spearman").get<double>(), 3) << ", REM AUROC "
             << fmt(n.at("rem_auroc").at("estimate").get<double>(), 3) << ", arousal r "
             << fmt(n.at("arousal_correlation").at("r").get<double>(), 3);
  } catch (const std::exception& e) {
    o.detail << "; report unreadable: " << e.what();
  }
  int svgs = 0, complete = 0;
  for (const auto& e : fs::directory_iterator(root / "figures")) {
    if (e.path().extension() != ".svg" || e.path().filename() == "arousal_deciles.svg") continue;
    ++svgs;
    const std::string s = slurp(e.path());
    complete += s.find("id=\"hypnogram\"") != std::string::npos && s.find("id=\"sdi-curve\"") != std::string::npos &&
                s.find("class=\"arousal\"") != std::string::npos;
  }
  const bool deciles = fs::exists(root / "figures" / "arousal_deciles.svg");
  o.detail << "; night SVGs " << complete << "/" << svgs << " with hypnogram, SDI curve and arousal shading";
  o.check(report_ok, "JSON report fields");
  o.check(svgs == 20 && complete == svgs, "night figures");
  o.check(deciles, "decile figure");
  if (o.pass) fs::remove_all(root);
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<int, std::function<void(Outcome&)>>> all{
      {1, ac1}, {2, ac2}, {3, ac3}, {4, ac4},  {5, ac5},   {6, ac6},
      {7, ac7}, {8, ac8}, {9, ac9}, {10, ac10}, {11, ac11}, {12, ac12},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int unexpected = 0;
  for (const auto& [id, fn] : all) {
    if (!wanted.empty() && !wanted.count(id)) continue;
    Outcome o;
    const auto t0 = clk::now();
    try {
      fn(o);
    } catch (const std::exception& e) {
      o.check(false, std::string("exception: ") + e.what());
    }
    const bool expected = kExpectedFailures.count(id) > 0;
    if (!o.pass && !expected) ++unexpected;
    std::printf("AC%d %s%s (%.1f s): %s\n", id, o.pass ? "PASS" : "FAIL", !o.pass && expected ? " [known]" : "",
                seconds_since(t0), o.detail.str().c_str());
    std::fflush(stdout);
  }
  return unexpected == 0 ? 0 : 1;
}
