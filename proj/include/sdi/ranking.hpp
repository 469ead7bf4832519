#pragma once

// Pairwise margin-ranking loss over stage labels, REM cross-entropy, and the
// combined objective.
//
// For a pair with labels (y_i, y_j) and margin V the penalty is
//   P = max(0, V - sgn(y_i - y_j) * (p_i - p_j)),
// i.e. the deeper-labelled sample must out-score the shallower one by V.
// W/N1/N2/N3 follow the ordinal chain; W vs REM has its own margin; REM vs
// N1/N2/N3 pairs are uncertain and masked out; equal labels are excluded.

#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "sdi/autodiff.hpp"
#include "sdi/epochs.hpp"
#include "sdi/error.hpp"

namespace sdi {

enum class MarginPolicy {
  kChainSum,  // non-adjacent W/N pairs get the sum of adjacent margins
  kStrict,    // only the four listed pair types carry a margin
};

struct MarginTable {
  // NaN marks "no direct entry".
  std::array<std::array<double, kStageCount>, kStageCount> entries{};
  MarginPolicy policy = MarginPolicy::kChainSum;

  static MarginTable standard(MarginPolicy policy = MarginPolicy::kChainSum) {
    MarginTable t;
    for (auto& row : t.entries) row.fill(std::numeric_limits<double>::quiet_NaN());
    auto set = [&](int i, int j, double v) {
      t.entries[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = v;
      t.entries[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = v;
    };
    set(kWake, kN1, 1.0);
    set(kN1, kN2, 0.5);
    set(kN2, kN3, 1.5);
    set(kWake, kRem, 1.2);
    t.policy = policy;
    return t;
  }

  double direct(int i, int j) const { return entries[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]; }
};

struct UncertainSet {
  std::array<std::array<bool, kStageCount>, kStageCount> pairs{};

  static UncertainSet standard() {
    UncertainSet u;
    for (int s : {kN1, kN2, kN3}) {
      u.pairs[static_cast<std::size_t>(s)][kRem] = true;
      u.pairs[kRem][static_cast<std::size_t>(s)] = true;
    }
    return u;
  }

  bool contains(int i, int j) const { return pairs[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]; }
  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& row : pairs)
      for (bool b : row) n += b;
    return n;
  }
};

struct LossConfig {
  double alpha = 1.0;  // weight on the REM classification term
  MarginTable table = MarginTable::standard();
  UncertainSet uncertain = UncertainSet::standard();
};

enum class PairKind { kMargin, kUncertain, kExcluded };

struct PairMargin {
  PairKind kind = PairKind::kExcluded;
  double margin = 0.0;
};

inline PairMargin pair_margin(int yi, int yj, const MarginTable& table,
                              const UncertainSet& uncertain = UncertainSet::standard()) {
  if (!valid_stage(yi) || !valid_stage(yj))
    throw ArgumentError("pair_margin: invalid stage code (" + std::to_string(yi) + "," + std::to_string(yj) + ")");
  if (yi == yj) return {PairKind::kExcluded, 0.0};
  if (uncertain.contains(yi, yj)) return {PairKind::kUncertain, 0.0};
  const double v = table.direct(yi, yj);
  if (!std::isnan(v)) return {PairKind::kMargin, v};
  const bool ordinal = yi != kRem && yj != kRem;
  if (ordinal && table.policy == MarginPolicy::kChainSum) {
    const int lo = std::min(yi, yj);
    const int hi = std::max(yi, yj);
    double total = 0.0;
    for (int s = lo; s < hi; ++s) {
      const double step = table.direct(s, s + 1);
      if (std::isnan(step)) return {PairKind::kExcluded, 0.0};
      total += step;
    }
    return {PairKind::kMargin, total};
  }
  return {PairKind::kExcluded, 0.0};
}

inline double stage_sign(int yi, int yj) { return yi > yj ? 1.0 : (yi < yj ? -1.0 : 0.0); }

inline double pair_penalty(double pi, double pj, int yi, int yj, const MarginTable& table,
                           const UncertainSet& uncertain = UncertainSet::standard()) {
  const PairMargin m = pair_margin(yi, yj, table, uncertain);
  if (m.kind != PairKind::kMargin) throw ArgumentError("pair_penalty: pair has no margin (uncertain or excluded)");
  return std::max(0.0, m.margin - stage_sign(yi, yj) * (pi - pj));
}

// Per-batch pair structure: margin, sign and mask matrices over all i < j.
struct PairPlan {
  int n = 0;
  std::vector<double> margin;  // n*n, row-major
  std::vector<double> sign;
  std::vector<unsigned char> active;
  std::size_t pair_count = 0;

  PairPlan(std::span<const int> y, const MarginTable& table, const UncertainSet& uncertain)
      : n(static_cast<int>(y.size())),
        margin(y.size() * y.size(), 0.0),
        sign(y.size() * y.size(), 0.0),
        active(y.size() * y.size(), 0) {
    // One lookup per stage pair, then broadcast.
    std::array<std::array<PairMargin, kStageCount>, kStageCount> lut{};
    for (int a = 0; a < kStageCount; ++a)
      for (int b = 0; b < kStageCount; ++b)
        lut[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] = pair_margin(a, b, table, uncertain);
    for (int s : y)
      if (!valid_stage(s)) throw ArgumentError("rank_loss: invalid stage code " + std::to_string(s));
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        const auto& m = lut[static_cast<std::size_t>(y[static_cast<std::size_t>(i)])]
                           [static_cast<std::size_t>(y[static_cast<std::size_t>(j)])];
        const std::size_t k = static_cast<std::size_t>(i) * n + j;
        if (m.kind != PairKind::kMargin) continue;
        active[k] = 1;
        margin[k] = m.margin;
        sign[k] = stage_sign(y[static_cast<std::size_t>(i)], y[static_cast<std::size_t>(j)]);
        ++pair_count;
      }
    }
  }
};

struct RankLossResult {
  double value = 0.0;
  std::size_t pair_count = 0;
  bool no_pairs = false;  // every pair was uncertain or excluded; value is 0
};

inline RankLossResult rank_loss(std::span<const double> p, std::span<const int> y, const MarginTable& table,
                                const UncertainSet& uncertain = UncertainSet::standard()) {
  if (p.size() != y.size()) throw ArgumentError("rank_loss: prediction/label length mismatch");
  if (p.size() < 2) throw ArgumentError("rank_loss: batch size must be at least 2");
  const PairPlan plan(y, table, uncertain);
  RankLossResult r;
  r.pair_count = plan.pair_count;
  if (plan.pair_count == 0) {
    r.no_pairs = true;
    return r;
  }
  const int n = plan.n;
  // Penalty matrix, then a row-major sum over the upper triangle.
  std::vector<double> penalty(plan.margin.size(), 0.0);
  for (std::size_t k = 0; k < penalty.size(); ++k) {
    if (!plan.active[k]) continue;
    const std::size_t i = k / static_cast<std::size_t>(n);
    const std::size_t j = k % static_cast<std::size_t>(n);
    penalty[k] = std::max(0.0, plan.margin[k] - plan.sign[k] * (p[i] - p[j]));
  }
  double total = 0.0;
  for (std::size_t k = 0; k < penalty.size(); ++k) total += penalty[k];
  r.value = total / static_cast<double>(plan.pair_count);
  return r;
}

inline double rem_cross_entropy(std::span<const std::array<double, 2>> logits, std::span<const int> is_rem) {
  if (logits.empty()) throw ArgumentError("rem_cross_entropy: empty batch");
  if (logits.size() != is_rem.size()) throw ArgumentError("rem_cross_entropy: length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double m = std::max(logits[i][0], logits[i][1]);
    const double tail = std::log1p(std::exp(-std::fabs(logits[i][0] - logits[i][1])));
    total += (m - logits[i][is_rem[i] ? 1 : 0]) + tail;
  }
  return total / static_cast<double>(logits.size());
}

struct CombinedLoss {
  double rank = 0.0;
  double clas = 0.0;
  double total = 0.0;
  bool no_pairs = false;
};

inline CombinedLoss combined_loss(std::span<const double> p, std::span<const int> y,
                                  std::span<const std::array<double, 2>> logits, std::span<const int> is_rem,
                                  const LossConfig& cfg) {
  if (cfg.alpha < 0) throw ArgumentError("combined_loss: alpha must be non-negative");
  if (logits.size() != p.size()) throw ArgumentError("combined_loss: inconsistent batch sizes");
  const RankLossResult r = rank_loss(p, y, cfg.table, cfg.uncertain);
  CombinedLoss out;
  out.rank = r.value;
  out.no_pairs = r.no_pairs;
  out.clas = rem_cross_entropy(logits, is_rem);
  out.total = out.rank + cfg.alpha * out.clas;
  return out;
}

namespace ops {

// Tape version of rank_loss over a length-n prediction vector.
template <typename T>
Var<T> rank_loss(Var<T> p, std::span<const int> y, const MarginTable& table, const UncertainSet& uncertain,
                 std::size_t* pair_count = nullptr) {
  Tape<T>& tape = *p.tape;
  const Tensor<T>& pv = tape.value(p);
  if (pv.size() != y.size()) throw ArgumentError("rank_loss: prediction/label length mismatch");
  if (pv.size() < 2) throw ArgumentError("rank_loss: batch size must be at least 2");
  PairPlan plan(y, table, uncertain);
  if (pair_count) *pair_count = plan.pair_count;
  const int n = plan.n;
  T total = 0;
  std::vector<T> hinge_sign(plan.margin.size(), T(0));  // d penalty / d p_i for active hinges
  for (std::size_t k = 0; k < plan.margin.size(); ++k) {
    if (!plan.active[k]) continue;
    const std::size_t i = k / static_cast<std::size_t>(n);
    const std::size_t j = k % static_cast<std::size_t>(n);
    const T s = static_cast<T>(plan.sign[k]);
    const T slack = static_cast<T>(plan.margin[k]) - s * (pv[i] - pv[j]);
    if (slack > 0) {
      total += slack;
      hinge_sign[k] = -s;
    }
  }
  const T count = static_cast<T>(plan.pair_count);
  const T value = plan.pair_count ? total / count : T(0);
  const int pid = p.id;
  return tape.push(Tensor<T>::scalar(value), {pid},
                   [pid, n, count, hinge_sign = std::move(hinge_sign)](Tape<T>& t, int self) {
                     if (count == 0) return;
                     const T g = t.grad_ref(self).item() / count;
                     Tensor<T> gp(t.value(pid).shape());
                     for (std::size_t k = 0; k < hinge_sign.size(); ++k) {
                       if (hinge_sign[k] == 0) continue;
                       gp[k / static_cast<std::size_t>(n)] += g * hinge_sign[k];
                       gp[k % static_cast<std::size_t>(n)] -= g * hinge_sign[k];
                     }
                     t.accumulate(pid, gp);
                   },
                   "rank_loss");
}

// Mean negative log-likelihood of the true class over B x 2 logits.
template <typename T>
Var<T> rem_cross_entropy(Var<T> logits, std::span<const int> is_rem) {
  Tape<T>& tape = *logits.tape;
  const Tensor<T>& lv = tape.value(logits);
  if (lv.rank() != 2 || lv.cols() != 2) throw ArgumentError("rem_cross_entropy: logits must be B x 2");
  if (static_cast<std::size_t>(lv.rows()) != is_rem.size() || is_rem.empty())
    throw ArgumentError("rem_cross_entropy: length mismatch or empty batch");
  Tensor<T> onehot(lv.shape());
  for (std::size_t i = 0; i < is_rem.size(); ++i) onehot(static_cast<int>(i), is_rem[i] ? 1 : 0) = T(1);
  Var<T> picked = mul(log_softmax_rows(logits), tape.constant(std::move(onehot)));
  return scale(sum(picked), T(-1) / static_cast<T>(is_rem.size()));
}

}  // namespace ops
}  // namespace sdi
