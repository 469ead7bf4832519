#pragma once

// Mini-batch training of the depth and REM heads.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "sdi/autodiff.hpp"
#include "sdi/epochs.hpp"
#include "sdi/error.hpp"
#include "sdi/model.hpp"
#include "sdi/ranking.hpp"
#include "sdi/rng.hpp"

namespace sdi {

enum class TrainMode { kJoint, kClassificationOnly };

inline const char* mode_name(TrainMode m) { return m == TrainMode::kJoint ? "joint" : "classification_only"; }

inline TrainMode parse_mode(const std::string& s) {
  if (s == "joint") return TrainMode::kJoint;
  if (s == "classification_only") return TrainMode::kClassificationOnly;
  throw ArgumentError("unknown training mode '" + s + "' (expected joint or classification_only)");
}

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 32;
  int max_steps = 2000;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::kJoint;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  LossConfig loss;

  void validate() const {
    if (!(learning_rate > 0)) throw ArgumentError("learning_rate must be positive");
    if (mode == TrainMode::kJoint && batch_size < 4) throw ArgumentError("batch_size must be at least 4 in joint mode");
    if (batch_size < 1) throw ArgumentError("batch_size must be positive");
    if (max_steps < 0) throw ArgumentError("max_steps must be non-negative");
    if (loss.alpha < 0) throw ArgumentError("alpha must be non-negative");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && epsilon > 0))
      throw ArgumentError("invalid optimizer constants");
  }
};

// Labeled epochs from several recordings, kept in insertion order.
struct EpochPool {
  std::vector<Epoch> epochs;
  std::vector<int> stages;
  std::vector<int> recordings;

  std::size_t size() const { return epochs.size(); }

  void append(const EpochGrid& grid, int recording) {
    if (!grid.stage) throw DataError("training recording " + std::to_string(recording) + " has no stage labels");
    for (std::size_t i = 0; i < grid.size(); ++i) {
      epochs.push_back(grid.epochs[i]);
      stages.push_back((*grid.stage)[i]);
      recordings.push_back(recording);
    }
  }
};

struct SplitSpec {
  double train_fraction = 0.7;
  std::uint64_t seed = 0;
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Recording-level split: a seeded shuffle of recording indices, the first
// round(train_fraction * n) going to training. Both sides are nonempty when
// n >= 2.
inline Split split_recordings(std::size_t n, const SplitSpec& spec = {}) {
  if (!(spec.train_fraction > 0 && spec.train_fraction < 1)) throw ArgumentError("train_fraction must be in (0,1)");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(spec.seed, 0x5b1);
  rng.shuffle(std::span<std::size_t>(order));
  auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(n)));
  if (n >= 2) n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
  Split s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(std::min(n_train, n)));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(std::min(n_train, n)), order.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

// Stage-balanced sampling: each slot draws a stage uniformly among those
// present, then an epoch of that stage. If the draw ends up with fewer than
// two distinct non-REM stages while the pool has two, a redundant slot is
// redrawn from a missing non-REM stage. A pool with a single stage falls
// back to uniform sampling.
inline std::vector<std::size_t> stratified_batch(std::span<const int> stages, int batch_size, Rng& rng) {
  if (stages.empty()) throw ArgumentError("stratified_batch: empty pool");
  if (batch_size < 1) throw ArgumentError("stratified_batch: batch_size must be positive");
  std::array<std::vector<std::size_t>, kStageCount> by_stage;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (!valid_stage(stages[i])) throw DataError("stratified_batch: invalid stage code " + std::to_string(stages[i]));
    by_stage[static_cast<std::size_t>(stages[i])].push_back(i);
  }
  std::vector<int> present;
  for (int s = 0; s < kStageCount; ++s)
    if (!by_stage[static_cast<std::size_t>(s)].empty()) present.push_back(s);

  std::vector<std::size_t> batch(static_cast<std::size_t>(batch_size));
  if (present.size() == 1) {
    for (auto& b : batch) b = rng.below(stages.size());
    return batch;
  }
  auto draw = [&](int stage) {
    const auto& pool = by_stage[static_cast<std::size_t>(stage)];
    return pool[rng.below(pool.size())];
  };
  std::array<bool, kStageCount> seen{};
  for (auto& b : batch) {
    const int s = present[rng.below(present.size())];
    b = draw(s);
    seen[static_cast<std::size_t>(s)] = true;
  }
  std::vector<int> nonrem_missing;
  int nonrem_present = 0;
  for (int s : present) {
    if (s == kRem) continue;
    ++nonrem_present;
    if (!seen[static_cast<std::size_t>(s)]) nonrem_missing.push_back(s);
  }
  auto distinct_nonrem = [&] {
    std::array<int, kStageCount> count{};
    for (std::size_t b : batch) ++count[static_cast<std::size_t>(stages[b])];
    int d = 0;
    for (int s = 0; s < kRem; ++s) d += count[static_cast<std::size_t>(s)] > 0;
    return std::pair{d, count};
  };
  if (nonrem_present >= 2 && batch.size() >= 2) {
    for (auto [d, count] = distinct_nonrem(); d < 2; std::tie(d, count) = distinct_nonrem()) {
      // Overwrite the last slot whose stage is REM or appears more than once.
      std::size_t slot = batch.size() - 1;
      while (slot > 0) {
        const int old = stages[batch[slot]];
        if (old == kRem || count[static_cast<std::size_t>(old)] > 1) break;
        --slot;
      }
      batch[slot] = draw(nonrem_missing.back());
      nonrem_missing.pop_back();
    }
  }
  return batch;
}

struct LossRecord {
  int step = 0;
  double rank_loss = 0.0;
  double clas_loss = 0.0;
  double total = 0.0;
};

struct TrainResult {
  std::vector<LossRecord> trace;
  int no_pair_batches = 0;  // batches whose ranking term had no usable pair
};

template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m, v;
  long step = 0;

  explicit AdamState(const SdiModel<T>& model) {
    for (const auto& p : model.parameters()) {
      m.emplace_back(p.value.shape());
      v.emplace_back(p.value.shape());
    }
  }

  void update(SdiModel<T>& model, const std::vector<Tensor<T>>& grads, const TrainConfig& cfg) {
    ++step;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
    const T lr = static_cast<T>(cfg.learning_rate / c1);
    const T inv_c2 = static_cast<T>(1.0 / c2);
    const T eps = static_cast<T>(cfg.epsilon);
    auto& params = model.parameters();
    for (std::size_t k = 0; k < params.size(); ++k) {
      T* w = params[k].value.data();
      T* mk = m[k].data();
      T* vk = v[k].data();
      const T* g = grads[k].data();
      for (std::size_t i = 0; i < params[k].value.size(); ++i) {
        mk[i] = b1 * mk[i] + (T(1) - b1) * g[i];
        vk[i] = b2 * vk[i] + (T(1) - b2) * g[i] * g[i];
        w[i] -= lr * mk[i] / (std::sqrt(vk[i] * inv_c2) + eps);
      }
    }
  }
};

// Loss of one batch built on `tape`. Returns the scalar to differentiate and
// fills `record` with the component values.
template <typename T>
Var<T> batch_objective(Tape<T>& tape, const SdiModel<T>& model, const std::vector<Var<T>>& w,
                       const std::vector<const Epoch*>& epochs, std::span<const int> stages, const TrainConfig& cfg,
                       const ForwardOptions<T>& opts, LossRecord& record, bool& no_pairs) {
  const int n = static_cast<int>(epochs.size());
  std::vector<Var<T>> depth, logits;
  depth.reserve(epochs.size());
  logits.reserve(epochs.size());
  for (const Epoch* e : epochs) {
    const HeadOutput<T> out = model.forward(tape, w, *e, opts);
    depth.push_back(out.raw_depth);
    logits.push_back(out.rem_logits);
  }
  std::vector<int> is_rem(stages.size());
  for (std::size_t i = 0; i < stages.size(); ++i) is_rem[i] = stages[i] == kRem;
  const Var<T> clas = ops::rem_cross_entropy(ops::concat_rows(logits), is_rem);
  const Var<T> p = ops::reshape(ops::concat_rows(depth), {n});
  record.clas_loss = static_cast<double>(clas.value().item());
  Var<T> total;
  if (cfg.mode == TrainMode::kJoint && n >= 2) {
    std::size_t pairs = 0;
    const Var<T> rank = ops::rank_loss(p, stages, cfg.loss.table, cfg.loss.uncertain, &pairs);
    no_pairs = pairs == 0;
    record.rank_loss = static_cast<double>(rank.value().item());
    total = ops::add(rank, ops::scale(clas, static_cast<T>(cfg.loss.alpha)));
  } else {
    // The ranking term is reported but never enters the graph.
    if (n >= 2) {
      std::vector<double> pd(p.value().values().begin(), p.value().values().end());
      const RankLossResult r = rank_loss(pd, stages, cfg.loss.table, cfg.loss.uncertain);
      record.rank_loss = r.value;
      no_pairs = r.no_pairs;
    }
    total = ops::scale(clas, static_cast<T>(cfg.loss.alpha));
  }
  record.total = static_cast<double>(total.value().item());
  return total;
}

// Runs cfg.max_steps optimizer steps. `on_step` (optional) is called after
// every update with the step's loss record.
template <typename T>
TrainResult train(SdiModel<T>& model, const EpochPool& pool, const TrainConfig& cfg,
                  const std::function<void(const LossRecord&)>& on_step = {}) {
  cfg.validate();
  if (pool.size() == 0) throw DataError("training pool is empty");
  Rng sampler(cfg.seed, 0xba7c);
  Rng dropout(cfg.seed, 0xd409);
  AdamState<T> adam(model);
  TrainResult result;
  for (int step = 1; step <= cfg.max_steps; ++step) {
    const std::vector<std::size_t> idx = stratified_batch(pool.stages, cfg.batch_size, sampler);
    std::vector<const Epoch*> epochs;
    std::vector<int> stages;
    for (std::size_t i : idx) {
      epochs.push_back(&pool.epochs[i]);
      stages.push_back(pool.stages[i]);
    }
    Tape<T> tape;
    const std::vector<Var<T>> w = model.bind(tape, true);
    ForwardOptions<T> opts;
    opts.training = true;
    opts.rng = &dropout;
    LossRecord rec;
    rec.step = step;
    bool no_pairs = false;
    const Var<T> loss = batch_objective(tape, model, w, epochs, stages, cfg, opts, rec, no_pairs);
    if (!std::isfinite(rec.total))
      throw NumericError("training diverged at step " + std::to_string(step) + ": loss is " +
                         std::to_string(rec.total) + " (rank " + std::to_string(rec.rank_loss) + ", clas " +
                         std::to_string(rec.clas_loss) + ")");
    if (no_pairs) ++result.no_pair_batches;
    tape.backward(loss);
    std::vector<Tensor<T>> grads;
    grads.reserve(w.size());
    for (const auto& v : w) grads.push_back(tape.grad(v));
    adam.update(model, grads, cfg);
    result.trace.push_back(rec);
    if (on_step) on_step(rec);
  }
  return result;
}

// Loss of a fixed batch in inference mode (no dropout, no update).
template <typename T>
LossRecord evaluate_batch(const SdiModel<T>& model, const std::vector<const Epoch*>& epochs, std::span<const int> stages,
                          const TrainConfig& cfg) {
  Tape<T> tape;
  const auto w = model.bind(tape, false);
  LossRecord rec;
  bool no_pairs = false;
  batch_objective(tape, model, w, epochs, stages, cfg, ForwardOptions<T>{}, rec, no_pairs);
  return rec;
}

}  // namespace sdi
