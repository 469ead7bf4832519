#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "sdi/annotator.hpp"
#include "sdi/checkpoint.hpp"
#include "sdi/trainer.hpp"

namespace sdi {
namespace {

ModelConfig tiny() {
  ModelConfig c;
  c.channels = 2;
  c.samples = 16;
  c.patch = 4;
  c.dim = 8;
  c.depth = 1;
  c.heads = 2;
  c.mlp_dim = 12;
  c.dropout = 0.1;
  return c;
}

// Toy epochs whose oscillation frequency rises with the stage code.
Epoch toy_epoch(Rng& rng, const ModelConfig& cfg, int stage) {
  Epoch e(static_cast<std::size_t>(cfg.channels * cfg.samples));
  for (std::size_t i = 0; i < e.size(); ++i) {
    const double slow = std::sin(0.3 * (stage + 1) * static_cast<double>(i % static_cast<std::size_t>(cfg.samples)));
    e[i] = static_cast<float>(slow + 0.3 * rng.normal());
  }
  return e;
}

EpochPool toy_pool(const ModelConfig& cfg, int per_stage, std::uint64_t seed) {
  Rng rng(seed);
  EpochPool pool;
  for (int s = 0; s < kStageCount; ++s)
    for (int k = 0; k < per_stage; ++k) {
      pool.epochs.push_back(toy_epoch(rng, cfg, s));
      pool.stages.push_back(s);
      pool.recordings.push_back(k % 3);
    }
  return pool;
}

TEST(SplitRecordings, DisjointCoveringSeeded) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Split s = split_recordings(60, {0.7, seed});
    EXPECT_EQ(s.train.size(), 42u);
    EXPECT_EQ(s.test.size(), 18u);
    std::set<std::size_t> all(s.train.begin(), s.train.end());
    for (std::size_t t : s.test) EXPECT_TRUE(all.insert(t).second);
    EXPECT_EQ(all.size(), 60u);
    const Split again = split_recordings(60, {0.7, seed});
    EXPECT_EQ(s.train, again.train);
  }
  EXPECT_NE(split_recordings(60, {0.7, 1}).train, split_recordings(60, {0.7, 2}).train);
  const Split two = split_recordings(2, {0.7, 0});
  EXPECT_EQ(two.train.size(), 1u);
  EXPECT_EQ(two.test.size(), 1u);
  EXPECT_THROW(split_recordings(10, {1.0, 0}), ArgumentError);
}

TEST(StratifiedBatch, TwoNonRemStagesWheneverPossible) {
  std::vector<int> stages;
  for (int s = 0; s < kStageCount; ++s)
    for (int k = 0; k < 40 + 30 * s; ++k) stages.push_back(s);
  Rng rng(3);
  int good = 0;
  for (int draw = 0; draw < 1000; ++draw) {
    const auto b = stratified_batch(stages, 8, rng);
    ASSERT_EQ(b.size(), 8u);
    std::set<int> nonrem;
    for (std::size_t i : b)
      if (stages[i] != kRem) nonrem.insert(stages[i]);
    good += nonrem.size() >= 2;
  }
  EXPECT_GE(good, 990);
  // Small batches are repaired as well.
  for (int draw = 0; draw < 200; ++draw) {
    const auto b = stratified_batch(stages, 2, rng);
    EXPECT_NE(stages[b[0]], stages[b[1]]);
    EXPECT_NE(stages[b[0]], kRem);
    EXPECT_NE(stages[b[1]], kRem);
  }
}

TEST(StratifiedBatch, SingleStageFallsBackToUniform) {
  const std::vector<int> stages(50, kN2);
  Rng rng(4);
  std::set<std::size_t> seen;
  for (int draw = 0; draw < 200; ++draw)
    for (std::size_t i : stratified_batch(stages, 8, rng)) {
      ASSERT_LT(i, 50u);
      seen.insert(i);
    }
  EXPECT_GT(seen.size(), 40u);
  EXPECT_THROW(stratified_batch(std::vector<int>{}, 8, rng), ArgumentError);
}

TEST(StratifiedBatch, SeededSequenceRepeats) {
  std::vector<int> stages{0, 1, 2, 3, 4, 0, 1, 2, 3, 4, 2, 2};
  Rng a(9), b(9);
  for (int k = 0; k < 50; ++k) EXPECT_EQ(stratified_batch(stages, 6, a), stratified_batch(stages, 6, b));
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.batch_size = 3;
  EXPECT_THROW(c.validate(), ArgumentError);
  c.mode = TrainMode::kClassificationOnly;
  EXPECT_NO_THROW(c.validate());
  c.learning_rate = 0;
  EXPECT_THROW(c.validate(), ArgumentError);
  EXPECT_EQ(parse_mode("classification_only"), TrainMode::kClassificationOnly);
  EXPECT_THROW(parse_mode("both"), ArgumentError);
}

TEST(Train, OneStepLowersFixedBatchLoss) {
  ModelConfig cfg = tiny();
  cfg.dropout = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SdiModel<double> model(cfg);
    model.init(seed);
    const EpochPool pool = toy_pool(cfg, 2, seed);
    std::vector<const Epoch*> epochs;
    std::vector<int> stages;
    for (std::size_t i = 0; i < 8; ++i) {
      epochs.push_back(&pool.epochs[i]);
      stages.push_back(pool.stages[i]);
    }
    TrainConfig tc;
    tc.learning_rate = 1e-3;
    const double before = evaluate_batch(model, epochs, stages, tc).total;
    Tape<double> tape;
    const auto w = model.bind(tape, true);
    LossRecord rec;
    bool no_pairs = false;
    const auto loss = batch_objective(tape, model, w, epochs, stages, tc, ForwardOptions<double>{}, rec, no_pairs);
    EXPECT_EQ(rec.total, before);
    tape.backward(loss);
    std::vector<Tensor<double>> grads;
    for (const auto& v : w) grads.push_back(tape.grad(v));
    AdamState<double> adam(model);
    adam.update(model, grads, tc);
    EXPECT_LT(evaluate_batch(model, epochs, stages, tc).total, before);
  }
}

TEST(Train, ClassificationOnlyLeavesDepthHeadUntouched) {
  const ModelConfig cfg = tiny();
  SdiModel<double> model(cfg);
  model.init(1);
  const EpochPool pool = toy_pool(cfg, 3, 1);
  std::vector<const Epoch*> epochs;
  std::vector<int> stages;
  for (std::size_t i = 0; i < pool.size(); i += 2) {
    epochs.push_back(&pool.epochs[i]);
    stages.push_back(pool.stages[i]);
  }
  TrainConfig tc;
  tc.mode = TrainMode::kClassificationOnly;
  tc.loss.alpha = 0.7;
  Tape<double> tape;
  const auto w = model.bind(tape, true);
  LossRecord rec;
  bool no_pairs = false;
  const auto loss = batch_objective(tape, model, w, epochs, stages, tc, ForwardOptions<double>{}, rec, no_pairs);
  EXPECT_GT(rec.rank_loss, 0.0);
  EXPECT_EQ(rec.total, 0.7 * rec.clas_loss);
  tape.backward(loss);
  const auto& params = model.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].name.rfind("depth_head.", 0) != 0) continue;
    const Tensor<double> g = tape.grad(w[k]);
    for (double v : g.values()) EXPECT_EQ(v, 0.0) << params[k].name;
  }

  // The whole gradient equals that of alpha * CE alone.
  Tape<double> t2;
  const auto w2 = model.bind(t2, true);
  std::vector<Var<double>> logits;
  for (const Epoch* e : epochs) logits.push_back(model.forward(t2, w2, *e).rem_logits);
  std::vector<int> is_rem;
  for (int s : stages) is_rem.push_back(s == kRem);
  const auto ce = ops::scale(ops::rem_cross_entropy(ops::concat_rows(logits), is_rem), 0.7);
  t2.backward(ce);
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Tensor<double> a = tape.grad(w[k]);
    const Tensor<double> b = t2.grad(w2[k]);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]) << params[k].name;
  }
}

TEST(Train, SeededRunsAreBitIdentical) {
  const ModelConfig cfg = tiny();
  const EpochPool pool = toy_pool(cfg, 6, 2);
  TrainConfig tc;
  tc.batch_size = 6;
  tc.max_steps = 15;
  tc.learning_rate = 3e-3;
  tc.seed = 11;
  auto run = [&] {
    SdiModel<double> m(cfg);
    m.init(5);
    const TrainResult r = train(m, pool, tc);
    return std::pair{r, m};
  };
  const auto [r1, m1] = run();
  const auto [r2, m2] = run();
  ASSERT_EQ(r1.trace.size(), 15u);
  for (std::size_t s = 0; s < r1.trace.size(); ++s) {
    EXPECT_EQ(r1.trace[s].total, r2.trace[s].total);
    EXPECT_EQ(r1.trace[s].rank_loss, r2.trace[s].rank_loss);
  }
  for (std::size_t k = 0; k < m1.parameters().size(); ++k)
    for (std::size_t i = 0; i < m1.parameters()[k].value.size(); ++i)
      ASSERT_EQ(m1.parameters()[k].value[i], m2.parameters()[k].value[i]);
  EXPECT_EQ(r1.no_pair_batches, 0);
}

TEST(Train, RepeatedStepsReduceLoss) {
  const ModelConfig cfg = tiny();
  const EpochPool pool = toy_pool(cfg, 10, 7);
  TrainConfig tc;
  tc.batch_size = 10;
  tc.max_steps = 150;
  tc.learning_rate = 3e-3;
  SdiModel<float> m(cfg);
  m.init(0);
  const TrainResult r = train(m, pool, tc);
  double head = 0, tail = 0;
  for (int k = 0; k < 20; ++k) {
    head += r.trace[static_cast<std::size_t>(k)].total;
    tail += r.trace[r.trace.size() - 1 - static_cast<std::size_t>(k)].total;
  }
  EXPECT_LT(tail, 0.8 * head);
}

TEST(Train, SingleStagePoolCountsNoPairBatches) {
  const ModelConfig cfg = tiny();
  EpochPool pool = toy_pool(cfg, 4, 3);
  EpochPool n2;
  for (std::size_t i = 0; i < pool.size(); ++i)
    if (pool.stages[i] == kN2) {
      n2.epochs.push_back(pool.epochs[i]);
      n2.stages.push_back(kN2);
      n2.recordings.push_back(0);
    }
  TrainConfig tc;
  tc.batch_size = 4;
  tc.max_steps = 3;
  SdiModel<double> m(cfg);
  m.init(0);
  const TrainResult r = train(m, n2, tc);
  EXPECT_EQ(r.no_pair_batches, 3);
  for (const auto& rec : r.trace) EXPECT_EQ(rec.rank_loss, 0.0);
}

TEST(Train, NonFiniteLossAborts) {
  const ModelConfig cfg = tiny();
  EpochPool pool = toy_pool(cfg, 4, 3);
  for (auto& e : pool.epochs) e[0] = NAN;
  TrainConfig tc;
  tc.batch_size = 4;
  tc.max_steps = 2;
  SdiModel<double> m(cfg);
  m.init(0);
  try {
    train(m, pool, tc);
    FAIL() << "expected divergence";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("diverged at step 1"), std::string::npos);
  }
  EXPECT_THROW(train(m, EpochPool{}, tc), DataError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const ModelConfig cfg = tiny();
  SdiModel<float> m(cfg);
  m.init(8);
  const Checkpoint ck = save_checkpoint(m, {{"steps", 3}});
  const SdiModel<float> back = load_checkpoint(ck.manifest, ck.blob);
  ASSERT_EQ(back.parameters().size(), m.parameters().size());
  for (std::size_t k = 0; k < m.parameters().size(); ++k)
    for (std::size_t i = 0; i < m.parameters()[k].value.size(); ++i)
      ASSERT_EQ(std::bit_cast<std::uint32_t>(back.parameters()[k].value[i]),
                std::bit_cast<std::uint32_t>(m.parameters()[k].value[i]));
  Rng rng(1);
  const Epoch e = toy_epoch(rng, cfg, 2);
  EXPECT_EQ(score_epoch(m, e), score_epoch(back, e));
  EXPECT_EQ(checkpoint_metadata(ck.manifest).at("steps"), 3);
  EXPECT_EQ(save_checkpoint(back, {{"steps", 3}}).blob, ck.blob);
}

TEST(Checkpoint, CorruptInputsRejected) {
  SdiModel<float> m(tiny());
  m.init(2);
  const Checkpoint ck = save_checkpoint(m);
  std::vector<std::uint8_t> cut(ck.blob.begin(), ck.blob.end() - 4);
  try {
    load_checkpoint(ck.manifest, cut);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
  }
  auto j = nlohmann::json::parse(ck.manifest);
  j["parameters"][2]["shape"] = std::vector<int>{3, 3};
  try {
    load_checkpoint(j.dump(), ck.blob);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("'pos_embed'"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_checkpoint("{not json", ck.blob), FormatError);
  EXPECT_THROW(load_checkpoint("{\"format\":\"other\"}", ck.blob), FormatError);
}

TEST(Checkpoint, FilesRefuseOverwriteWithoutForce) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "sdi_ckpt_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string path = (dir / "model.json").string();
  SdiModel<float> m(tiny());
  m.init(4);
  write_checkpoint(path, m, false);
  EXPECT_TRUE(fs::exists(path + ".bin"));
  EXPECT_THROW(write_checkpoint(path, m, false), ArgumentError);
  EXPECT_NO_THROW(write_checkpoint(path, m, true));
  const SdiModel<float> back = read_checkpoint(path);
  EXPECT_EQ(back.parameters()[0].value.values()[3], m.parameters()[0].value.values()[3]);
  fs::remove_all(dir);
}

EpochGrid toy_grid(const ModelConfig& cfg, int n, std::uint64_t seed) {
  Rng rng(seed);
  EpochGrid g;
  std::vector<int> st;
  for (int i = 0; i < n; ++i) {
    st.push_back(i % kStageCount);
    g.epochs.push_back(toy_epoch(rng, cfg, st.back()));
  }
  g.stage = st;
  return g;
}

TEST(Annotator, ZeroModelGivesOneHalf) {
  const ModelConfig cfg = tiny();
  const SdiModel<double> zero(cfg);
  const SdiNight n = annotate_night(toy_grid(cfg, 7, 1), zero);
  ASSERT_EQ(n.n_epochs(), 7u);
  for (std::size_t t = 0; t < 7; ++t) {
    EXPECT_EQ(n.sdi[t], 0.5);
    EXPECT_EQ(n.rem_prob[t], 0.5);
  }
}

TEST(Annotator, BoundedDeterministicOrderPreserving) {
  const ModelConfig cfg = tiny();
  SdiModel<float> m(cfg);
  m.init(3);
  const EpochGrid g = toy_grid(cfg, 30, 2);
  const SdiNight a = annotate_night(g, m);
  const SdiNight b = annotate_night(g, m);
  EXPECT_EQ(a.sdi, b.sdi);
  EXPECT_EQ(a.rem_prob, b.rem_prob);
  std::vector<double> raw;
  for (const Epoch& e : g.epochs) raw.push_back(score_epoch(m, e).first);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    EXPECT_GT(a.sdi[i], 0.0);
    EXPECT_LT(a.sdi[i], 1.0);
    EXPECT_GE(a.rem_prob[i], 0.0);
    EXPECT_LE(a.rem_prob[i], 1.0);
    for (std::size_t j = 0; j < raw.size(); ++j) {
      if (raw[i] < raw[j]) {
        EXPECT_LE(a.sdi[i], a.sdi[j]);
      }
    }
  }
  ASSERT_TRUE(a.stage.has_value());
  EXPECT_EQ(*a.stage, *g.stage);
}

TEST(Logistic, StrictMonotoneAndSymmetric) {
  EXPECT_EQ(logistic(0.0), 0.5);
  double prev = 0.0;
  for (double x = -30; x <= 30; x += 0.37) {
    EXPECT_GT(logistic(x), prev);
    prev = logistic(x);
    EXPECT_NEAR(logistic(x) + logistic(-x), 1.0, 1e-15);
  }
  EXPECT_EQ(logistic(-1000), 0.0);
  EXPECT_EQ(logistic(1000), 1.0);
}

TEST(DepthDecrease, Examples) {
  const auto d = depth_decrease(std::vector<double>{0.8, 0.3});
  ASSERT_EQ(d.size(), 1u);
  EXPECT_DOUBLE_EQ(d[0], 0.5);
  for (double v : depth_decrease(std::vector<double>{0.1, 0.2, 0.5, 0.9})) EXPECT_LT(v, 0.0);
  for (double v : depth_decrease(std::vector<double>(5, 0.4))) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(depth_decrease(std::vector<double>{0.4}), DataError);
}

TEST(DepthDecrease, Telescopes) {
  Rng rng(6);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> s(2 + rng.below(900));
    for (double& v : s) v = rng.uniform();
    const auto d = depth_decrease(s);
    double sum = 0;
    for (double v : d) {
      sum += v;
      EXPECT_GE(v, -1.0);
      EXPECT_LE(v, 1.0);
    }
    EXPECT_NEAR(sum, s.front() - s.back(), 1e-12);
  }
}

TEST(NightCsv, RoundTrip) {
  SdiNight n;
  n.sdi = {0.25, 0.125, 0.9};
  n.rem_prob = {0.0, 0.75, 0.5};
  n.stage = std::vector<int>{0, 4, 3};
  n.arousal_proportion = std::vector<double>{0.0, 0.5, 1.0};
  const std::string text = night_to_csv(n);
  EXPECT_EQ(text.substr(0, text.find('\n')), "epoch,sdi,rem_prob,stage_label,arousal_prop");
  const SdiNight back = night_from_csv(text);
  EXPECT_EQ(back.sdi, n.sdi);
  EXPECT_EQ(back.rem_prob, n.rem_prob);
  EXPECT_EQ(*back.stage, *n.stage);
  EXPECT_EQ(*back.arousal_proportion, *n.arousal_proportion);
  SdiNight bare;
  bare.sdi = {0.5};
  bare.rem_prob = {0.5};
  EXPECT_EQ(night_to_csv(bare), "epoch,sdi,rem_prob\n0,0.5,0.5\n");
  EXPECT_THROW(night_from_csv("epoch,sdi\n0,0.5\n"), FormatError);
}

}  // namespace
}  // namespace sdi
