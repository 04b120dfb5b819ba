#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "bilinear/backprop.hpp"
#include "bilinear/constructions.hpp"
#include "bilinear/error.hpp"
#include "bilinear/rng.hpp"
#include "bilinear/training.hpp"
#include "oracle.hpp"

using namespace bilinear;

namespace {

const Variant kVariants[] = {Variant::FullBilinear, Variant::Factored, Variant::BlockDiag,
                             Variant::R2Rotation,   Variant::RealDiag, Variant::Elman};

std::vector<Sample> small_batch(Rng& rng, int n = 3) {
  const TaskSpec task = TaskSpec::mod_add(2, 3);
  std::vector<Sample> out;
  for (int i = 0; i < n; ++i) out.push_back(gen_sample(task, 2, 3, rng));
  return out;
}

}  // namespace

TEST(Loss, UniformLogits) {
  for (int m : {2, 3, 10}) {
    const std::vector<double> l(std::size_t(m), 0.7);
    EXPECT_NEAR(cross_entropy(l, 1), std::log(double(m)), 1e-14);
  }
}

TEST(Loss, Monotone) {
  double prev = 1e9;
  for (double gap : {0.0, 1.0, 5.0, 20.0, 100.0, 800.0}) {
    const double l = cross_entropy(std::vector<double>{gap, 0.0, 0.0}, 0);
    EXPECT_LE(l, prev);
    if (gap <= 20.0) EXPECT_LT(l, prev);
    EXPECT_TRUE(std::isfinite(l));
    prev = l;
  }
  EXPECT_LT(prev, 1e-300);
}

TEST(Loss, GradientMatchesFiniteDifferences) {
  Rng rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> l(5);
    for (double& v : l) v = rng.uniform(-3.0, 3.0);
    const int target = int(rng.below(5));
    const Vec64 g = cross_entropy_grad(l, target);
    for (std::size_t c = 0; c < 5; ++c) {
      auto up = l, down = l;
      up[c] += 1e-6;
      down[c] -= 1e-6;
      const double num = (oracle::cross_entropy(up, target) - oracle::cross_entropy(down, target)) / 2e-6;
      EXPECT_NEAR(g[c], num, 1e-8);
    }
  }
}

class GradientTest : public ::testing::TestWithParam<std::tuple<Variant, const char*>> {};

TEST_P(GradientTest, BackwardMatchesReferenceDifferences) {
  const auto [variant, label] = GetParam();
  const AdditiveConfig add = AdditiveConfig::parse(label);
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    Rng rng(100 + seed);
    const TransitionModel model = make_model(gradcheck_shape(variant, add.input_dependent, add.constant_bias), rng);
    const auto batch = small_batch(rng);
    const Gradients g = oracle::library_gradient(model, batch);
    for (const auto& d : oracle::compare_fd(model, batch, g)) {
      EXPECT_LT(d.rel, 1e-6) << d.name << " seed " << seed;
      EXPECT_GT(d.scale, 1e-7) << d.name << " gradient vanished; the check would be vacuous";
    }
  }
}

TEST_P(GradientTest, LibraryCheckAgrees) {
  const auto [variant, label] = GetParam();
  const AdditiveConfig add = AdditiveConfig::parse(label);
  Rng rng(7);
  const TransitionModel model = make_model(gradcheck_shape(variant, add.input_dependent, add.constant_bias), rng);
  const auto batch = small_batch(rng);
  EXPECT_NEAR(mean_loss(model, batch), oracle::mean_loss(model, batch), 1e-13);
  for (const auto& c : gradient_check(model, batch)) EXPECT_LT(c.rel_error, 1e-6) << c.name;
}

INSTANTIATE_TEST_SUITE_P(
    AllVariants, GradientTest,
    ::testing::Combine(::testing::ValuesIn(kVariants), ::testing::Values("none", "input", "input+const", "const")),
    [](const auto& info) {
      std::string add = std::get<1>(info.param);
      for (char& ch : add) {
        if (ch == '+') ch = '_';
      }
      return std::string(to_string(std::get<0>(info.param))) + "_" + add;
    });

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  Rng rng(2);
  const TransitionModel m = make_model(gradcheck_shape(Variant::FullBilinear), rng);
  const auto batch = small_batch(rng, 1);
  const ForwardResult fr = forward(m, batch[0].tokens, false);
  const Gradients g = backward(m, fr.trace, std::vector<double>(2, 0.0));
  EXPECT_EQ(g.global_norm(), 0.0);
}

TEST(Backward, PureBilinearH0GradientIsLinearInUpstream) {
  Rng rng(3);
  const TransitionModel m = make_model(gradcheck_shape(Variant::FullBilinear), rng);
  const auto batch = small_batch(rng, 1);
  const ForwardResult fr = forward(m, batch[0].tokens, false);
  const std::vector<double> d{0.3, -0.7};
  const Gradients a = backward(m, fr.trace, d);
  const Gradients b = backward(m, fr.trace, std::vector<double>{3.0 * d[0], 3.0 * d[1]});
  for (std::size_t i = 0; i < m.hidden(); ++i) EXPECT_NEAR(b.d.h0[i], 3.0 * a.d.h0[i], 1e-13);
}

TEST(Backward, NormalizedTraceIsRejected) {
  Rng rng(4);
  const TransitionModel m = make_model(gradcheck_shape(Variant::RealDiag), rng);
  const ForwardResult fr = forward(m, std::vector<int>{2, 0, 1, 3}, true);
  EXPECT_THROW(backward(m, fr.trace, std::vector<double>{1, 0}), DomainError);
}

TEST(Backward, EngineAccumulationMatchesSumOfBackwards) {
  Rng rng(5);
  const TransitionModel m = make_model(gradcheck_shape(Variant::BlockDiag, true, false), rng);
  const auto batch = small_batch(rng, 5);
  RecurrenceEngine engine(m);
  Gradients sum = Gradients::zeros_like(m);
  for (const auto& s : batch) {
    const ForwardResult fr = engine.forward(s.tokens, false);
    const Vec64 d = cross_entropy_grad(fr.logits.values(), s.target);
    engine.accumulate(fr.trace, d.values());
    sum += backward(m, fr.trace, d.values());
  }
  const Gradients eng = engine.take_gradients();
  const auto a = eng.groups();
  const auto b = sum.groups();
  for (std::size_t g = 0; g < a.size(); ++g) {
    EXPECT_LT(max_abs_diff(a[g].values, b[g].values), 1e-14) << a[g].name;
  }
  EXPECT_EQ(engine.take_gradients().global_norm(), 0.0);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Rng rng(6);
  TransitionModel m = make_model(gradcheck_shape(Variant::Factored), rng);
  const TransitionModel before = m;
  AdamState st = AdamState::for_model(m, AdamConfig{1e-3});
  for (int i = 0; i < 5; ++i) adam_step(m, Gradients::zeros_like(m), st);
  EXPECT_EQ(param_groups(m.params)[0].values[0], param_groups(before.params)[0].values[0]);
  const auto a = param_groups(m.params);
  const auto b = param_groups(before.params);
  for (std::size_t g = 0; g < a.size(); ++g) EXPECT_EQ(max_abs_diff(a[g].values, b[g].values), 0.0);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Rng rng(7);
  TransitionModel m = make_model(gradcheck_shape(Variant::RealDiag), rng);
  const TransitionModel before = m;
  Gradients g = Gradients::zeros_like(m);
  for (auto& grp : g.groups()) {
    for (double& v : grp.values) v = 0.37;
  }
  AdamState st = AdamState::for_model(m, AdamConfig{1e-3});
  adam_step(m, g, st);
  const auto a = param_groups(m.params);
  const auto b = param_groups(before.params);
  for (std::size_t k = 0; k < a.size(); ++k) {
    for (std::size_t i = 0; i < a[k].values.size(); ++i) {
      // m_hat = g, v_hat = g^2: step = lr g / (|g| + eps).
      EXPECT_NEAR(b[k].values[i] - a[k].values[i], 1e-3 * 0.37 / (0.37 + 1e-8), 1e-12);
      EXPECT_NEAR(b[k].values[i] - a[k].values[i], 1e-3, 1e-6);
    }
  }
}

TEST(Adam, FrozenGroupsDoNotMove) {
  Rng rng(8);
  TransitionModel m = make_model(gradcheck_shape(Variant::FullBilinear), rng);
  m.frozen = FreezeMask{true, true, true, false, false};
  const TransitionModel before = m;
  Gradients g = Gradients::zeros_like(m);
  for (auto& grp : g.groups()) {
    for (double& v : grp.values) v = 1.0;
  }
  AdamState st = AdamState::for_model(m, AdamConfig{1e-2});
  adam_step(m, g, st);
  EXPECT_EQ(std::get<FullBilinear>(m.params.transition).w, std::get<FullBilinear>(before.params.transition).w);
  EXPECT_EQ(m.params.h0, before.params.h0);
  EXPECT_NE(m.params.readout, before.params.readout);
  EXPECT_NE(m.params.embed, before.params.embed);
  mask_frozen(m, g);
  EXPECT_EQ(max_abs(std::get<FullBilinear>(g.d.transition).w.values()), 0.0);
  EXPECT_EQ(max_abs(g.d.readout.values()), 1.0);
}

TEST(Adam, ClipGlobalNorm) {
  Rng rng(9);
  const TransitionModel m = make_model(gradcheck_shape(Variant::RealDiag), rng);
  Gradients g = Gradients::zeros_like(m);
  g.d.h0[0] = 3.0;
  g.d.h0[1] = 4.0;
  EXPECT_DOUBLE_EQ(clip_global_norm(g, 1.0), 5.0);
  EXPECT_NEAR(g.global_norm(), 1.0, 1e-15);
  EXPECT_NEAR(g.d.h0[0], 0.6, 1e-15);
  EXPECT_DOUBLE_EQ(clip_global_norm(g, 10.0), 1.0);
  EXPECT_NEAR(g.d.h0[0], 0.6, 1e-15);
}

TEST(Train, IsDeterministic) {
  ModelShape s;
  s.hidden = 4;
  s.input_dim = 4;
  s.vocab = 4;
  s.classes = 2;
  Rng r1(3), r2(3);
  const TransitionModel m1 = make_model(s, r1), m2 = make_model(s, r2);
  TrainConfig cfg;
  cfg.steps = 100;
  cfg.early_stop_loss = 1e-300;
  cfg.seed = 5;
  const TrainResult a = train_single(m1, TaskSpec::mod_add(2), cfg, 1e-3);
  const TrainResult b = train_single(m2, TaskSpec::mod_add(2), cfg, 1e-3);
  const auto ga = param_groups(a.model.params);
  const auto gb = param_groups(b.model.params);
  for (std::size_t g = 0; g < ga.size(); ++g) EXPECT_EQ(max_abs_diff(ga[g].values, gb[g].values), 0.0);
  EXPECT_EQ(a.history.size(), b.history.size());
  EXPECT_EQ(a.steps_run, 100);
}

TEST(Train, SmallBilinearLearnsParity) {
  ModelShape s;
  s.hidden = 8;
  s.input_dim = 8;
  s.vocab = 4;
  s.classes = 2;
  Rng rng(1);
  const TransitionModel init = make_model(s, rng);
  TrainConfig cfg;
  cfg.steps = 5000;
  cfg.seed = 2;
  const SweepResult res = train(init, TaskSpec::mod_add(2), cfg);
  ASSERT_NE(res.best(), nullptr);
  EXPECT_EQ(res.runs.size(), 3u);
  EXPECT_EQ(evaluate(res.best()->model, TaskSpec::mod_add(2), 10, 1024, 3).raw, 1.0);
}

TEST(Train, EarlyStoppingUsesSmoothedValidationLoss) {
  ModelShape s;
  s.hidden = 8;
  s.input_dim = 8;
  s.vocab = 4;
  s.classes = 2;
  Rng rng(1);
  const TransitionModel init = make_model(s, rng);
  TrainConfig cfg;
  cfg.steps = 5000;
  cfg.seed = 2;
  cfg.early_stop_loss = 1e-3;
  const TrainResult r = train_single(init, TaskSpec::mod_add(2), cfg, 1e-3);
  ASSERT_TRUE(r.early_stopped);
  const std::size_t n = r.history.size();
  ASSERT_GE(n, 3u);
  double mean = 0.0;
  for (std::size_t i = n - 3; i < n; ++i) mean += r.history[i].val_loss / 3.0;
  EXPECT_LT(mean, 1e-3);
  // The window before the last one had not yet crossed the threshold.
  if (n >= 4) {
    double prev = 0.0;
    for (std::size_t i = n - 4; i < n - 1; ++i) prev += r.history[i].val_loss / 3.0;
    EXPECT_GE(prev, 1e-3);
  }
  EXPECT_EQ(r.history.back().step, r.steps_run);
}

TEST(Train, HistoryCsv) {
  std::ostringstream os;
  write_history_header(os);
  const HistoryRow rows[] = {{100, 0.5, 0.25, 0.75}};
  write_history(os, rows);
  EXPECT_EQ(os.str(), "step,train_loss,val_loss,val_acc\n100,0.5,0.25,0.75\n");
}

TEST(Train, ChooseRunSkipsFailuresAndBreaksTies) {
  std::vector<TrainResult> runs(3);
  runs[0].status = RunStatus::Overflow;
  runs[0].best_val_acc = 1.0;
  runs[1].best_val_acc = 0.9;
  runs[1].best_val_loss = 0.1;
  runs[2].best_val_acc = 0.9;
  runs[2].best_val_loss = 0.05;
  EXPECT_EQ(choose_run(runs), std::optional<std::size_t>(2));
  runs[2].best_val_loss = 0.1;
  EXPECT_EQ(choose_run(runs), std::optional<std::size_t>(1));
  runs[1].status = runs[2].status = RunStatus::Overflow;
  EXPECT_FALSE(choose_run(runs).has_value());
}

TEST(Train, OverflowBecomesAFailedRun) {
  ModelShape s;
  s.hidden = 4;
  s.input_dim = 4;
  s.vocab = 4;
  s.classes = 2;
  s.init_half_width = 50.0;
  s.embed_std = 50.0;
  Rng rng(4);
  TrainConfig cfg;
  cfg.steps = 10;
  cfg.min_len = 150;
  cfg.max_len = 200;
  const TrainResult r = train_single(make_model(s, rng), TaskSpec::mod_add(2, 200), cfg, 1e-3);
  EXPECT_EQ(r.status, RunStatus::Overflow);
  EXPECT_FALSE(r.diagnostics.empty());
}

TEST(Evaluate, NormalizedAccuracy) {
  EXPECT_DOUBLE_EQ(normalized_accuracy(1.0, 5), 1.0);
  EXPECT_DOUBLE_EQ(normalized_accuracy(0.2, 5), 0.0);
  EXPECT_DOUBLE_EQ(normalized_accuracy(0.5, 2), 0.0);
  EXPECT_DOUBLE_EQ(normalized_accuracy(0.0, 2), -1.0);
}

TEST(Evaluate, RandomPredictorIsAtChance) {
  // Constant-zero readout: argmax ties resolve to class 0, which is right 1/m of the time.
  ModelShape s;
  s.hidden = 4;
  s.input_dim = 4;
  s.vocab = 7;
  s.classes = 5;
  Rng rng(5);
  TransitionModel m = make_model(s, rng);
  m.params.readout = Mat64(5, 4);
  const EvalResult r = evaluate(m, TaskSpec::mod_add(5), 20, 4000, 6);
  EXPECT_TRUE(oracle::within_3sigma(r.raw, 0.2, 4000)) << r.raw;
  EXPECT_LT(std::abs(r.norm), 3.0 * std::sqrt(0.2 * 0.8 / 4000) / 0.8 + 1e-12);
}

TEST(Evaluate, CompiledMachineIsPerfectAtLength500) {
  Rng rng(6);
  const Fsm fsm = gen_fsm(6, rng);
  const TransitionModel m = compile_fsm(fsm);
  const EvalResult r = evaluate(m, TaskSpec::state_machine(fsm), 500, 300, 7);
  EXPECT_EQ(r.raw, 1.0);
  EXPECT_EQ(r.norm, 1.0);
}

TEST(Evaluate, RangeCoversLengths) {
  const TransitionModel m = compile_mod_add(3);
  const EvalResult r = evaluate_range(m, TaskSpec::mod_add(3), 2, 10, 500, 8);
  EXPECT_EQ(r.raw, 1.0);
  EXPECT_EQ(r.samples, 500);
}
