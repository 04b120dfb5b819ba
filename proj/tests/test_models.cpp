#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "bilinear/checkpoint.hpp"
#include "bilinear/error.hpp"
#include "bilinear/model.hpp"
#include "bilinear/rng.hpp"
#include "bilinear/tasks.hpp"
#include "bilinear/training.hpp"
#include "oracle.hpp"

using namespace bilinear;

namespace {

const Variant kVariants[] = {Variant::FullBilinear, Variant::Factored, Variant::BlockDiag,
                             Variant::R2Rotation,   Variant::RealDiag, Variant::Elman};

TransitionModel random_model(Variant v, std::uint64_t seed, AdditiveConfig add = {}) {
  ModelShape s;
  s.variant = v;
  s.hidden = 6;
  s.input_dim = 5;
  s.vocab = 7;
  s.classes = 5;
  s.rank = 4;
  s.block_size = 3;
  s.init_half_width = 0.6;
  s.additive = add;
  Rng rng(seed);
  return make_model(s, rng);
}

std::vector<int> random_tokens(int n, std::uint64_t seed) {
  Rng rng(seed);
  return gen_sample(TaskSpec::mod_add(5, n), n, n, rng).tokens;
}

}  // namespace

class VariantTest : public ::testing::TestWithParam<Variant> {};

TEST_P(VariantTest, ForwardMatchesReference) {
  for (const char* label : {"none", "input", "input+const", "const"}) {
    const TransitionModel m = random_model(GetParam(), 3, AdditiveConfig::parse(label, 0.3));
    for (int n : {2, 5, 12}) {
      const auto tokens = random_tokens(n, std::uint64_t(n));
      for (bool norm : {false, true}) {
        const ForwardResult fr = forward(m, tokens, norm);
        const auto ref = oracle::logits(m, tokens, norm);
        for (std::size_t c = 0; c < ref.size(); ++c) {
          EXPECT_NEAR(fr.logits[c], ref[c], 1e-12 * (1.0 + std::abs(ref[c]))) << label << " n=" << n;
        }
      }
    }
  }
}

TEST_P(VariantTest, TraceRecordsEveryState) {
  const TransitionModel m = random_model(GetParam(), 4);
  const auto tokens = random_tokens(4, 9);
  const ForwardResult fr = forward(m, tokens, false);
  ASSERT_EQ(fr.trace.size(), tokens.size());
  std::vector<double> h(m.params.h0.values().begin(), m.params.h0.values().end());
  for (std::size_t t = 0; t <= tokens.size(); ++t) {
    const auto s = fr.trace.state(t);
    for (std::size_t i = 0; i < h.size(); ++i) EXPECT_NEAR(s[i], h[i], 1e-13);
    if (t < tokens.size()) h = oracle::step(m, h, tokens[t]);
  }
}

TEST_P(VariantTest, StepMatchesReference) {
  const TransitionModel m = random_model(GetParam(), 5, AdditiveConfig::parse("input+const", 0.2));
  const auto h = m.params.h0.raw();
  for (int tok = 0; tok < 7; ++tok) {
    const StepOutput out = step(m, h, tok);
    const auto ref = oracle::step(m, h, tok);
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(out.h[i], ref[i], 1e-14);
  }
}

TEST_P(VariantTest, CheckpointRoundTripIsBitExact) {
  TransitionModel m = random_model(GetParam(), 6, AdditiveConfig::parse("input", 0.1));
  m.frozen.embedding = true;
  const TaskSpec task = TaskSpec::mod_add(5);
  std::stringstream ss;
  save_checkpoint(ss, m, &task);
  const Checkpoint back = load_checkpoint(ss);
  ASSERT_TRUE(back.task.has_value());
  EXPECT_EQ(back.task->m, 5);
  const auto a = param_groups(m.params);
  const auto b = param_groups(back.model.params);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t g = 0; g < a.size(); ++g) {
    EXPECT_EQ(a[g].name, b[g].name);
    ASSERT_EQ(a[g].values.size(), b[g].values.size());
    for (std::size_t i = 0; i < a[g].values.size(); ++i) EXPECT_EQ(a[g].values[i], b[g].values[i]);
  }
  EXPECT_EQ(back.model.variant(), m.variant());
  EXPECT_EQ(back.model.additive.label(), m.additive.label());
  EXPECT_TRUE(back.model.frozen.embedding);
}

INSTANTIATE_TEST_SUITE_P(AllVariants, VariantTest, ::testing::ValuesIn(kVariants),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(Models, BlockDiagWithOneBlockEqualsFullBilinear) {
  Rng rng(7);
  const Tensor3 w = uniform_tensor3(4, 4, 3, 0.5, rng);
  TransitionModel full;
  full.params.transition = FullBilinear{w};
  full.params.h0 = uniform_vec(4, 0.5, rng);
  full.params.embed = uniform_mat(7, 3, 1.0, rng);
  full.params.readout = uniform_mat(2, 4, 1.0, rng);
  TransitionModel block = full;
  block.params.transition = BlockDiag{{w}};
  const auto tokens = random_tokens(20, 1);
  const auto a = forward(full, tokens, false).logits;
  const auto b = forward(block, tokens, false).logits;
  EXPECT_LT(max_abs_diff(a.values(), b.values()), 1e-12);
}

TEST(Models, RealDiagEqualsBlockDiagOfSizeOne) {
  const TransitionModel diag = random_model(Variant::RealDiag, 8);
  const auto& d = std::get<RealDiag>(diag.params.transition).diag_weights;
  TransitionModel block = diag;
  BlockDiag b;
  for (std::size_t i = 0; i < d.rows(); ++i) {
    Tensor3 t(1, 1, d.cols());
    for (std::size_t k = 0; k < d.cols(); ++k) t(0, 0, k) = d(i, k);
    b.blocks.push_back(t);
  }
  block.params.transition = b;
  const auto tokens = random_tokens(15, 2);
  EXPECT_LT(max_abs_diff(forward(diag, tokens, false).logits.values(),
                         forward(block, tokens, false).logits.values()),
            1e-13);
}

TEST(Models, ParameterCounts) {
  const std::size_t H = 6, D = 5;
  EXPECT_EQ(param_count(random_model(Variant::FullBilinear, 1)).transition, H * H * D);
  EXPECT_EQ(param_count(random_model(Variant::Factored, 1)).transition, 4 * (2 * H + D));
  EXPECT_EQ(param_count(random_model(Variant::BlockDiag, 1)).transition, H * H * D / 2);
  EXPECT_EQ(param_count(random_model(Variant::R2Rotation, 1)).transition, H / 2 * D);
  EXPECT_EQ(param_count(random_model(Variant::RealDiag, 1)).transition, H * D);
  const ParamCount c = param_count(random_model(Variant::FullBilinear, 1, AdditiveConfig::parse("input+const")));
  EXPECT_EQ(c.additive, H * D + H);
  EXPECT_EQ(c.initial_state, H);
  EXPECT_EQ(c.embedding, 7 * D);
  EXPECT_EQ(c.readout, 5 * H);
  EXPECT_EQ(c.total(), c.transition + c.additive + c.initial_state + c.embedding + c.readout);
}

TEST(Models, PureMultiplicativeClassification) {
  EXPECT_TRUE(random_model(Variant::FullBilinear, 1).pure_multiplicative());
  EXPECT_FALSE(random_model(Variant::FullBilinear, 1, AdditiveConfig::parse("const")).pure_multiplicative());
  EXPECT_FALSE(random_model(Variant::Elman, 1).pure_multiplicative());
  EXPECT_TRUE(inference_normalizes(random_model(Variant::R2Rotation, 1)));
  EXPECT_FALSE(inference_normalizes(random_model(Variant::R2Rotation, 1, AdditiveConfig::parse("input"))));
}

TEST(Models, ScalingH0ScalesStatesLinearly) {
  const TransitionModel m = random_model(Variant::FullBilinear, 9);
  const auto tokens = random_tokens(6, 3);
  const auto a = forward(m, tokens, false).logits;
  const auto b = forward(scale_initial_state(m, 1e3), tokens, false).logits;
  for (std::size_t c = 0; c < a.size(); ++c) EXPECT_NEAR(b[c], 1e3 * a[c], 1e-9 * std::abs(b[c]) + 1e-300);
}

TEST(Models, ExplicitTransitionMatrixReproducesStep) {
  for (Variant v : {Variant::FullBilinear, Variant::Factored, Variant::BlockDiag, Variant::R2Rotation,
                    Variant::RealDiag}) {
    const TransitionModel m = random_model(v, 10);
    for (int tok = 0; tok < 7; ++tok) {
      const Mat64 a = transition_matrix_for_token(m, tok);
      const Vec64 h = matvec(a, m.params.h0.values());
      const auto ref = oracle::step(m, m.params.h0.raw(), tok);
      for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(h[i], ref[i], 1e-14) << to_string(v);
    }
  }
}

TEST(Models, OverflowIsReported) {
  TransitionModel m = random_model(Variant::RealDiag, 11);
  for (double& v : std::get<RealDiag>(m.params.transition).diag_weights.values()) v = 1e100;
  for (double& v : m.params.embed.values()) v = 1.0;
  EXPECT_THROW(forward(m, random_tokens(50, 4), false), OverflowError);
}

TEST(Models, ValidateRejectsBadShapes) {
  ModelShape s;
  s.variant = Variant::R2Rotation;
  s.hidden = 5;
  Rng rng(1);
  EXPECT_THROW(make_model(s, rng), DomainError);
  s.variant = Variant::BlockDiag;
  s.hidden = 6;
  s.block_size = 4;
  EXPECT_THROW(make_model(s, rng), DomainError);
  TransitionModel m = random_model(Variant::FullBilinear, 1);
  m.params.readout = Mat64(5, 3);
  EXPECT_THROW(m.validate(), DimensionError);
  EXPECT_THROW(forward(random_model(Variant::FullBilinear, 1), std::vector<int>{0, 9}, false), DomainError);
}

TEST(Models, InitialisationMatchesShape) {
  ModelShape s;
  s.hidden = 16;
  s.input_dim = 8;
  s.vocab = 5;
  s.classes = 3;
  Rng rng(12);
  const TransitionModel m = make_model(s, rng);
  for (double v : std::get<FullBilinear>(m.params.transition).w.values()) {
    EXPECT_GE(v, -0.01);
    EXPECT_LT(v, 0.01);
  }
  for (double v : m.params.h0.values()) EXPECT_LT(std::abs(v), 0.01);
  EXPECT_FALSE(m.params.input_weights.has_value());
  EXPECT_FALSE(m.params.bias.has_value());
}

TEST(Models, ElmanAlwaysCarriesAdditiveTerms) {
  const TransitionModel m = random_model(Variant::Elman, 13);
  EXPECT_TRUE(m.params.input_weights.has_value());
  EXPECT_TRUE(m.params.bias.has_value());
  const auto tokens = random_tokens(30, 5);
  const ForwardResult fr = forward(m, tokens, false);
  for (double v : fr.trace.states) EXPECT_LE(std::abs(v), 1.0);
}

TEST(Models, FactoredWithFullRankReproducesAnyTensor) {
  // W = sum over (i, k) of e_i (x) W[i, :, k] (x) e_k, rank H * D.
  const std::size_t H = 3, D = 2;
  Rng rng(14);
  TransitionModel full;
  full.params.transition = FullBilinear{uniform_tensor3(H, H, D, 1.0, rng)};
  full.params.h0 = uniform_vec(H, 1.0, rng);
  full.params.embed = uniform_mat(7, D, 1.0, rng);
  full.params.readout = uniform_mat(4, H, 1.0, rng);
  const Tensor3& w = std::get<FullBilinear>(full.params.transition).w;
  Factored f{Mat64(H, H * D), Mat64(H, H * D), Mat64(D, H * D)};
  for (std::size_t i = 0; i < H; ++i) {
    for (std::size_t k = 0; k < D; ++k) {
      const std::size_t r = i * D + k;
      f.wh1(i, r) = 1.0;
      f.wx(k, r) = 1.0;
      for (std::size_t j = 0; j < H; ++j) f.wh2(j, r) = w(i, j, k);
    }
  }
  EXPECT_EQ(cp_assemble(f.wh1, f.wh2, f.wx), w);
  TransitionModel factored = full;
  factored.params.transition = f;
  const auto tokens = random_tokens(12, 6);
  EXPECT_LT(max_abs_diff(forward(full, tokens, false).logits.values(),
                         forward(factored, tokens, false).logits.values()),
            1e-12);
}

TEST(Models, SingleStepExamples) {
  TransitionModel diag;
  diag.params.transition = RealDiag{Mat64(3, 1, std::vector<double>{2.0, -1.0, 0.5})};
  diag.params.h0 = Vec64{1.0, 1.0, 1.0};
  diag.params.embed = Mat64(1, 1, std::vector<double>{1.0});
  diag.params.readout = Mat64(2, 3);
  const StepOutput out = step(diag, diag.params.h0.values(), 0);
  EXPECT_EQ(out.h, (Vec64{2.0, -1.0, 0.5}));

  TransitionModel rot;
  rot.params.transition = R2Rotation{Mat64(1, 2, std::vector<double>{0.0, 0.0})};
  rot.params.h0 = Vec64{0.3, -0.7};
  rot.params.embed = Mat64(1, 2, std::vector<double>{0.4, 1.1});
  rot.params.readout = Mat64(2, 2);
  EXPECT_EQ(step(rot, rot.params.h0.values(), 0).h, rot.params.h0);
}

TEST(Models, RotationStepsPreserveNorm) {
  const TransitionModel m = random_model(Variant::R2Rotation, 15);
  std::vector<double> h(m.params.h0.values().begin(), m.params.h0.values().end());
  const double n0 = norm2(h);
  for (int t : random_tokens(200, 7)) {
    const StepOutput out = step(m, h, t);
    EXPECT_NEAR(norm2(out.h.values()), norm2(h), 1e-10);
    h.assign(out.h.values().begin(), out.h.values().end());
  }
  EXPECT_NEAR(norm2(h), n0, 1e-10);
}

TEST(Models, NormalizationKeepsArgmaxOnShortSequences) {
  for (Variant v : {Variant::FullBilinear, Variant::Factored, Variant::BlockDiag, Variant::R2Rotation,
                    Variant::RealDiag}) {
    const TransitionModel m = random_model(v, 16);
    for (int n = 2; n <= 50; ++n) {
      const auto tokens = random_tokens(n, std::uint64_t(100 + n));
      EXPECT_EQ(predict(m, tokens, true), predict(m, tokens, false)) << to_string(v) << " n=" << n;
    }
  }
}

TEST(Models, ArgmaxBreaksTiesTowardSmallestIndex) {
  EXPECT_EQ(argmax(std::vector<double>{0.2, 0.9, 0.1}), 1);
  EXPECT_EQ(argmax(std::vector<double>{0.5, 0.5, 0.5}), 0);
  EXPECT_EQ(argmax(std::vector<double>{-1.0, 3.0, 3.0}), 1);
}

TEST(Models, PaperScaleParameterCounts) {
  ModelShape s;
  s.hidden = 256;
  s.input_dim = 256;
  s.vocab = 4;
  s.classes = 2;
  Rng rng(17);
  s.variant = Variant::Factored;
  s.rank = 64;
  EXPECT_EQ(param_count(make_model(s, rng)).transition, 49152u);
  s.variant = Variant::BlockDiag;
  s.block_size = 8;
  EXPECT_EQ(param_count(make_model(s, rng)).transition, 524288u);
  s.variant = Variant::FullBilinear;
  EXPECT_EQ(param_count(make_model(s, rng)).transition, 16777216u);
}
