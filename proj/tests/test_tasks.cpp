#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "bilinear/error.hpp"
#include "bilinear/rng.hpp"
#include "bilinear/tasks.hpp"
#include "oracle.hpp"

using namespace bilinear;

TEST(Tasks, ModAddAppendixExample) {
  const TaskSpec spec = TaskSpec::mod_add(20);
  const std::vector<int> in{8, 0, 12, 18, 5};
  EXPECT_EQ(bilinear::oracle(spec, in), 3);
  const Sample s = make_sample(spec, in);
  EXPECT_EQ(format_sample(Vocab(spec), s), "[BOS] 8 0 12 18 5 [EOI] 3");
}

TEST(Tasks, ModArithAppendixExample) {
  const TaskSpec spec = TaskSpec::mod_arith(20);
  const std::vector<int> in{3, 9, 17, 6, 12};
  const std::vector<ArithOp> ops{ArithOp::Mul, ArithOp::Sub, ArithOp::Add, ArithOp::Add};
  EXPECT_EQ(bilinear::oracle(spec, in, ops), 8);
  const Vocab v(spec);
  const Sample parsed = parse_sample(v, "[BOS] 3 * 9 - 17 + 6 + 12 [EOI] 8");
  EXPECT_EQ(parsed.target, 8);
  EXPECT_EQ(parsed.input_count, 5);
  EXPECT_EQ(parsed, make_sample(spec, in, ops));
}

TEST(Tasks, ModArithAppliesLeftToRight) {
  const TaskSpec spec = TaskSpec::mod_arith(7);
  // (2 + 3) * 4 = 20 = 6 mod 7, not 2 + 12.
  EXPECT_EQ(bilinear::oracle(spec, std::vector<int>{2, 3, 4}, std::vector<ArithOp>{ArithOp::Add, ArithOp::Mul}), 6);
  // Subtraction wraps: 1 - 5 = -4 = 3 mod 7.
  EXPECT_EQ(bilinear::oracle(spec, std::vector<int>{1, 5}, std::vector<ArithOp>{ArithOp::Sub}), 3);
  EXPECT_THROW(bilinear::oracle(spec, std::vector<int>{1, 5}, std::vector<ArithOp>{}), DomainError);
}

TEST(Tasks, StateMachineAppendixExample) {
  const TaskSpec spec = TaskSpec::state_machine(oracle::appendix_fsm());
  EXPECT_EQ(bilinear::oracle(spec, std::vector<int>{4, 1, 2, 5, 5}), 2);
  EXPECT_EQ(oracle::appendix_fsm().next(4, 1), 0);
  EXPECT_EQ(oracle::appendix_fsm().next(0, 2), 4);
}

TEST(Tasks, ParityCountsOnes) {
  const TaskSpec spec = TaskSpec::parity();
  EXPECT_EQ(bilinear::oracle(spec, std::vector<int>{1, 0, 1, 1}), 1);
  EXPECT_EQ(bilinear::oracle(spec, std::vector<int>{1, 1}), 0);
}

TEST(Tasks, VocabLayout) {
  const Vocab add(TaskKind::ModAdd, 5);
  EXPECT_EQ(add.size(), 7);
  EXPECT_EQ(add.bos(), 5);
  EXPECT_EQ(add.eoi(), 6);
  const Vocab arith(TaskKind::ModArith, 5);
  EXPECT_EQ(arith.size(), 10);
  EXPECT_TRUE(arith.as_op(arith.op(ArithOp::Mul)).has_value());
  EXPECT_EQ(arith.id_of("×"), arith.op(ArithOp::Mul));
  EXPECT_THROW(add.id_of("9"), ParseError);
}

TEST(Tasks, FsmRowsArePermutations) {
  Rng rng(3);
  for (int m : {2, 3, 7, 12}) {
    const Fsm f = gen_fsm(m, rng);
    for (int q = 0; q < m; ++q) {
      std::vector<int> row(f.row(q).begin(), f.row(q).end());
      std::sort(row.begin(), row.end());
      for (int s = 0; s < m; ++s) EXPECT_EQ(row[std::size_t(s)], s);
    }
  }
  EXPECT_THROW(Fsm(2, {0, 0, 1, 0}), DomainError);
}

TEST(Tasks, FsmPermutationsAreUniform) {
  Rng rng(4);
  std::map<std::vector<int>, int> counts;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const Fsm f = gen_fsm(3, rng);
    counts[std::vector<int>(f.row(0).begin(), f.row(0).end())]++;
  }
  ASSERT_EQ(counts.size(), 6u);
  for (const auto& [perm, c] : counts) {
    EXPECT_TRUE(oracle::within_3sigma(double(c) / n, 1.0 / 6.0, n)) << c;
  }
}

TEST(Tasks, LengthsAreUniform) {
  const TaskSpec spec = TaskSpec::mod_add(5, 10);
  Rng rng(5);
  std::map<int, int> counts;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const Sample s = gen_sample(spec, rng);
    EXPECT_EQ(s.tokens.size(), std::size_t(s.input_count + 2));
    counts[s.input_count]++;
  }
  ASSERT_EQ(counts.size(), 9u);
  for (const auto& [len, c] : counts) {
    EXPECT_GE(len, 2);
    EXPECT_LE(len, 10);
    EXPECT_TRUE(oracle::within_3sigma(double(c) / n, 1.0 / 9.0, n)) << len << ": " << c;
  }
}

TEST(Tasks, GeneratedTargetsMatchIndependentOracle) {
  const TaskSpec fsm = TaskSpec::state_machine(oracle::appendix_fsm());
  const TaskSpec arith = TaskSpec::mod_arith(11);
  Rng rng(6);
  for (int i = 0; i < 200; ++i) {
    const Sample s = gen_sample(fsm, rng);
    int q = s.tokens[1];
    for (std::size_t t = 2; t + 1 < s.tokens.size(); ++t) q = oracle::appendix_fsm().table()[std::size_t(q * 6 + s.tokens[t])];
    EXPECT_EQ(q, s.target);

    const Sample a = gen_sample(arith, rng);
    const Vocab v(arith);
    long long acc = a.tokens[1];
    for (std::size_t t = 2; t + 1 < a.tokens.size(); t += 2) {
      const long long y = a.tokens[t + 1];
      switch (*v.as_op(a.tokens[t])) {
        case ArithOp::Add: acc = (acc + y) % 11; break;
        case ArithOp::Sub: acc = ((acc - y) % 11 + 11) % 11; break;
        case ArithOp::Mul: acc = (acc * y) % 11; break;
      }
    }
    EXPECT_EQ(acc, a.target);
  }
}

TEST(Tasks, FixedDatasetParityHasBothClasses) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const auto set = fixed_dataset(TaskSpec::parity(), 2, rng);
    ASSERT_EQ(set.size(), 2u);
    EXPECT_NE(set[0].target, set[1].target);
  }
}

TEST(Tasks, FixedDatasetClassHistogram) {
  Rng rng(7);
  const auto set = fixed_dataset(TaskSpec::mod_add(4), 100, rng);
  std::map<int, int> counts;
  for (const auto& s : set) counts[s.target]++;
  for (int c = 0; c < 4; ++c) {
    const double p = 0.25;
    EXPECT_LE(std::abs(counts[c] - 25.0), 4.0 * std::sqrt(100 * p * (1 - p)));
  }
}

TEST(Tasks, DatasetRoundTrip) {
  const TaskSpec spec = TaskSpec::mod_arith(13);
  Rng rng(8);
  const auto set = fixed_dataset(spec, 25, rng);
  std::stringstream ss;
  write_dataset(ss, Vocab(spec), set);
  EXPECT_EQ(read_dataset(ss, Vocab(spec)), set);
}

TEST(Tasks, FsmFileRoundTrip) {
  std::stringstream ss;
  write_fsm(ss, oracle::appendix_fsm());
  EXPECT_EQ(read_fsm(ss), oracle::appendix_fsm());
  std::stringstream bad("2\n0 1\n1");
  EXPECT_THROW(read_fsm(bad), ParseError);
}

TEST(Tasks, ParseRejectsMalformedLines) {
  const Vocab v(TaskSpec::mod_add(5));
  EXPECT_THROW(parse_sample(v, "[BOS] 1 2 [EOI] 5"), ParseError);
  EXPECT_THROW(parse_sample(v, "1 2 [EOI] 3"), ParseError);
  EXPECT_THROW(parse_sample(v, "[BOS] 1 2 3"), ParseError);
  EXPECT_THROW(parse_sample(v, "[BOS] 1 7 [EOI] 3"), ParseError);
}

TEST(Tasks, TwoStateMachinesHaveIdentityOrSwapRows) {
  Rng rng(9);
  bool saw_id = false, saw_swap = false;
  for (int i = 0; i < 50; ++i) {
    const Fsm f = gen_fsm(2, rng);
    for (int q = 0; q < 2; ++q) {
      const bool id = f.next(q, 0) == 0 && f.next(q, 1) == 1;
      const bool swap = f.next(q, 0) == 1 && f.next(q, 1) == 0;
      EXPECT_TRUE(id || swap);
      saw_id = saw_id || id;
      saw_swap = saw_swap || swap;
    }
  }
  EXPECT_TRUE(saw_id && saw_swap);
}

TEST(Tasks, DegenerateLengthRange) {
  Rng rng(10);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(gen_sample(TaskSpec::mod_add(2, 2), rng).input_count, 2);
}

TEST(Tasks, FixedDatasetIsDeterministic) {
  Rng a(11), b(11);
  EXPECT_EQ(fixed_dataset(TaskSpec::mod_arith(7), 30, a), fixed_dataset(TaskSpec::mod_arith(7), 30, b));
}
