#include <gtest/gtest.h>

#include <sstream>

#include "bilinear/config.hpp"
#include "bilinear/error.hpp"
#include "bilinear/harness.hpp"

using namespace bilinear;

namespace {

RunConfig tiny_config() {
  RunConfig rc = profile_defaults(Profile::Desk);
  rc.task = TaskKind::ModAdd;
  rc.ms = {2};
  rc.model.variant = Variant::R2Rotation;
  rc.model.hidden = 4;
  rc.model.input_dim = 4;
  rc.train.steps = 200;
  rc.train.learning_rates = {1e-2, 1e-3};
  rc.train.val_size = 64;
  rc.ood_lengths = {30};
  rc.eval_samples = 64;
  return rc;
}

ResultRow row(int m, double lr, bool chosen) {
  ResultRow r;
  r.task = "mod_add";
  r.model = "bilinear";
  r.variant_params = "H=4 D=4 additive=none";
  r.m = m;
  r.length = "100";
  r.lr = lr;
  r.norm_acc = 0.5;
  r.chosen = chosen;
  return r;
}

}  // namespace

TEST(Config, ParsesCommentsListsAndOverrides) {
  const Config c = Config::parse_string("# comment\nsteps = 10\n\nlrs=1e-3, 1e-4\nsteps=20\nwall_time=true\n");
  EXPECT_EQ(c.get_int("steps", 0), 20);
  EXPECT_EQ(c.get_double_list("lrs", {}), (std::vector<double>{1e-3, 1e-4}));
  EXPECT_TRUE(c.get_bool("wall_time", false));
  EXPECT_EQ(c.get_int("missing", 7), 7);
  EXPECT_THROW(Config::parse_string("novalue\n"), ParseError);
  EXPECT_THROW(Config::parse_string("wall_time=perhaps\n").get_bool("wall_time", false), ParseError);
}

TEST(Config, UnknownKeysAreRejected) {
  EXPECT_THROW(run_config_from(Config::parse_string("stpes=10\n"), Profile::Desk), ParseError);
}

TEST(Config, ProfileDefaults) {
  const RunConfig desk = profile_defaults(Profile::Desk);
  EXPECT_EQ(desk.model.hidden, 32u);
  EXPECT_EQ(desk.train.steps, 20000);
  EXPECT_EQ(desk.ood_lengths, std::vector<int>{100});
  EXPECT_EQ(desk.train.learning_rates, (std::vector<double>{1e-3, 1e-4, 1e-5}));
  const RunConfig paper = profile_defaults(Profile::Paper);
  EXPECT_EQ(paper.model.hidden, 256u);
  EXPECT_EQ(paper.train.steps, 100000);
  EXPECT_EQ(paper.ood_lengths, std::vector<int>{500});
  EXPECT_EQ(paper.ms, (std::vector<int>{2, 3, 5, 10, 25, 50}));
  EXPECT_EQ(parse_profile("paper"), Profile::Paper);
  EXPECT_THROW(parse_profile("lab"), ParseError);
}

TEST(Config, RoundTripsThroughKeyValueForm) {
  const Config overrides = Config::parse_string(
      "task=state_machine\nm=3,5\nvariant=block_diag\nblock_size=4\nadditive=input+const\nlrs=0.01\nseeds=1,2\n");
  const RunConfig rc = run_config_from(overrides, Profile::Desk);
  EXPECT_EQ(rc.task, TaskKind::StateMachine);
  EXPECT_EQ(rc.model.variant, Variant::BlockDiag);
  EXPECT_EQ(rc.model.block_size, 4u);
  const RunConfig back = run_config_from(to_config(rc), Profile::Paper);
  EXPECT_EQ(to_config(back).values(), to_config(rc).values());
  EXPECT_EQ(back.fingerprint(), rc.fingerprint());
  EXPECT_NE(profile_defaults(Profile::Desk).fingerprint(), rc.fingerprint());
  const Config flat = to_config(rc);
  for (const auto& [key, value] : flat.values()) {
    EXPECT_NE(std::find(run_config_keys().begin(), run_config_keys().end(), key), run_config_keys().end()) << key;
  }
}

TEST(Config, ValidateRejectsBadValues) {
  RunConfig rc = tiny_config();
  rc.ms = {1};
  EXPECT_THROW(rc.validate(), DomainError);
  rc = tiny_config();
  rc.task = TaskKind::Parity;
  rc.ms = {3};
  EXPECT_THROW(rc.validate(), DomainError);
}

TEST(Csv, EmptyInputGivesHeaderOnly) {
  std::ostringstream os;
  emit_csv(os, {});
  EXPECT_EQ(os.str(), std::string(kCsvHeader) + "\n");
}

TEST(Csv, ParseInvertsEmit) {
  std::vector<ResultRow> rows{row(2, 1e-3, true), row(3, 1e-4, false)};
  rows[1].status = "overflow";
  rows[1].raw_acc = 0.123456789012345;
  rows[1].seed = 18446744073709551615ULL;
  std::stringstream ss;
  emit_csv(ss, rows);
  EXPECT_EQ(parse_csv(ss), rows);
  std::stringstream bad("task,model\n");
  EXPECT_THROW(parse_csv(bad), ParseError);
}

TEST(Csv, MergeRejectsTwoChosenRates) {
  const std::vector<ResultRow> a{row(2, 1e-3, true)};
  EXPECT_EQ(merge_results(a, {row(3, 1e-3, true)}).size(), 2u);
  EXPECT_EQ(merge_results(a, {row(2, 1e-4, false)}).size(), 2u);
  EXPECT_THROW(merge_results(a, {row(2, 1e-4, true)}), DomainError);
}

TEST(Csv, MarkdownTable) {
  std::vector<ResultRow> rows{row(2, 1e-3, true), row(3, 1e-3, true), row(3, 1e-4, false)};
  rows[1].norm_acc = 1.0;
  rows[2].norm_acc = 0.0;
  const std::string md = emit_markdown_table(rows, "100");
  EXPECT_NE(md.find("| 2 | 3 |"), std::string::npos) << md;
  EXPECT_NE(md.find("| 0.50 | 1.00 |"), std::string::npos) << md;
  EXPECT_DOUBLE_EQ(chosen_accuracy(rows, "bilinear", rows[0].variant_params, 3, "100"), 1.0);
  EXPECT_THROW(chosen_accuracy(rows, "bilinear", rows[0].variant_params, 5, "100"), DomainError);
}

TEST(Sweep, RepeatedRunsAreByteIdentical) {
  const RunConfig rc = tiny_config();
  std::ostringstream a, b;
  emit_csv(a, sweep(rc));
  emit_csv(b, sweep(rc));
  EXPECT_EQ(a.str(), b.str());
}

TEST(Sweep, RowsCoverEveryRateAndLength) {
  const auto rows = sweep(tiny_config());
  ASSERT_EQ(rows.size(), 4u);  // 2 rates x (in-distribution + one OOD length)
  int chosen = 0;
  for (const auto& r : rows) {
    chosen += r.chosen;
    EXPECT_EQ(r.wall_s, 0.0);
    EXPECT_TRUE(r.length == "2-10" || r.length == "30");
    EXPECT_EQ(r.model, "r2_rotation");
  }
  EXPECT_EQ(chosen, 2);
}

TEST(Sweep, FailedRunsAreNeverChosen) {
  RunConfig rc = tiny_config();
  rc.model.variant = Variant::RealDiag;
  rc.model.init_half_width = 50.0;
  rc.model.embed_std = 50.0;
  rc.train.min_len = 150;
  rc.train.max_len = 200;
  rc.train.steps = 10;
  const auto rows = run_cell(rc, 2, 0);
  for (const auto& r : rows) {
    EXPECT_EQ(r.status, "overflow");
    EXPECT_FALSE(r.chosen);
  }
}

TEST(Sweep, AblationAndFactorSweepLabelCells) {
  RunConfig rc = tiny_config();
  rc.train.learning_rates = {1e-2};
  rc.additive_settings = {AdditiveConfig::parse("none"), AdditiveConfig::parse("const")};
  const auto abl = ablate_additive(rc);
  ASSERT_EQ(abl.size(), 4u);
  EXPECT_NE(abl[0].variant_params, abl[2].variant_params);
  EXPECT_NE(abl[2].variant_params.find("additive=const"), std::string::npos);

  rc.ranks = {1, 2};
  const auto fs = factor_sweep(rc);
  ASSERT_EQ(fs.size(), 4u);
  EXPECT_EQ(fs[0].model, "factored");
  EXPECT_NE(fs[0].variant_params.find("R=1"), std::string::npos);
  EXPECT_NE(fs[2].variant_params.find("R=2"), std::string::npos);
}
