#pragma once

// Experiment cells, sweeps and result tables.
//
// A cell is one (task, model, m, seed): the model is trained at every
// learning rate, the best run by validation is marked chosen, and every run
// is evaluated in distribution (lengths 2..10) and at each OOD length.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "bilinear/config.hpp"
#include "bilinear/model.hpp"
#include "bilinear/tasks.hpp"
#include "bilinear/training.hpp"

namespace bilinear {

enum class Profile { Desk, Paper };
Profile parse_profile(std::string_view text);
std::string_view to_string(Profile p);

struct RunConfig {
  TaskKind task = TaskKind::ModAdd;
  std::vector<int> ms{2, 3, 5};
  ModelShape model;
  std::vector<std::size_t> ranks{1, 2, 4, 8, 16, 32, 64};  // factor sweep
  std::vector<AdditiveConfig> additive_settings;           // additive ablation
  TrainConfig train;
  int in_dist_min = 2;
  int in_dist_max = 10;
  std::vector<int> ood_lengths{100};
  int eval_samples = 2048;
  std::vector<std::uint64_t> seeds{0};
  /// StateMachine: the FSM for modulus m is gen_fsm(m, Rng(derive_seed(fsm_seed, m))).
  std::uint64_t fsm_seed = 1234;
  bool record_wall_time = false;

  void validate() const;
  /// Stable hash of the configuration, written to result metadata.
  std::string fingerprint() const;
};

RunConfig profile_defaults(Profile p);
/// Profile defaults overlaid with the keys of `cfg`; unknown keys are rejected.
RunConfig run_config_from(const Config& cfg, Profile p);
/// Every recognised configuration key.
const std::vector<std::string>& run_config_keys();
/// Back to key=value form (round-trips through run_config_from).
Config to_config(const RunConfig& rc);

TaskSpec task_for(const RunConfig& rc, int m);
ModelShape shape_for(const RunConfig& rc, const TaskSpec& task);

struct ResultRow {
  std::string task;
  std::string model;
  std::string variant_params;
  int m = 0;
  std::string length;  // "2-10" or an OOD length
  double lr = 0.0;
  std::uint64_t seed = 0;
  double raw_acc = 0.0;
  double norm_acc = 0.0;
  std::string status = "ok";
  double wall_s = 0.0;
  bool chosen = false;

  bool operator==(const ResultRow&) const = default;
};

using Progress = std::function<void(const std::string&)>;

std::string variant_params(const ModelShape& shape);

/// Rows for every learning rate and length of one cell.
std::vector<ResultRow> run_cell(const RunConfig& rc, int m, std::uint64_t seed,
                                const Progress& progress = {});
/// run_cell over every m and seed of the config.
std::vector<ResultRow> sweep(const RunConfig& rc, const Progress& progress = {});
/// Every additive setting (default: input, input+const, const, none) over every m.
std::vector<ResultRow> ablate_additive(const RunConfig& rc, const Progress& progress = {});
/// Factored model at every rank in `ranks`, on the configured task.
std::vector<ResultRow> factor_sweep(const RunConfig& rc, const Progress& progress = {});

/// Best chosen normalized accuracy over seeds for (model, variant_params, m, length).
double chosen_accuracy(const std::vector<ResultRow>& rows, const std::string& model,
                       const std::string& variant_params, int m, const std::string& length);

extern const char* const kCsvHeader;
void emit_csv(std::ostream& os, const std::vector<ResultRow>& rows);
void emit_csv_file(const std::string& path, const std::vector<ResultRow>& rows);
std::vector<ResultRow> parse_csv(std::istream& is);

/// Appends b to a; throws if a cell ends up with more than one chosen learning rate.
std::vector<ResultRow> merge_results(std::vector<ResultRow> a, const std::vector<ResultRow>& b);

/// Rows: model (with variant params); columns: m; cells: chosen normalized
/// accuracy at `length`, best over seeds.
std::string emit_markdown_table(const std::vector<ResultRow>& rows, const std::string& length);

}  // namespace bilinear
