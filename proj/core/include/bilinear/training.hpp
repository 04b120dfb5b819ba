#pragma once

// Loss, Adam, the training loop with its learning-rate sweep, and accuracy
// evaluation.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bilinear/backprop.hpp"
#include "bilinear/model.hpp"
#include "bilinear/tasks.hpp"

namespace bilinear {

/// Softmax cross-entropy, stabilized by subtracting the largest logit.
double cross_entropy(std::span<const double> logits, int target);
/// softmax(logits) - one_hot(target).
Vec64 cross_entropy_grad(std::span<const double> logits, int target);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  Gradients m;
  Gradients v;
  long long t = 0;

  static AdamState for_model(const TransitionModel& model, AdamConfig config);
};

/// Bias-corrected Adam update of every non-frozen group.
void adam_step(TransitionModel& model, const Gradients& grads, AdamState& state);

/// Rescales grads so the global norm is at most max_norm; returns the norm before clipping.
double clip_global_norm(Gradients& grads, double max_norm);

struct TrainConfig {
  std::vector<double> learning_rates{1e-3, 1e-4, 1e-5};
  int steps = 20000;
  int batch = 64;
  double early_stop_loss = 1e-5;
  int min_len = 2;
  int max_len = 10;
  std::uint64_t seed = 0;
  double clip_norm = 1.0;  // <= 0 disables clipping
  int val_size = 512;
  int val_every = 100;
  int smoothing_window = 3;
  /// 0: fresh batches every step. Otherwise a fixed training set of this size, reshuffled per epoch.
  int train_set_size = 0;

  void validate() const;
};

struct HistoryRow {
  int step = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
};

void write_history_header(std::ostream& os);
void write_history(std::ostream& os, std::span<const HistoryRow> rows);

enum class RunStatus { Ok, Overflow };
std::string_view to_string(RunStatus s);

struct TrainResult {
  /// Snapshot with the lowest validation loss seen.
  TransitionModel model;
  double lr = 0.0;
  RunStatus status = RunStatus::Ok;
  std::string diagnostics;
  std::vector<HistoryRow> history;
  int steps_run = 0;
  bool early_stopped = false;
  double best_val_loss = 0.0;
  double best_val_acc = 0.0;
};

/// Fixed validation set used by every run with this seed.
std::vector<Sample> validation_set(const TaskSpec& spec, const TrainConfig& cfg);

TrainResult train_single(TransitionModel model, const TaskSpec& spec, const TrainConfig& cfg,
                         double lr);

struct SweepResult {
  std::vector<TrainResult> runs;  // one per learning rate, in config order
  std::optional<std::size_t> chosen;

  const TrainResult* best() const { return chosen ? &runs[*chosen] : nullptr; }
};

/// Index of the successful run with the highest validation accuracy (ties:
/// lower validation loss, then earlier run).
std::optional<std::size_t> choose_run(std::span<const TrainResult> runs);

/// Trains a copy of `init` at every learning rate and picks the successful
/// run with the highest validation accuracy (ties: lower validation loss).
SweepResult train(const TransitionModel& init, const TaskSpec& spec, const TrainConfig& cfg);

struct EvalResult {
  double raw = 0.0;
  double norm = 0.0;
  int samples = 0;
  int overflowed = 0;  // counted as wrong
};

/// (raw - 1/m) / (1 - 1/m).
double normalized_accuracy(double raw, int m);

/// Accuracy on n_samples fresh sequences with exactly `length` inputs.
EvalResult evaluate(const TransitionModel& model, const TaskSpec& spec, int length, int n_samples,
                    std::uint64_t seed);
/// Same with input counts uniform on [min_len, max_len].
EvalResult evaluate_range(const TransitionModel& model, const TaskSpec& spec, int min_len,
                          int max_len, int n_samples, std::uint64_t seed);
EvalResult evaluate_samples(const TransitionModel& model, int classes,
                            std::span<const Sample> samples);

/// Mean cross-entropy of the training-path forward over `samples`.
double mean_loss(const TransitionModel& model, std::span<const Sample> samples);

struct GroupCheck {
  std::string name;
  std::size_t size = 0;
  double max_analytic = 0.0;
  double max_numeric = 0.0;
  double max_abs_error = 0.0;
  /// max |analytic - numeric| / max(|analytic|_inf, |numeric|_inf), 0 when both vanish.
  double rel_error = 0.0;
};

/// Small model for gradient checks (H=6, D=4, four tokens, two classes,
/// rank 3, blocks of 2). Init widths per variant keep hidden states and
/// logits of order one over a few steps, so gradients sit far above the
/// finite-difference noise floor.
ModelShape gradcheck_shape(Variant v, bool input_dependent = false, bool constant_bias = false);

/// BPTT gradient of mean_loss against central differences with step h, for
/// every parameter of every group. Frozen groups are checked as well.
std::vector<GroupCheck> gradient_check(const TransitionModel& model, std::span<const Sample> samples,
                                       double h = 1e-5);

}  // namespace bilinear
