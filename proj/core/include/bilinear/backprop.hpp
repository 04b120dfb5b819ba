#pragma once

// Reverse-mode gradients of the recurrence (backpropagation through time).
//
// The engine materializes each token's transition operator once (A_x for
// the bilinear variants, Wx^T x for CP factors, angles for rotations, ...)
// and accumulates gradients with respect to those operators while walking
// the trace backwards. `take_gradients` then chains the per-token operator
// gradients into the parameter tensors and the embedding rows, so
// H^2 D work is paid per distinct token rather than per time step.

#include <memory>
#include <span>
#include <vector>

#include "bilinear/model.hpp"

namespace bilinear {

struct Gradients {
  ParameterSet d;

  static Gradients zeros_like(const TransitionModel& model);

  std::vector<ParamGroup> groups() { return param_groups(d); }
  std::vector<ConstParamGroup> groups() const { return param_groups(d); }

  Gradients& operator+=(const Gradients& other);
  void scale(double c);
  double global_norm() const;
  bool finite() const;
};

/// Zeroes every group the model marks as frozen.
void mask_frozen(const TransitionModel& model, Gradients& grads);

class RecurrenceEngine {
 public:
  /// The model must outlive the engine and stay unchanged while it is used.
  explicit RecurrenceEngine(const TransitionModel& model);
  ~RecurrenceEngine();
  RecurrenceEngine(RecurrenceEngine&&) noexcept;
  RecurrenceEngine& operator=(RecurrenceEngine&&) = delete;

  ForwardResult forward(std::span<const int> tokens, bool normalize);

  /// One recurrence step; no trace is recorded.
  Vec64 step(std::span<const double> h, int token);

  /// Adds the gradient of sum_c d_logits[c] * logits[c] for this trace.
  void accumulate(const StepTrace& trace, std::span<const double> d_logits);

  /// Gradients accumulated since construction or the last call; resets the accumulators.
  Gradients take_gradients();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Exact gradient with respect to every parameter for one trace.
Gradients backward(const TransitionModel& model, const StepTrace& trace,
                   std::span<const double> d_logits);

}  // namespace bilinear
