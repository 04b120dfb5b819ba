#pragma once

// Recurrent transition models. Every variant maps (h, x) to h' through an
// input-dependent transition A_x:
//
//   FullBilinear  A_x[i][j] = sum_k W[i][j][k] x[k]
//   Factored      A_x = Wh1 diag(Wx^T x) Wh2^T          (CP rank R)
//   BlockDiag     A_x = blockdiag(A^(1)_x, ..., A^(B)_x), each block bilinear
//   R2Rotation    A_x = blockdiag(R2(theta_b(x))), theta_b(x) = angle_weights[b] . x
//   RealDiag      A_x = diag(diag_weights x)
//   Elman         h' = tanh(A h + B x + b)                (nonlinear baseline)
//
// Linear variants optionally add B x and/or b (the additive terms). Without
// them the update is purely multiplicative and the hidden state is
// scale-invariant. Token embeddings x = embed[token] and the readout
// logits = readout h complete the model.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "bilinear/tensor.hpp"

namespace bilinear {

class Rng;

enum class Variant { FullBilinear, Factored, BlockDiag, R2Rotation, RealDiag, Elman };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view text);

struct FullBilinear {
  Tensor3 w;  // H x H x D
};

struct Factored {
  Mat64 wh1;  // H x R
  Mat64 wh2;  // H x R
  Mat64 wx;   // D x R
};

struct BlockDiag {
  std::vector<Tensor3> blocks;  // each block_size x block_size x D
  std::size_t block_size() const { return blocks.empty() ? 0 : blocks.front().d0(); }
};

struct R2Rotation {
  Mat64 angle_weights;  // (H / 2) x D
};

struct RealDiag {
  Mat64 diag_weights;  // H x D
};

struct Elman {
  Mat64 recurrent;  // H x H
};

using Transition = std::variant<FullBilinear, Factored, BlockDiag, R2Rotation, RealDiag, Elman>;

struct AdditiveConfig {
  bool input_dependent = false;  // + B x
  bool constant_bias = false;    // + b
  double init_half_width = 0.01;

  bool any() const { return input_dependent || constant_bias; }
  /// One of "none", "input", "input+const", "const".
  std::string label() const;
  static AdditiveConfig parse(std::string_view label, double init_half_width = 0.01);
};

/// Every learnable tensor of a model. Gradients reuse the same layout.
struct ParameterSet {
  Transition transition;
  std::optional<Mat64> input_weights;  // B: H x D
  std::optional<Vec64> bias;           // b: H
  Vec64 h0;
  Mat64 embed;    // vocab x D
  Mat64 readout;  // classes x H
};

enum class GroupKind { Transition, Additive, InitialState, Embedding, Readout };

struct ParamGroup {
  std::string name;
  GroupKind kind;
  std::span<double> values;
};

struct ConstParamGroup {
  std::string name;
  GroupKind kind;
  std::span<const double> values;
};

/// Stable, named view of every tensor in a parameter set.
std::vector<ParamGroup> param_groups(ParameterSet& p);
std::vector<ConstParamGroup> param_groups(const ParameterSet& p);

struct FreezeMask {
  bool transition = false;
  bool additive = false;
  bool initial_state = false;
  bool embedding = false;
  bool readout = false;

  bool frozen(GroupKind kind) const;
};

struct TransitionModel {
  ParameterSet params;
  AdditiveConfig additive;
  FreezeMask frozen;
  /// Compiled state machines: the first input after BOS sets h to one-hot(symbol).
  bool first_input_sets_state = false;

  Variant variant() const;
  std::size_t hidden() const { return params.h0.size(); }
  std::size_t input_dim() const { return params.embed.cols(); }
  std::size_t vocab_size() const { return params.embed.rows(); }
  std::size_t classes() const { return params.readout.rows(); }
  /// No additive terms and a linear variant: the hidden state is scale-invariant.
  bool pure_multiplicative() const;

  /// Throws DimensionError / DomainError when shapes disagree.
  void validate() const;
};

struct ModelShape {
  Variant variant = Variant::FullBilinear;
  std::size_t hidden = 32;
  std::size_t input_dim = 32;
  std::size_t vocab = 4;
  std::size_t classes = 2;
  std::size_t rank = 0;        // Factored
  std::size_t block_size = 0;  // BlockDiag
  AdditiveConfig additive;
  /// Half width of U(-w, w) for transition tensors, h0 and readout.
  double init_half_width = 0.01;
  /// Half width of the CP factors. 0: chosen so the assembled tensor has the
  /// entry variance of U(-init_half_width, init_half_width).
  double factor_half_width = 0.0;
  /// Embedding rows are drawn N(0, embed_std^2).
  double embed_std = 1.0;
};

TransitionModel make_model(const ModelShape& shape, Rng& rng);

/// Per-group parameter counts.
struct ParamCount {
  std::size_t transition = 0;
  std::size_t additive = 0;
  std::size_t initial_state = 0;
  std::size_t embedding = 0;
  std::size_t readout = 0;
  std::size_t total() const { return transition + additive + initial_state + embedding + readout; }
};

ParamCount param_count(const TransitionModel& model);

/// Hidden states visited by one forward pass. Row t of `states` is the
/// state before consuming tokens[t]; the final row is the state at EOI.
struct StepTrace {
  std::vector<int> tokens;
  std::vector<double> states;
  std::size_t hidden = 0;
  /// Index of the token whose step overwrote the state (first-input rule), if any.
  std::optional<std::size_t> reset_at;
  bool normalized = false;

  std::size_t size() const { return tokens.size(); }
  std::span<const double> state(std::size_t t) const { return {states.data() + t * hidden, hidden}; }
};

struct StepOutput {
  Vec64 h;
  int token;
};

struct ForwardResult {
  Vec64 logits;
  StepTrace trace;
};

/// One recurrence step from h on `token`.
StepOutput step(const TransitionModel& model, std::span<const double> h, int token);

/// h0 -> one step per token (BOS and EOI included) -> logits = readout h_EOI.
/// With normalize, h is rescaled to unit norm after every step.
ForwardResult forward(const TransitionModel& model, std::span<const int> tokens, bool normalize);

/// Argmax with ties broken toward the smallest index.
int argmax(std::span<const double> logits);

/// Inference uses per-step normalization exactly when the model is scale-invariant.
bool inference_normalizes(const TransitionModel& model);

int predict(const TransitionModel& model, std::span<const int> tokens);
int predict(const TransitionModel& model, std::span<const int> tokens, bool normalize);

/// Explicit H x H transition matrix A_x for an arbitrary input embedding x
/// (Elman: the recurrent matrix).
Mat64 transition_matrix(const TransitionModel& model, std::span<const double> x);
Mat64 transition_matrix_for_token(const TransitionModel& model, int token);

/// Multiplies every entry of h0 by c.
TransitionModel scale_initial_state(TransitionModel model, double c);

}  // namespace bilinear
