#pragma once

// Analytic weight constructions: exact FSM simulation by a bilinear tensor,
// modular addition by a single rotation block, and parity from a frozen
// random diagonal recurrence with a fitted readout.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bilinear/model.hpp"
#include "bilinear/tasks.hpp"

namespace bilinear {

/// FullBilinear with H = m and one-hot embeddings. W[:, :, sigma] is the
/// permutation matrix of delta(., sigma), BOS/EOI slices are identities and
/// the first input sets the state. All groups are frozen.
TransitionModel compile_fsm(const Fsm& fsm);

/// (Delta_sigma)_{ij} = 1 iff delta(j, sigma) = i.
Mat64 fsm_transition_matrix(const Fsm& fsm, int symbol);

/// R2Rotation with H = 2: token sigma rotates by 2 pi sigma / m, BOS/EOI by 0,
/// h0 = (1, 0) and readout row k = R2(2 pi k / m) h0.
TransitionModel compile_mod_add(int m);

struct ParityDiagnostics {
  std::size_t hidden = 0;
  /// Diagonal entries for symbols 0 and 1.
  std::vector<double> a0;
  std::vector<double> a1;
  bool has_opposite_sign = false;  // some a0_i * a1_i < 0
  bool has_ideal = false;          // some a0_i > 0 and a1_i < 0
};

/// RealDiag over the parity vocabulary with one-hot embeddings, symbol
/// diagonals i.i.d. U[-1, 1], BOS/EOI diagonals 1, h0 = 1 and a zero
/// readout. Everything but the readout is frozen.
TransitionModel random_parity_model(std::size_t hidden, Rng& rng);

ParityDiagnostics parity_diagnostics(const TransitionModel& model);

/// 1 - 2^-H and 1 - (3/4)^H.
double parity_opposite_probability(std::size_t hidden);
double parity_ideal_probability(std::size_t hidden);

struct ParityRates {
  int draws = 0;
  int opposite = 0;
  int ideal = 0;
  double opposite_fraction() const { return double(opposite) / double(draws); }
  double ideal_fraction() const { return double(ideal) / double(draws); }
};

/// Draws random_parity_model with seeds derive_seed(base_seed, 0..draws-1).
ParityRates parity_monte_carlo(std::size_t hidden, int draws, std::uint64_t base_seed);

struct FrozenParityResult {
  TransitionModel model;
  ParityDiagnostics diagnostics;
  /// "closed_form", "gradient" or "none".
  std::string method;
  std::optional<std::size_t> component;
  double probe_accuracy = 0.0;
  bool success = false;
};

/// Fits the readout of a frozen random model from one even and one odd
/// example. Closed form: a component whose final-state sign differs between
/// the two examples, preferring a0 > 0 > a1 and then the largest
/// min(|a0|, |a1|). Without such a component the readout is trained by
/// gradient descent on the normalized final states. success means every
/// probe is classified correctly.
FrozenParityResult frozen_parity(std::size_t hidden, std::uint64_t seed,
                                 std::span<const Sample> train_set,
                                 std::span<const Sample> probes);

struct CommutatorReport {
  std::size_t pairs = 0;
  double max_norm = 0.0;  // sup-norm of A_x A_y - A_y A_x
  bool commutative(double tol = 1e-12) const { return max_norm < tol; }
};

double commutator_norm(const Mat64& a, const Mat64& b);

CommutatorReport verify_commutativity(const TransitionModel& model,
                                      std::span<const std::pair<int, int>> token_pairs);
CommutatorReport verify_commutativity(const TransitionModel& model,
                                      std::span<const std::pair<Vec64, Vec64>> input_pairs);

/// Rotation angle of every block for every token (vocab x H/2). R2Rotation only.
Mat64 token_angles(const TransitionModel& model);

}  // namespace bilinear
