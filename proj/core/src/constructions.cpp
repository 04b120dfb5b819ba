#include "bilinear/constructions.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "bilinear/error.hpp"
#include "bilinear/rng.hpp"
#include "bilinear/training.hpp"

namespace bilinear {

namespace {

FreezeMask all_frozen() { return FreezeMask{true, true, true, true, true}; }

}  // namespace

Mat64 fsm_transition_matrix(const Fsm& fsm, int symbol) {
  const int m = fsm.size();
  if (symbol < 0 || symbol >= m) throw DomainError("symbol out of range");
  Mat64 delta{std::size_t(m), std::size_t(m)};
  for (int j = 0; j < m; ++j) delta(std::size_t(fsm.next(j, symbol)), std::size_t(j)) = 1.0;
  return delta;
}

TransitionModel compile_fsm(const Fsm& fsm) {
  const int m = fsm.size();
  const Vocab vocab(TaskKind::StateMachine, m);
  const auto H = std::size_t(m);
  const auto V = std::size_t(vocab.size());
  Tensor3 w(H, H, V);
  for (int s = 0; s < m; ++s) w.set_frontal_slice(std::size_t(s), fsm_transition_matrix(fsm, s));
  w.set_frontal_slice(std::size_t(vocab.bos()), Mat64::identity(H));
  w.set_frontal_slice(std::size_t(vocab.eoi()), Mat64::identity(H));

  TransitionModel model;
  model.params.transition = FullBilinear{std::move(w)};
  model.params.h0 = Vec64(H, 1.0 / double(m));
  model.params.embed = Mat64::identity(V);
  model.params.readout = Mat64::identity(H);
  model.frozen = all_frozen();
  model.first_input_sets_state = true;
  model.validate();
  return model;
}

TransitionModel compile_mod_add(int m) {
  if (m < 2) throw DomainError("compile_mod_add: m must be at least 2");
  const Vocab vocab(TaskKind::ModAdd, m);
  const auto V = std::size_t(vocab.size());
  const double step = 2.0 * std::numbers::pi / double(m);
  Mat64 angles(1, V);
  for (int s = 0; s < m; ++s) angles(0, std::size_t(s)) = step * double(s);

  TransitionModel model;
  model.params.transition = R2Rotation{std::move(angles)};
  model.params.h0 = Vec64{1.0, 0.0};
  model.params.embed = Mat64::identity(V);
  Mat64 readout(std::size_t(m), 2);
  for (int k = 0; k < m; ++k) {
    const Vec64 wk = matvec(rotation2(step * double(k)), model.params.h0.values());
    readout(std::size_t(k), 0) = wk[0];
    readout(std::size_t(k), 1) = wk[1];
  }
  model.params.readout = std::move(readout);
  model.frozen = all_frozen();
  model.validate();
  return model;
}

TransitionModel random_parity_model(std::size_t hidden, Rng& rng) {
  if (hidden == 0) throw DomainError("random_parity_model: hidden size must be positive");
  const Vocab vocab(TaskKind::Parity, 2);
  const auto V = std::size_t(vocab.size());
  Mat64 diag(hidden, V, 1.0);
  for (std::size_t i = 0; i < hidden; ++i) {
    diag(i, 0) = rng.uniform(-1.0, 1.0);
    diag(i, 1) = rng.uniform(-1.0, 1.0);
  }
  TransitionModel model;
  model.params.transition = RealDiag{std::move(diag)};
  model.params.h0 = Vec64(hidden, 1.0);
  model.params.embed = Mat64::identity(V);
  model.params.readout = Mat64(2, hidden);
  model.frozen = FreezeMask{true, true, true, true, false};
  model.validate();
  return model;
}

ParityDiagnostics parity_diagnostics(const TransitionModel& model) {
  const auto* rd = std::get_if<RealDiag>(&model.params.transition);
  if (!rd) throw DomainError("parity diagnostics need a RealDiag model");
  ParityDiagnostics d;
  d.hidden = model.hidden();
  const Mat64 a = matmul(rd->diag_weights, transpose(model.params.embed));  // H x vocab
  for (std::size_t i = 0; i < d.hidden; ++i) {
    d.a0.push_back(a(i, 0));
    d.a1.push_back(a(i, 1));
    if (a(i, 0) * a(i, 1) < 0.0) d.has_opposite_sign = true;
    if (a(i, 0) > 0.0 && a(i, 1) < 0.0) d.has_ideal = true;
  }
  return d;
}

double parity_opposite_probability(std::size_t hidden) { return 1.0 - std::pow(0.5, double(hidden)); }

double parity_ideal_probability(std::size_t hidden) { return 1.0 - std::pow(0.75, double(hidden)); }

ParityRates parity_monte_carlo(std::size_t hidden, int draws, std::uint64_t base_seed) {
  ParityRates r;
  for (int s = 0; s < draws; ++s) {
    Rng rng(derive_seed(base_seed, std::uint64_t(s)));
    const auto d = parity_diagnostics(random_parity_model(hidden, rng));
    ++r.draws;
    r.opposite += d.has_opposite_sign;
    r.ideal += d.has_ideal;
  }
  return r;
}

namespace {

Vec64 final_state(const TransitionModel& model, const Sample& s) {
  const auto fr = forward(model, s.tokens, true);
  const auto h = fr.trace.state(s.tokens.size());
  return Vec64(std::vector<double>(h.begin(), h.end()));
}

void fit_readout_by_gradient(TransitionModel& model, std::span<const Sample> train_set) {
  std::vector<Vec64> states;
  for (const auto& s : train_set) states.push_back(final_state(model, s));
  AdamState adam = AdamState::for_model(model, AdamConfig{0.05});
  for (int it = 0; it < 2000; ++it) {
    Gradients g = Gradients::zeros_like(model);
    for (std::size_t n = 0; n < train_set.size(); ++n) {
      const Vec64 logits = matvec(model.params.readout, states[n].values());
      const Vec64 d = cross_entropy_grad(logits.values(), train_set[n].target);
      for (std::size_t c = 0; c < 2; ++c) {
        auto row = g.d.readout.row(c);
        for (std::size_t i = 0; i < row.size(); ++i) row[i] += d[c] * states[n][i] / double(train_set.size());
      }
    }
    mask_frozen(model, g);
    adam_step(model, g, adam);
  }
}

}  // namespace

FrozenParityResult frozen_parity(std::size_t hidden, std::uint64_t seed,
                                 std::span<const Sample> train_set,
                                 std::span<const Sample> probes) {
  const Sample* even = nullptr;
  const Sample* odd = nullptr;
  for (const auto& s : train_set) {
    if (s.target == 0 && !even) even = &s;
    if (s.target == 1 && !odd) odd = &s;
  }
  if (!even || !odd) throw DomainError("frozen_parity needs one even and one odd training example");

  Rng rng(seed);
  FrozenParityResult res;
  res.model = random_parity_model(hidden, rng);
  res.diagnostics = parity_diagnostics(res.model);
  const auto& dg = res.diagnostics;

  const Vec64 he = final_state(res.model, *even);
  const Vec64 ho = final_state(res.model, *odd);
  std::optional<std::size_t> pick;
  auto rank = [&](std::size_t i) {
    const bool ideal = dg.a0[i] > 0.0 && dg.a1[i] < 0.0;
    return std::pair<int, double>{ideal ? 1 : 0, std::min(std::abs(dg.a0[i]), std::abs(dg.a1[i]))};
  };
  for (std::size_t i = 0; i < hidden; ++i) {
    if (he[i] == 0.0 || ho[i] == 0.0 || (he[i] > 0.0) == (ho[i] > 0.0)) continue;
    if (!pick || rank(i) > rank(*pick)) pick = i;
  }

  if (pick) {
    Mat64 readout(2, hidden);
    readout(0, *pick) = he[*pick] > 0.0 ? 1.0 : -1.0;
    readout(1, *pick) = ho[*pick] > 0.0 ? 1.0 : -1.0;
    res.model.params.readout = std::move(readout);
    res.method = "closed_form";
    res.component = pick;
  } else {
    fit_readout_by_gradient(res.model, train_set);
    res.method = "gradient";
  }
  if (!probes.empty()) {
    res.probe_accuracy = evaluate_samples(res.model, 2, probes).raw;
    res.success = res.probe_accuracy == 1.0;
  }
  return res;
}

double commutator_norm(const Mat64& a, const Mat64& b) {
  const Mat64 c = subtract(matmul(a, b), matmul(b, a));
  return max_abs(c.values());
}

CommutatorReport verify_commutativity(const TransitionModel& model,
                                      std::span<const std::pair<int, int>> token_pairs) {
  CommutatorReport r;
  for (const auto& [x, y] : token_pairs) {
    const double n = commutator_norm(transition_matrix_for_token(model, x), transition_matrix_for_token(model, y));
    r.max_norm = std::max(r.max_norm, n);
    ++r.pairs;
  }
  return r;
}

CommutatorReport verify_commutativity(const TransitionModel& model,
                                      std::span<const std::pair<Vec64, Vec64>> input_pairs) {
  CommutatorReport r;
  for (const auto& [x, y] : input_pairs) {
    const double n = commutator_norm(transition_matrix(model, x.values()), transition_matrix(model, y.values()));
    r.max_norm = std::max(r.max_norm, n);
    ++r.pairs;
  }
  return r;
}

Mat64 token_angles(const TransitionModel& model) {
  const auto* rot = std::get_if<R2Rotation>(&model.params.transition);
  if (!rot) throw DomainError("token_angles needs an R2Rotation model");
  return matmul(model.params.embed, transpose(rot->angle_weights));
}

}  // namespace bilinear
