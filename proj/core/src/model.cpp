#include "bilinear/model.hpp"

#include <cmath>
#include <numbers>

#include "bilinear/error.hpp"
#include "bilinear/rng.hpp"

namespace bilinear {

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::FullBilinear: return "bilinear";
    case Variant::Factored: return "factored";
    case Variant::BlockDiag: return "block_diag";
    case Variant::R2Rotation: return "r2_rotation";
    case Variant::RealDiag: return "real_diag";
    case Variant::Elman: return "elman";
  }
  return "unknown";
}

Variant parse_variant(std::string_view text) {
  if (text == "bilinear" || text == "full" || text == "full_bilinear") return Variant::FullBilinear;
  if (text == "factored" || text == "cp") return Variant::Factored;
  if (text == "block_diag" || text == "blockdiag") return Variant::BlockDiag;
  if (text == "r2_rotation" || text == "r2" || text == "rotation") return Variant::R2Rotation;
  if (text == "real_diag" || text == "diag") return Variant::RealDiag;
  if (text == "elman" || text == "rnn") return Variant::Elman;
  throw ParseError("unknown model variant '" + std::string(text) + "'");
}

std::string AdditiveConfig::label() const {
  if (input_dependent && constant_bias) return "input+const";
  if (input_dependent) return "input";
  if (constant_bias) return "const";
  return "none";
}

AdditiveConfig AdditiveConfig::parse(std::string_view label, double init_half_width) {
  AdditiveConfig c;
  c.init_half_width = init_half_width;
  if (label == "none") return c;
  if (label == "input") {
    c.input_dependent = true;
  } else if (label == "const") {
    c.constant_bias = true;
  } else if (label == "input+const") {
    c.input_dependent = true;
    c.constant_bias = true;
  } else {
    throw ParseError("unknown additive setting '" + std::string(label) + "'");
  }
  return c;
}

namespace {

template <class P, class Group>
std::vector<Group> collect_groups(P& p) {
  std::vector<Group> out;
  std::visit(
      [&](auto& t) {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, FullBilinear>) {
          out.push_back({"W", GroupKind::Transition, t.w.values()});
        } else if constexpr (std::is_same_v<T, Factored>) {
          out.push_back({"Wh1", GroupKind::Transition, t.wh1.values()});
          out.push_back({"Wh2", GroupKind::Transition, t.wh2.values()});
          out.push_back({"Wx", GroupKind::Transition, t.wx.values()});
        } else if constexpr (std::is_same_v<T, BlockDiag>) {
          for (std::size_t b = 0; b < t.blocks.size(); ++b) {
            out.push_back({"block" + std::to_string(b), GroupKind::Transition, t.blocks[b].values()});
          }
        } else if constexpr (std::is_same_v<T, R2Rotation>) {
          out.push_back({"angle_weights", GroupKind::Transition, t.angle_weights.values()});
        } else if constexpr (std::is_same_v<T, RealDiag>) {
          out.push_back({"diag_weights", GroupKind::Transition, t.diag_weights.values()});
        } else {
          out.push_back({"A", GroupKind::Transition, t.recurrent.values()});
        }
      },
      p.transition);
  if (p.input_weights) out.push_back({"B", GroupKind::Additive, p.input_weights->values()});
  if (p.bias) out.push_back({"b", GroupKind::Additive, p.bias->values()});
  out.push_back({"h0", GroupKind::InitialState, p.h0.values()});
  out.push_back({"embed", GroupKind::Embedding, p.embed.values()});
  out.push_back({"readout", GroupKind::Readout, p.readout.values()});
  return out;
}

}  // namespace

std::vector<ParamGroup> param_groups(ParameterSet& p) {
  return collect_groups<ParameterSet, ParamGroup>(p);
}

std::vector<ConstParamGroup> param_groups(const ParameterSet& p) {
  return collect_groups<const ParameterSet, ConstParamGroup>(p);
}

bool FreezeMask::frozen(GroupKind kind) const {
  switch (kind) {
    case GroupKind::Transition: return transition;
    case GroupKind::Additive: return additive;
    case GroupKind::InitialState: return initial_state;
    case GroupKind::Embedding: return embedding;
    case GroupKind::Readout: return readout;
  }
  return false;
}

Variant TransitionModel::variant() const { return static_cast<Variant>(params.transition.index()); }

bool TransitionModel::pure_multiplicative() const {
  return variant() != Variant::Elman && !additive.any();
}

void TransitionModel::validate() const {
  const std::size_t H = hidden();
  const std::size_t D = input_dim();
  if (H == 0 || D == 0 || vocab_size() == 0 || classes() == 0) {
    throw DimensionError("model has an empty parameter tensor");
  }
  if (params.readout.cols() != H) throw DimensionError("readout columns must equal hidden size");
  std::visit(
      [&](const auto& t) {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, FullBilinear>) {
          if (t.w.d0() != H || t.w.d1() != H || t.w.d2() != D) throw DimensionError("W must be H x H x D");
        } else if constexpr (std::is_same_v<T, Factored>) {
          const std::size_t R = t.wh1.cols();
          if (t.wh1.rows() != H || t.wh2.rows() != H || t.wx.rows() != D || t.wh2.cols() != R ||
              t.wx.cols() != R) {
            throw DimensionError("CP factors must be H x R, H x R, D x R");
          }
        } else if constexpr (std::is_same_v<T, BlockDiag>) {
          if (t.blocks.empty()) throw DimensionError("block-diagonal model has no blocks");
          const std::size_t bs = t.block_size();
          if (bs * t.blocks.size() != H) throw DimensionError("blocks must tile the hidden state");
          for (const auto& b : t.blocks) {
            if (b.d0() != bs || b.d1() != bs || b.d2() != D) {
              throw DimensionError("every block must be block_size x block_size x D");
            }
          }
        } else if constexpr (std::is_same_v<T, R2Rotation>) {
          if (H % 2 != 0) throw DimensionError("rotation model needs an even hidden size");
          if (t.angle_weights.rows() != H / 2 || t.angle_weights.cols() != D) {
            throw DimensionError("angle weights must be (H/2) x D");
          }
        } else if constexpr (std::is_same_v<T, RealDiag>) {
          if (t.diag_weights.rows() != H || t.diag_weights.cols() != D) {
            throw DimensionError("diagonal weights must be H x D");
          }
        } else {
          if (t.recurrent.rows() != H || t.recurrent.cols() != H) {
            throw DimensionError("Elman recurrent matrix must be H x H");
          }
        }
      },
      params.transition);
  if (additive.input_dependent != params.input_weights.has_value() ||
      additive.constant_bias != params.bias.has_value()) {
    throw DomainError("additive configuration does not match the stored additive tensors");
  }
  if (params.input_weights &&
      (params.input_weights->rows() != H || params.input_weights->cols() != D)) {
    throw DimensionError("B must be H x D");
  }
  if (params.bias && params.bias->size() != H) throw DimensionError("b must have length H");
  if (variant() == Variant::Elman && !(additive.input_dependent && additive.constant_bias)) {
    throw DomainError("Elman cells always carry B x + b");
  }
  if (first_input_sets_state && classes() > H) {
    throw DimensionError("first-input state rule needs hidden size >= number of states");
  }
}

TransitionModel make_model(const ModelShape& shape, Rng& rng) {
  const std::size_t H = shape.hidden;
  const std::size_t D = shape.input_dim;
  const double w = shape.init_half_width;
  TransitionModel model;
  model.additive = shape.additive;
  auto& p = model.params;

  switch (shape.variant) {
    case Variant::FullBilinear:
      p.transition = FullBilinear{uniform_tensor3(H, H, D, w, rng)};
      break;
    case Variant::Factored: {
      if (shape.rank == 0) throw DomainError("factored model needs rank >= 1");
      const double fw = shape.factor_half_width > 0.0
                            ? shape.factor_half_width
                            : std::sqrt(3.0) * std::pow(w * w / (3.0 * double(shape.rank)), 1.0 / 6.0);
      Factored f{uniform_mat(H, shape.rank, fw, rng), uniform_mat(H, shape.rank, fw, rng),
                 uniform_mat(D, shape.rank, fw, rng)};
      p.transition = std::move(f);
      break;
    }
    case Variant::BlockDiag: {
      const std::size_t bs = shape.block_size;
      if (bs == 0 || H % bs != 0) throw DomainError("block size must divide the hidden size");
      BlockDiag b;
      for (std::size_t i = 0; i < H / bs; ++i) b.blocks.push_back(uniform_tensor3(bs, bs, D, w, rng));
      p.transition = std::move(b);
      break;
    }
    case Variant::R2Rotation:
      if (H % 2 != 0) throw DomainError("rotation model needs an even hidden size");
      p.transition = R2Rotation{uniform_mat(H / 2, D, w, rng)};
      break;
    case Variant::RealDiag:
      p.transition = RealDiag{uniform_mat(H, D, w, rng)};
      break;
    case Variant::Elman: {
      const double e = 1.0 / std::sqrt(static_cast<double>(H));
      p.transition = Elman{uniform_mat(H, H, e, rng)};
      model.additive.input_dependent = true;
      model.additive.constant_bias = true;
      p.input_weights = uniform_mat(H, D, e, rng);
      p.bias = uniform_vec(H, e, rng);
      break;
    }
  }
  if (shape.variant != Variant::Elman) {
    if (model.additive.input_dependent) {
      p.input_weights = uniform_mat(H, D, model.additive.init_half_width, rng);
    }
    if (model.additive.constant_bias) p.bias = uniform_vec(H, model.additive.init_half_width, rng);
  }
  p.h0 = uniform_vec(H, w, rng);
  p.embed = Mat64(shape.vocab, D);
  for (double& v : p.embed.values()) v = shape.embed_std * rng.normal();
  p.readout = uniform_mat(shape.classes, H, w, rng);
  model.validate();
  return model;
}

ParamCount param_count(const TransitionModel& model) {
  ParamCount c;
  for (const auto& g : param_groups(model.params)) {
    switch (g.kind) {
      case GroupKind::Transition: c.transition += g.values.size(); break;
      case GroupKind::Additive: c.additive += g.values.size(); break;
      case GroupKind::InitialState: c.initial_state += g.values.size(); break;
      case GroupKind::Embedding: c.embedding += g.values.size(); break;
      case GroupKind::Readout: c.readout += g.values.size(); break;
    }
  }
  return c;
}

int argmax(std::span<const double> logits) {
  if (logits.empty()) throw DimensionError("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return static_cast<int>(best);
}

bool inference_normalizes(const TransitionModel& model) { return model.pure_multiplicative(); }

int predict(const TransitionModel& model, std::span<const int> tokens) {
  return predict(model, tokens, inference_normalizes(model));
}

int predict(const TransitionModel& model, std::span<const int> tokens, bool normalize) {
  return argmax(forward(model, tokens, normalize).logits.values());
}

Mat64 transition_matrix(const TransitionModel& model, std::span<const double> x) {
  const std::size_t H = model.hidden();
  if (x.size() != model.input_dim()) throw DimensionError("transition_matrix: input length mismatch");
  return std::visit(
      [&](const auto& t) -> Mat64 {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, FullBilinear>) {
          return contract_tensor(t.w, x);
        } else if constexpr (std::is_same_v<T, Factored>) {
          const Vec64 u = matvec_transposed(t.wx, x);
          Mat64 a(H, H);
          for (std::size_t i = 0; i < H; ++i)
            for (std::size_t j = 0; j < H; ++j) {
              double s = 0.0;
              for (std::size_t r = 0; r < u.size(); ++r) s += t.wh1(i, r) * u[r] * t.wh2(j, r);
              a(i, j) = s;
            }
          return a;
        } else if constexpr (std::is_same_v<T, BlockDiag>) {
          Mat64 a(H, H);
          const std::size_t bs = t.block_size();
          for (std::size_t b = 0; b < t.blocks.size(); ++b) {
            const Mat64 blk = contract_tensor(t.blocks[b], x);
            for (std::size_t i = 0; i < bs; ++i)
              for (std::size_t j = 0; j < bs; ++j) a(b * bs + i, b * bs + j) = blk(i, j);
          }
          return a;
        } else if constexpr (std::is_same_v<T, R2Rotation>) {
          Mat64 a(H, H);
          for (std::size_t b = 0; b < H / 2; ++b) {
            const Mat64 r = rotation2(dot(t.angle_weights.row(b), x));
            for (std::size_t i = 0; i < 2; ++i)
              for (std::size_t j = 0; j < 2; ++j) a(2 * b + i, 2 * b + j) = r(i, j);
          }
          return a;
        } else if constexpr (std::is_same_v<T, RealDiag>) {
          Mat64 a(H, H);
          for (std::size_t i = 0; i < H; ++i) a(i, i) = dot(t.diag_weights.row(i), x);
          return a;
        } else {
          return t.recurrent;
        }
      },
      model.params.transition);
}

Mat64 transition_matrix_for_token(const TransitionModel& model, int token) {
  if (token < 0 || std::size_t(token) >= model.vocab_size()) {
    throw DomainError("token " + std::to_string(token) + " is not in the vocabulary");
  }
  return transition_matrix(model, model.params.embed.row(std::size_t(token)));
}

TransitionModel scale_initial_state(TransitionModel model, double c) {
  for (double& v : model.params.h0.values()) v *= c;
  return model;
}

}  // namespace bilinear
