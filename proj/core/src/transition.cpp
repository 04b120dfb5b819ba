#include <algorithm>
#include <cmath>
#include <string>
#include <type_traits>

#include "bilinear/backprop.hpp"
#include "bilinear/error.hpp"

namespace bilinear {

// ---------------------------------------------------------------------------
// Gradients

Gradients Gradients::zeros_like(const TransitionModel& model) {
  Gradients g{model.params};
  for (auto& group : g.groups()) std::fill(group.values.begin(), group.values.end(), 0.0);
  return g;
}

Gradients& Gradients::operator+=(const Gradients& other) {
  auto mine = groups();
  const auto theirs = other.groups();
  if (mine.size() != theirs.size()) throw DimensionError("gradient layouts differ");
  for (std::size_t i = 0; i < mine.size(); ++i) {
    if (mine[i].values.size() != theirs[i].values.size()) throw DimensionError("gradient layouts differ");
    for (std::size_t j = 0; j < mine[i].values.size(); ++j) mine[i].values[j] += theirs[i].values[j];
  }
  return *this;
}

void Gradients::scale(double c) {
  for (auto& group : groups())
    for (double& v : group.values) v *= c;
}

double Gradients::global_norm() const {
  double s = 0.0;
  for (const auto& group : groups())
    for (double v : group.values) s += v * v;
  return std::sqrt(s);
}

bool Gradients::finite() const {
  for (const auto& group : groups())
    if (!all_finite(group.values)) return false;
  return true;
}

void mask_frozen(const TransitionModel& model, Gradients& grads) {
  for (auto& group : grads.groups()) {
    if (model.frozen.frozen(group.kind)) std::fill(group.values.begin(), group.values.end(), 0.0);
  }
}

// ---------------------------------------------------------------------------
// Engine

namespace {

struct TokenOp {
  bool ready = false;
  bool touched = false;
  std::vector<double> mat;  // FullBilinear: H*H, BlockDiag: blocks*bs*bs
  std::vector<double> vec;  // Factored: R, R2Rotation: (cos, sin) per block, RealDiag: H
  std::vector<double> add;  // B x + b, empty without additive terms
  std::vector<double> d_mat;
  std::vector<double> d_vec;  // R2Rotation: d theta per block
  std::vector<double> d_add;
};

// sum_k w[ij * d2 + k] x[k] for every ij.
void contract_into(std::span<const double> w, std::size_t d2, std::span<const double> x,
                   std::vector<double>& out) {
  const std::size_t n = w.size() / d2;
  out.assign(n, 0.0);
  for (std::size_t ij = 0; ij < n; ++ij) {
    const double* row = w.data() + ij * d2;
    double s = 0.0;
    for (std::size_t k = 0; k < d2; ++k) s += row[k] * x[k];
    out[ij] = s;
  }
}

// dW[ij, k] += dA[ij] x[k];  dx[k] += sum_ij dA[ij] W[ij, k].
void chain_contraction(std::span<const double> w, std::span<double> dw, std::size_t d2,
                       std::span<const double> d_a, std::span<const double> x,
                       std::span<double> dx) {
  for (std::size_t ij = 0; ij < d_a.size(); ++ij) {
    const double da = d_a[ij];
    if (da == 0.0) continue;
    const double* wrow = w.data() + ij * d2;
    double* dwrow = dw.data() + ij * d2;
    for (std::size_t k = 0; k < d2; ++k) {
      dwrow[k] += da * x[k];
      dx[k] += da * wrow[k];
    }
  }
}

// Row-major (rows x cols) weights M applied as y = M x: dM += dy x^T, dx += M^T dy.
void chain_linear(const Mat64& m, std::span<double> dm, std::span<const double> dy,
                  std::span<const double> x, std::span<double> dx) {
  const std::size_t cols = m.cols();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double d = dy[r];
    if (d == 0.0) continue;
    const auto mrow = m.row(r);
    double* dmrow = dm.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) {
      dmrow[c] += d * x[c];
      dx[c] += d * mrow[c];
    }
  }
}

}  // namespace

struct RecurrenceEngine::Impl {
  const TransitionModel& model;
  Variant variant;
  std::size_t H;
  std::size_t D;
  std::vector<TokenOp> ops;
  Gradients acc;
  std::vector<double> z, g, dg;  // factored scratch, length R
  std::vector<double> delta, delta_in, dx;

  explicit Impl(const TransitionModel& m)
      : model(m),
        variant(m.variant()),
        H(m.hidden()),
        D(m.input_dim()),
        ops(m.vocab_size()),
        acc(Gradients::zeros_like(m)) {
    m.validate();
    if (variant == Variant::Factored) {
      const std::size_t R = std::get<Factored>(m.params.transition).wh1.cols();
      z.resize(R);
      g.resize(R);
      dg.resize(R);
    }
    delta.resize(H);
    delta_in.resize(H);
    dx.resize(D);
  }

  TokenOp& op(int token) {
    if (token < 0 || std::size_t(token) >= ops.size()) {
      throw DomainError("token " + std::to_string(token) + " is not in the vocabulary");
    }
    TokenOp& o = ops[std::size_t(token)];
    if (!o.ready) materialize(o, model.params.embed.row(std::size_t(token)));
    return o;
  }

  void materialize(TokenOp& o, std::span<const double> x) {
    const auto& p = model.params;
    switch (variant) {
      case Variant::FullBilinear:
        contract_into(std::get<FullBilinear>(p.transition).w.values(), D, x, o.mat);
        o.d_mat.assign(o.mat.size(), 0.0);
        break;
      case Variant::BlockDiag: {
        const auto& blocks = std::get<BlockDiag>(p.transition).blocks;
        const std::size_t bs2 = blocks.front().d0() * blocks.front().d1();
        o.mat.assign(blocks.size() * bs2, 0.0);
        std::vector<double> part;
        for (std::size_t b = 0; b < blocks.size(); ++b) {
          contract_into(blocks[b].values(), D, x, part);
          std::copy(part.begin(), part.end(), o.mat.begin() + std::ptrdiff_t(b * bs2));
        }
        o.d_mat.assign(o.mat.size(), 0.0);
        break;
      }
      case Variant::Factored: {
        const auto& f = std::get<Factored>(p.transition);
        const Vec64 u = matvec_transposed(f.wx, x);
        o.vec.assign(u.values().begin(), u.values().end());
        o.d_vec.assign(o.vec.size(), 0.0);
        break;
      }
      case Variant::R2Rotation: {
        const auto& r = std::get<R2Rotation>(p.transition);
        o.vec.assign(H, 0.0);
        for (std::size_t b = 0; b < H / 2; ++b) {
          const double theta = dot(r.angle_weights.row(b), x);
          o.vec[2 * b] = std::cos(theta);
          o.vec[2 * b + 1] = std::sin(theta);
        }
        o.d_vec.assign(H / 2, 0.0);
        break;
      }
      case Variant::RealDiag: {
        const auto& r = std::get<RealDiag>(p.transition);
        o.vec.assign(H, 0.0);
        for (std::size_t i = 0; i < H; ++i) o.vec[i] = dot(r.diag_weights.row(i), x);
        o.d_vec.assign(H, 0.0);
        break;
      }
      case Variant::Elman:
        break;
    }
    if (model.additive.any()) {
      o.add.assign(H, 0.0);
      if (p.input_weights) {
        for (std::size_t i = 0; i < H; ++i) o.add[i] = dot(p.input_weights->row(i), x);
      }
      if (p.bias) {
        for (std::size_t i = 0; i < H; ++i) o.add[i] += (*p.bias)[i];
      }
      o.d_add.assign(H, 0.0);
    }
    o.ready = true;
  }

  void apply(const TokenOp& o, const double* h, double* out) {
    const auto& p = model.params;
    switch (variant) {
      case Variant::FullBilinear:
        for (std::size_t i = 0; i < H; ++i) {
          const double* row = o.mat.data() + i * H;
          double s = 0.0;
          for (std::size_t j = 0; j < H; ++j) s += row[j] * h[j];
          out[i] = s;
        }
        break;
      case Variant::BlockDiag: {
        const std::size_t bs = std::get<BlockDiag>(p.transition).block_size();
        for (std::size_t b = 0; b < H / bs; ++b) {
          const double* blk = o.mat.data() + b * bs * bs;
          const double* hb = h + b * bs;
          for (std::size_t i = 0; i < bs; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < bs; ++j) s += blk[i * bs + j] * hb[j];
            out[b * bs + i] = s;
          }
        }
        break;
      }
      case Variant::Factored: {
        const auto& f = std::get<Factored>(p.transition);
        const std::size_t R = z.size();
        std::fill(z.begin(), z.end(), 0.0);
        for (std::size_t j = 0; j < H; ++j) {
          const auto row = f.wh2.row(j);
          for (std::size_t r = 0; r < R; ++r) z[r] += row[r] * h[j];
        }
        for (std::size_t r = 0; r < R; ++r) g[r] = o.vec[r] * z[r];
        for (std::size_t i = 0; i < H; ++i) out[i] = dot(f.wh1.row(i), g);
        break;
      }
      case Variant::R2Rotation:
        for (std::size_t b = 0; b < H / 2; ++b) {
          const double c = o.vec[2 * b];
          const double s = o.vec[2 * b + 1];
          const double x0 = h[2 * b];
          const double x1 = h[2 * b + 1];
          out[2 * b] = c * x0 - s * x1;
          out[2 * b + 1] = s * x0 + c * x1;
        }
        break;
      case Variant::RealDiag:
        for (std::size_t i = 0; i < H; ++i) out[i] = o.vec[i] * h[i];
        break;
      case Variant::Elman: {
        const auto& a = std::get<Elman>(p.transition).recurrent;
        for (std::size_t i = 0; i < H; ++i) {
          const auto row = a.row(i);
          double s = o.add[i];
          for (std::size_t j = 0; j < H; ++j) s += row[j] * h[j];
          out[i] = std::tanh(s);
        }
        return;
      }
    }
    if (!o.add.empty()) {
      for (std::size_t i = 0; i < H; ++i) out[i] += o.add[i];
    }
  }

  // Given d loss / d h_out in `d`, accumulates operator gradients and writes
  // d loss / d h_in into `d_in`.
  void backstep(TokenOp& o, const double* h, const double* h_out, double* d, double* d_in) {
    const auto& p = model.params;
    o.touched = true;
    if (variant == Variant::Elman) {
      for (std::size_t i = 0; i < H; ++i) d[i] *= 1.0 - h_out[i] * h_out[i];
    }
    if (!o.add.empty()) {
      for (std::size_t i = 0; i < H; ++i) o.d_add[i] += d[i];
    }
    switch (variant) {
      case Variant::FullBilinear:
        std::fill(d_in, d_in + H, 0.0);
        for (std::size_t i = 0; i < H; ++i) {
          const double di = d[i];
          if (di == 0.0) continue;
          const double* row = o.mat.data() + i * H;
          double* drow = o.d_mat.data() + i * H;
          for (std::size_t j = 0; j < H; ++j) {
            drow[j] += di * h[j];
            d_in[j] += di * row[j];
          }
        }
        break;
      case Variant::BlockDiag: {
        const std::size_t bs = std::get<BlockDiag>(p.transition).block_size();
        std::fill(d_in, d_in + H, 0.0);
        for (std::size_t b = 0; b < H / bs; ++b) {
          const double* blk = o.mat.data() + b * bs * bs;
          double* dblk = o.d_mat.data() + b * bs * bs;
          for (std::size_t i = 0; i < bs; ++i) {
            const double di = d[b * bs + i];
            for (std::size_t j = 0; j < bs; ++j) {
              dblk[i * bs + j] += di * h[b * bs + j];
              d_in[b * bs + j] += di * blk[i * bs + j];
            }
          }
        }
        break;
      }
      case Variant::Factored: {
        const auto& f = std::get<Factored>(p.transition);
        auto& df = std::get<Factored>(acc.d.transition);
        const std::size_t R = z.size();
        std::fill(z.begin(), z.end(), 0.0);
        for (std::size_t j = 0; j < H; ++j) {
          const auto row = f.wh2.row(j);
          for (std::size_t r = 0; r < R; ++r) z[r] += row[r] * h[j];
        }
        for (std::size_t r = 0; r < R; ++r) g[r] = o.vec[r] * z[r];
        // out = Wh1 g
        std::fill(dg.begin(), dg.end(), 0.0);
        for (std::size_t i = 0; i < H; ++i) {
          const double di = d[i];
          const auto row = f.wh1.row(i);
          auto drow = df.wh1.row(i);
          for (std::size_t r = 0; r < R; ++r) {
            drow[r] += di * g[r];
            dg[r] += di * row[r];
          }
        }
        // g = u * z; dz reuses dg after du is taken.
        for (std::size_t r = 0; r < R; ++r) {
          o.d_vec[r] += dg[r] * z[r];
          dg[r] *= o.vec[r];
        }
        // z = Wh2^T h
        for (std::size_t j = 0; j < H; ++j) {
          const auto row = f.wh2.row(j);
          auto drow = df.wh2.row(j);
          double s = 0.0;
          for (std::size_t r = 0; r < R; ++r) {
            drow[r] += h[j] * dg[r];
            s += row[r] * dg[r];
          }
          d_in[j] = s;
        }
        break;
      }
      case Variant::R2Rotation:
        for (std::size_t b = 0; b < H / 2; ++b) {
          const double c = o.vec[2 * b];
          const double s = o.vec[2 * b + 1];
          const double x0 = h[2 * b];
          const double x1 = h[2 * b + 1];
          const double d0 = d[2 * b];
          const double d1 = d[2 * b + 1];
          o.d_vec[b] += d0 * (-s * x0 - c * x1) + d1 * (c * x0 - s * x1);
          d_in[2 * b] = c * d0 + s * d1;
          d_in[2 * b + 1] = -s * d0 + c * d1;
        }
        break;
      case Variant::RealDiag:
        for (std::size_t i = 0; i < H; ++i) {
          o.d_vec[i] += d[i] * h[i];
          d_in[i] = o.vec[i] * d[i];
        }
        break;
      case Variant::Elman: {
        const auto& a = std::get<Elman>(p.transition).recurrent;
        auto& da = std::get<Elman>(acc.d.transition).recurrent;
        std::fill(d_in, d_in + H, 0.0);
        for (std::size_t i = 0; i < H; ++i) {
          const double di = d[i];
          const auto row = a.row(i);
          auto drow = da.row(i);
          for (std::size_t j = 0; j < H; ++j) {
            drow[j] += di * h[j];
            d_in[j] += di * row[j];
          }
        }
        break;
      }
    }
  }

  // Pushes the accumulated per-token operator gradients into the parameter
  // and embedding gradients.
  void chain_token(int token, TokenOp& o) {
    const auto& p = model.params;
    auto& dp = acc.d;
    const auto x = p.embed.row(std::size_t(token));
    std::fill(dx.begin(), dx.end(), 0.0);
    switch (variant) {
      case Variant::FullBilinear:
        chain_contraction(std::get<FullBilinear>(p.transition).w.values(),
                          std::get<FullBilinear>(dp.transition).w.values(), D, o.d_mat, x, dx);
        break;
      case Variant::BlockDiag: {
        const auto& blocks = std::get<BlockDiag>(p.transition).blocks;
        auto& dblocks = std::get<BlockDiag>(dp.transition).blocks;
        const std::size_t bs2 = blocks.front().d0() * blocks.front().d1();
        for (std::size_t b = 0; b < blocks.size(); ++b) {
          chain_contraction(blocks[b].values(), dblocks[b].values(), D,
                            std::span<const double>(o.d_mat).subspan(b * bs2, bs2), x, dx);
        }
        break;
      }
      case Variant::Factored: {
        const auto& wx = std::get<Factored>(p.transition).wx;
        auto& dwx = std::get<Factored>(dp.transition).wx;
        // u = Wx^T x, so du flows as Wx (D x R) seen from the x side.
        for (std::size_t k = 0; k < D; ++k) {
          const auto row = wx.row(k);
          auto drow = dwx.row(k);
          double s = 0.0;
          for (std::size_t r = 0; r < row.size(); ++r) {
            drow[r] += x[k] * o.d_vec[r];
            s += row[r] * o.d_vec[r];
          }
          dx[k] += s;
        }
        break;
      }
      case Variant::R2Rotation:
        chain_linear(std::get<R2Rotation>(p.transition).angle_weights,
                     std::get<R2Rotation>(dp.transition).angle_weights.values(), o.d_vec, x, dx);
        break;
      case Variant::RealDiag:
        chain_linear(std::get<RealDiag>(p.transition).diag_weights,
                     std::get<RealDiag>(dp.transition).diag_weights.values(), o.d_vec, x, dx);
        break;
      case Variant::Elman:
        break;
    }
    if (!o.add.empty()) {
      if (p.input_weights) chain_linear(*p.input_weights, dp.input_weights->values(), o.d_add, x, dx);
      if (p.bias) {
        for (std::size_t i = 0; i < H; ++i) (*dp.bias)[i] += o.d_add[i];
      }
    }
    auto drow = dp.embed.row(std::size_t(token));
    for (std::size_t k = 0; k < D; ++k) drow[k] += dx[k];
    std::fill(o.d_mat.begin(), o.d_mat.end(), 0.0);
    std::fill(o.d_vec.begin(), o.d_vec.end(), 0.0);
    std::fill(o.d_add.begin(), o.d_add.end(), 0.0);
    o.touched = false;
  }
};

RecurrenceEngine::RecurrenceEngine(const TransitionModel& model)
    : impl_(std::make_unique<Impl>(model)) {}
RecurrenceEngine::~RecurrenceEngine() = default;
RecurrenceEngine::RecurrenceEngine(RecurrenceEngine&&) noexcept = default;

ForwardResult RecurrenceEngine::forward(std::span<const int> tokens, bool normalize) {
  Impl& e = *impl_;
  const auto& model = e.model;
  const std::size_t H = e.H;
  if (tokens.empty()) throw DomainError("forward: empty token sequence");
  if (model.first_input_sets_state && tokens.size() < 3) {
    throw DomainError("forward: first-input state rule needs [BOS] s1 ... [EOI]");
  }
  ForwardResult res;
  StepTrace& tr = res.trace;
  tr.tokens.assign(tokens.begin(), tokens.end());
  tr.hidden = H;
  tr.normalized = normalize;
  tr.states.resize((tokens.size() + 1) * H);
  const auto h0 = model.params.h0.values();
  std::copy(h0.begin(), h0.end(), tr.states.begin());
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const int token = tokens[t];
    TokenOp& o = e.op(token);
    const double* h = tr.states.data() + t * H;
    double* out = tr.states.data() + (t + 1) * H;
    if (model.first_input_sets_state && t == 1) {
      if (token < 0 || std::size_t(token) >= model.classes()) {
        throw DomainError("first input must be a state symbol");
      }
      std::fill(out, out + H, 0.0);
      out[token] = 1.0;
      tr.reset_at = t;
    } else {
      e.apply(o, h, out);
    }
    const std::span<double> next(out, H);
    if (!all_finite(next)) {
      throw OverflowError("hidden state overflow at step " + std::to_string(t));
    }
    if (normalize) l2_normalize_inplace(next);
  }
  res.logits = matvec(model.params.readout, tr.state(tokens.size()));
  return res;
}

void RecurrenceEngine::accumulate(const StepTrace& trace, std::span<const double> d_logits) {
  Impl& e = *impl_;
  const auto& model = e.model;
  const std::size_t H = e.H;
  if (trace.hidden != H || trace.states.size() != (trace.size() + 1) * H) {
    throw DimensionError("trace does not belong to this model");
  }
  if (trace.normalized) throw DomainError("cannot differentiate a normalized (inference) trace");
  if (d_logits.size() != model.classes()) throw DimensionError("d_logits length must equal class count");

  const auto h_last = trace.state(trace.size());
  auto& dread = e.acc.d.readout;
  for (std::size_t c = 0; c < model.classes(); ++c) {
    auto drow = dread.row(c);
    for (std::size_t i = 0; i < H; ++i) drow[i] += d_logits[c] * h_last[i];
  }
  const Vec64 top = matvec_transposed(model.params.readout, d_logits);
  std::copy(top.values().begin(), top.values().end(), e.delta.begin());

  for (std::size_t t = trace.size(); t-- > 0;) {
    if (trace.reset_at && *trace.reset_at == t) return;
    TokenOp& o = e.op(trace.tokens[t]);
    e.backstep(o, trace.states.data() + t * H, trace.states.data() + (t + 1) * H, e.delta.data(),
               e.delta_in.data());
    std::swap(e.delta, e.delta_in);
  }
  auto dh0 = e.acc.d.h0.values();
  for (std::size_t i = 0; i < H; ++i) dh0[i] += e.delta[i];
}

Gradients RecurrenceEngine::take_gradients() {
  Impl& e = *impl_;
  for (std::size_t tok = 0; tok < e.ops.size(); ++tok) {
    if (e.ops[tok].touched) e.chain_token(static_cast<int>(tok), e.ops[tok]);
  }
  Gradients out = Gradients::zeros_like(e.model);
  std::swap(out, e.acc);
  return out;
}

// ---------------------------------------------------------------------------
// Free functions

Vec64 RecurrenceEngine::step(std::span<const double> h, int token) {
  Impl& e = *impl_;
  if (h.size() != e.H) throw DimensionError("step: hidden state length mismatch");
  TokenOp& o = e.op(token);
  std::vector<double> out(e.H);
  e.apply(o, h.data(), out.data());
  if (!all_finite(out)) throw OverflowError("hidden state overflow");
  return Vec64(std::move(out));
}

StepOutput step(const TransitionModel& model, std::span<const double> h, int token) {
  RecurrenceEngine engine(model);
  return {engine.step(h, token), token};
}

ForwardResult forward(const TransitionModel& model, std::span<const int> tokens, bool normalize) {
  RecurrenceEngine engine(model);
  return engine.forward(tokens, normalize);
}

Gradients backward(const TransitionModel& model, const StepTrace& trace,
                   std::span<const double> d_logits) {
  RecurrenceEngine engine(model);
  engine.accumulate(trace, d_logits);
  return engine.take_gradients();
}

}  // namespace bilinear
