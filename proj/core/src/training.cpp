#include "bilinear/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "bilinear/error.hpp"
#include "bilinear/rng.hpp"
#include "bilinear/serialize.hpp"

namespace bilinear {

double cross_entropy(std::span<const double> logits, int target) {
  if (target < 0 || std::size_t(target) >= logits.size()) throw DomainError("target out of range");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double l : logits) s += std::exp(l - mx);
  return std::log(s) + mx - logits[std::size_t(target)];
}

Vec64 cross_entropy_grad(std::span<const double> logits, int target) {
  if (target < 0 || std::size_t(target) >= logits.size()) throw DomainError("target out of range");
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    s += p[i];
  }
  for (double& v : p) v /= s;
  p[std::size_t(target)] -= 1.0;
  return Vec64(std::move(p));
}

AdamState AdamState::for_model(const TransitionModel& model, AdamConfig config) {
  return AdamState{config, Gradients::zeros_like(model), Gradients::zeros_like(model), 0};
}

void adam_step(TransitionModel& model, const Gradients& grads, AdamState& state) {
  auto params = param_groups(model.params);
  const auto g = grads.groups();
  auto m = state.m.groups();
  auto v = state.v.groups();
  if (params.size() != g.size() || params.size() != m.size()) {
    throw DimensionError("adam_step: gradient layout does not match the model");
  }
  const auto& c = state.config;
  ++state.t;
  const double bc1 = 1.0 - std::pow(c.beta1, double(state.t));
  const double bc2 = 1.0 - std::pow(c.beta2, double(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (model.frozen.frozen(params[k].kind)) continue;
    auto p = params[k].values;
    if (p.size() != g[k].values.size()) throw DimensionError("adam_step: shape mismatch in " + params[k].name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[k].values[i];
      double& mi = m[k].values[i];
      double& vi = v[k].values[i];
      mi = c.beta1 * mi + (1.0 - c.beta1) * gi;
      vi = c.beta2 * vi + (1.0 - c.beta2) * gi * gi;
      p[i] -= c.lr * (mi / bc1) / (std::sqrt(vi / bc2) + c.eps);
    }
  }
}

double clip_global_norm(Gradients& grads, double max_norm) {
  const double n = grads.global_norm();
  if (max_norm > 0.0 && n > max_norm) grads.scale(max_norm / n);
  return n;
}

void TrainConfig::validate() const {
  if (learning_rates.empty()) throw DomainError("at least one learning rate is required");
  for (double lr : learning_rates) {
    if (!(lr > 0.0)) throw DomainError("learning rates must be positive");
  }
  if (steps < 1 || batch < 1 || val_size < 1 || val_every < 1 || smoothing_window < 1) {
    throw DomainError("steps, batch, val_size, val_every and smoothing_window must be positive");
  }
  if (min_len < 1 || max_len < min_len) throw DomainError("invalid training length range");
  if (!(early_stop_loss > 0.0)) throw DomainError("early_stop_loss must be positive");
  if (train_set_size < 0) throw DomainError("train_set_size must be non-negative");
}

void write_history_header(std::ostream& os) { os << "step,train_loss,val_loss,val_acc\n"; }

void write_history(std::ostream& os, std::span<const HistoryRow> rows) {
  for (const auto& r : rows) {
    os << r.step << ',' << format_double(r.train_loss) << ',' << format_double(r.val_loss) << ','
       << format_double(r.val_acc) << '\n';
  }
}

std::string_view to_string(RunStatus s) { return s == RunStatus::Ok ? "ok" : "overflow"; }

std::vector<Sample> validation_set(const TaskSpec& spec, const TrainConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, 1));
  std::vector<Sample> out;
  out.reserve(std::size_t(cfg.val_size));
  for (int i = 0; i < cfg.val_size; ++i) out.push_back(gen_sample(spec, cfg.min_len, cfg.max_len, rng));
  return out;
}

namespace {

struct ValStats {
  double loss = 0.0;
  double acc = 0.0;
};

ValStats validate_model(const TransitionModel& model, std::span<const Sample> val) {
  RecurrenceEngine engine(model);
  ValStats s;
  for (const auto& sample : val) {
    const auto fr = engine.forward(sample.tokens, false);
    s.loss += cross_entropy(fr.logits.values(), sample.target);
    if (argmax(fr.logits.values()) == sample.target) s.acc += 1.0;
  }
  s.loss /= double(val.size());
  s.acc /= double(val.size());
  return s;
}

class BatchSource {
 public:
  BatchSource(const TaskSpec& spec, const TrainConfig& cfg)
      : spec_(spec), cfg_(cfg), rng_(derive_seed(cfg.seed, 2)) {
    if (cfg.train_set_size > 0) {
      Rng fixed_rng(derive_seed(cfg.seed, 3));
      TaskSpec s = spec;
      s.max_len = cfg.max_len;
      fixed_ = fixed_dataset(s, cfg.train_set_size, fixed_rng);
      order_.resize(fixed_.size());
      std::iota(order_.begin(), order_.end(), std::size_t(0));
      pos_ = order_.size();
    }
  }

  void next(std::vector<Sample>& batch) {
    batch.clear();
    if (fixed_.empty()) {
      for (int i = 0; i < cfg_.batch; ++i) batch.push_back(gen_sample(spec_, cfg_.min_len, cfg_.max_len, rng_));
      return;
    }
    const std::size_t n = std::min<std::size_t>(std::size_t(cfg_.batch), fixed_.size());
    while (batch.size() < n) {
      if (pos_ == order_.size()) {
        rng_.shuffle(order_.begin(), order_.end());
        pos_ = 0;
      }
      batch.push_back(fixed_[order_[pos_++]]);
    }
  }

 private:
  const TaskSpec& spec_;
  const TrainConfig& cfg_;
  Rng rng_;
  std::vector<Sample> fixed_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

}  // namespace

TrainResult train_single(TransitionModel model, const TaskSpec& spec, const TrainConfig& cfg,
                         double lr) {
  cfg.validate();
  spec.validate();
  model.validate();
  if (model.classes() < std::size_t(spec.m)) throw DimensionError("readout has fewer classes than the task");

  TrainResult res;
  res.model = model;
  res.lr = lr;
  const auto val = validation_set(spec, cfg);
  AdamState adam = AdamState::for_model(model, AdamConfig{lr});
  BatchSource source(spec, cfg);
  std::vector<Sample> batch;
  std::vector<double> recent;
  double loss_since = 0.0;
  int steps_since = 0;

  auto record = [&](int step) {
    const ValStats vs = validate_model(model, val);
    HistoryRow row{step, steps_since ? loss_since / steps_since : 0.0, vs.loss, vs.acc};
    res.history.push_back(row);
    loss_since = 0.0;
    steps_since = 0;
    if (step == 0 || vs.loss < res.best_val_loss) {
      res.best_val_loss = vs.loss;
      res.best_val_acc = vs.acc;
      res.model = model;
    }
    recent.push_back(vs.loss);
    if (recent.size() > std::size_t(cfg.smoothing_window)) recent.erase(recent.begin());
    if (recent.size() == std::size_t(cfg.smoothing_window)) {
      const double smoothed = std::accumulate(recent.begin(), recent.end(), 0.0) / double(recent.size());
      if (smoothed < cfg.early_stop_loss) return true;
    }
    return false;
  };

  int step = 0;
  try {
    record(0);
    for (step = 1; step <= cfg.steps; ++step) {
      source.next(batch);
      RecurrenceEngine engine(model);
      const double inv = 1.0 / double(batch.size());
      double batch_loss = 0.0;
      for (const auto& sample : batch) {
        const auto fr = engine.forward(sample.tokens, false);
        batch_loss += cross_entropy(fr.logits.values(), sample.target);
        Vec64 d = cross_entropy_grad(fr.logits.values(), sample.target);
        for (double& v : d.values()) v *= inv;
        engine.accumulate(fr.trace, d.values());
      }
      Gradients g = engine.take_gradients();
      mask_frozen(model, g);
      if (!g.finite() || !std::isfinite(batch_loss)) throw OverflowError("non-finite gradient");
      clip_global_norm(g, cfg.clip_norm);
      adam_step(model, g, adam);
      loss_since += batch_loss * inv;
      ++steps_since;
      res.steps_run = step;
      if (step % cfg.val_every == 0 || step == cfg.steps) {
        if (record(step)) {
          res.early_stopped = true;
          break;
        }
      }
    }
  } catch (const OverflowError& e) {
    res.status = RunStatus::Overflow;
    res.diagnostics = std::string(e.what()) + " (training step " + std::to_string(step) + ")";
  } catch (const DomainError& e) {
    res.status = RunStatus::Overflow;
    res.diagnostics = std::string(e.what()) + " (training step " + std::to_string(step) + ")";
  }
  return res;
}

std::optional<std::size_t> choose_run(std::span<const TrainResult> runs) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const TrainResult& r = runs[i];
    if (r.status != RunStatus::Ok) continue;
    if (!best) {
      best = i;
      continue;
    }
    const TrainResult& b = runs[*best];
    if (r.best_val_acc > b.best_val_acc ||
        (r.best_val_acc == b.best_val_acc && r.best_val_loss < b.best_val_loss)) {
      best = i;
    }
  }
  return best;
}

SweepResult train(const TransitionModel& init, const TaskSpec& spec, const TrainConfig& cfg) {
  cfg.validate();
  SweepResult out;
  for (double lr : cfg.learning_rates) out.runs.push_back(train_single(init, spec, cfg, lr));
  out.chosen = choose_run(out.runs);
  return out;
}

double normalized_accuracy(double raw, int m) {
  if (m < 2) throw DomainError("normalized accuracy needs at least two classes");
  const double chance = 1.0 / double(m);
  return (raw - chance) / (1.0 - chance);
}

EvalResult evaluate_samples(const TransitionModel& model, int classes,
                            std::span<const Sample> samples) {
  if (samples.empty()) throw DomainError("evaluate: no samples");
  RecurrenceEngine engine(model);
  const bool normalize = inference_normalizes(model);
  EvalResult r;
  int correct = 0;
  for (const auto& s : samples) {
    try {
      const auto fr = engine.forward(s.tokens, normalize);
      if (argmax(fr.logits.values()) == s.target) ++correct;
    } catch (const OverflowError&) {
      ++r.overflowed;
    } catch (const DomainError&) {
      ++r.overflowed;
    }
  }
  r.samples = int(samples.size());
  r.raw = double(correct) / double(r.samples);
  r.norm = normalized_accuracy(r.raw, classes);
  return r;
}

EvalResult evaluate_range(const TransitionModel& model, const TaskSpec& spec, int min_len,
                          int max_len, int n_samples, std::uint64_t seed) {
  spec.validate();
  if (min_len < 2 || max_len < min_len) throw DomainError("evaluate: length must be at least 2");
  if (n_samples < 1) throw DomainError("evaluate: n_samples must be positive");
  Rng rng(seed);
  std::vector<Sample> samples;
  samples.reserve(std::size_t(n_samples));
  for (int i = 0; i < n_samples; ++i) samples.push_back(gen_sample(spec, min_len, max_len, rng));
  return evaluate_samples(model, spec.m, samples);
}

EvalResult evaluate(const TransitionModel& model, const TaskSpec& spec, int length, int n_samples,
                    std::uint64_t seed) {
  return evaluate_range(model, spec, length, length, n_samples, seed);
}

double mean_loss(const TransitionModel& model, std::span<const Sample> samples) {
  if (samples.empty()) throw DomainError("mean_loss: no samples");
  RecurrenceEngine engine(model);
  double total = 0.0;
  for (const auto& s : samples) total += cross_entropy(engine.forward(s.tokens, false).logits.values(), s.target);
  return total / double(samples.size());
}

ModelShape gradcheck_shape(Variant v, bool input_dependent, bool constant_bias) {
  ModelShape s;
  s.variant = v;
  s.hidden = 6;
  s.input_dim = 4;
  s.vocab = 4;
  s.classes = 2;
  s.rank = 3;
  s.block_size = 2;
  s.additive.input_dependent = input_dependent;
  s.additive.constant_bias = constant_bias;
  s.additive.init_half_width = 0.5;
  switch (v) {
    case Variant::Factored:
      s.init_half_width = 0.9;
      s.factor_half_width = 0.9;
      break;
    case Variant::BlockDiag: s.init_half_width = 0.6; break;
    case Variant::RealDiag: s.init_half_width = 0.8; break;
    default: s.init_half_width = 0.5; break;
  }
  return s;
}

std::vector<GroupCheck> gradient_check(const TransitionModel& model, std::span<const Sample> samples,
                                       double h) {
  if (samples.empty()) throw DomainError("gradient_check: no samples");
  if (!(h > 0.0)) throw DomainError("gradient_check: step must be positive");
  RecurrenceEngine engine(model);
  const double inv = 1.0 / double(samples.size());
  for (const auto& s : samples) {
    const auto fr = engine.forward(s.tokens, false);
    Vec64 d = cross_entropy_grad(fr.logits.values(), s.target);
    for (double& v : d.values()) v *= inv;
    engine.accumulate(fr.trace, d.values());
  }
  const Gradients analytic = engine.take_gradients();
  const auto ga = analytic.groups();

  TransitionModel probe = model;
  auto groups = param_groups(probe.params);
  std::vector<GroupCheck> out;
  for (std::size_t k = 0; k < groups.size(); ++k) {
    GroupCheck c;
    c.name = groups[k].name;
    c.size = groups[k].values.size();
    for (std::size_t i = 0; i < c.size; ++i) {
      double& p = groups[k].values[i];
      const double orig = p;
      p = orig + h;
      const double up = mean_loss(probe, samples);
      p = orig - h;
      const double down = mean_loss(probe, samples);
      p = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = ga[k].values[i];
      c.max_analytic = std::max(c.max_analytic, std::abs(a));
      c.max_numeric = std::max(c.max_numeric, std::abs(numeric));
      c.max_abs_error = std::max(c.max_abs_error, std::abs(a - numeric));
    }
    const double scale = std::max(c.max_analytic, c.max_numeric);
    c.rel_error = scale > 0.0 ? c.max_abs_error / scale : 0.0;
    out.push_back(c);
  }
  return out;
}

}  // namespace bilinear
