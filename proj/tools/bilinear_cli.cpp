// Command-line front end: training, evaluation, experiment sweeps and the
// analytic constructions.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bilinear/checkpoint.hpp"
#include "bilinear/config.hpp"
#include "bilinear/constructions.hpp"
#include "bilinear/error.hpp"
#include "bilinear/harness.hpp"
#include "bilinear/rng.hpp"
#include "bilinear/serialize.hpp"
#include "bilinear/training.hpp"

using namespace bilinear;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string profile = "desk";
  std::vector<std::string> overrides;
  bool quiet = false;
};

Config overrides_of(const std::vector<std::string>& items) {
  Config c;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw ParseError("--set expects key=value, got '" + item + "'");
    c.set(item.substr(0, eq), item.substr(eq + 1));
  }
  return c;
}

// Subcommand defaults < config file < --set < --seed.
RunConfig load_run_config(const Globals& g, const Config& defaults) {
  Config c = defaults;
  if (!g.config_path.empty()) c.merge(Config::load_file(g.config_path));
  c.merge(overrides_of(g.overrides));
  if (g.seed) c.set("seeds", std::to_string(*g.seed));
  return run_config_from(c, parse_profile(g.profile));
}

Progress progress_for(const Globals& g) {
  if (g.quiet) return {};
  return [](const std::string& line) { std::cerr << line << std::endl; };
}

void write_metadata(const std::string& path, const std::string& command, const Globals& g,
                    const RunConfig& rc) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path);
  os << "# run metadata\n";
  os << "# command=" << command << '\n';
  os << "# profile=" << g.profile << '\n';
  os << "# fingerprint=" << rc.fingerprint() << '\n';
  to_config(rc).write(os);
}

std::vector<int> parse_symbols(const std::string& text) {
  std::vector<int> out;
  std::string cleaned = text;
  for (char& ch : cleaned) {
    if (ch == ',') ch = ' ';
  }
  std::istringstream is(cleaned);
  std::string word;
  while (is >> word) out.push_back(int(parse_int(word)));
  return out;
}

void print_eval(const std::string& label, const EvalResult& r) {
  std::printf("%-8s raw=%.6f norm=%.6f samples=%d overflowed=%d\n", label.c_str(), r.raw, r.norm,
              r.samples, r.overflowed);
}

int run_results(const Globals& g, const std::string& command, const RunConfig& rc,
                const std::vector<ResultRow>& rows, const std::string& markdown_path) {
  if (g.out.empty()) {
    emit_csv(std::cout, rows);
  } else {
    emit_csv_file(g.out, rows);
    write_metadata(g.out + ".meta", command, g, rc);
  }
  if (!markdown_path.empty()) {
    std::ofstream md(markdown_path);
    if (!md) throw Error("cannot write " + markdown_path);
    const std::string in_dist = std::to_string(rc.in_dist_min) + "-" + std::to_string(rc.in_dist_max);
    md << "In distribution (" << in_dist << ")\n\n" << emit_markdown_table(rows, in_dist) << '\n';
    for (int len : rc.ood_lengths) {
      md << "Length " << len << "\n\n" << emit_markdown_table(rows, std::to_string(len)) << '\n';
    }
  }
  return 0;
}

int cmd_train(const Globals& g, const Config& defaults) {
  const RunConfig rc = load_run_config(g, defaults);
  const int m = rc.ms.front();
  const std::uint64_t seed = rc.seeds.front();
  const TaskSpec task = task_for(rc, m);
  const ModelShape shape = shape_for(rc, task);
  Rng init_rng(derive_seed(seed, 20));
  const TransitionModel init = make_model(shape, init_rng);
  TrainConfig tc = rc.train;
  tc.seed = derive_seed(seed, 21);

  const SweepResult sweep = train(init, task, tc);
  for (const auto& r : sweep.runs) {
    std::printf("lr=%s status=%s steps=%d%s best_val_loss=%.3e best_val_acc=%.6f%s%s\n",
                format_double(r.lr).c_str(), std::string(to_string(r.status)).c_str(), r.steps_run,
                r.early_stopped ? " (early stop)" : "", r.best_val_loss, r.best_val_acc,
                r.diagnostics.empty() ? "" : " ", r.diagnostics.c_str());
  }
  const TrainResult* best = sweep.best();
  if (!best) {
    std::fprintf(stderr, "every learning rate failed\n");
    return 1;
  }
  std::printf("chosen lr=%s\n", format_double(best->lr).c_str());
  print_eval(std::to_string(rc.in_dist_min) + "-" + std::to_string(rc.in_dist_max),
             evaluate_range(best->model, task, rc.in_dist_min, rc.in_dist_max, rc.eval_samples,
                            derive_seed(seed, 30)));
  for (int len : rc.ood_lengths) {
    print_eval(std::to_string(len), evaluate(best->model, task, len, rc.eval_samples,
                                             derive_seed(seed, 31 + std::uint64_t(len))));
  }

  const std::string out = g.out.empty() ? "model.ckpt" : g.out;
  save_checkpoint_file(out, best->model, &task);
  std::ofstream hist(out + ".history.csv");
  write_history_header(hist);
  write_history(hist, best->history);
  write_metadata(out + ".meta", "train", g, rc);
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

int cmd_eval(const Globals& g, const std::string& checkpoint, const std::vector<int>& lengths,
             int samples) {
  const Checkpoint ck = load_checkpoint_file(checkpoint);
  if (!ck.task) throw Error(checkpoint + " has no task; it cannot be evaluated");
  const std::uint64_t seed = g.seed.value_or(0);
  const TaskSpec& task = *ck.task;
  if (lengths.empty()) {
    print_eval("2-10", evaluate_range(ck.model, task, 2, 10, samples, derive_seed(seed, 30)));
  }
  for (int len : lengths) {
    print_eval(std::to_string(len),
               evaluate(ck.model, task, len, samples, derive_seed(seed, 31 + std::uint64_t(len))));
  }
  return 0;
}

int verify_sequences(const TransitionModel& model, const TaskSpec& task, int count, int length,
                     std::uint64_t seed) {
  Rng rng(derive_seed(seed, 40));
  int correct = 0;
  for (int i = 0; i < count; ++i) {
    const Sample s = gen_sample(task, length, length, rng);
    correct += predict(model, s.tokens) == s.target;
  }
  std::printf("verify: %d/%d sequences of length %d match the oracle\n", correct, count, length);
  return correct == count ? 0 : 1;
}

int run_input(const TransitionModel& model, const TaskSpec& task, const std::string& input) {
  const std::vector<int> symbols = parse_symbols(input);
  const Sample s = make_sample(task, symbols);
  const int pred = predict(model, s.tokens);
  std::printf("%s -> %d (oracle %d)\n", format_sample(Vocab(task), s).c_str(), pred, s.target);
  return pred == s.target ? 0 : 1;
}

int cmd_compile_fsm(const Globals& g, const std::string& fsm_path, int m, const std::string& input,
                    int verify, int length) {
  const std::uint64_t seed = g.seed.value_or(0);
  Fsm fsm = [&] {
    if (!fsm_path.empty()) return read_fsm_file(fsm_path);
    Rng rng(seed);
    return gen_fsm(m, rng);
  }();
  if (fsm_path.empty()) write_fsm(std::cout, fsm);
  const TaskSpec task = TaskSpec::state_machine(fsm, std::max(length, 10));
  const TransitionModel model = compile_fsm(fsm);
  int status = 0;
  if (!input.empty()) status |= run_input(model, task, input);
  if (verify > 0) status |= verify_sequences(model, task, verify, length, seed);
  if (!g.out.empty()) {
    save_checkpoint_file(g.out, model, &task);
    std::printf("wrote %s\n", g.out.c_str());
  }
  return status;
}

int cmd_compile_modadd(const Globals& g, int m, const std::string& input, int verify, int length) {
  const TaskSpec task = TaskSpec::mod_add(m, std::max(length, 10));
  const TransitionModel model = compile_mod_add(m);
  const Mat64 angles = token_angles(model);
  const Vocab vocab(task);
  for (int t = 0; t < vocab.size(); ++t) {
    std::printf("theta(%s) = %s\n", vocab.token_string(t).c_str(), format_double(angles(std::size_t(t), 0)).c_str());
  }
  int status = 0;
  if (!input.empty()) status |= run_input(model, task, input);
  if (verify > 0) status |= verify_sequences(model, task, verify, length, g.seed.value_or(0));
  if (!g.out.empty()) {
    save_checkpoint_file(g.out, model, &task);
    std::printf("wrote %s\n", g.out.c_str());
  }
  return status;
}

int cmd_parity_demo(const Globals& g, std::size_t hidden, const std::vector<int>& lengths, int probes,
                    int train_max_len) {
  const std::uint64_t seed = g.seed.value_or(0);
  Rng data_rng(derive_seed(seed, 50));
  const auto train_set = fixed_dataset(TaskSpec::parity(train_max_len), 2, data_rng);
  const FrozenParityResult res = frozen_parity(hidden, derive_seed(seed, 51), train_set, {});
  const auto& d = res.diagnostics;
  std::printf("H=%zu opposite_sign=%d ideal=%d method=%s", hidden, int(d.has_opposite_sign),
              int(d.has_ideal), res.method.c_str());
  if (res.component) std::printf(" component=%zu", *res.component);
  std::printf("\n");
  for (const auto& s : train_set) std::printf("train: %s\n", format_sample(Vocab(TaskSpec::parity()), s).c_str());
  bool all = true;
  for (int len : lengths) {
    const EvalResult r = evaluate(res.model, TaskSpec::parity(len), len, probes, derive_seed(seed, 52 + std::uint64_t(len)));
    print_eval(std::to_string(len), r);
    all = all && r.raw == 1.0;
  }
  if (!g.out.empty()) {
    const TaskSpec task = TaskSpec::parity(train_max_len);
    save_checkpoint_file(g.out, res.model, &task);
    std::printf("wrote %s\n", g.out.c_str());
  }
  return all ? 0 : 1;
}

int cmd_gradcheck(const Globals& g, const std::vector<std::string>& variants, int seeds, std::size_t hidden,
                  std::size_t input_dim, int length, const std::string& additive, double tol) {
  std::vector<Variant> list;
  for (const auto& v : variants) {
    if (v == "all") {
      list = {Variant::FullBilinear, Variant::Factored, Variant::BlockDiag,
              Variant::R2Rotation,   Variant::RealDiag, Variant::Elman};
    } else {
      list.push_back(parse_variant(v));
    }
  }
  const std::uint64_t base = g.seed.value_or(0);
  double worst = 0.0;
  for (Variant v : list) {
    double variant_worst = 0.0;
    std::string worst_group;
    for (int s = 0; s < seeds; ++s) {
      const AdditiveConfig add = AdditiveConfig::parse(additive);
      ModelShape shape = gradcheck_shape(v, add.input_dependent, add.constant_bias);
      shape.hidden = hidden;
      shape.input_dim = input_dim;
      Rng rng(derive_seed(base, std::uint64_t(s)));
      const TransitionModel model = make_model(shape, rng);
      const TaskSpec task = TaskSpec::mod_add(2, std::max(2, length));
      std::vector<Sample> samples;
      // BOS and EOI count toward the token length.
      const int inputs = std::max(2, length - 2);
      for (int i = 0; i < 3; ++i) samples.push_back(gen_sample(task, 2, inputs, rng));
      for (const auto& c : gradient_check(model, samples)) {
        if (worst_group.empty() || c.rel_error > variant_worst) {
          variant_worst = c.rel_error;
          worst_group = c.name;
        }
      }
    }
    std::printf("%-12s seeds=%d max_rel_error=%.3e (%s)\n", std::string(to_string(v)).c_str(), seeds,
                variant_worst, worst_group.c_str());
    worst = std::max(worst, variant_worst);
  }
  std::printf("%s: max relative error %.3e, tolerance %.1e\n", worst < tol ? "PASS" : "FAIL", worst, tol);
  return worst < tol ? 0 : 1;
}

Config ablation_defaults() {
  Config c;
  c.set("task", "mod_add");
  c.set("variant", "r2_rotation");
  c.set("m", "2,3,5,10");
  return c;
}

Config factor_defaults() {
  Config c;
  c.set("task", "state_machine");
  c.set("variant", "factored");
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bilinear recurrent models for state tracking"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "key=value configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Seed (overrides the seeds key)");
  app.add_option("--out", g.out, "Output path");
  app.add_option("--profile", g.profile, "Default scale")->check(CLI::IsMember({"desk", "paper"}));
  app.add_option("--set", g.overrides, "Configuration override key=value (repeatable)");
  app.add_flag("--quiet", g.quiet, "No progress output");
  app.fallthrough();

  auto* train_cmd = app.add_subcommand("train", "Train one model over the learning-rate sweep and save the chosen run");
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string checkpoint;
  std::vector<int> eval_lengths;
  int eval_samples = 2048;
  eval_cmd->add_option("checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--length", eval_lengths, "Exact input lengths (default: 2-10)");
  eval_cmd->add_option("--samples", eval_samples, "Samples per length");

  std::string markdown;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run every (m, seed) cell of the configuration");
  auto* ablate_cmd = app.add_subcommand("ablate-additive", "Additive-term ablation (R2 model, modular addition by default)");
  auto* factor_cmd = app.add_subcommand("factor-sweep", "Factored model over the rank grid (state machine by default)");
  for (auto* c : {sweep_cmd, ablate_cmd, factor_cmd}) {
    c->add_option("--markdown", markdown, "Also write markdown tables to this file");
  }

  std::string fsm_path;
  int m = 3;
  std::string input;
  int verify = 0;
  int length = 1000;
  auto* fsm_cmd = app.add_subcommand("compile-fsm", "Compile a finite-state machine into a bilinear model");
  fsm_cmd->add_option("--fsm", fsm_path, "FSM file (default: random)")->check(CLI::ExistingFile);
  fsm_cmd->add_option("--m", m, "States of the random FSM");
  fsm_cmd->add_option("--input", input, "Input symbols, e.g. \"4 1 2 5 5\"");
  fsm_cmd->add_option("--verify", verify, "Random sequences to check against the oracle");
  fsm_cmd->add_option("--length", length, "Length of the verification sequences");

  int modadd_m = 5;
  int modadd_length = 500;
  auto* modadd_cmd = app.add_subcommand("compile-modadd", "Rotation model for addition modulo m");
  modadd_cmd->add_option("--m", modadd_m, "Modulus")->check(CLI::Range(2, 1 << 20));
  modadd_cmd->add_option("--input", input, "Input symbols");
  modadd_cmd->add_option("--verify", verify, "Random sequences to check against the oracle");
  modadd_cmd->add_option("--length", modadd_length, "Length of the verification sequences");

  std::size_t parity_hidden = 16;
  std::vector<int> parity_lengths{10, 100, 400};
  int probes = 2048;
  int train_max_len = 50;
  auto* parity_cmd = app.add_subcommand("parity-demo", "Frozen random diagonal model, readout fitted on two examples");
  parity_cmd->add_option("--hidden", parity_hidden, "Hidden size");
  parity_cmd->add_option("--lengths", parity_lengths, "Probe lengths")->delimiter(',');
  parity_cmd->add_option("--probes", probes, "Probes per length");
  parity_cmd->add_option("--train-max-len", train_max_len, "Longest training example");

  std::vector<std::string> gc_variants{"all"};
  int gc_seeds = 20;
  std::size_t gc_hidden = 6;
  std::size_t gc_input = 4;
  int gc_length = 5;
  std::string gc_additive = "none";
  double gc_tol = 1e-5;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Compare BPTT gradients with central differences");
  grad_cmd->add_option("--variant", gc_variants, "Variants (or all)")->delimiter(',');
  grad_cmd->add_option("--seeds", gc_seeds, "Random models per variant");
  grad_cmd->add_option("--hidden", gc_hidden, "Hidden size (even)");
  grad_cmd->add_option("--input-dim", gc_input, "Embedding size");
  grad_cmd->add_option("--len", gc_length, "Longest token sequence");
  grad_cmd->add_option("--additive", gc_additive, "none, input, input+const or const");
  grad_cmd->add_option("--tol", gc_tol, "Relative error tolerance");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) return cmd_train(g, Config{});
    if (*eval_cmd) return cmd_eval(g, checkpoint, eval_lengths, eval_samples);
    if (*sweep_cmd) {
      const RunConfig rc = load_run_config(g, Config{});
      return run_results(g, "sweep", rc, sweep(rc, progress_for(g)), markdown);
    }
    if (*ablate_cmd) {
      const RunConfig rc = load_run_config(g, ablation_defaults());
      return run_results(g, "ablate-additive", rc, ablate_additive(rc, progress_for(g)), markdown);
    }
    if (*factor_cmd) {
      const RunConfig rc = load_run_config(g, factor_defaults());
      return run_results(g, "factor-sweep", rc, factor_sweep(rc, progress_for(g)), markdown);
    }
    if (*fsm_cmd) return cmd_compile_fsm(g, fsm_path, m, input, verify, length);
    if (*modadd_cmd) return cmd_compile_modadd(g, modadd_m, input, verify, modadd_length);
    if (*parity_cmd) return cmd_parity_demo(g, parity_hidden, parity_lengths, probes, train_max_len);
    if (*grad_cmd) {
      return cmd_gradcheck(g, gc_variants, gc_seeds, gc_hidden, gc_input, gc_length, gc_additive, gc_tol);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
