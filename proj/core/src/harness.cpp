#include "bilinear/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <tuple>
#include <type_traits>

#include "bilinear/error.hpp"
#include "bilinear/rng.hpp"
#include "bilinear/serialize.hpp"

namespace bilinear {

Profile parse_profile(std::string_view text) {
  if (text == "desk") return Profile::Desk;
  if (text == "paper") return Profile::Paper;
  throw ParseError("unknown profile '" + std::string(text) + "' (expected desk or paper)");
}

std::string_view to_string(Profile p) { return p == Profile::Desk ? "desk" : "paper"; }

void RunConfig::validate() const {
  if (ms.empty() || seeds.empty() || ood_lengths.empty()) {
    throw DomainError("m list, seeds and ood lengths must be non-empty");
  }
  for (int m : ms) {
    if (m < 2) throw DomainError("every m must be at least 2");
    if (task == TaskKind::Parity && m != 2) throw DomainError("parity requires m = 2");
  }
  if (model.hidden < 1 || model.input_dim < 1) throw DomainError("hidden and input_dim must be positive");
  if (in_dist_min < 2 || in_dist_max < in_dist_min) throw DomainError("invalid in-distribution range");
  for (int l : ood_lengths) {
    if (l < 2) throw DomainError("OOD lengths must be at least 2");
  }
  if (eval_samples < 1) throw DomainError("eval_samples must be positive");
  train.validate();
}

RunConfig profile_defaults(Profile p) {
  RunConfig rc;
  rc.additive_settings = {AdditiveConfig::parse("input"), AdditiveConfig::parse("input+const"),
                          AdditiveConfig::parse("const"), AdditiveConfig::parse("none")};
  if (p == Profile::Paper) {
    rc.ms = {2, 3, 5, 10, 25, 50};
    rc.model.hidden = 256;
    rc.model.input_dim = 256;
    rc.train.steps = 100000;
    rc.ood_lengths = {500};
    rc.ranks = {1, 2, 4, 8, 16, 32, 64, 128, 256};
  }
  return rc;
}

const std::vector<std::string>& run_config_keys() {
  static const std::vector<std::string> keys{
      "task",          "m",           "variant",        "hidden",        "input_dim",
      "rank",          "block_size",  "additive",       "additive_init", "init_half_width",
      "factor_init",   "embed_std",     "ranks",       "additive_settings", "lrs",        "steps",
      "batch",         "early_stop_loss", "train_min_len", "train_max_len", "val_size",
      "val_every",     "smoothing_window", "clip_norm",  "train_set_size", "eval_min_len",
      "eval_max_len",  "ood_lengths", "eval_samples",   "seeds",         "fsm_seed",
      "wall_time"};
  return keys;
}

namespace {

template <class T>
std::vector<T> cast_list(const std::vector<long long>& v) {
  std::vector<T> out;
  for (long long x : v) {
    if (x < 0) throw ParseError("list entries must be non-negative");
    out.push_back(static_cast<T>(x));
  }
  return out;
}

template <class T>
std::vector<long long> widen(const std::vector<T>& v) {
  return std::vector<long long>(v.begin(), v.end());
}

std::string join(const std::vector<std::string>& items) {
  std::string s;
  for (std::size_t i = 0; i < items.size(); ++i) s += (i ? "," : "") + items[i];
  return s;
}

template <class T>
std::string join_numbers(const std::vector<T>& v) {
  std::vector<std::string> items;
  for (const T& x : v) {
    if constexpr (std::is_floating_point_v<T>) {
      items.push_back(format_double(x));
    } else {
      items.push_back(std::to_string(x));
    }
  }
  return join(items);
}

}  // namespace

RunConfig run_config_from(const Config& cfg, Profile p) {
  const auto unknown = cfg.unknown_keys(run_config_keys());
  if (!unknown.empty()) throw ParseError("unknown config key '" + unknown.front() + "'");
  RunConfig rc = profile_defaults(p);
  rc.task = parse_task_kind(cfg.get_string("task", std::string(to_string(rc.task))));
  if (rc.task == TaskKind::Parity && !cfg.has("m")) rc.ms = {2};
  rc.ms = cast_list<int>(cfg.get_int_list("m", widen(rc.ms)));

  auto& s = rc.model;
  s.variant = parse_variant(cfg.get_string("variant", std::string(to_string(s.variant))));
  s.hidden = std::size_t(cfg.get_int("hidden", (long long)s.hidden));
  s.input_dim = std::size_t(cfg.get_int("input_dim", cfg.has("hidden") ? (long long)s.hidden : (long long)s.input_dim));
  s.rank = std::size_t(cfg.get_int("rank", (long long)s.rank));
  s.block_size = std::size_t(cfg.get_int("block_size", (long long)s.block_size));
  const double add_init = cfg.get_double("additive_init", s.additive.init_half_width);
  s.additive = AdditiveConfig::parse(cfg.get_string("additive", s.additive.label()), add_init);
  s.init_half_width = cfg.get_double("init_half_width", s.init_half_width);
  s.factor_half_width = cfg.get_double("factor_init", s.factor_half_width);
  s.embed_std = cfg.get_double("embed_std", s.embed_std);
  rc.ranks = cast_list<std::size_t>(cfg.get_int_list("ranks", widen(rc.ranks)));
  if (cfg.has("additive_settings")) {
    rc.additive_settings.clear();
    for (const auto& label : cfg.get_list("additive_settings", {})) {
      rc.additive_settings.push_back(AdditiveConfig::parse(label, add_init));
    }
  } else {
    for (auto& a : rc.additive_settings) a.init_half_width = add_init;
  }

  auto& t = rc.train;
  t.learning_rates = cfg.get_double_list("lrs", t.learning_rates);
  t.steps = int(cfg.get_int("steps", t.steps));
  t.batch = int(cfg.get_int("batch", t.batch));
  t.early_stop_loss = cfg.get_double("early_stop_loss", t.early_stop_loss);
  t.min_len = int(cfg.get_int("train_min_len", t.min_len));
  t.max_len = int(cfg.get_int("train_max_len", t.max_len));
  t.val_size = int(cfg.get_int("val_size", t.val_size));
  t.val_every = int(cfg.get_int("val_every", t.val_every));
  t.smoothing_window = int(cfg.get_int("smoothing_window", t.smoothing_window));
  t.clip_norm = cfg.get_double("clip_norm", t.clip_norm);
  t.train_set_size = int(cfg.get_int("train_set_size", t.train_set_size));

  rc.in_dist_min = int(cfg.get_int("eval_min_len", rc.in_dist_min));
  rc.in_dist_max = int(cfg.get_int("eval_max_len", rc.in_dist_max));
  rc.ood_lengths = cast_list<int>(cfg.get_int_list("ood_lengths", widen(rc.ood_lengths)));
  rc.eval_samples = int(cfg.get_int("eval_samples", rc.eval_samples));
  if (const auto v = cfg.get("seeds")) {
    rc.seeds.clear();
    for (const auto& item : split_list(*v)) rc.seeds.push_back(parse_u64(item));
  }
  if (const auto v = cfg.get("fsm_seed")) rc.fsm_seed = parse_u64(*v);
  rc.record_wall_time = cfg.get_bool("wall_time", rc.record_wall_time);
  rc.validate();
  return rc;
}

Config to_config(const RunConfig& rc) {
  Config c;
  const auto& s = rc.model;
  const auto& t = rc.train;
  c.set("task", std::string(to_string(rc.task)));
  c.set("m", join_numbers(rc.ms));
  c.set("variant", std::string(to_string(s.variant)));
  c.set("hidden", std::to_string(s.hidden));
  c.set("input_dim", std::to_string(s.input_dim));
  c.set("rank", std::to_string(s.rank));
  c.set("block_size", std::to_string(s.block_size));
  c.set("additive", s.additive.label());
  c.set("additive_init", format_double(s.additive.init_half_width));
  c.set("init_half_width", format_double(s.init_half_width));
  c.set("factor_init", format_double(s.factor_half_width));
  c.set("embed_std", format_double(s.embed_std));
  c.set("ranks", join_numbers(rc.ranks));
  std::vector<std::string> labels;
  for (const auto& a : rc.additive_settings) labels.push_back(a.label());
  c.set("additive_settings", join(labels));
  c.set("lrs", join_numbers(t.learning_rates));
  c.set("steps", std::to_string(t.steps));
  c.set("batch", std::to_string(t.batch));
  c.set("early_stop_loss", format_double(t.early_stop_loss));
  c.set("train_min_len", std::to_string(t.min_len));
  c.set("train_max_len", std::to_string(t.max_len));
  c.set("val_size", std::to_string(t.val_size));
  c.set("val_every", std::to_string(t.val_every));
  c.set("smoothing_window", std::to_string(t.smoothing_window));
  c.set("clip_norm", format_double(t.clip_norm));
  c.set("train_set_size", std::to_string(t.train_set_size));
  c.set("eval_min_len", std::to_string(rc.in_dist_min));
  c.set("eval_max_len", std::to_string(rc.in_dist_max));
  c.set("ood_lengths", join_numbers(rc.ood_lengths));
  c.set("eval_samples", std::to_string(rc.eval_samples));
  c.set("seeds", join_numbers(rc.seeds));
  c.set("fsm_seed", std::to_string(rc.fsm_seed));
  c.set("wall_time", rc.record_wall_time ? "true" : "false");
  return c;
}

std::string RunConfig::fingerprint() const {
  std::ostringstream os;
  to_config(*this).write(os);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : os.str()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

TaskSpec task_for(const RunConfig& rc, int m) {
  const int max_len = std::max(rc.train.max_len, rc.in_dist_max);
  switch (rc.task) {
    case TaskKind::ModAdd:
      return TaskSpec::mod_add(m, max_len);
    case TaskKind::ModArith:
      return TaskSpec::mod_arith(m, max_len);
    case TaskKind::Parity:
      return TaskSpec::parity(max_len);
    case TaskKind::StateMachine: {
      Rng rng(derive_seed(rc.fsm_seed, std::uint64_t(m)));
      return TaskSpec::state_machine(gen_fsm(m, rng), max_len);
    }
  }
  throw DomainError("unknown task kind");
}

ModelShape shape_for(const RunConfig& rc, const TaskSpec& task) {
  ModelShape s = rc.model;
  s.vocab = std::size_t(Vocab(task).size());
  s.classes = std::size_t(task.m);
  return s;
}

std::string variant_params(const ModelShape& s) {
  std::string out = "H=" + std::to_string(s.hidden) + " D=" + std::to_string(s.input_dim);
  if (s.variant == Variant::Factored) out += " R=" + std::to_string(s.rank);
  if (s.variant == Variant::BlockDiag) out += " block=" + std::to_string(s.block_size);
  if (s.variant != Variant::Elman) {
    out += " additive=" + s.additive.label();
    if (s.additive.any()) out += " additive_init=" + format_double(s.additive.init_half_width);
  }
  return out;
}

std::vector<ResultRow> run_cell(const RunConfig& rc, int m, std::uint64_t seed, const Progress& progress) {
  rc.validate();
  const TaskSpec task = task_for(rc, m);
  const ModelShape shape = shape_for(rc, task);
  Rng init_rng(derive_seed(seed, 20));
  const TransitionModel init = make_model(shape, init_rng);
  TrainConfig tc = rc.train;
  tc.seed = derive_seed(seed, 21);

  ResultRow base;
  base.task = std::string(to_string(rc.task));
  base.model = std::string(to_string(shape.variant));
  base.variant_params = variant_params(shape);
  base.m = m;
  base.seed = seed;

  std::vector<TrainResult> runs;
  std::vector<double> seconds;
  std::vector<std::vector<ResultRow>> per_run;
  for (double lr : tc.learning_rates) {
    const auto t0 = std::chrono::steady_clock::now();
    runs.push_back(train_single(init, task, tc, lr));
    const TrainResult& r = runs.back();
    std::vector<ResultRow> rows;
    ResultRow row = base;
    row.lr = lr;
    row.status = std::string(to_string(r.status));
    const EvalResult in = evaluate_range(r.model, task, rc.in_dist_min, rc.in_dist_max, rc.eval_samples,
                                         derive_seed(seed, 30));
    row.length = std::to_string(rc.in_dist_min) + "-" + std::to_string(rc.in_dist_max);
    row.raw_acc = in.raw;
    row.norm_acc = in.norm;
    rows.push_back(row);
    for (int len : rc.ood_lengths) {
      const EvalResult ood = evaluate(r.model, task, len, rc.eval_samples, derive_seed(seed, 31 + std::uint64_t(len)));
      row.length = std::to_string(len);
      row.raw_acc = ood.raw;
      row.norm_acc = ood.norm;
      rows.push_back(row);
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (rc.record_wall_time) {
      for (auto& x : rows) x.wall_s = secs;
    }
    if (progress) {
      std::ostringstream msg;
      msg << base.task << ' ' << base.model << " [" << base.variant_params << "] m=" << m << " seed=" << seed
          << " lr=" << format_double(lr) << ": " << row.status << ", " << r.steps_run << " steps"
          << (r.early_stopped ? " (early stop)" : "") << ", val_acc=" << format_double(r.best_val_acc);
      for (const auto& x : rows) msg << ", acc[" << x.length << "]=" << format_double(x.norm_acc);
      if (!r.diagnostics.empty()) msg << ", " << r.diagnostics;
      progress(msg.str());
    }
    per_run.push_back(std::move(rows));
  }
  const auto chosen = choose_run(runs);
  std::vector<ResultRow> out;
  for (std::size_t i = 0; i < per_run.size(); ++i) {
    for (auto& row : per_run[i]) {
      row.chosen = chosen && *chosen == i;
      out.push_back(std::move(row));
    }
  }
  return out;
}

std::vector<ResultRow> sweep(const RunConfig& rc, const Progress& progress) {
  std::vector<ResultRow> out;
  for (std::uint64_t seed : rc.seeds) {
    for (int m : rc.ms) {
      auto rows = run_cell(rc, m, seed, progress);
      out.insert(out.end(), rows.begin(), rows.end());
    }
  }
  return out;
}

std::vector<ResultRow> ablate_additive(const RunConfig& rc, const Progress& progress) {
  if (rc.additive_settings.empty()) throw DomainError("no additive settings to ablate");
  std::vector<ResultRow> out;
  for (const auto& setting : rc.additive_settings) {
    RunConfig c = rc;
    c.model.additive = setting;
    auto rows = sweep(c, progress);
    out.insert(out.end(), rows.begin(), rows.end());
  }
  return out;
}

std::vector<ResultRow> factor_sweep(const RunConfig& rc, const Progress& progress) {
  if (rc.ranks.empty()) throw DomainError("no ranks to sweep");
  std::vector<ResultRow> out;
  for (std::size_t r : rc.ranks) {
    RunConfig c = rc;
    c.model.variant = Variant::Factored;
    c.model.rank = r;
    auto rows = sweep(c, progress);
    out.insert(out.end(), rows.begin(), rows.end());
  }
  return out;
}

double chosen_accuracy(const std::vector<ResultRow>& rows, const std::string& model,
                       const std::string& params, int m, const std::string& length) {
  double best = -1e300;
  bool found = false;
  for (const auto& r : rows) {
    if (!r.chosen || r.model != model || r.variant_params != params || r.m != m || r.length != length) continue;
    best = std::max(best, r.norm_acc);
    found = true;
  }
  if (!found) throw DomainError("no chosen result for [" + params + "] m=" + std::to_string(m) + " length " + length);
  return best;
}

const char* const kCsvHeader = "task,model,variant_params,m,length,lr,seed,raw_acc,norm_acc,status,wall_s,chosen";

void emit_csv(std::ostream& os, const std::vector<ResultRow>& rows) {
  os << kCsvHeader << '\n';
  for (const auto& r : rows) {
    for (const std::string* field : {&r.task, &r.model, &r.variant_params, &r.length, &r.status}) {
      if (field->find_first_of(",\n") != std::string::npos) {
        throw DomainError("CSV field contains a separator: '" + *field + "'");
      }
    }
    os << r.task << ',' << r.model << ',' << r.variant_params << ',' << r.m << ',' << r.length << ','
       << format_double(r.lr) << ',' << r.seed << ',' << format_double(r.raw_acc) << ','
       << format_double(r.norm_acc) << ',' << r.status << ',' << format_double(r.wall_s) << ','
       << (r.chosen ? 1 : 0) << '\n';
  }
}

void emit_csv_file(const std::string& path, const std::vector<ResultRow>& rows) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  emit_csv(out, rows);
  out.flush();
  if (!out) throw Error("failed writing '" + path + "'");
}

std::vector<ResultRow> parse_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kCsvHeader) throw ParseError("results CSV: unexpected header");
  std::vector<ResultRow> rows;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (;;) {
      const auto comma = line.find(',', start);
      f.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (f.size() != 12) throw ParseError("results CSV line " + std::to_string(lineno) + ": expected 12 fields");
    ResultRow r;
    r.task = f[0];
    r.model = f[1];
    r.variant_params = f[2];
    r.m = int(parse_int(f[3]));
    r.length = f[4];
    r.lr = parse_double(f[5]);
    r.seed = parse_u64(f[6]);
    r.raw_acc = parse_double(f[7]);
    r.norm_acc = parse_double(f[8]);
    r.status = f[9];
    r.wall_s = parse_double(f[10]);
    if (f[11] != "0" && f[11] != "1") throw ParseError("results CSV line " + std::to_string(lineno) + ": bad chosen flag");
    r.chosen = f[11] == "1";
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<ResultRow> merge_results(std::vector<ResultRow> a, const std::vector<ResultRow>& b) {
  a.insert(a.end(), b.begin(), b.end());
  std::set<std::tuple<std::string, std::string, std::string, int, std::string, std::uint64_t>> seen;
  for (const auto& r : a) {
    if (!r.chosen) continue;
    if (!seen.emplace(r.task, r.model, r.variant_params, r.m, r.length, r.seed).second) {
      throw DomainError("merged results have two chosen learning rates for " + r.task + " " + r.model + " [" +
                        r.variant_params + "] m=" + std::to_string(r.m) + " length " + r.length);
    }
  }
  return a;
}

std::string emit_markdown_table(const std::vector<ResultRow>& rows, const std::string& length) {
  std::vector<std::pair<std::string, std::string>> models;  // (label, variant_params)
  std::set<int> ms;
  for (const auto& r : rows) {
    if (r.length != length) continue;
    ms.insert(r.m);
    const std::pair<std::string, std::string> key{r.task + " " + r.model + " (" + r.variant_params + ")", r.variant_params};
    if (std::find(models.begin(), models.end(), key) == models.end()) models.push_back(key);
  }
  std::ostringstream os;
  os << "| Model (length " << length << ") |";
  for (int m : ms) os << ' ' << m << " |";
  os << "\n|---|";
  for (std::size_t i = 0; i < ms.size(); ++i) os << "---|";
  os << '\n';
  for (const auto& [label, params] : models) {
    os << "| " << label << " |";
    for (int m : ms) {
      double best = -1e300;
      bool found = false;
      for (const auto& r : rows) {
        if (r.chosen && r.length == length && r.m == m && r.task + " " + r.model + " (" + r.variant_params + ")" == label) {
          best = std::max(best, r.norm_acc);
          found = true;
        }
      }
      if (found) {
        char buf[32];
        std::snprintf(buf, sizeof buf, " %.2f |", best);
        os << buf;
      } else {
        os << " - |";
      }
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace bilinear
