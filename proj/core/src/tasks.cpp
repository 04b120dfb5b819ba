#include "bilinear/tasks.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "bilinear/error.hpp"
#include "bilinear/rng.hpp"
#include "bilinear/serialize.hpp"

namespace bilinear {

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::ModAdd: return "mod_add";
    case TaskKind::ModArith: return "mod_arith";
    case TaskKind::StateMachine: return "state_machine";
    case TaskKind::Parity: return "parity";
  }
  return "unknown";
}

TaskKind parse_task_kind(std::string_view text) {
  if (text == "mod_add" || text == "modadd") return TaskKind::ModAdd;
  if (text == "mod_arith" || text == "modarith") return TaskKind::ModArith;
  if (text == "state_machine" || text == "fsm") return TaskKind::StateMachine;
  if (text == "parity") return TaskKind::Parity;
  throw ParseError("unknown task kind '" + std::string(text) + "'");
}

Fsm::Fsm(int m, std::vector<int> table) : m_(m), table_(std::move(table)) {
  if (m < 2) throw DomainError("FSM needs at least 2 states");
  if (table_.size() != std::size_t(m) * std::size_t(m)) {
    throw DimensionError("FSM table must have m*m entries");
  }
  std::vector<char> seen(m);
  for (int q = 0; q < m; ++q) {
    std::fill(seen.begin(), seen.end(), 0);
    for (int s = 0; s < m; ++s) {
      const int v = table_[q * m + s];
      if (v < 0 || v >= m) throw DomainError("FSM entry out of range");
      if (seen[v]) throw DomainError("FSM row " + std::to_string(q) + " is not a permutation");
      seen[v] = 1;
    }
  }
}

int Fsm::run(int start, std::span<const int> symbols) const {
  if (start < 0 || start >= m_) throw DomainError("FSM start state out of range");
  int q = start;
  for (int s : symbols) {
    if (s < 0 || s >= m_) throw DomainError("FSM input symbol out of range");
    q = next(q, s);
  }
  return q;
}

Fsm gen_fsm(int m, Rng& rng) {
  if (m < 2) throw DomainError("gen_fsm: m must be at least 2");
  std::vector<int> table(std::size_t(m) * m);
  std::vector<int> perm(m);
  for (int q = 0; q < m; ++q) {
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm.begin(), perm.end());
    std::copy(perm.begin(), perm.end(), table.begin() + std::ptrdiff_t(q) * m);
  }
  return Fsm(m, std::move(table));
}

Fsm read_fsm(std::istream& is) {
  const long long m = parse_int(read_word(is, "FSM size"));
  if (m < 2 || m > 100000) throw ParseError("FSM size out of range");
  std::vector<int> table(std::size_t(m) * std::size_t(m));
  for (auto& v : table) v = static_cast<int>(parse_int(read_word(is, "FSM table")));
  try {
    return Fsm(static_cast<int>(m), std::move(table));
  } catch (const Error& e) {
    throw ParseError(std::string("invalid FSM table: ") + e.what());
  }
}

Fsm read_fsm_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open FSM file '" + path + "'");
  return read_fsm(in);
}

void write_fsm(std::ostream& os, const Fsm& fsm) {
  os << fsm.size() << '\n';
  for (int q = 0; q < fsm.size(); ++q) {
    for (int s = 0; s < fsm.size(); ++s) os << (s ? " " : "") << fsm.next(q, s);
    os << '\n';
  }
}

void TaskSpec::validate() const {
  if (m < 2) throw DomainError("task modulus must be at least 2");
  if (max_len < 2) throw DomainError("task max_len must be at least 2");
  if (kind == TaskKind::Parity && m != 2) throw DomainError("parity requires m == 2");
  if (kind == TaskKind::StateMachine) {
    if (!fsm) throw DomainError("state machine task requires an FSM");
    if (fsm->size() != m) throw DomainError("FSM size must equal m");
  } else if (fsm) {
    throw DomainError("only the state machine task carries an FSM");
  }
}

TaskSpec TaskSpec::mod_add(int m, int max_len) {
  TaskSpec s{TaskKind::ModAdd, m, std::nullopt, max_len};
  s.validate();
  return s;
}

TaskSpec TaskSpec::mod_arith(int m, int max_len) {
  TaskSpec s{TaskKind::ModArith, m, std::nullopt, max_len};
  s.validate();
  return s;
}

TaskSpec TaskSpec::state_machine(Fsm fsm, int max_len) {
  const int m = fsm.size();
  TaskSpec s{TaskKind::StateMachine, m, std::move(fsm), max_len};
  s.validate();
  return s;
}

TaskSpec TaskSpec::parity(int max_len) {
  TaskSpec s{TaskKind::Parity, 2, std::nullopt, max_len};
  s.validate();
  return s;
}

Vocab::Vocab(const TaskSpec& spec) : Vocab(spec.kind, spec.m) {}

Vocab::Vocab(TaskKind kind, int m)
    : m_(m),
      has_ops_(kind == TaskKind::ModArith),
      bos_(m + (has_ops_ ? 3 : 0)),
      eoi_(bos_ + 1),
      size_(eoi_ + 1) {
  if (m < 2) throw DomainError("vocabulary needs m >= 2");
}

int Vocab::op(ArithOp op) const {
  if (!has_ops_) throw DomainError("this task has no operator tokens");
  return m_ + static_cast<int>(op);
}

std::optional<ArithOp> Vocab::as_op(int id) const {
  if (!has_ops_ || id < m_ || id >= m_ + 3) return std::nullopt;
  return static_cast<ArithOp>(id - m_);
}

std::string Vocab::token_string(int id) const {
  if (id == bos_) return "[BOS]";
  if (id == eoi_) return "[EOI]";
  if (is_symbol(id)) return std::to_string(id);
  if (auto o = as_op(id)) {
    switch (*o) {
      case ArithOp::Add: return "+";
      case ArithOp::Sub: return "-";
      case ArithOp::Mul: return "*";
    }
  }
  throw DomainError("token id " + std::to_string(id) + " is not in the vocabulary");
}

int Vocab::id_of(std::string_view token) const {
  if (token == "[BOS]") return bos_;
  if (token == "[EOI]") return eoi_;
  if (has_ops_) {
    if (token == "+") return op(ArithOp::Add);
    if (token == "-" || token == "−") return op(ArithOp::Sub);
    if (token == "*" || token == "×" || token == "x") return op(ArithOp::Mul);
  }
  const long long v = parse_int(token);
  if (v < 0 || v >= m_) throw ParseError("symbol '" + std::string(token) + "' is out of range");
  return static_cast<int>(v);
}

namespace {

int mod(long long a, int m) {
  const long long r = a % m;
  return static_cast<int>(r < 0 ? r + m : r);
}

void check_symbols(const TaskSpec& spec, std::span<const int> inputs) {
  for (int s : inputs) {
    if (s < 0 || s >= spec.m) {
      throw DomainError("input symbol " + std::to_string(s) + " is outside {0.." +
                        std::to_string(spec.m - 1) + "}");
    }
  }
}

}  // namespace

int oracle(const TaskSpec& spec, std::span<const int> inputs, std::span<const ArithOp> ops) {
  if (inputs.empty()) throw DomainError("oracle: no inputs");
  check_symbols(spec, inputs);
  switch (spec.kind) {
    case TaskKind::ModAdd:
    case TaskKind::Parity: {
      long long s = 0;
      for (int v : inputs) s += v;
      return mod(s, spec.m);
    }
    case TaskKind::ModArith: {
      if (ops.size() + 1 != inputs.size()) {
        throw DomainError("oracle: modular arithmetic needs one operator between each pair of inputs");
      }
      long long acc = inputs[0];
      for (std::size_t i = 0; i < ops.size(); ++i) {
        const long long v = inputs[i + 1];
        switch (ops[i]) {
          case ArithOp::Add: acc = mod(acc + v, spec.m); break;
          case ArithOp::Sub: acc = mod(acc - v, spec.m); break;
          case ArithOp::Mul: acc = mod(acc * v, spec.m); break;
        }
      }
      return mod(acc, spec.m);
    }
    case TaskKind::StateMachine: {
      if (!spec.fsm) throw DomainError("oracle: state machine task without FSM");
      return spec.fsm->run(inputs[0], inputs.subspan(1));
    }
  }
  throw DomainError("oracle: unknown task");
}

void decode_inputs(const Vocab& vocab, std::span<const int> tokens, std::vector<int>& inputs,
                   std::vector<ArithOp>& ops) {
  inputs.clear();
  ops.clear();
  if (tokens.size() < 2 || tokens.front() != vocab.bos() || tokens.back() != vocab.eoi()) {
    throw DomainError("token sequence must be framed by [BOS] ... [EOI]");
  }
  for (std::size_t i = 1; i + 1 < tokens.size(); ++i) {
    const int t = tokens[i];
    if (vocab.is_symbol(t)) {
      inputs.push_back(t);
    } else if (auto o = vocab.as_op(t)) {
      ops.push_back(*o);
    } else {
      throw DomainError("unexpected token id " + std::to_string(t) + " inside a sample");
    }
  }
}

Sample make_sample(const TaskSpec& spec, std::span<const int> inputs, std::span<const ArithOp> ops) {
  const Vocab vocab(spec);
  Sample s;
  s.target = oracle(spec, inputs, ops);
  s.input_count = static_cast<int>(inputs.size());
  s.tokens.reserve(inputs.size() * 2 + 2);
  s.tokens.push_back(vocab.bos());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (i > 0 && spec.kind == TaskKind::ModArith) s.tokens.push_back(vocab.op(ops[i - 1]));
    s.tokens.push_back(inputs[i]);
  }
  s.tokens.push_back(vocab.eoi());
  return s;
}

Sample gen_sample(const TaskSpec& spec, Rng& rng) { return gen_sample(spec, 2, spec.max_len, rng); }

Sample gen_sample(const TaskSpec& spec, int min_len, int max_len, Rng& rng) {
  if (min_len < 1 || max_len < min_len) throw DomainError("gen_sample: invalid length range");
  const int n = rng.uniform_int(min_len, max_len);
  std::vector<int> inputs(n);
  for (auto& v : inputs) v = static_cast<int>(rng.below(std::uint64_t(spec.m)));
  std::vector<ArithOp> ops;
  if (spec.kind == TaskKind::ModArith) {
    ops.resize(n - 1);
    for (auto& o : ops) o = static_cast<ArithOp>(rng.below(3));
  }
  return make_sample(spec, inputs, ops);
}

std::vector<Sample> fixed_dataset(const TaskSpec& spec, int size, Rng& rng) {
  if (size < 1) throw DomainError("fixed_dataset: size must be at least 1");
  spec.validate();
  std::vector<Sample> out;
  for (;;) {
    out.clear();
    for (int i = 0; i < size; ++i) out.push_back(gen_sample(spec, rng));
    if (spec.kind != TaskKind::Parity || size < 2) break;
    const bool has_even = std::any_of(out.begin(), out.end(), [](const Sample& s) { return s.target == 0; });
    const bool has_odd = std::any_of(out.begin(), out.end(), [](const Sample& s) { return s.target == 1; });
    if (has_even && has_odd) break;
  }
  return out;
}

std::string format_sample(const Vocab& vocab, const Sample& sample) {
  std::string line;
  for (int t : sample.tokens) {
    line += vocab.token_string(t);
    line += ' ';
  }
  line += std::to_string(sample.target);
  return line;
}

Sample parse_sample(const Vocab& vocab, std::string_view line) {
  std::istringstream in{std::string(line)};
  std::vector<std::string> words;
  for (std::string w; in >> w;) words.push_back(w);
  if (words.size() < 3) throw ParseError("sample line is too short");
  Sample s;
  for (std::size_t i = 0; i + 1 < words.size(); ++i) s.tokens.push_back(vocab.id_of(words[i]));
  if (s.tokens.front() != vocab.bos() || s.tokens.back() != vocab.eoi()) {
    throw ParseError("sample must read '[BOS] ... [EOI] target'");
  }
  const long long target = parse_int(words.back());
  if (target < 0 || target >= vocab.symbol_count()) throw ParseError("target out of range");
  s.target = static_cast<int>(target);
  s.input_count = static_cast<int>(std::count_if(s.tokens.begin(), s.tokens.end(),
                                                 [&](int t) { return vocab.is_symbol(t); }));
  return s;
}

void write_dataset(std::ostream& os, const Vocab& vocab, std::span<const Sample> samples) {
  for (const auto& s : samples) os << format_sample(vocab, s) << '\n';
}

std::vector<Sample> read_dataset(std::istream& is, const Vocab& vocab) {
  std::vector<Sample> out;
  for (std::string line; std::getline(is, line);) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_sample(vocab, line));
  }
  return out;
}

}  // namespace bilinear
