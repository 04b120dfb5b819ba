#pragma once

// Synthetic state-tracking tasks: generators, ground-truth oracles and the
// `[BOS] s1 ... sn [EOI] target` text format.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bilinear {

class Rng;

enum class TaskKind { ModAdd, ModArith, StateMachine, Parity };

std::string_view to_string(TaskKind kind);
TaskKind parse_task_kind(std::string_view text);

enum class ArithOp { Add, Sub, Mul };

/// Finite-state machine with Q = Sigma = {0..m-1}; table[q * m + sigma] = delta(q, sigma).
/// Every row is a permutation of {0..m-1}.
class Fsm {
 public:
  Fsm(int m, std::vector<int> table);

  int size() const { return m_; }
  int next(int state, int symbol) const { return table_[state * m_ + symbol]; }
  std::span<const int> row(int state) const { return {table_.data() + state * m_, std::size_t(m_)}; }
  const std::vector<int>& table() const { return table_; }

  /// Final state after feeding `symbols` from `start`.
  int run(int start, std::span<const int> symbols) const;

  bool operator==(const Fsm&) const = default;

 private:
  int m_;
  std::vector<int> table_;
};

/// Each row an independent uniform random permutation.
Fsm gen_fsm(int m, Rng& rng);

/// File layout: first line m, then m lines of m integers (row q lists delta(q, 0..m-1)).
Fsm read_fsm(std::istream& is);
Fsm read_fsm_file(const std::string& path);
void write_fsm(std::ostream& os, const Fsm& fsm);

struct TaskSpec {
  TaskKind kind = TaskKind::ModAdd;
  int m = 2;
  std::optional<Fsm> fsm;
  int max_len = 10;

  /// Throws DomainError when the invariants do not hold.
  void validate() const;

  static TaskSpec mod_add(int m, int max_len = 10);
  static TaskSpec mod_arith(int m, int max_len = 10);
  static TaskSpec state_machine(Fsm fsm, int max_len = 10);
  static TaskSpec parity(int max_len = 10);
};

/// Token ids: symbols 0..m-1 first, then the operators (ModArith only), then
/// BOS and EOI.
class Vocab {
 public:
  explicit Vocab(const TaskSpec& spec);
  Vocab(TaskKind kind, int m);

  int size() const { return size_; }
  int symbol_count() const { return m_; }
  int bos() const { return bos_; }
  int eoi() const { return eoi_; }
  bool has_ops() const { return has_ops_; }
  int op(ArithOp op) const;
  std::optional<ArithOp> as_op(int id) const;
  bool is_symbol(int id) const { return id >= 0 && id < m_; }

  std::string token_string(int id) const;
  int id_of(std::string_view token) const;

 private:
  int m_;
  bool has_ops_;
  int bos_;
  int eoi_;
  int size_;
};

struct Sample {
  std::vector<int> tokens;  // BOS, inputs (and operators), EOI
  int target = 0;
  int input_count = 0;

  bool operator==(const Sample&) const = default;
};

/// Ground truth for untokenized inputs. For ModArith, ops.size() must equal
/// inputs.size() - 1 and operators apply left to right without precedence.
/// For StateMachine the first input is the initial state.
int oracle(const TaskSpec& spec, std::span<const int> inputs, std::span<const ArithOp> ops = {});

/// Splits a framed token sequence back into symbols and operators.
void decode_inputs(const Vocab& vocab, std::span<const int> tokens, std::vector<int>& inputs,
                   std::vector<ArithOp>& ops);

Sample make_sample(const TaskSpec& spec, std::span<const int> inputs,
                   std::span<const ArithOp> ops = {});

/// n ~ U{2..spec.max_len}; symbols and operators uniform with replacement.
Sample gen_sample(const TaskSpec& spec, Rng& rng);
/// Same, with n ~ U{min_len..max_len}.
Sample gen_sample(const TaskSpec& spec, int min_len, int max_len, Rng& rng);

/// Deterministic fixed training set. Parity sets are redrawn until both
/// classes appear (when size >= 2).
std::vector<Sample> fixed_dataset(const TaskSpec& spec, int size, Rng& rng);

std::string format_sample(const Vocab& vocab, const Sample& sample);
Sample parse_sample(const Vocab& vocab, std::string_view line);

void write_dataset(std::ostream& os, const Vocab& vocab, std::span<const Sample> samples);
std::vector<Sample> read_dataset(std::istream& is, const Vocab& vocab);

}  // namespace bilinear
