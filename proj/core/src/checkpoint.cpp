#include "bilinear/checkpoint.hpp"

#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <type_traits>

#include "bilinear/error.hpp"
#include "bilinear/rng.hpp"
#include "bilinear/serialize.hpp"

namespace bilinear {

namespace {

constexpr const char* kMagic = "bilinear-checkpoint";
constexpr int kVersion = 1;

template <class P, class T>
using Like = std::conditional_t<std::is_const_v<P>, const T, T>;

template <class P>
using TensorRef = std::variant<Like<P, Vec64>*, Like<P, Mat64>*, Like<P, Tensor3>*>;

template <class P>
std::vector<std::pair<std::string, TensorRef<P>>> named_tensors(P& p) {
  std::vector<std::pair<std::string, TensorRef<P>>> out;
  std::visit(
      [&](auto& t) {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, FullBilinear>) {
          out.emplace_back("W", &t.w);
        } else if constexpr (std::is_same_v<T, Factored>) {
          out.emplace_back("Wh1", &t.wh1);
          out.emplace_back("Wh2", &t.wh2);
          out.emplace_back("Wx", &t.wx);
        } else if constexpr (std::is_same_v<T, BlockDiag>) {
          for (std::size_t b = 0; b < t.blocks.size(); ++b) {
            out.emplace_back("block" + std::to_string(b), &t.blocks[b]);
          }
        } else if constexpr (std::is_same_v<T, R2Rotation>) {
          out.emplace_back("angle_weights", &t.angle_weights);
        } else if constexpr (std::is_same_v<T, RealDiag>) {
          out.emplace_back("diag_weights", &t.diag_weights);
        } else {
          out.emplace_back("A", &t.recurrent);
        }
      },
      p.transition);
  if (p.input_weights) out.emplace_back("B", &*p.input_weights);
  if (p.bias) out.emplace_back("b", &*p.bias);
  out.emplace_back("h0", &p.h0);
  out.emplace_back("embed", &p.embed);
  out.emplace_back("readout", &p.readout);
  return out;
}

std::map<std::string, std::string> read_header(std::istream& is) {
  std::map<std::string, std::string> kv;
  for (std::string line; std::getline(is, line);) {
    if (line.empty()) continue;
    if (line == "tensors") return kv;
    std::istringstream ls(line);
    std::string key, value;
    ls >> key;
    std::getline(ls >> std::ws, value);
    kv[key] = value;
  }
  throw ParseError("checkpoint header is not terminated by 'tensors'");
}

const std::string& need(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw ParseError("checkpoint is missing '" + key + "'");
  return it->second;
}

std::size_t need_size(const std::map<std::string, std::string>& kv, const std::string& key) {
  const long long v = parse_int(need(kv, key));
  if (v < 0) throw ParseError("checkpoint field '" + key + "' must be non-negative");
  return static_cast<std::size_t>(v);
}

}  // namespace

ModelShape shape_of(const TransitionModel& model) {
  ModelShape s;
  s.variant = model.variant();
  s.hidden = model.hidden();
  s.input_dim = model.input_dim();
  s.vocab = model.vocab_size();
  s.classes = model.classes();
  s.additive = model.additive;
  if (const auto* f = std::get_if<Factored>(&model.params.transition)) s.rank = f->wh1.cols();
  if (const auto* b = std::get_if<BlockDiag>(&model.params.transition)) s.block_size = b->block_size();
  return s;
}

void save_checkpoint(std::ostream& os, const TransitionModel& model, const TaskSpec* task) {
  model.validate();
  const ModelShape s = shape_of(model);
  os << kMagic << ' ' << kVersion << '\n';
  os << "variant " << to_string(s.variant) << '\n';
  os << "hidden " << s.hidden << '\n';
  os << "input_dim " << s.input_dim << '\n';
  os << "vocab " << s.vocab << '\n';
  os << "classes " << s.classes << '\n';
  os << "rank " << s.rank << '\n';
  os << "block_size " << s.block_size << '\n';
  os << "additive " << model.additive.label() << '\n';
  os << "additive_init " << format_double(model.additive.init_half_width) << '\n';
  os << "first_input_sets_state " << int(model.first_input_sets_state) << '\n';
  const auto& f = model.frozen;
  os << "frozen " << int(f.transition) << ' ' << int(f.additive) << ' ' << int(f.initial_state) << ' '
     << int(f.embedding) << ' ' << int(f.readout) << '\n';
  if (task) {
    os << "task " << to_string(task->kind) << '\n';
    os << "task_m " << task->m << '\n';
    os << "task_max_len " << task->max_len << '\n';
    if (task->fsm) {
      os << "task_fsm";
      for (int v : task->fsm->table()) os << ' ' << v;
      os << '\n';
    }
  }
  os << "tensors\n";
  for (const auto& [name, ref] : named_tensors(model.params)) {
    os << "tensor " << name << '\n';
    std::visit([&](auto* t) { write_tensor(os, *t); }, ref);
  }
  os << "end\n";
}

Checkpoint load_checkpoint(std::istream& is) {
  std::string magic;
  int version = 0;
  if (!(is >> magic >> version) || magic != kMagic) throw ParseError("not a checkpoint file");
  if (version != kVersion) throw ParseError("unsupported checkpoint version " + std::to_string(version));
  const auto kv = read_header(is);

  ModelShape s;
  s.variant = parse_variant(need(kv, "variant"));
  s.hidden = need_size(kv, "hidden");
  s.input_dim = need_size(kv, "input_dim");
  s.vocab = need_size(kv, "vocab");
  s.classes = need_size(kv, "classes");
  s.rank = need_size(kv, "rank");
  s.block_size = need_size(kv, "block_size");
  s.additive = AdditiveConfig::parse(need(kv, "additive"), parse_double(need(kv, "additive_init")));
  if (s.variant == Variant::Elman) s.additive = AdditiveConfig{};

  Rng scratch(0);
  Checkpoint ck{make_model(s, scratch), std::nullopt};
  TransitionModel& model = ck.model;
  model.additive.init_half_width = s.additive.init_half_width;
  model.first_input_sets_state = parse_int(need(kv, "first_input_sets_state")) != 0;
  {
    std::istringstream fs(need(kv, "frozen"));
    int a = 0, b = 0, c = 0, d = 0, e = 0;
    if (!(fs >> a >> b >> c >> d >> e)) throw ParseError("malformed 'frozen' field");
    model.frozen = FreezeMask{a != 0, b != 0, c != 0, d != 0, e != 0};
  }

  for (const auto& [name, ref] : named_tensors(model.params)) {
    const std::string kw = read_word(is, "tensor keyword");
    const std::string got = read_word(is, "tensor name");
    if (kw != "tensor" || got != name) {
      throw ParseError("expected tensor '" + name + "', found '" + kw + " " + got + "'");
    }
    std::visit(
        [&](auto* t) {
          using T = std::remove_pointer_t<std::decay_t<decltype(t)>>;
          T loaded;
          if constexpr (std::is_same_v<T, Vec64>) {
            loaded = read_vec(is);
          } else if constexpr (std::is_same_v<T, Mat64>) {
            loaded = read_mat(is);
          } else {
            loaded = read_tensor3(is);
          }
          if (loaded.values().size() != t->values().size()) {
            throw ParseError("tensor '" + name + "' has the wrong shape");
          }
          *t = std::move(loaded);
        },
        ref);
  }
  if (read_word(is, "end marker") != "end") throw ParseError("checkpoint is missing 'end'");
  model.validate();

  if (kv.count("task")) {
    TaskSpec task;
    task.kind = parse_task_kind(need(kv, "task"));
    task.m = static_cast<int>(parse_int(need(kv, "task_m")));
    task.max_len = static_cast<int>(parse_int(need(kv, "task_max_len")));
    if (auto it = kv.find("task_fsm"); it != kv.end()) {
      std::istringstream fs(it->second);
      std::vector<int> table;
      for (std::string w; fs >> w;) table.push_back(static_cast<int>(parse_int(w)));
      task.fsm = Fsm(task.m, std::move(table));
    }
    task.validate();
    ck.task = std::move(task);
  }
  return ck;
}

void save_checkpoint_file(const std::string& path, const TransitionModel& model, const TaskSpec* task) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write checkpoint '" + path + "'");
  save_checkpoint(out, model, task);
  if (!out) throw Error("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open checkpoint '" + path + "'");
  return load_checkpoint(in);
}

}  // namespace bilinear
