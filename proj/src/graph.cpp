#include "dagtf/graph.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>

namespace dagtf::graph {

namespace {

constexpr std::int64_t kMaxMaterialize = std::int64_t{1} << 20;

std::int64_t ipow(std::int64_t base, int exp) {
  std::int64_t r = 1;
  for (int i = 0; i < exp; ++i) {
    if (r > (std::int64_t{1} << 40)) return std::int64_t{1} << 41;  // clamp, only used for size checks
    r *= base;
  }
  return r;
}

std::int64_t table_index(std::span<const int> args, int alphabet_size) {
  std::int64_t idx = 0;
  for (int a : args) idx = idx * alphabet_size + a;
  return idx;
}

}  // namespace

std::string gate_name(GateKind kind) {
  switch (kind) {
    case GateKind::And: return "and";
    case GateKind::Or: return "or";
    case GateKind::Majority: return "maj";
    default: return "";
  }
}

NodeFunc NodeFunc::table(std::string name, int arity, int alphabet_size, std::vector<int> entries) {
  if (arity < 1) throw ValidationError("function '" + name + "': arity must be >= 1");
  if (alphabet_size < 1) throw ValidationError("function '" + name + "': empty alphabet");
  if (ipow(alphabet_size, arity) > kMaxMaterialize)
    throw ValidationError("function '" + name + "': table too large");
  if (static_cast<std::int64_t>(entries.size()) != ipow(alphabet_size, arity))
    throw ValidationError("function '" + name + "': table has " + std::to_string(entries.size()) +
                          " entries, expected " + std::to_string(ipow(alphabet_size, arity)));
  for (int v : entries)
    if (v < 0 || v >= alphabet_size) throw ValidationError("function '" + name + "': entry outside alphabet");
  NodeFunc f;
  f.name_ = std::move(name);
  f.arity_ = arity;
  f.alphabet_size_ = alphabet_size;
  f.entries_ = std::move(entries);
  return f;
}

NodeFunc NodeFunc::from_callable(std::string name, int arity, int alphabet_size,
                                 const std::function<int(std::span<const int>)>& fn) {
  const std::int64_t rows = ipow(alphabet_size, arity);
  if (rows > kMaxMaterialize) throw ValidationError("function '" + name + "': table too large");
  std::vector<int> entries(static_cast<std::size_t>(rows));
  std::vector<int> args(arity, 0);
  for (std::int64_t r = 0; r < rows; ++r) {
    std::int64_t rem = r;
    for (int k = arity - 1; k >= 0; --k) {
      args[k] = static_cast<int>(rem % alphabet_size);
      rem /= alphabet_size;
    }
    entries[static_cast<std::size_t>(r)] = fn(args);
  }
  return table(std::move(name), arity, alphabet_size, std::move(entries));
}

NodeFunc NodeFunc::gate(GateKind kind, int arity) {
  if (kind == GateKind::None) throw std::invalid_argument("gate: kind required");
  if (arity < 1) throw ValidationError("gate: arity must be >= 1");
  NodeFunc f;
  f.name_ = gate_name(kind);
  f.arity_ = arity;
  f.alphabet_size_ = 2;
  f.gate_ = kind;
  return f;
}

int NodeFunc::apply(std::span<const int> args) const {
  if (static_cast<int>(args.size()) != arity_)
    throw std::invalid_argument("function '" + name_ + "': wrong argument count");
  for (int a : args)
    if (a < 0 || a >= alphabet_size_) throw std::invalid_argument("function '" + name_ + "': argument outside alphabet");
  if (gate_ == GateKind::None) return entries_[static_cast<std::size_t>(table_index(args, alphabet_size_))];
  const int ones = static_cast<int>(std::count(args.begin(), args.end(), 1));
  switch (gate_) {
    case GateKind::And: return ones == arity_ ? 1 : 0;
    case GateKind::Or: return ones > 0 ? 1 : 0;
    case GateKind::Majority: return 2 * ones > arity_ ? 1 : 0;
    default: return 0;
  }
}

std::int64_t NodeFunc::table_size() const { return ipow(alphabet_size_, arity_); }

std::vector<int> NodeFunc::materialize() const {
  if (gate_ == GateKind::None) return entries_;
  if (table_size() > kMaxMaterialize) throw ValidationError("gate '" + name_ + "': arity too large to tabulate");
  return from_callable(name_, arity_, alphabet_size_, [this](std::span<const int> a) { return apply(a); }).entries();
}

std::string CompGraph::vertex_name(int vertex) const {
  return is_input(vertex) ? inputs.at(vertex) : node_at(vertex).name;
}

int CompGraph::find_vertex(const std::string& name) const {
  for (int i = 0; i < input_count(); ++i)
    if (inputs[i] == name) return i;
  for (int k = 0; k < node_count(); ++k)
    if (nodes[k].name == name) return input_count() + k;
  return -1;
}

int CompGraph::symbol_index(const std::string& sym) const {
  for (std::size_t i = 0; i < alphabet.size(); ++i)
    if (alphabet[i] == sym) return static_cast<int>(i);
  return -1;
}

void CompGraph::validate() const {
  if (alphabet.empty()) throw ValidationError("graph: empty alphabet");
  std::set<std::string> syms(alphabet.begin(), alphabet.end());
  if (syms.size() != alphabet.size()) throw ValidationError("graph: duplicate alphabet symbol");
  if (inputs.empty()) throw ValidationError("graph: no inputs");
  std::set<std::string> names;
  for (const auto& in : inputs)
    if (!names.insert(in).second) throw ValidationError("graph: duplicate name '" + in + "'");
  for (const auto& f : funcs)
    if (f.alphabet_size() != static_cast<int>(alphabet.size()))
      throw ValidationError("graph: function '" + f.name() + "' defined over a different alphabet size");
  for (int k = 0; k < node_count(); ++k) {
    const Node& nd = nodes[k];
    const int id = input_count() + k;
    if (!names.insert(nd.name).second) throw ValidationError("graph: duplicate name '" + nd.name + "'");
    if (nd.func < 0 || nd.func >= static_cast<int>(funcs.size()))
      throw ValidationError("graph: node '" + nd.name + "' has unknown function");
    if (static_cast<int>(nd.preds.size()) != funcs[nd.func].arity())
      throw ValidationError("graph: node '" + nd.name + "' arity mismatch");
    for (int p : nd.preds)
      if (p < 0 || p >= id) throw ValidationError("graph: node '" + nd.name + "' reads a later or unknown vertex");
  }
  if (outputs.empty()) throw ValidationError("graph: no outputs");
  if (outputs.size() > inputs.size())
    throw ValidationError("graph: " + std::to_string(outputs.size()) + " outputs exceed input count " +
                          std::to_string(inputs.size()));
  for (int o : outputs)
    if (o < 0 || o >= vertex_count()) throw ValidationError("graph: output refers to unknown vertex");
}

GraphBuilder::GraphBuilder(std::vector<std::string> alphabet) : alphabet_(std::move(alphabet)) {}

int GraphBuilder::add_func(NodeFunc f) {
  for (std::size_t i = 0; i < funcs_.size(); ++i) {
    if (funcs_[i].name() == f.name() && funcs_[i].arity() == f.arity()) {
      if (!(funcs_[i] == f)) throw ValidationError("function '" + f.name() + "' redefined differently");
      return static_cast<int>(i);
    }
  }
  if (f.alphabet_size() != static_cast<int>(alphabet_.size()))
    throw ValidationError("function '" + f.name() + "' alphabet size differs from graph alphabet");
  funcs_.push_back(std::move(f));
  return static_cast<int>(funcs_.size()) - 1;
}

int GraphBuilder::add_input(const std::string& name) {
  if (by_name_.count(name)) throw ValidationError("duplicate name '" + name + "'");
  items_.push_back({name, true, -1, {}});
  const int h = static_cast<int>(items_.size()) - 1;
  by_name_[name] = h;
  return h;
}

int GraphBuilder::add_node(const std::string& name, int func, std::vector<int> preds) {
  if (by_name_.count(name)) throw ValidationError("duplicate name '" + name + "'");
  if (func < 0 || func >= static_cast<int>(funcs_.size())) throw ValidationError("node '" + name + "': unknown function");
  if (static_cast<int>(preds.size()) != funcs_[func].arity())
    throw ValidationError("node '" + name + "': function '" + funcs_[func].name() + "' takes " +
                          std::to_string(funcs_[func].arity()) + " arguments, got " + std::to_string(preds.size()));
  for (int p : preds)
    if (p < 0 || p >= static_cast<int>(items_.size())) throw ValidationError("node '" + name + "': unknown predecessor");
  items_.push_back({name, false, func, std::move(preds)});
  const int h = static_cast<int>(items_.size()) - 1;
  by_name_[name] = h;
  return h;
}

int GraphBuilder::add_node_named(const std::string& name, int func, const std::vector<std::string>& preds) {
  std::vector<int> hs;
  for (const auto& p : preds) hs.push_back(handle_of(p));
  return add_node(name, func, std::move(hs));
}

void GraphBuilder::add_output(int handle) {
  if (handle < 0 || handle >= static_cast<int>(items_.size())) throw ValidationError("output: unknown vertex");
  outputs_.push_back(handle);
}

void GraphBuilder::add_output(const std::string& name) { add_output(handle_of(name)); }

int GraphBuilder::handle_of(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw ValidationError("unknown name '" + name + "'");
  return it->second;
}

CompGraph GraphBuilder::build() const {
  CompGraph g;
  g.alphabet = alphabet_;
  // Canonical function order: first use, unused ones dropped.
  std::vector<int> remap(funcs_.size(), -1);
  for (const auto& it : items_) {
    if (it.is_input || remap[it.func] >= 0) continue;
    remap[it.func] = static_cast<int>(g.funcs.size());
    g.funcs.push_back(funcs_[it.func]);
  }
  std::vector<int> vid(items_.size(), -1);
  int next = 0;
  for (std::size_t h = 0; h < items_.size(); ++h)
    if (items_[h].is_input) {
      vid[h] = next++;
      g.inputs.push_back(items_[h].name);
    }
  for (std::size_t h = 0; h < items_.size(); ++h)
    if (!items_[h].is_input) vid[h] = next++;
  for (const auto& it : items_) {
    if (it.is_input) continue;
    Node nd{it.name, remap[it.func], {}};
    for (int p : it.preds) nd.preds.push_back(vid[p]);
    g.nodes.push_back(std::move(nd));
  }
  for (int o : outputs_) g.outputs.push_back(vid[o]);
  g.validate();
  return g;
}

std::vector<int> evaluate_all(const CompGraph& g, std::span<const int> x) {
  if (static_cast<int>(x.size()) != g.input_count())
    throw ValidationError("evaluate: expected " + std::to_string(g.input_count()) + " inputs, got " +
                          std::to_string(x.size()));
  const int sigma = static_cast<int>(g.alphabet.size());
  std::vector<int> val(g.vertex_count());
  for (int i = 0; i < g.input_count(); ++i) {
    if (x[i] < 0 || x[i] >= sigma) throw ValidationError("evaluate: input symbol outside alphabet");
    val[i] = x[i];
  }
  std::vector<int> args;
  for (int k = 0; k < g.node_count(); ++k) {
    const Node& nd = g.nodes[k];
    args.clear();
    for (int p : nd.preds) args.push_back(val[p]);
    val[g.input_count() + k] = g.funcs[nd.func].apply(args);
  }
  return val;
}

std::vector<int> evaluate(const CompGraph& g, std::span<const int> x) {
  const auto val = evaluate_all(g, x);
  std::vector<int> out;
  for (int o : g.outputs) out.push_back(val[o]);
  return out;
}

std::vector<std::string> evaluate_symbols(const CompGraph& g, const std::vector<std::string>& x) {
  std::vector<int> idx;
  for (const auto& s : x) {
    const int i = g.symbol_index(s);
    if (i < 0) throw ValidationError("evaluate: symbol '" + s + "' not in alphabet");
    idx.push_back(i);
  }
  std::vector<std::string> out;
  for (int v : evaluate(g, idx)) out.push_back(g.alphabet[v]);
  return out;
}

std::vector<int> vertex_depths(const CompGraph& g) {
  std::vector<int> d(g.vertex_count(), 0);
  for (int k = 0; k < g.node_count(); ++k) {
    int m = 0;
    for (int p : g.nodes[k].preds) m = std::max(m, d[p]);
    d[g.input_count() + k] = m + 1;
  }
  return d;
}

Metrics metrics(const CompGraph& g) {
  Metrics m;
  m.size = g.size();
  const auto d = vertex_depths(g);
  for (int o : g.outputs) m.depth = std::max(m.depth, std::max(1, d[o]));
  std::vector<bool> used(g.funcs.size(), false);
  for (const auto& nd : g.nodes) used[nd.func] = true;
  for (std::size_t f = 0; f < g.funcs.size(); ++f) {
    if (!used[f]) continue;
    const int a = g.funcs[f].arity();
    m.c_f[g.funcs[f].name() + "/" + std::to_string(a)] = a;
    m.c_max = std::max(m.c_max, a);
    m.c_sum += a;
  }
  return m;
}

// ---------------------------------------------------------------- DSL

namespace {

const std::set<std::string>& builtin_names() {
  static const std::set<std::string> names{"and", "or", "maj", "not", "xor", "id"};
  return names;
}

NodeFunc builtin_func(const std::string& name, int arity, int alphabet_size) {
  const bool boolean = alphabet_size == 2;
  if (name == "id") {
    if (arity != 1) throw ValidationError("id takes exactly one argument");
    return NodeFunc::from_callable("id", 1, alphabet_size, [](std::span<const int> a) { return a[0]; });
  }
  if (!boolean) throw ValidationError("builtin '" + name + "' needs the alphabet {0,1}");
  if (name == "and") return NodeFunc::gate(GateKind::And, arity);
  if (name == "or") return NodeFunc::gate(GateKind::Or, arity);
  if (name == "maj") return NodeFunc::gate(GateKind::Majority, arity);
  if (name == "not") {
    if (arity != 1) throw ValidationError("not takes exactly one argument");
    return NodeFunc::table("not", 1, 2, {1, 0});
  }
  if (name == "xor")
    return NodeFunc::from_callable("xor", arity, 2, [](std::span<const int> a) {
      int p = 0;
      for (int v : a) p ^= v;
      return p;
    });
  throw ValidationError("unknown function '" + name + "'");
}

bool is_builtin_instance(const NodeFunc& f, int alphabet_size) {
  if (!builtin_names().count(f.name())) return false;
  try {
    return builtin_func(f.name(), f.arity(), alphabet_size) == f;
  } catch (const ValidationError&) {
    return false;
  }
}

struct Token {
  std::string text;
  int column;
};

std::vector<Token> split_line(const std::string& line) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < line.size()) {
    if (line[i] == '#') break;
    if (std::isspace(static_cast<unsigned char>(line[i]))) {
      ++i;
      continue;
    }
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i])) && line[i] != '#') ++i;
    out.push_back({line.substr(start, i - start), static_cast<int>(start) + 1});
  }
  return out;
}

}  // namespace

CompGraph parse_graph(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  std::optional<GraphBuilder> b;
  std::map<std::string, NodeFunc> custom;
  std::vector<std::string> alphabet;

  auto need_builder = [&](const Token& at) -> GraphBuilder& {
    if (!b) throw ParseError("'alphabet' must come first", lineno, at.column);
    return *b;
  };

  while (std::getline(in, line)) {
    ++lineno;
    const auto toks = split_line(line);
    if (toks.empty()) continue;
    const std::string& kw = toks[0].text;
    try {
      if (kw == "alphabet") {
        if (b) throw ParseError("duplicate 'alphabet'", lineno, toks[0].column);
        if (toks.size() < 2) throw ParseError("alphabet needs at least one symbol", lineno, toks[0].column);
        for (std::size_t i = 1; i < toks.size(); ++i) alphabet.push_back(toks[i].text);
        if (std::set<std::string>(alphabet.begin(), alphabet.end()).size() != alphabet.size())
          throw ParseError("duplicate alphabet symbol", lineno, toks[0].column);
        b.emplace(alphabet);
      } else if (kw == "func") {
        auto& gb = need_builder(toks[0]);
        if (toks.size() < 3) throw ParseError("func needs a name and an arity", lineno, toks[0].column);
        const std::string& name = toks[1].text;
        if (builtin_names().count(name)) throw ParseError("func may not redefine builtin '" + name + "'", lineno, toks[1].column);
        if (custom.count(name)) throw ParseError("func '" + name + "' defined twice", lineno, toks[1].column);
        int arity = 0;
        try {
          arity = std::stoi(toks[2].text);
        } catch (const std::logic_error&) {
          throw ParseError("arity must be an integer", lineno, toks[2].column);
        }
        std::vector<int> entries;
        for (std::size_t i = 3; i < toks.size(); ++i) {
          int idx = -1;
          for (std::size_t s = 0; s < alphabet.size(); ++s)
            if (alphabet[s] == toks[i].text) idx = static_cast<int>(s);
          if (idx < 0) throw ParseError("table entry '" + toks[i].text + "' not in alphabet", lineno, toks[i].column);
          entries.push_back(idx);
        }
        custom.emplace(name, NodeFunc::table(name, arity, gb.alphabet_size(), std::move(entries)));
      } else if (kw == "input") {
        auto& gb = need_builder(toks[0]);
        if (toks.size() != 2) throw ParseError("input takes one name", lineno, toks[0].column);
        gb.add_input(toks[1].text);
      } else if (kw == "node") {
        auto& gb = need_builder(toks[0]);
        if (toks.size() < 4) throw ParseError("node needs a name, a function and predecessors", lineno, toks[0].column);
        std::vector<int> preds;
        for (std::size_t i = 3; i < toks.size(); ++i) {
          try {
            preds.push_back(gb.handle_of(toks[i].text));
          } catch (const ValidationError&) {
            throw ParseError("predecessor '" + toks[i].text + "' is not defined before this line", lineno, toks[i].column);
          }
        }
        const std::string& fname = toks[2].text;
        NodeFunc f;
        if (auto it = custom.find(fname); it != custom.end())
          f = it->second;
        else if (builtin_names().count(fname))
          f = builtin_func(fname, static_cast<int>(preds.size()), gb.alphabet_size());
        else
          throw ParseError("unknown function '" + fname + "'", lineno, toks[2].column);
        const int fid = gb.add_func(f);
        gb.add_node(toks[1].text, fid, preds);
      } else if (kw == "output") {
        auto& gb = need_builder(toks[0]);
        if (toks.size() != 2) throw ParseError("output takes one name", lineno, toks[0].column);
        try {
          gb.add_output(toks[1].text);
        } catch (const ValidationError&) {
          throw ParseError("output '" + toks[1].text + "' is not defined", lineno, toks[1].column);
        }
      } else {
        throw ParseError("unknown directive '" + kw + "'", lineno, toks[0].column);
      }
    } catch (const ParseError&) {
      throw;
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), lineno, toks[0].column);
    }
  }
  if (!b) throw ParseError("missing 'alphabet'", lineno, 1);
  try {
    return b->build();
  } catch (const ParseError&) {
    throw;
  } catch (const ValidationError& e) {
    throw ParseError(e.what(), lineno, 1);
  }
}

std::string print_graph(const CompGraph& g) {
  std::ostringstream out;
  out << "alphabet";
  for (const auto& s : g.alphabet) out << ' ' << s;
  out << '\n';
  const int sigma = static_cast<int>(g.alphabet.size());
  for (const auto& f : g.funcs) {
    if (is_builtin_instance(f, sigma)) continue;
    if (f.is_gate()) throw ValidationError("print_graph: gate '" + f.name() + "' has no textual form");
    out << "func " << f.name() << ' ' << f.arity();
    for (int v : f.entries()) out << ' ' << g.alphabet[v];
    out << '\n';
  }
  for (const auto& in : g.inputs) out << "input " << in << '\n';
  for (const auto& nd : g.nodes) {
    out << "node " << nd.name << ' ' << g.funcs[nd.func].name();
    for (int p : nd.preds) out << ' ' << g.vertex_name(p);
    out << '\n';
  }
  for (int o : g.outputs) out << "output " << g.vertex_name(o) << '\n';
  return out.str();
}

CompGraph load_graph(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open graph file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_graph(ss.str());
}

void save_graph(const CompGraph& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write graph file '" + path + "'");
  out << print_graph(g);
}

std::vector<NodeFunc> gate_funcs(int arity) {
  if (arity < 1) throw ValidationError("gate_funcs: arity must be >= 1");
  return {NodeFunc::gate(GateKind::And, arity), NodeFunc::gate(GateKind::Or, arity),
          NodeFunc::table("not", 1, 2, {1, 0}), NodeFunc::gate(GateKind::Majority, arity)};
}

}  // namespace dagtf::graph
