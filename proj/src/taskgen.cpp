#include "dagtf/taskgen.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <deque>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "dagtf/expr.hpp"
#include "dagtf/rng.hpp"

namespace dagtf::task {

using graph::CompGraph;
using graph::NodeFunc;

namespace {

int uniform(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ' ';
    s += v[i];
  }
  return s;
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

int to_int(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(what);
    return v;
  } catch (const std::logic_error&) {
    throw ValidationError(what + ": expected an integer, got '" + s + "'");
  }
}

std::pair<int, int> parse_pair(const std::string& tok) {
  const auto comma = tok.find(',');
  if (comma == std::string::npos) throw ValidationError("connectivity: malformed pair '" + tok + "'");
  return {to_int(tok.substr(0, comma), "connectivity"), to_int(tok.substr(comma + 1), "connectivity")};
}

const std::string& param(const TaskInstance& inst, const std::string& key) {
  const auto it = inst.params.find(key);
  if (it == inst.params.end()) throw ValidationError(inst.kind + " instance lacks parameter '" + key + "'");
  return it->second;
}

}  // namespace

int Group::index_of(const std::string& n) const {
  const auto it = std::find(elements.begin(), elements.end(), n);
  return it == elements.end() ? -1 : static_cast<int>(it - elements.begin());
}

NodeFunc Group::product() const {
  return NodeFunc::table("mul_" + name, 2, order(), table);
}

Group symmetric_group(int k) {
  if (k < 2 || k > 6) throw ValidationError("symmetric group: degree must be in 2..6");
  std::vector<std::vector<int>> perms;
  std::vector<int> p(k);
  std::iota(p.begin(), p.end(), 0);
  do perms.push_back(p);
  while (std::next_permutation(p.begin(), p.end()));
  Group g;
  g.name = "S" + std::to_string(k);
  for (const auto& q : perms) {
    std::string s;
    for (int v : q) s += static_cast<char>('0' + v);
    g.elements.push_back(s);
  }
  const std::size_t m = perms.size();
  g.table.resize(m * m);
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = 0; b < m; ++b) {
      std::vector<int> c(k);
      for (int i = 0; i < k; ++i) c[i] = perms[a][perms[b][i]];
      g.table[a * m + b] = static_cast<int>(std::find(perms.begin(), perms.end(), c) - perms.begin());
    }
  g.identity = 0;
  return g;
}

Group group_by_name(const std::string& name) {
  if (name.size() == 2 && name[0] == 'S' && name[1] >= '2' && name[1] <= '6') return symmetric_group(name[1] - '0');
  throw ValidationError("unknown group '" + name + "' (expected S2..S6)");
}

std::vector<int> prefix_products(const Group& g, const std::vector<int>& xs) {
  std::vector<int> out;
  int acc = g.identity;
  for (int x : xs) {
    acc = g.mul(acc, x);
    out.push_back(acc);
  }
  return out;
}

TaskInstance gen_word(const Group& group, int k, std::mt19937_64& rng) {
  if (k < 1) throw ValidationError("word: length must be positive");
  TaskInstance inst;
  inst.kind = "word";
  inst.params = {{"group", group.name}, {"n", std::to_string(k)}};
  std::vector<int> xs;
  for (int i = 0; i < k; ++i) xs.push_back(uniform(rng, 0, group.order() - 1));
  for (int x : xs) inst.tokens.push_back(group.elements[x]);
  for (int p : prefix_products(group, xs)) inst.target.push_back(group.elements[p]);
  inst.trace = inst.target;
  return inst;
}

bool bfs_reachable(const ConnectivityView& v) {
  std::vector<std::vector<int>> adj(v.n);
  for (auto [a, b] : v.edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  std::vector<bool> seen(v.n, false);
  std::deque<int> q{v.s};
  seen[v.s] = true;
  while (!q.empty()) {
    const int u = q.front();
    q.pop_front();
    if (u == v.t) return true;
    for (int w : adj[u])
      if (!seen[w]) {
        seen[w] = true;
        q.push_back(w);
      }
  }
  return false;
}

std::vector<std::string> bfs_trace(const ConnectivityView& v) {
  std::vector<std::set<int>> adj(v.n);
  for (auto [a, b] : v.edges) {
    adj[a].insert(b);
    adj[b].insert(a);
  }
  // Scratchpad of (from, to) items; "N" is -1.
  std::vector<std::pair<int, int>> pad{{-1, v.s}};
  std::vector<bool> expanded(v.n, false);
  auto name = [](int x) { return x < 0 ? std::string("N") : std::to_string(x); };
  bool found = v.s == v.t;
  for (std::size_t i = 0; i < pad.size() && !found; ++i) {
    const int u = pad[i].second;
    if (u < 0 || expanded[u]) continue;
    expanded[u] = true;
    for (int w : adj[u]) {
      pad.emplace_back(u, w);
      if (w == v.t) {
        found = true;
        break;
      }
    }
    if (!found) pad.emplace_back(u, -1);
  }
  std::vector<std::string> out;
  for (auto [a, b] : pad) out.push_back(name(a) + "," + name(b));
  return out;
}

TaskInstance gen_connectivity(int n, std::mt19937_64& rng) {
  if (n < 2) throw ValidationError("connectivity: need at least 2 vertices");
  TaskInstance inst;
  inst.kind = "connectivity";
  inst.params = {{"n", std::to_string(n)}};
  ConnectivityView v;
  v.n = n;
  std::bernoulli_distribution edge(std::min(1.0, 1.7 / n));
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b)
      if (edge(rng)) v.edges.emplace_back(a, b);
  v.s = uniform(rng, 0, n - 1);
  v.t = uniform(rng, 0, n - 2);
  if (v.t >= v.s) ++v.t;
  for (int i = 0; i < n; ++i) inst.tokens.push_back("v" + std::to_string(i));
  for (auto [a, b] : v.edges) inst.tokens.push_back(std::to_string(a) + "," + std::to_string(b));
  inst.tokens.push_back(std::to_string(v.s) + "," + std::to_string(v.t));
  inst.target = {bfs_reachable(v) ? "1" : "0"};
  inst.trace = bfs_trace(v);
  return inst;
}

ConnectivityView connectivity_view(const TaskInstance& inst) {
  if (inst.kind != "connectivity") throw ValidationError("not a connectivity instance");
  ConnectivityView v;
  std::size_t i = 0;
  while (i < inst.tokens.size() && !inst.tokens[i].empty() && inst.tokens[i][0] == 'v') {
    ++v.n;
    ++i;
  }
  if (i >= inst.tokens.size()) throw ValidationError("connectivity: missing query token");
  for (; i + 1 < inst.tokens.size(); ++i) v.edges.push_back(parse_pair(inst.tokens[i]));
  std::tie(v.s, v.t) = parse_pair(inst.tokens.back());
  auto ok = [&](int x) { return x >= 0 && x < v.n; };
  for (auto [a, b] : v.edges)
    if (!ok(a) || !ok(b) || a >= b) throw ValidationError("connectivity: bad edge");
  if (!ok(v.s) || !ok(v.t)) throw ValidationError("connectivity: query out of range");
  return v;
}

TaskInstance gen_arith(int size, std::mt19937_64& rng) {
  if (size < 0) throw ValidationError("arith: operator count must be non-negative");
  constexpr int r = 3;
  graph::ExprTree e;
  e.nodes.push_back({0, uniform(rng, 0, r - 1), -1, -1});
  e.root = 0;
  std::vector<int> leaves{0};
  const std::string ops = "+-*/";
  for (int step = 0; step < size; ++step) {
    const std::size_t li = static_cast<std::size_t>(uniform(rng, 0, static_cast<int>(leaves.size()) - 1));
    const int id = leaves[li];
    const int v = e.nodes[id].value;
    const char op = ops[static_cast<std::size_t>(uniform(rng, 0, 3))];
    int a = 0, b = 0;
    switch (op) {
      case '+':
        a = uniform(rng, 0, r - 1);
        b = ((v - a) % r + r) % r;
        break;
      case '-':
        a = uniform(rng, 0, r - 1);
        b = ((a - v) % r + r) % r;
        break;
      case '*':
        if (v == 0) {
          a = uniform(rng, 0, r - 1);
          b = a == 0 ? uniform(rng, 0, r - 1) : 0;
          if (uniform(rng, 0, 1)) std::swap(a, b);
        } else {
          a = uniform(rng, 1, r - 1);
          b = (v * a) % r;  // a^-1 = a for r = 3
        }
        break;
      default:
        // Only invertible divisors.
        b = uniform(rng, 1, r - 1);
        a = (v * b) % r;
        break;
    }
    const int la = static_cast<int>(e.nodes.size());
    e.nodes.push_back({0, a, -1, -1});
    e.nodes.push_back({0, b, -1, -1});
    e.nodes[id] = {op, 0, la, la + 1};
    leaves[li] = la;
    leaves.push_back(la + 1);
  }
  const std::string text = graph::print_expr(e);
  TaskInstance inst;
  inst.kind = "arith";
  inst.params = {{"n", std::to_string(size)}, {"modulus", std::to_string(r)}};
  for (char c : text) inst.tokens.emplace_back(1, c);
  inst.target = {std::to_string(graph::eval_expr(e, r))};
  inst.trace = graph::reduction_trace(graph::parse_expr(text), r);
  return inst;
}

std::string arith_view(const TaskInstance& inst) {
  if (inst.kind != "arith") throw ValidationError("not an arithmetic instance");
  std::string s;
  for (const auto& t : inst.tokens) s += t;
  return s;
}

int edit_distance(const std::string& a, const std::string& b) {
  std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] != b[j - 1] ? 1 : 0)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::vector<int> edit_table(const std::string& a, const std::string& b) {
  const std::size_t la = a.size(), lb = b.size();
  std::vector<std::vector<int>> d(la + 1, std::vector<int>(lb + 1));
  for (std::size_t i = 0; i <= la; ++i) d[i][0] = static_cast<int>(i);
  for (std::size_t j = 0; j <= lb; ++j) d[0][j] = static_cast<int>(j);
  std::vector<int> out;
  for (std::size_t i = 1; i <= la; ++i)
    for (std::size_t j = 1; j <= lb; ++j) {
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] != b[j - 1] ? 1 : 0)});
      out.push_back(d[i][j]);
    }
  return out;
}

TaskInstance gen_edit(int len, std::mt19937_64& rng) {
  if (len < 1) throw ValidationError("edit: length must be positive");
  const int letters = uniform(rng, 2, 8);
  auto letter = [&] { return static_cast<char>('a' + uniform(rng, 0, letters - 1)); };
  std::string a, b;
  for (int i = 0; i < len; ++i) a += letter();
  constexpr int kAttempts = 1000;
  int attempt = 0;
  for (; attempt < kAttempts; ++attempt) {
    b.clear();
    if (std::bernoulli_distribution(0.4)(rng)) {
      const int lb = std::max(1, len + uniform(rng, -3, 3));
      for (int i = 0; i < lb; ++i) b += letter();
    } else {
      b = a;
      for (int e = 0, edits = uniform(rng, 1, 3); e < edits; ++e) {
        const int op = uniform(rng, 0, 2);
        if (op == 0 && b.size() > 1) {
          b.erase(static_cast<std::size_t>(uniform(rng, 0, static_cast<int>(b.size()) - 1)), 1);
        } else if (op == 1) {
          b[static_cast<std::size_t>(uniform(rng, 0, static_cast<int>(b.size()) - 1))] = letter();
        } else {
          b.insert(static_cast<std::size_t>(uniform(rng, 0, static_cast<int>(b.size()))), 1, letter());
        }
      }
    }
    const int gap = std::abs(static_cast<int>(a.size()) - static_cast<int>(b.size()));
    if (b != a && gap <= 3) break;
  }
  if (attempt == kAttempts)
    throw std::runtime_error("edit: no acceptable pair after " + std::to_string(kAttempts) + " attempts");
  TaskInstance inst;
  inst.kind = "edit";
  inst.params = {{"n", std::to_string(len)}, {"letters", std::to_string(letters)}};
  for (char c : a) inst.tokens.emplace_back(1, c);
  inst.tokens.emplace_back("|");
  for (char c : b) inst.tokens.emplace_back(1, c);
  inst.target = {std::to_string(edit_distance(a, b))};
  for (int v : edit_table(a, b)) inst.trace.push_back(std::to_string(v));
  return inst;
}

std::pair<std::string, std::string> edit_view(const TaskInstance& inst) {
  if (inst.kind != "edit") throw ValidationError("not an edit-distance instance");
  std::string a, b;
  bool second = false;
  for (const auto& t : inst.tokens) {
    if (t == "|") {
      if (second) throw ValidationError("edit: two separators");
      second = true;
    } else if (t.size() != 1) {
      throw ValidationError("edit: tokens must be single characters");
    } else {
      (second ? b : a) += t;
    }
  }
  if (!second) throw ValidationError("edit: missing separator");
  return {a, b};
}

TaskInstance generate(const std::string& kind, int size, std::uint64_t seed, const std::string& group) {
  std::mt19937_64 rng(seed);
  TaskInstance inst;
  try {
    if (kind == "word")
      inst = gen_word(group_by_name(group), size, rng);
    else if (kind == "connectivity")
      inst = gen_connectivity(size, rng);
    else if (kind == "arith")
      inst = gen_arith(size, rng);
    else if (kind == "edit")
      inst = gen_edit(size, rng);
    else
      throw ValidationError("unknown task '" + kind + "' (expected word, connectivity, arith or edit)");
  } catch (const std::runtime_error& e) {
    if (dynamic_cast<const ValidationError*>(&e)) throw;
    throw std::runtime_error(std::string(e.what()) + " (task " + kind + ", size " + std::to_string(size) +
                             ", seed " + std::to_string(seed) + ")");
  }
  inst.seed = seed;
  return inst;
}

TaskGraph to_graph(const TaskInstance& inst, WordShape shape) {
  TaskGraph tg;
  if (inst.kind == "word") {
    const Group grp = group_by_name(param(inst, "group"));
    const int k = static_cast<int>(inst.tokens.size());
    tg.graph = shape == WordShape::Chain ? graph::build_chain_fold(grp.product(), k, grp.elements)
                                         : graph::build_balanced_prefix(grp.product(), k, grp.elements);
    for (const auto& t : inst.tokens) {
      const int i = grp.index_of(t);
      if (i < 0) throw ValidationError("word: unknown element '" + t + "'");
      tg.input.push_back(i);
    }
    tg.expect = prefix_products(grp, tg.input);
  } else if (inst.kind == "connectivity") {
    const auto v = connectivity_view(inst);
    tg.graph = graph::build_reachability(v.n, v.s, v.t);
    tg.input = graph::reachability_input(v.n, v.edges);
    tg.expect = {bfs_reachable(v) ? 1 : 0};
  } else if (inst.kind == "arith") {
    const std::string text = arith_view(inst);
    auto eg = graph::build_expr_tree(text, 3);
    tg.graph = std::move(eg.graph);
    tg.input = std::move(eg.input);
    tg.expect = {graph::eval_expr(graph::parse_expr(text), 3)};
  } else if (inst.kind == "edit") {
    const auto [a, b] = edit_view(inst);
    const int cap = static_cast<int>(std::max(a.size(), b.size()));
    auto eg = graph::build_edit_grid(a, b, cap);
    tg.graph = std::move(eg.graph);
    tg.input = std::move(eg.input);
    tg.expect = {edit_distance(a, b)};
  } else {
    throw ValidationError("to_graph: unsupported task '" + inst.kind + "'");
  }
  return tg;
}

void write_instance(std::ostream& out, const TaskInstance& inst) {
  out << "kind: " << inst.kind << '\n';
  out << "params:";
  for (const auto& [k, v] : inst.params) out << ' ' << k << '=' << v;
  out << '\n';
  out << "tokens: " << join(inst.tokens) << '\n';
  out << "target: " << join(inst.target) << '\n';
  out << "trace: " << join(inst.trace) << '\n';
  out << "seed: " << inst.seed << "\n\n";
}

std::vector<TaskInstance> read_instances(std::istream& in) {
  std::vector<TaskInstance> out;
  TaskInstance cur;
  std::set<std::string> seen;
  int line_no = 0;
  auto flush = [&] {
    if (seen.empty()) return;
    for (const char* key : {"kind", "tokens", "target", "seed"})
      if (!seen.count(key)) throw ParseError(std::string("instance lacks field '") + key + "'", line_no, 1);
    out.push_back(std::move(cur));
    cur = {};
    seen.clear();
  };
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    const auto colon = line.find(':');
    if (colon == std::string::npos) throw ParseError("expected 'field: value'", line_no, 1);
    const std::string key = line.substr(0, colon);
    const std::string val = line.substr(colon + 1);
    if (!seen.insert(key).second) throw ParseError("duplicate field '" + key + "'", line_no, 1);
    if (key == "kind") {
      const auto t = split_ws(val);
      if (t.size() != 1) throw ParseError("kind takes one word", line_no, static_cast<int>(colon) + 2);
      cur.kind = t[0];
    } else if (key == "params") {
      for (const auto& kv : split_ws(val)) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ParseError("params entries look like key=value", line_no, 1);
        cur.params[kv.substr(0, eq)] = kv.substr(eq + 1);
      }
    } else if (key == "tokens") {
      cur.tokens = split_ws(val);
    } else if (key == "target") {
      cur.target = split_ws(val);
    } else if (key == "trace") {
      cur.trace = split_ws(val);
    } else if (key == "seed") {
      const auto t = split_ws(val);
      try {
        if (t.size() != 1) throw std::invalid_argument("seed");
        std::size_t used = 0;
        cur.seed = std::stoull(t[0], &used);
        if (used != t[0].size()) throw std::invalid_argument("seed");
      } catch (const std::logic_error&) {
        throw ParseError("seed must be an unsigned integer", line_no, static_cast<int>(colon) + 2);
      }
    } else {
      throw ParseError("unknown field '" + key + "'", line_no, 1);
    }
  }
  ++line_no;
  flush();
  return out;
}

void write_manifest(std::ostream& out, const CorpusManifest& m) {
  out << "dagtf-corpus 1\n";
  out << "task " << m.task << '\n';
  out << "sizes";
  for (int s : m.sizes) out << ' ' << s;
  out << '\n';
  out << "count " << m.count << '\n';
  out << "seed " << m.seed << '\n';
  if (m.task == "word") out << "group " << m.group << '\n';
  out << "instances " << m.instances << '\n';
  if (m.positives >= 0) {
    out << "positives " << m.positives << '\n';
    std::ostringstream frac;
    frac.precision(4);
    frac << std::fixed << (m.instances ? static_cast<double>(m.positives) / static_cast<double>(m.instances) : 0.0);
    out << "label_fraction " << frac.str() << '\n';
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(m.config_hash));
  out << "config_hash " << buf << '\n';
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(m.content_hash));
  out << "content_hash " << buf << '\n';
}

std::vector<TaskInstance> generate_corpus(const std::string& task, const std::vector<int>& sizes, int count,
                                          std::uint64_t seed, const std::string& group, CorpusManifest* manifest) {
  if (count < 0) throw ValidationError("corpus: count must be non-negative");
  if (sizes.empty()) throw ValidationError("corpus: no sizes given");
  std::vector<TaskInstance> out;
  std::ostringstream content;
  std::int64_t positives = 0;
  for (int n : sizes)
    for (int i = 0; i < count; ++i) {
      const std::string label = "gen/" + task + "/" + std::to_string(n) + "/" + std::to_string(i);
      out.push_back(generate(task, n, derive_seed(seed, label), group));
      write_instance(content, out.back());
      positives += out.back().target == std::vector<std::string>{"1"};
    }
  if (manifest) {
    CorpusManifest& m = *manifest;
    m.task = task;
    m.sizes = sizes;
    m.count = count;
    m.seed = seed;
    m.group = group;
    m.instances = static_cast<std::int64_t>(out.size());
    m.positives = task == "connectivity" ? positives : -1;
    std::string cfg = "task=" + task + ";count=" + std::to_string(count) + ";seed=" + std::to_string(seed) +
                      ";group=" + (task == "word" ? group : std::string("-")) + ";sizes=";
    for (int s : sizes) cfg += std::to_string(s) + ",";
    m.config_hash = fnv1a64(cfg);
    m.content_hash = fnv1a64(content.str());
  }
  return out;
}

}  // namespace dagtf::task
