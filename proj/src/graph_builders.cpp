#include <algorithm>
#include <functional>
#include <map>
#include <stdexcept>

#include "dagtf/expr.hpp"
#include "dagtf/graph.hpp"

namespace dagtf::graph {

namespace {

int ceil_log2(int n) {
  int r = 0;
  while ((1 << r) < n) ++r;
  return r;
}

std::string edge_name(int u, int v) { return "e_" + std::to_string(u) + "_" + std::to_string(v); }

}  // namespace

CompGraph build_chain_fold(const NodeFunc& op, int n, const std::vector<std::string>& alphabet) {
  if (n < 1) throw ValidationError("chain fold: n must be >= 1");
  if (op.arity() != 2) throw ValidationError("chain fold: op must be binary");
  GraphBuilder b(alphabet);
  const int f = b.add_func(op);
  std::vector<int> x;
  for (int i = 1; i <= n; ++i) x.push_back(b.add_input("x" + std::to_string(i)));
  int acc = x[0];
  b.add_output(acc);
  for (int i = 1; i < n; ++i) {
    acc = b.add_node("p" + std::to_string(i + 1), f, {acc, x[i]});
    b.add_output(acc);
  }
  return b.build();
}

CompGraph build_balanced_prefix(const NodeFunc& op, int n, const std::vector<std::string>& alphabet) {
  if (n < 1) throw ValidationError("balanced prefix: n must be >= 1");
  if (op.arity() != 2) throw ValidationError("balanced prefix: op must be binary");
  GraphBuilder b(alphabet);
  const int f = b.add_func(op);
  std::vector<int> x;
  for (int i = 1; i <= n; ++i) x.push_back(b.add_input("x" + std::to_string(i)));
  // Divide and conquer: the left half's total is combined into every prefix
  // of the right half, giving ceil(log2 n) layers.
  int counter = 0;
  std::function<std::vector<int>(int, int)> scan = [&](int lo, int hi) -> std::vector<int> {
    if (hi - lo == 1) return {x[lo]};
    const int mid = lo + (hi - lo + 1) / 2;
    auto left = scan(lo, mid);
    auto right = scan(mid, hi);
    for (int& r : right) r = b.add_node("q" + std::to_string(++counter), f, {left.back(), r});
    left.insert(left.end(), right.begin(), right.end());
    return left;
  };
  for (int h : scan(0, n)) b.add_output(h);
  return b.build();
}

CompGraph build_reachability(int n, int s, int t) {
  if (n < 2) throw ValidationError("reachability: n must be >= 2");
  if (s < 0 || s >= n || t < 0 || t >= n || s == t) throw ValidationError("reachability: need distinct s, t in [0, n)");
  GraphBuilder b({"0", "1"});
  // r[i][j] for i < j holds the current handle.
  std::vector<std::vector<int>> r(n, std::vector<int>(n, -1));
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v) r[u][v] = b.add_input(edge_name(u, v));
  const auto at = [&](int i, int j) { return i < j ? r[i][j] : r[j][i]; };
  const int and2 = b.add_func(NodeFunc::gate(GateKind::And, 2));
  const int rounds = ceil_log2(n);
  for (int round = 1; round <= rounds; ++round) {
    const bool last = round == rounds;
    std::vector<std::vector<int>> next = r;
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        if (last && !(i == std::min(s, t) && j == std::max(s, t))) continue;
        std::vector<int> terms{at(i, j)};
        for (int k = 0; k < n; ++k) {
          if (k == i || k == j) continue;
          const std::string name = "a" + std::to_string(round) + "_" + std::to_string(i) + "_" + std::to_string(j) +
                                   "_" + std::to_string(k);
          terms.push_back(b.add_node(name, and2, {at(i, k), at(k, j)}));
        }
        const int orf = b.add_func(NodeFunc::gate(GateKind::Or, static_cast<int>(terms.size())));
        next[i][j] = b.add_node("r" + std::to_string(round) + "_" + std::to_string(i) + "_" + std::to_string(j), orf, terms);
      }
    }
    r = std::move(next);
  }
  b.add_output(at(s, t));
  return b.build();
}

std::vector<int> reachability_input(int n, const std::vector<std::pair<int, int>>& edges) {
  std::vector<int> bits(static_cast<std::size_t>(n) * (n - 1) / 2, 0);
  const auto index = [n](int u, int v) { return u * n - u * (u + 1) / 2 + (v - u - 1); };
  for (auto [u, v] : edges) {
    if (u == v || u < 0 || v < 0 || u >= n || v >= n) throw ValidationError("reachability: bad edge");
    bits[index(std::min(u, v), std::max(u, v))] = 1;
  }
  return bits;
}

EditGraph build_edit_grid(const std::string& a, const std::string& b, int cap) {
  const int la = static_cast<int>(a.size()), lb = static_cast<int>(b.size());
  if (la < 1 || lb < 1) throw ValidationError("edit grid: strings must be non-empty");
  if (la > cap || lb > cap) throw ValidationError("edit grid: string longer than value cap " + std::to_string(cap));
  std::map<char, int> code;
  for (char c : a + b)
    if (!code.count(c)) {
      const int next = static_cast<int>(code.size());
      code[c] = next;
    }
  const int sigma = std::max(cap + 1, static_cast<int>(code.size()));
  std::vector<std::string> alphabet;
  for (int v = 0; v < sigma; ++v) alphabet.push_back(std::to_string(v));
  GraphBuilder g(alphabet);
  const int top = sigma - 1;
  const int dstep = g.add_func(NodeFunc::from_callable("dstep", 3, sigma, [top](std::span<const int> x) {
    return std::min(top, x[0] + (x[1] != x[2] ? 1 : 0));
  }));
  const int cell = g.add_func(NodeFunc::from_callable("cell", 3, sigma, [top](std::span<const int> x) {
    return std::min({top, x[0] + 1, x[1] + 1, x[2]});
  }));
  EditGraph out;
  std::vector<int> ai, bi;
  for (int i = 0; i < la; ++i) {
    ai.push_back(g.add_input("a" + std::to_string(i + 1)));
    out.input.push_back(code[a[i]]);
  }
  for (int j = 0; j < lb; ++j) {
    bi.push_back(g.add_input("b" + std::to_string(j + 1)));
    out.input.push_back(code[b[j]]);
  }
  // Boundary row/column are constants of the first input.
  std::map<int, int> const_func;
  const auto constant = [&](int k) {
    if (!const_func.count(k))
      const_func[k] = g.add_func(NodeFunc::from_callable("const" + std::to_string(k), 1, sigma,
                                                         [k](std::span<const int>) { return k; }));
    return const_func[k];
  };
  std::vector<std::vector<int>> d(la + 1, std::vector<int>(lb + 1, -1));
  for (int j = 0; j <= lb; ++j) d[0][j] = g.add_node("d0_" + std::to_string(j), constant(j), {ai[0]});
  for (int i = 1; i <= la; ++i) d[i][0] = g.add_node("d" + std::to_string(i) + "_0", constant(i), {ai[0]});
  for (int i = 1; i <= la; ++i)
    for (int j = 1; j <= lb; ++j) {
      const std::string tag = std::to_string(i) + "_" + std::to_string(j);
      const int diag = g.add_node("m" + tag, dstep, {d[i - 1][j - 1], ai[i - 1], bi[j - 1]});
      d[i][j] = g.add_node("d" + tag, cell, {d[i - 1][j], d[i][j - 1], diag});
    }
  g.add_output(d[la][lb]);
  out.graph = g.build();
  return out;
}

ExprGraph build_expr_tree(const std::string& expr, int modulus) {
  if (modulus < 2) throw ValidationError("expression: modulus must be >= 2");
  const ExprTree e = parse_expr(expr);
  std::vector<std::string> alphabet;
  for (int v = 0; v < modulus; ++v) alphabet.push_back(std::to_string(v));
  GraphBuilder g(alphabet);
  ExprGraph out;
  const std::map<char, std::string> names{{'+', "add"}, {'-', "sub"}, {'*', "mul"}, {'/', "div"}};
  int literals = 0, ops = 0;
  std::function<int(int)> rec = [&](int id) -> int {
    const ExprNode& n = e.nodes[id];
    if (n.op == 0) {
      if (n.value >= modulus) throw ValidationError("expression: literal outside Z_" + std::to_string(modulus));
      out.input.push_back(n.value);
      return g.add_input("l" + std::to_string(++literals));
    }
    const int lhs = rec(n.lhs);
    const int rhs = rec(n.rhs);
    const char op = n.op;
    const int f = g.add_func(NodeFunc::from_callable(names.at(op), 2, modulus, [op, modulus](std::span<const int> x) {
      return apply_op(op, x[0], x[1], modulus);
    }));
    return g.add_node("o" + std::to_string(++ops), f, {lhs, rhs});
  };
  g.add_output(rec(e.root));
  out.graph = g.build();
  return out;
}

CompGraph random_dag(std::mt19937_64& rng, const RandomDagSpec& spec) {
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  const int k = spec.with_gates ? 2 : pick(2, std::max(2, spec.max_alphabet));
  std::vector<std::string> alphabet;
  for (int c = 0; c < k; ++c) alphabet.push_back(std::to_string(c));
  GraphBuilder b(alphabet);
  const int n = pick(1, spec.max_inputs);
  std::vector<int> handles;
  for (int i = 0; i < n; ++i) handles.push_back(b.add_input("x" + std::to_string(i)));
  std::vector<std::pair<int, int>> funcs;  // (index, arity)
  for (int f = 0, pool = pick(1, 4); f < pool; ++f) {
    const int a = pick(1, spec.max_fan_in);
    std::int64_t rows = 1;
    for (int i = 0; i < a; ++i) rows *= k;
    std::vector<int> table(static_cast<std::size_t>(rows));
    for (auto& e : table) e = pick(0, k - 1);
    funcs.emplace_back(b.add_func(NodeFunc::table("f" + std::to_string(f), a, k, table)), a);
  }
  if (spec.with_gates)
    for (GateKind kind : {GateKind::And, GateKind::Or, GateKind::Majority}) {
      const int a = pick(1, spec.max_fan_in);
      funcs.emplace_back(b.add_func(NodeFunc::gate(kind, a)), a);
    }
  for (int v = 0, m = pick(1, spec.max_nodes); v < m; ++v) {
    const auto [fi, a] = funcs[static_cast<std::size_t>(pick(0, static_cast<int>(funcs.size()) - 1))];
    std::vector<int> preds(a);
    for (auto& p : preds) p = handles[static_cast<std::size_t>(pick(0, static_cast<int>(handles.size()) - 1))];
    handles.push_back(b.add_node("v" + std::to_string(v), fi, preds));
  }
  const int outs = pick(1, std::min(n, spec.max_outputs));
  for (int o = 0; o < outs; ++o) {
    // Bias outputs toward late vertices so depth is exercised.
    const int lo = std::max(0, static_cast<int>(handles.size()) - 4);
    b.add_output(handles[static_cast<std::size_t>(pick(lo, static_cast<int>(handles.size()) - 1))]);
  }
  return b.build();
}

std::vector<int> random_input(const CompGraph& g, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> sym(0, static_cast<int>(g.alphabet.size()) - 1);
  std::vector<int> x(static_cast<std::size_t>(g.input_count()));
  for (auto& v : x) v = sym(rng);
  return x;
}

}  // namespace dagtf::graph
