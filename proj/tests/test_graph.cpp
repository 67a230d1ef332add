#include <algorithm>
#include <functional>
#include <queue>
#include <random>

#include "doctest.h"
#include "dagtf/expr.hpp"
#include "dagtf/graph.hpp"

using namespace dagtf;
using namespace dagtf::graph;

namespace {

const std::vector<std::string> kBits{"0", "1"};

// Classical Levenshtein table.
int levenshtein(const std::string& a, const std::string& b) {
  std::vector<std::vector<int>> d(a.size() + 1, std::vector<int>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = static_cast<int>(i);
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j)
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] != b[j - 1])});
  return d[a.size()][b.size()];
}

bool bfs_reach(int n, const std::vector<std::pair<int, int>>& edges, int s, int t) {
  std::vector<std::vector<int>> adj(n);
  for (auto [u, v] : edges) {
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  std::vector<bool> seen(n, false);
  std::queue<int> q;
  q.push(s);
  seen[s] = true;
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    for (int v : adj[u])
      if (!seen[v]) {
        seen[v] = true;
        q.push(v);
      }
  }
  return seen[t];
}

// Longest input-to-vertex path by memoised DFS over predecessor lists.
int dfs_depth(const CompGraph& g, int v, std::vector<int>& memo) {
  if (g.is_input(v)) return 0;
  if (memo[v] >= 0) return memo[v];
  int best = 0;
  for (int p : g.node_at(v).preds) best = std::max(best, dfs_depth(g, p, memo));
  return memo[v] = best + 1;
}

NodeFunc s3_product() {
  // Permutations of {0,1,2} in lexicographic order; (a*b)(x) = a(b(x)).
  std::vector<std::array<int, 3>> perms;
  std::array<int, 3> p{0, 1, 2};
  do perms.push_back(p);
  while (std::next_permutation(p.begin(), p.end()));
  return NodeFunc::from_callable("s3", 2, 6, [perms](std::span<const int> x) {
    std::array<int, 3> c{};
    for (int k = 0; k < 3; ++k) c[k] = perms[x[0]][perms[x[1]][k]];
    return static_cast<int>(std::find(perms.begin(), perms.end(), c) - perms.begin());
  });
}

std::vector<std::string> six() { return {"0", "1", "2", "3", "4", "5"}; }

}  // namespace

TEST_CASE("parse identity and AND graphs") {
  const CompGraph id = parse_graph("alphabet 0 1\ninput a\noutput a\n");
  CHECK(id.size() == 2);
  CHECK(metrics(id).depth == 1);
  CHECK(evaluate(id, std::vector<int>{1}) == std::vector<int>{1});
  CHECK(evaluate(id, std::vector<int>{0}) == std::vector<int>{0});

  const CompGraph g = parse_graph("# two-input and\nalphabet 0 1\ninput a\ninput b\nnode c and a b\noutput c\n");
  CHECK(g.node_count() == 1);
  CHECK(evaluate(g, std::vector<int>{1, 1}) == std::vector<int>{1});
  CHECK(evaluate(g, std::vector<int>{1, 0}) == std::vector<int>{0});
}

TEST_CASE("parse errors carry line numbers") {
  try {
    parse_graph("alphabet 0 1\ninput a\nnode c and a b\ninput b\noutput c\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
    CHECK(e.column() == 14);
  }
  CHECK_THROWS_AS(parse_graph("alphabet 0 1\ninput a\nnode c frob a\noutput c\n"), ParseError);
  CHECK_THROWS_AS(parse_graph("alphabet 0 1\ninput a\nnode c id a\noutput c\noutput a\n"), ParseError);
  CHECK_THROWS_AS(parse_graph("input a\n"), ParseError);
  CHECK_THROWS_AS(parse_graph("alphabet 0 1\nfunc f 2 0 1 1\ninput a\n"), dagtf::ValidationError);
}

TEST_CASE("custom tables and print round trip") {
  const std::string text =
      "alphabet x y z\n"
      "func rot 1 y z x\n"
      "func pick 2 x x x y y y z z z\n"
      "input a\ninput b\n"
      "node c rot a\nnode d pick c b\nnode e id d\n"
      "output e\noutput c\n";
  const CompGraph g = parse_graph(text);
  CHECK(evaluate_symbols(g, {"z", "x"}) == std::vector<std::string>{"x", "x"});
  CHECK(evaluate_symbols(g, {"x", "z"}) == std::vector<std::string>{"y", "y"});
  CHECK(parse_graph(print_graph(g)) == g);

  for (int n : {1, 5, 8}) {
    const auto chain = build_chain_fold(s3_product(), n, six());
    CHECK(parse_graph(print_graph(chain)) == chain);
  }
  const auto reach = build_reachability(5, 0, 3);
  CHECK(parse_graph(print_graph(reach)) == reach);
  const auto edit = build_edit_grid("abc", "abd", 3);
  CHECK(parse_graph(print_graph(edit.graph)) == edit.graph);
}

TEST_CASE("metrics") {
  // Balanced AND tree over 8 inputs.
  GraphBuilder b(kBits);
  const int and2 = b.add_func(NodeFunc::gate(GateKind::And, 2));
  std::vector<int> layer;
  for (int i = 0; i < 8; ++i) layer.push_back(b.add_input("x" + std::to_string(i)));
  int k = 0;
  while (layer.size() > 1) {
    std::vector<int> next;
    for (std::size_t i = 0; i < layer.size(); i += 2) next.push_back(b.add_node("n" + std::to_string(k++), and2, {layer[i], layer[i + 1]}));
    layer = next;
  }
  b.add_output(layer[0]);
  const auto tree = b.build();
  const auto m = metrics(tree);
  CHECK(m.depth == 3);
  CHECK(m.size == 8 + 7 + 1);
  CHECK(m.c_max == 2);
  CHECK(m.c_sum == 2);

  const auto chain = build_chain_fold(s3_product(), 8, six());
  CHECK(metrics(chain).depth == 7);
  const auto bal = build_balanced_prefix(s3_product(), 8, six());
  CHECK(metrics(bal).depth <= 6);
  CHECK(metrics(bal).depth == 3);
}

TEST_CASE("depth agrees with an independent DFS") {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 200; ++t) {
    const int n = 1 + static_cast<int>(rng() % 6);
    GraphBuilder b({"a", "b", "c"});
    for (int i = 0; i < n; ++i) b.add_input("i" + std::to_string(i));
    const int nodes = static_cast<int>(rng() % 12);
    for (int k = 0; k < nodes; ++k) {
      const int arity = 1 + static_cast<int>(rng() % 3);
      std::vector<int> tab(static_cast<std::size_t>(std::pow(3, arity)));
      for (auto& v : tab) v = static_cast<int>(rng() % 3);
      const int f = b.add_func(NodeFunc::table("f" + std::to_string(k), arity, 3, tab));
      std::vector<int> preds;
      for (int a = 0; a < arity; ++a) preds.push_back(static_cast<int>(rng() % (n + k)));
      b.add_node("v" + std::to_string(k), f, preds);
    }
    const int outs = 1 + static_cast<int>(rng() % n);
    for (int o = 0; o < outs; ++o) b.add_output(static_cast<int>(rng() % (n + nodes)));
    const auto g = b.build();
    std::vector<int> memo(g.vertex_count(), -1);
    int expect = 0;
    for (int o : g.outputs) expect = std::max(expect, std::max(1, dfs_depth(g, o, memo)));
    CHECK(metrics(g).depth == expect);
    CHECK(parse_graph(print_graph(g)) == g);
  }
}

TEST_CASE("prefix builders agree with a fold") {
  const auto op = s3_product();
  std::mt19937_64 rng(5);
  for (int n : {1, 2, 3, 7, 8, 13, 16}) {
    const auto chain = build_chain_fold(op, n, six());
    const auto bal = build_balanced_prefix(op, n, six());
    CHECK(metrics(chain).depth == std::max(1, n - 1));
    int lg = 0;
    while ((1 << lg) < n) ++lg;
    CHECK(metrics(bal).depth <= std::max(1, 2 * lg));
    for (int t = 0; t < 100; ++t) {
      std::vector<int> x(n);
      for (auto& v : x) v = static_cast<int>(rng() % 6);
      std::vector<int> fold{x[0]};
      for (int i = 1; i < n; ++i) fold.push_back(op.apply(std::vector<int>{fold.back(), x[i]}));
      REQUIRE(evaluate(chain, x) == fold);
      REQUIRE(evaluate(bal, x) == fold);
    }
  }
  CHECK_THROWS(build_chain_fold(op, 0, six()));
}

TEST_CASE("reachability graphs agree with BFS") {
  CHECK(evaluate(build_reachability(2, 0, 1), reachability_input(2, {{0, 1}})) == std::vector<int>{1});
  CHECK(evaluate(build_reachability(2, 0, 1), reachability_input(2, {})) == std::vector<int>{0});
  std::mt19937_64 rng(17);
  for (int n : {3, 5, 8}) {
    int lg = 0;
    while ((1 << lg) < n) ++lg;
    for (int t = 0; t < 500; ++t) {
      const int s = static_cast<int>(rng() % n);
      int d = static_cast<int>(rng() % (n - 1));
      if (d >= s) ++d;
      std::vector<std::pair<int, int>> edges;
      std::bernoulli_distribution coin(1.7 / n);
      for (int u = 0; u < n; ++u)
        for (int v = u + 1; v < n; ++v)
          if (coin(rng)) edges.emplace_back(u, v);
      const auto g = build_reachability(n, s, d);
      CHECK(metrics(g).depth <= 2 * lg);
      REQUIRE(evaluate(g, reachability_input(n, edges))[0] == (bfs_reach(n, edges, s, d) ? 1 : 0));
    }
  }
}

TEST_CASE("edit grid matches Levenshtein") {
  const auto kitten = build_edit_grid("kitten", "sitting", 7);
  CHECK(evaluate(kitten.graph, kitten.input)[0] == 3);
  const auto same = build_edit_grid("abca", "abca", 4);
  CHECK(evaluate(same.graph, same.input)[0] == 0);
  CHECK_THROWS(build_edit_grid("abcde", "a", 4));
  std::mt19937_64 rng(23);
  for (int t = 0; t < 500; ++t) {
    const int la = 1 + static_cast<int>(rng() % 7), lb = 1 + static_cast<int>(rng() % 7);
    std::string a, b;
    for (int i = 0; i < la; ++i) a += static_cast<char>('a' + rng() % 3);
    for (int i = 0; i < lb; ++i) b += static_cast<char>('a' + rng() % 3);
    const auto eg = build_edit_grid(a, b, std::max(la, lb));
    REQUIRE(evaluate(eg.graph, eg.input)[0] == levenshtein(a, b));
    CHECK(metrics(eg.graph).depth <= la + lb + 1);
  }
}

TEST_CASE("expression trees") {
  const auto e = build_expr_tree("2*(0+1)/2");
  CHECK(evaluate(e.graph, e.input)[0] == 1);
  CHECK(reduction_trace(parse_expr("2*(0+1)/2"), 3) ==
        std::vector<std::string>{"2*(0+1)/2", "2*1/2", "2/2", "1"});
  CHECK(print_expr(parse_expr("1-(2-0)")) == "1-(2-0)");
  CHECK(print_expr(parse_expr("(1-2)-0")) == "1-2-0");
  CHECK(print_expr(parse_expr("((1))")) == "1");
  CHECK_THROWS_AS(parse_expr("1+"), ParseError);
  CHECK_THROWS_AS(parse_expr("1+2)"), ParseError);

  // Random expressions: graph evaluation matches the recursive evaluator.
  std::mt19937_64 rng(29);
  const std::string ops = "+-*/";
  for (int t = 0; t < 500; ++t) {
    std::function<std::string(int)> gen = [&](int depth) -> std::string {
      if (depth == 0 || rng() % 3 == 0) return std::string(1, static_cast<char>('0' + rng() % 3));
      return "(" + gen(depth - 1) + ops[rng() % 4] + gen(depth - 1) + ")";
    };
    const std::string text = gen(4);
    const auto tree = parse_expr(text);
    const auto eg = build_expr_tree(text);
    REQUIRE(evaluate(eg.graph, eg.input)[0] == eval_expr(tree, 3));
    REQUIRE(parse_expr(print_expr(tree)).operator_count() == tree.operator_count());
    REQUIRE(eval_expr(parse_expr(print_expr(tree)), 3) == eval_expr(tree, 3));
    const auto trace = reduction_trace(tree, 3);
    REQUIRE(trace.back() == std::to_string(eval_expr(tree, 3)));
  }
}

TEST_CASE("gate functions") {
  const auto g5 = gate_funcs(5);
  CHECK(g5[2].apply(std::vector<int>{0}) == 1);
  CHECK(g5[3].apply(std::vector<int>{1, 0, 1, 0, 1}) == 1);
  CHECK(g5[3].apply(std::vector<int>{1, 0, 1, 0, 0}) == 0);
  CHECK(gate_funcs(8)[1].apply(std::vector<int>(8, 0)) == 0);
  CHECK(gate_funcs(8)[0].apply(std::vector<int>(8, 1)) == 1);
  CHECK_THROWS(gate_funcs(0));
  const auto tab = gate_funcs(3)[0].materialize();
  CHECK(tab == std::vector<int>{0, 0, 0, 0, 0, 0, 0, 1});
}
