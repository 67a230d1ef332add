#pragma once
// Computation graphs over a finite alphabet.
//
// Vertices are numbered inputs first, then function nodes in declaration
// order; a node may only read earlier vertices, so the numbering is a
// topological order. Outputs are references to vertices.

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dagtf/errors.hpp"

namespace dagtf::graph {

enum class GateKind { None, And, Or, Majority };

// A function Sigma^arity -> Sigma. Either an explicit table indexed
// lexicographically (first argument most significant) or a symbolic
// Boolean gate whose table is only materialised on request.
class NodeFunc {
 public:
  NodeFunc() = default;

  static NodeFunc table(std::string name, int arity, int alphabet_size, std::vector<int> entries);
  static NodeFunc from_callable(std::string name, int arity, int alphabet_size,
                                const std::function<int(std::span<const int>)>& fn);
  static NodeFunc gate(GateKind kind, int arity);

  const std::string& name() const { return name_; }
  int arity() const { return arity_; }
  int alphabet_size() const { return alphabet_size_; }
  bool is_gate() const { return gate_ != GateKind::None; }
  GateKind gate_kind() const { return gate_; }

  int apply(std::span<const int> args) const;
  // Number of table rows, |Sigma|^arity.
  std::int64_t table_size() const;
  // Materialised table; gates are expanded (refused above 2^20 rows).
  std::vector<int> materialize() const;
  const std::vector<int>& entries() const { return entries_; }

  friend bool operator==(const NodeFunc&, const NodeFunc&) = default;

 private:
  std::string name_;
  int arity_ = 0;
  int alphabet_size_ = 0;
  GateKind gate_ = GateKind::None;
  std::vector<int> entries_;
};

std::string gate_name(GateKind kind);

struct Node {
  std::string name;
  int func = -1;            // index into CompGraph::funcs
  std::vector<int> preds;   // vertex ids, all smaller than this node's id

  friend bool operator==(const Node&, const Node&) = default;
};

struct Metrics {
  std::int64_t size = 0;   // inputs + function nodes + outputs
  int depth = 0;
  int c_max = 0;
  std::int64_t c_sum = 0;
  std::map<std::string, int> c_f;  // per function name: its fan-in
};

class CompGraph {
 public:
  std::vector<std::string> alphabet;
  std::vector<std::string> inputs;   // vertex ids 0..n-1
  std::vector<NodeFunc> funcs;
  std::vector<Node> nodes;           // vertex ids n..n+|nodes|-1
  std::vector<int> outputs;          // vertex ids

  int input_count() const { return static_cast<int>(inputs.size()); }
  int node_count() const { return static_cast<int>(nodes.size()); }
  int vertex_count() const { return input_count() + node_count(); }
  std::int64_t size() const { return vertex_count() + static_cast<std::int64_t>(outputs.size()); }

  const Node& node_at(int vertex) const { return nodes.at(vertex - input_count()); }
  bool is_input(int vertex) const { return vertex < input_count(); }
  std::string vertex_name(int vertex) const;
  int find_vertex(const std::string& name) const;  // -1 when absent
  int symbol_index(const std::string& sym) const;  // -1 when absent

  // Throws ValidationError on any broken invariant.
  void validate() const;

  friend bool operator==(const CompGraph&, const CompGraph&) = default;
};

// Incremental construction with name checks; inputs may be declared in any
// order relative to nodes and are renumbered to the front on build().
class GraphBuilder {
 public:
  explicit GraphBuilder(std::vector<std::string> alphabet);

  int add_func(NodeFunc f);  // returns function index, reusing an equal one by name
  int add_input(const std::string& name);
  int add_node(const std::string& name, int func, std::vector<int> preds);
  int add_node_named(const std::string& name, int func, const std::vector<std::string>& preds);
  void add_output(int handle);
  void add_output(const std::string& name);
  int handle_of(const std::string& name) const;
  int alphabet_size() const { return static_cast<int>(alphabet_.size()); }

  CompGraph build() const;

 private:
  struct Pending {
    std::string name;
    bool is_input;
    int func;
    std::vector<int> preds;  // handles
  };
  std::vector<std::string> alphabet_;
  std::vector<NodeFunc> funcs_;
  std::vector<Pending> items_;
  std::map<std::string, int> by_name_;
  std::vector<int> outputs_;
};

// Oracle evaluation in topological order.
std::vector<int> evaluate(const CompGraph& g, std::span<const int> x);
std::vector<int> evaluate_all(const CompGraph& g, std::span<const int> x);  // every vertex
std::vector<std::string> evaluate_symbols(const CompGraph& g, const std::vector<std::string>& x);

// Function-node layers below each vertex (inputs 0).
std::vector<int> vertex_depths(const CompGraph& g);
Metrics metrics(const CompGraph& g);

// DSL.
CompGraph parse_graph(const std::string& text);
std::string print_graph(const CompGraph& g);
CompGraph load_graph(const std::string& path);
void save_graph(const CompGraph& g, const std::string& path);

// Builders.
CompGraph build_chain_fold(const NodeFunc& op, int n, const std::vector<std::string>& alphabet);
CompGraph build_balanced_prefix(const NodeFunc& op, int n, const std::vector<std::string>& alphabet);
// Undirected s-t reachability over edge bits e_u_v (u < v, lexicographic).
CompGraph build_reachability(int n, int s, int t);
std::vector<int> reachability_input(int n, const std::vector<std::pair<int, int>>& edges);
// Edit distance grid. Characters are mapped to symbols by first appearance
// over a then b; values live in {0..cap}.
struct EditGraph {
  CompGraph graph;
  std::vector<int> input;
};
EditGraph build_edit_grid(const std::string& a, const std::string& b, int cap);
// Arithmetic over Z_modulus with + - * /, division by zero defined as 0.
struct ExprGraph {
  CompGraph graph;
  std::vector<int> input;
};
ExprGraph build_expr_tree(const std::string& expr, int modulus = 3);
// Random DAG over a random alphabet with a small pool of random tables.
struct RandomDagSpec {
  int max_inputs = 16;
  int max_nodes = 48;
  int max_fan_in = 3;
  int max_alphabet = 4;
  int max_outputs = 4;
  bool with_gates = false;  // binary alphabet with AND/OR/MAJORITY nodes mixed in
};
CompGraph random_dag(std::mt19937_64& rng, const RandomDagSpec& spec = {});
std::vector<int> random_input(const CompGraph& g, std::mt19937_64& rng);

// AND, OR, NOT, MAJORITY at a given arity (NOT is always unary).
std::vector<NodeFunc> gate_funcs(int arity);

}  // namespace dagtf::graph
