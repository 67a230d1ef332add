#pragma once
// Task instances for the word problem, connectivity, modular arithmetic and
// edit distance, with their step-by-step reference traces.

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "dagtf/graph.hpp"

namespace dagtf::task {

// Finite group by multiplication table; elements are named by one-line
// permutation notation for symmetric groups.
struct Group {
  std::string name;
  std::vector<std::string> elements;
  std::vector<int> table;  // table[a * order + b] = a b
  int identity = 0;

  int order() const { return static_cast<int>(elements.size()); }
  int mul(int a, int b) const { return table[static_cast<std::size_t>(a) * elements.size() + b]; }
  int index_of(const std::string& name) const;  // -1 when absent
  graph::NodeFunc product() const;
};

// S_k, k in 2..6; elements in lexicographic order, (a b)(i) = a(b(i)).
Group symmetric_group(int k);
Group group_by_name(const std::string& name);  // "S3", "S5", ...

struct TaskInstance {
  std::string kind;  // word | connectivity | arith | edit
  std::map<std::string, std::string> params;
  std::vector<std::string> tokens;
  std::vector<std::string> target;
  std::vector<std::string> trace;
  std::uint64_t seed = 0;

  friend bool operator==(const TaskInstance&, const TaskInstance&) = default;
};

TaskInstance gen_word(const Group& group, int k, std::mt19937_64& rng);
// Erdos-Renyi G(n, 1.7/n); target "1" when s reaches t.
TaskInstance gen_connectivity(int n, std::mt19937_64& rng);
// size = operator count; modulus 3.
TaskInstance gen_arith(int size, std::mt19937_64& rng);
TaskInstance gen_edit(int len, std::mt19937_64& rng);
// Dispatch by kind with seed recorded in the instance.
TaskInstance generate(const std::string& kind, int size, std::uint64_t seed, const std::string& group = "S3");

// Parsed views of instance tokens.
struct ConnectivityView {
  int n = 0;
  std::vector<std::pair<int, int>> edges;
  int s = 0;
  int t = 0;
};
ConnectivityView connectivity_view(const TaskInstance& inst);
std::pair<std::string, std::string> edit_view(const TaskInstance& inst);
std::string arith_view(const TaskInstance& inst);

// Classical oracles.
std::vector<int> prefix_products(const Group& g, const std::vector<int>& xs);
bool bfs_reachable(const ConnectivityView& v);
// BFS scratchpad trace starting "N,s": expanding u appends "u,v" for each
// neighbour in ascending order, then "u,N"; stops once t is reached.
std::vector<std::string> bfs_trace(const ConnectivityView& v);
int edit_distance(const std::string& a, const std::string& b);
// DP cells (i, j), 1 <= i <= |a|, 1 <= j <= |b|, row-major.
std::vector<int> edit_table(const std::string& a, const std::string& b);

// Word problems come in two graph shapes.
enum class WordShape { Chain, Balanced };

struct TaskGraph {
  graph::CompGraph graph;
  std::vector<int> input;   // symbol indices
  std::vector<int> expect;  // oracle output symbols
};
TaskGraph to_graph(const TaskInstance& inst, WordShape shape = WordShape::Balanced);

// Line-oriented records separated by blank lines.
void write_instance(std::ostream& out, const TaskInstance& inst);
std::vector<TaskInstance> read_instances(std::istream& in);

struct CorpusManifest {
  std::string task;
  std::vector<int> sizes;
  int count = 0;
  std::uint64_t seed = 0;
  std::string group;
  std::int64_t instances = 0;
  std::int64_t positives = -1;  // connectivity only
  std::uint64_t config_hash = 0;
  std::uint64_t content_hash = 0;
};
void write_manifest(std::ostream& out, const CorpusManifest& m);

// Instances for every size, `count` each, seeds derived from the root seed.
std::vector<TaskInstance> generate_corpus(const std::string& task, const std::vector<int>& sizes, int count,
                                          std::uint64_t seed, const std::string& group, CorpusManifest* manifest);

}  // namespace dagtf::task
