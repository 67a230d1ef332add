#pragma once
// Graph -> looped transformer evaluating one graph layer per loop.
//
// Every position carries a copy of all node slots. One loop:
//   1. mask-FF: keep only the position's own input slot and clear input flags
//   2. uniform attention (value scale n) rebuilds every input slot and sets
//      input flags; an FF snaps the rounded average back to {0, 1}
//   3. compute-FF: every node reads its predecessor slots; value = f(args)
//      when all arguments are present, flag = AND of predecessor flags
//   4. gate-FF: value *= flag
//   5. read-FF: position n-L+r copies output r's slot into the scratch block
// Vocabulary is "?" followed by the alphabet; "?" decodes an unready output.

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "dagtf/ff_blocks.hpp"
#include "dagtf/graph.hpp"
#include "dagtf/machine.hpp"

namespace dagtf::loop {

inline constexpr const char* kUndecided = "?";

struct LoopConfig {
  std::optional<fxp::PrecisionSpec> precision;  // validated when given
};

struct LoopLayout {
  fxp::PrecisionSpec precision;
  int n = 0;         // inputs = positions
  int slots = 0;     // inputs + function nodes
  int alphabet = 0;
  int depth = 0;     // loops needed
  int embed_dim = 0;
  int pos_offset = 0;
  int select_offset = 0;
  int slot_offset = 0;
  int scratch_offset = 0;
  std::vector<int> outputs;  // vertex per output

  int value_col(int vertex, int symbol) const { return slot_offset + vertex * (alphabet + 1) + symbol; }
  int flag_col(int vertex) const { return slot_offset + vertex * (alphabet + 1) + alphabet; }
  void write_report(std::ostream& out) const;
};

struct Compiled {
  tfm::TfWeights weights;
  LoopLayout layout;
};

Compiled compile_loop(const graph::CompGraph& g, const LoopConfig& config = {});

struct Broadcast {
  tfm::FeedForward mask;
  tfm::Layer gather;  // uniform attention + snapping FF
};
Broadcast build_broadcast(int n, const LoopLayout& layout);
// Compute and gate stages.
std::pair<tfm::FeedForward, tfm::FeedForward> build_parallel_ff(const graph::CompGraph& g, const LoopLayout& layout);
struct Reader {
  tfm::FeedForward read;
  tfm::SparseW out_proj;
};
Reader build_output_reader(const LoopLayout& layout, const std::vector<int>& outputs);

// Alphabet symbol index -> token index and back (-1 for "?").
std::vector<int> encode_input(const std::vector<int>& x);
std::vector<int> decode_output(const std::vector<int>& tokens);
// Flag value of every slot at one position, in units of one.
std::vector<double> slot_flags(const LoopLayout& layout, const tfm::FxMatrix& state, int position);

void save_layout(const LoopLayout& layout, const std::string& path);

}  // namespace dagtf::loop
