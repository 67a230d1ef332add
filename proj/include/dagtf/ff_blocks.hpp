#pragma once
// Exact ReLU feed-forward pieces over one-hot blocks.
//
// A piece is a list of hidden units, each reading and writing absolute
// stream columns. Pieces are assembled into one FeedForward; the residual
// connection of the runner adds the written deltas to the stream.

#include <set>
#include <utility>
#include <vector>

#include "dagtf/graph.hpp"
#include "dagtf/machine.hpp"

namespace dagtf::ff {

using fxp::PrecisionSpec;
using fxp::Scaled;

struct Unit {
  std::vector<std::pair<int, Scaled>> in;
  Scaled bias = 0;
  std::vector<std::pair<int, Scaled>> out;
};

struct Piece {
  std::vector<Unit> units;
  std::set<int> reads() const;
  std::set<int> writes() const;
  void append(const Piece& other);
};

// Where a function block lives in the stream: the output one-hot, the
// argument one-hots (arity consecutive |Sigma| groups unless explicit bases
// are given) and the gate column.
struct Slots {
  int out = 0;
  int args = 0;
  int gate = 0;
  std::vector<int> arg_bases;

  int arg_base(int i, int width) const { return arg_bases.empty() ? args + i * width : arg_bases[i]; }
};

// Stage A writes one-hot f(args) into the (zero) output block; stage B
// multiplies the output block by the gate bit. Outputs are exact for
// one-hot arguments.
struct TwoStage {
  Piece compute;
  Piece gate;
};

TwoStage build_lookup_ff(const graph::NodeFunc& f, const Slots& slots, const PrecisionSpec& spec);
// Constant hidden width for any arity. Throws ValidationError when the
// count range does not fit the precision.
TwoStage build_gate_ff(graph::GateKind kind, int arity, const Slots& slots, const PrecisionSpec& spec);
// Dispatches on the function kind (gates need |Sigma| = 2).
TwoStage build_function_ff(const graph::NodeFunc& f, const Slots& slots, const PrecisionSpec& spec);
// out *= gate, for a |Sigma|-wide block.
Piece gate_block(int out, int width, int gate, const PrecisionSpec& spec);

// Block-diagonal assembly. Throws ValidationError when one piece writes a
// column that another piece reads or writes.
tfm::FeedForward build_concat_ff(const std::vector<Piece>& pieces, int embed_dim, const PrecisionSpec& spec);
tfm::FeedForward to_feedforward(const Piece& piece, int embed_dim, const PrecisionSpec& spec);
tfm::FeedForward empty_ff(int embed_dim);

}  // namespace dagtf::ff
