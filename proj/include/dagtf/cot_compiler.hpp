#pragma once
// Graph -> chain-of-thought transformer.
//
// Step k decodes the value of the k-th non-input vertex; after all function
// nodes, one copy step per declared output. Three layers: predecessor
// retrieval (attention) plus placement into argument slots (FF), lookup
// (FF), gating by the next node's function one-hot (FF).
//
// Stream layout per position:
//   value one-hot |S| | function one-hot |F| | position key 2s |
//   predecessor queries C*2s | retrieved values C*|S| |
//   per function j: output z_j |S|, arguments C_j*|S|

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "dagtf/ff_blocks.hpp"
#include "dagtf/graph.hpp"
#include "dagtf/machine.hpp"

namespace dagtf::cot {

struct CotConfig {
  // Code bits s. Default: smallest s with 2^s >= 4 (n + size(G)); with
  // code_multiplier C set, s = C * ceil(log2 n) instead.
  std::optional<int> code_bits;
  std::optional<int> code_multiplier;
  // Heads = max fan-in unless a cap is given; larger fan-in is an error.
  std::optional<int> max_fan_in;
};

struct FunctionBlock {
  std::string name;  // "copy" for the output step function
  int arity = 0;
  bool gate = false;
  int z_offset = 0;
  int args_offset = 0;
};

struct CotSchedule {
  fxp::PrecisionSpec precision;
  int code_bits = 0;
  int n = 0;
  int steps = 0;        // size(G) - n
  std::int64_t size = 0;
  int alphabet = 0;
  int c_max = 0;        // attention heads
  int c_sum = 0;
  int embed_dim = 0;
  int value_offset = 0;
  int func_offset = 0;
  int pos_offset = 0;
  int pred_offset = 0;
  int retrieve_offset = 0;
  std::vector<FunctionBlock> functions;  // graph functions, then copy
  // Per step: decoded vertex (function nodes, then outputs) and its
  // function block index.
  std::vector<int> step_vertex;
  std::vector<int> step_function;
  std::int64_t parameters = 0;       // excluding embedding tables
  std::int64_t parameter_bound = 0;

  void write_report(std::ostream& out) const;
};

struct Compiled {
  tfm::TfWeights weights;
  CotSchedule schedule;
};

Compiled compile_cot(const graph::CompGraph& g, const CotConfig& config = {});

// Layer pieces, exposed for fixtures. Positions are 1-indexed; the
// predecessor of a padding head is position 1 and is never placed.
tfm::AttentionParams build_pred_heads(const CotSchedule& sched);
ff::Piece build_place_ff(const CotSchedule& sched);

// Per-pattern weight of a function in the parameter bound.
std::int64_t function_weight(const graph::NodeFunc& f);

void save_schedule(const CotSchedule& sched, const std::string& path);

}  // namespace dagtf::cot
