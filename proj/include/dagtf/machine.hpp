#pragma once
// Finite-precision transformer interpreter.
//
// States are row-major matrices of scaled integers, one row per position.
// Weights are sparse; every matrix-vector product is a left fold over the
// stored entries of a row in column order, which equals the rounded dense
// inner product because skipped terms are exact zeros.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/SparseCore>

#include "dagtf/fxp.hpp"

namespace dagtf::tfm {

using fxp::FxMatrix;
using fxp::FxVector;
using fxp::PrecisionSpec;
using fxp::Scaled;
using SparseW = Eigen::SparseMatrix<Scaled, Eigen::RowMajor, int>;
using Triplet = Eigen::Triplet<Scaled, int>;

enum class Scope { Causal, Full };
enum class RunMode { Cot, Loop };
enum class Decode { Argmax, Multinomial };

std::string to_string(Scope s);
std::string to_string(RunMode m);

struct AttentionHead {
  SparseW query;  // head_dim x embed
  SparseW key;    // head_dim x embed
  SparseW value;  // value_dim x embed
};

// A layer with no heads contributes exactly zero.
struct AttentionParams {
  std::vector<AttentionHead> heads;
  SparseW out;  // embed x (sum of value dims)
  Scope scope = Scope::Causal;
};

// W2 relu(W1 x + b). Zero hidden units contribute exactly zero.
struct FeedForward {
  SparseW w1;  // hidden x embed
  FxVector b;  // hidden
  SparseW w2;  // embed x hidden
};

struct Layer {
  AttentionParams attn;
  FeedForward ff;
};

struct TfWeights {
  PrecisionSpec precision;
  int embed_dim = 0;
  std::vector<std::string> vocab;
  SparseW word_embed;  // vocab x embed
  SparseW pos_embed;   // max_len x embed; row p-1 is position p
  std::vector<Layer> layers;
  SparseW out_proj;    // vocab x embed
  RunMode mode = RunMode::Cot;
  int budget = 0;      // declared steps (cot) or loops (loop)
  int output_len = 0;

  int max_len() const { return static_cast<int>(pos_embed.rows()); }
  int token_index(const std::string& tok) const;  // -1 when absent
  // Shapes, representability and the causal-scope rule for cot mode.
  void validate() const;
  // Nonzero parameters, optionally excluding the embedding tables.
  std::int64_t parameter_count(bool include_embeddings) const;
};

SparseW make_sparse(int rows, int cols, std::vector<Triplet> triplets);

struct AttentionAudit {
  // [head][query position][key position] attention weights, scaled.
  std::vector<FxMatrix> weights;
};

// Helpers shared by the runners; exposed for fixtures.
FxVector apply_sparse(const SparseW& w, const Eigen::Ref<const FxVector>& x, const PrecisionSpec& spec);
FxMatrix embed(const TfWeights& w, const std::vector<int>& tokens);
// Attention output (without residual) for every position.
FxMatrix attention_layer(const FxMatrix& h, const AttentionParams& p, const PrecisionSpec& spec,
                         AttentionAudit* audit = nullptr);
// Feed-forward output (without residual) for every position.
FxMatrix ff_layer(const FxMatrix& h, const FeedForward& ff, const PrecisionSpec& spec);
// All layers with residuals: h += attn(h); h += ff(h).
FxMatrix block_forward(const FxMatrix& h, const TfWeights& w, std::vector<AttentionAudit>* audits = nullptr);
FxVector logits(const TfWeights& w, const Eigen::Ref<const FxVector>& h);
int argmax_token(const FxVector& z);
// Exact integer sampling proportional to div_r(z_i, sum_iter(z)).
int sample_token(const FxVector& z, const PrecisionSpec& spec, std::mt19937_64& rng);

std::uint64_t digest(const Eigen::Ref<const FxMatrix>& h);
std::int64_t saturated_entries(const Eigen::Ref<const FxMatrix>& h, const PrecisionSpec& spec);

struct TraceOptions {
  bool keep_attention = false;
  bool keep_states = false;
};

struct TraceStep {
  int token = -1;                   // cot: decoded token; loop: -1
  std::uint64_t state_digest = 0;   // cot: last row; loop: whole state
  std::int64_t saturated = 0;       // entries at +-B in the digested state
  std::vector<AttentionAudit> attention;  // per layer, when requested
  FxMatrix state;                   // when requested
};

struct TraceRecord {
  std::vector<TraceStep> steps;
};

struct RunResult {
  std::vector<int> output;    // last output_len tokens
  std::vector<int> appended;  // cot: every decoded token
  TraceRecord trace;
  FxMatrix final_state;       // loop: the state after the last loop
};

RunResult run_cot(const TfWeights& w, const std::vector<int>& x, int budget, Decode decode, std::mt19937_64& rng,
                  int output_len, const TraceOptions& opts = {});
// Same law as run_cot, recomputing the whole prefix every step.
RunResult run_cot_reference(const TfWeights& w, const std::vector<int>& x, int budget, Decode decode,
                            std::mt19937_64& rng, int output_len);
RunResult run_loop(const TfWeights& w, const std::vector<int>& x, int loops, int output_len,
                   const TraceOptions& opts = {});

// Weight container: ASCII header then little-endian tensors.
void save_weights(const TfWeights& w, const std::string& path);
TfWeights load_weights(const std::string& path);
void write_weights(const TfWeights& w, std::ostream& out);
TfWeights read_weights(std::istream& in);
void dump_weights(const TfWeights& w, std::ostream& out);

}  // namespace dagtf::tfm
