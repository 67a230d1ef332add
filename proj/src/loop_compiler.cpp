#include "dagtf/loop_compiler.hpp"

#include <algorithm>
#include <fstream>

namespace dagtf::loop {

using fxp::PrecisionSpec;
using fxp::Scaled;
using graph::CompGraph;
using tfm::Triplet;

namespace {

int ceil_log2(std::int64_t v) {
  int b = 0;
  while ((std::int64_t{1} << b) < v) ++b;
  return b;
}

// Largest integer value the construction must represent.
std::int64_t integer_range(const CompGraph& g) {
  // Snapping reads 2v - 1 with v up to 1 + 3/2.
  std::int64_t need = std::max<std::int64_t>(5, g.input_count());
  for (const auto& f : g.funcs) {
    need = std::max<std::int64_t>(need, f.arity());
    if (f.gate_kind() == graph::GateKind::Majority)
      need = std::max<std::int64_t>(need, std::int64_t{2} * f.arity() * (f.arity() + 1));
  }
  for (const auto& nd : g.nodes) need = std::max<std::int64_t>(need, static_cast<std::int64_t>(nd.preds.size()));
  return need;
}

void check_precision(const CompGraph& g, const PrecisionSpec& p) {
  if ((std::int64_t{1} << p.frac_bits) < g.input_count())
    throw ValidationError("loop: frac_bits " + std::to_string(p.frac_bits) + " cannot resolve 1/" +
                          std::to_string(g.input_count()) + " within half a unit");
  const std::int64_t need = integer_range(g);
  if (need * p.one() > p.max_scaled())
    throw ValidationError("loop: precision " + p.to_string() + " cannot hold the integer range " +
                          std::to_string(need));
}

}  // namespace

Broadcast build_broadcast(int n, const LoopLayout& L) {
  if (n != L.n) throw ValidationError("broadcast: n disagrees with the layout");
  const auto& spec = L.precision;
  const Scaled one = spec.one();
  const Scaled big = spec.max_scaled();
  const int k = L.alphabet;

  ff::Piece mask;
  for (int j = 0; j < n; ++j) {
    for (int c = 0; c < k; ++c)
      mask.units.push_back({{{L.value_col(j, c), one}, {L.pos_offset + j, -big}}, 0, {{L.value_col(j, c), -one}}});
    mask.units.push_back({{{L.flag_col(j), one}}, 0, {{L.flag_col(j), -one}}});
  }

  tfm::Layer gather;
  gather.attn.scope = tfm::Scope::Full;
  std::vector<Triplet> v, o;
  const int vdim = n * (k + 1);
  for (int j = 0; j < n; ++j) {
    for (int c = 0; c < k; ++c) {
      v.emplace_back(j * (k + 1) + c, L.value_col(j, c), one);
      o.emplace_back(L.value_col(j, c), j * (k + 1) + c, n * one);
    }
    v.emplace_back(j * (k + 1) + k, L.pos_offset + j, one);
    o.emplace_back(L.flag_col(j), j * (k + 1) + k, n * one);
  }
  gather.attn.heads.push_back({tfm::make_sparse(1, L.embed_dim, {}), tfm::make_sparse(1, L.embed_dim, {}),
                               tfm::make_sparse(vdim, L.embed_dim, std::move(v))});
  gather.attn.out = tfm::make_sparse(L.embed_dim, vdim, std::move(o));

  // n * round(1/n) lies in [1/2, 3/2]; own position adds 1 more. For v >= 1/2
  // relu(2v) - relu(2v - 1) - relu(v) = 1 - v, and it is 0 at v = 0.
  ff::Piece snap;
  auto snap_col = [&](int col) {
    snap.units.push_back({{{col, 2 * one}}, 0, {{col, one}}});
    snap.units.push_back({{{col, 2 * one}}, -one, {{col, -one}}});
    snap.units.push_back({{{col, one}}, 0, {{col, -one}}});
  };
  for (int j = 0; j < n; ++j) {
    for (int c = 0; c < k; ++c) snap_col(L.value_col(j, c));
    snap_col(L.flag_col(j));
  }
  gather.ff = ff::to_feedforward(snap, L.embed_dim, spec);
  return {ff::to_feedforward(mask, L.embed_dim, spec), std::move(gather)};
}

std::pair<tfm::FeedForward, tfm::FeedForward> build_parallel_ff(const CompGraph& g, const LoopLayout& L) {
  const auto& spec = L.precision;
  const Scaled one = spec.one();
  const int k = L.alphabet;
  // Nodes update synchronously from the pre-layer state, so reading another
  // node's slot while it is rewritten is intended; pieces are appended
  // without the block-diagonal check.
  ff::Piece compute, gate;
  for (int v = g.input_count(); v < g.vertex_count(); ++v) {
    const auto& nd = g.node_at(v);
    const auto& f = g.funcs[nd.func];
    ff::Slots slots;
    slots.out = L.value_col(v, 0);
    slots.gate = L.flag_col(v);
    for (int p : nd.preds) slots.arg_bases.push_back(L.value_col(p, 0));
    const auto st = ff::build_function_ff(f, slots, spec);
    compute.append(st.compute);
    gate.append(st.gate);
    for (int c = 0; c < k; ++c) compute.units.push_back({{{L.value_col(v, c), one}}, 0, {{L.value_col(v, c), -one}}});
    ff::Unit ready;
    for (int p : nd.preds) ready.in.emplace_back(L.flag_col(p), one);
    ready.bias = -static_cast<Scaled>(nd.preds.size() - 1) * one;
    ready.out = {{L.flag_col(v), one}};
    compute.units.push_back(std::move(ready));
    compute.units.push_back({{{L.flag_col(v), one}}, 0, {{L.flag_col(v), -one}}});
  }
  return {ff::to_feedforward(compute, L.embed_dim, spec), ff::to_feedforward(gate, L.embed_dim, spec)};
}

Reader build_output_reader(const LoopLayout& L, const std::vector<int>& outputs) {
  const auto& spec = L.precision;
  const Scaled one = spec.one();
  const int k = L.alphabet;
  if (static_cast<int>(outputs.size()) > L.n) throw ValidationError("reader: more outputs than positions");
  ff::Piece read;
  for (std::size_t r = 0; r < outputs.size(); ++r) {
    const int o = outputs[r];
    if (o < 0 || o >= L.slots) throw ValidationError("reader: output vertex out of range");
    for (int c = 0; c < k; ++c)
      read.units.push_back({{{L.value_col(o, c), one}, {L.select_offset + static_cast<int>(r), one}},
                            -one,
                            {{L.scratch_offset + c, one}}});
  }
  for (int c = 0; c < k; ++c) read.units.push_back({{{L.scratch_offset + c, one}}, 0, {{L.scratch_offset + c, -one}}});
  std::vector<Triplet> out;
  for (int c = 0; c < k; ++c) out.emplace_back(c + 1, L.scratch_offset + c, one);
  return {ff::to_feedforward(read, L.embed_dim, spec), tfm::make_sparse(k + 1, L.embed_dim, std::move(out))};
}

Compiled compile_loop(const CompGraph& g, const LoopConfig& cfg) {
  g.validate();
  for (const auto& s : g.alphabet)
    if (s == kUndecided) throw ValidationError("loop: alphabet may not contain the undecided marker '?'");
  const int n = g.input_count();
  const int k = static_cast<int>(g.alphabet.size());

  LoopLayout L;
  L.n = n;
  L.slots = g.vertex_count();
  L.alphabet = k;
  L.depth = graph::metrics(g).depth;
  L.outputs = g.outputs;
  if (cfg.precision) {
    L.precision = *cfg.precision;
  } else {
    const int frac = std::max(1, ceil_log2(n));
    L.precision = PrecisionSpec::make(ceil_log2(integer_range(g) + 1) + 1, frac);
  }
  check_precision(g, L.precision);
  L.pos_offset = 0;
  L.select_offset = n;
  L.slot_offset = 2 * n;
  L.scratch_offset = L.slot_offset + (k + 1) * L.slots;
  L.embed_dim = L.scratch_offset + k;

  const auto& spec = L.precision;
  const Scaled one = spec.one();
  tfm::TfWeights w;
  w.precision = spec;
  w.embed_dim = L.embed_dim;
  w.vocab.push_back(kUndecided);
  for (const auto& s : g.alphabet) w.vocab.push_back(s);
  w.mode = tfm::RunMode::Loop;
  w.budget = L.depth;
  w.output_len = static_cast<int>(g.outputs.size());
  {
    std::vector<Triplet> we;
    for (int c = 0; c < k; ++c)
      for (int j = 0; j < n; ++j) we.emplace_back(c + 1, L.value_col(j, c), one);
    w.word_embed = tfm::make_sparse(k + 1, L.embed_dim, std::move(we));
  }
  {
    std::vector<Triplet> pe;
    const int first_out = n - w.output_len;
    for (int i = 0; i < n; ++i) {
      pe.emplace_back(i, L.pos_offset + i, one);
      if (i >= first_out) pe.emplace_back(i, L.select_offset + (i - first_out), one);
    }
    w.pos_embed = tfm::make_sparse(n, L.embed_dim, std::move(pe));
  }
  auto bc = build_broadcast(n, L);
  auto [compute, gate] = build_parallel_ff(g, L);
  auto reader = build_output_reader(L, g.outputs);
  auto plain = [](tfm::FeedForward f) {
    tfm::Layer l;
    l.attn.scope = tfm::Scope::Full;
    l.ff = std::move(f);
    return l;
  };
  w.layers.push_back(plain(std::move(bc.mask)));
  w.layers.push_back(std::move(bc.gather));
  w.layers.push_back(plain(std::move(compute)));
  w.layers.push_back(plain(std::move(gate)));
  w.layers.push_back(plain(std::move(reader.read)));
  w.out_proj = std::move(reader.out_proj);
  w.validate();
  return {std::move(w), std::move(L)};
}

std::vector<int> encode_input(const std::vector<int>& x) {
  std::vector<int> t;
  t.reserve(x.size());
  for (int v : x) t.push_back(v + 1);
  return t;
}

std::vector<int> decode_output(const std::vector<int>& tokens) {
  std::vector<int> x;
  x.reserve(tokens.size());
  for (int t : tokens) x.push_back(t - 1);
  return x;
}

std::vector<double> slot_flags(const LoopLayout& L, const tfm::FxMatrix& state, int position) {
  std::vector<double> f;
  for (int v = 0; v < L.slots; ++v)
    f.push_back(static_cast<double>(state(position, L.flag_col(v))) / static_cast<double>(L.precision.one()));
  return f;
}

void LoopLayout::write_report(std::ostream& out) const {
  out << "loop-layout 1\n";
  out << "precision " << precision.int_bits << ' ' << precision.frac_bits << '\n';
  out << "inputs " << n << '\n';
  out << "slots " << slots << '\n';
  out << "alphabet " << alphabet << '\n';
  out << "depth " << depth << '\n';
  out << "embed_dim " << embed_dim << '\n';
  out << "offset position " << pos_offset << '\n';
  out << "offset select " << select_offset << '\n';
  out << "offset slots " << slot_offset << " stride " << alphabet + 1 << '\n';
  out << "offset scratch " << scratch_offset << '\n';
  out << "flags";
  for (int v = 0; v < slots; ++v) out << ' ' << flag_col(v);
  out << '\n';
  out << "outputs";
  for (int o : outputs) out << ' ' << o;
  out << '\n';
}

void save_layout(const LoopLayout& layout, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write layout '" + path + "'");
  layout.write_report(out);
}

}  // namespace dagtf::loop
