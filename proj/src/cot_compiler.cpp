#include "dagtf/cot_compiler.hpp"

#include <algorithm>
#include <fstream>

namespace dagtf::cot {

using fxp::PrecisionSpec;
using fxp::Scaled;
using graph::CompGraph;
using graph::NodeFunc;
using tfm::Triplet;

namespace {

int ceil_log2(std::int64_t v) {
  int b = 0;
  while ((std::int64_t{1} << b) < v) ++b;
  return b;
}

int choose_code_bits(const CompGraph& g, int steps, const CotConfig& cfg) {
  const std::int64_t positions = g.input_count() + steps;
  int s;
  if (cfg.code_bits) {
    s = *cfg.code_bits;
  } else if (cfg.code_multiplier) {
    if (*cfg.code_multiplier < 1) throw ValidationError("cot: code multiplier must be positive");
    s = *cfg.code_multiplier * std::max(1, ceil_log2(g.input_count()));
  } else {
    s = std::max(2, ceil_log2(4 * (g.input_count() + g.size())));
  }
  if (s < 2) throw ValidationError("cot: code bits must be at least 2");
  if (s > 28) throw ValidationError("cot: code bits " + std::to_string(s) + " exceed the precision limit");
  if ((std::int64_t{1} << s) - 1 < positions)
    throw ValidationError("cot: " + std::to_string(positions) + " positions exceed the code range 2^" +
                          std::to_string(s) + " - 1");
  return s;
}

// Smallest integer width whose bound covers v.
int int_bits_for(std::int64_t v) { return ceil_log2(v + 1) + 1; }

void set_code(std::vector<Triplet>& t, int row, int offset, const fxp::FxVector& code) {
  for (Eigen::Index k = 0; k < code.size(); ++k)
    if (code[k] != 0) t.emplace_back(row, offset + static_cast<int>(k), code[k]);
}

}  // namespace

std::int64_t function_weight(const NodeFunc& f) {
  if (f.is_gate()) return f.arity() + 1;
  return f.table_size();
}

tfm::AttentionParams build_pred_heads(const CotSchedule& s) {
  const Scaled one = s.precision.one();
  const int w = 2 * s.code_bits;
  const int k = s.alphabet;
  tfm::AttentionParams p;
  p.scope = tfm::Scope::Causal;
  std::vector<Triplet> out;
  for (int h = 0; h < s.c_max; ++h) {
    std::vector<Triplet> q, key, v;
    for (int i = 0; i < w; ++i) {
      q.emplace_back(i, s.pred_offset + h * w + i, one);
      key.emplace_back(i, s.pos_offset + i, one);
    }
    for (int c = 0; c < k; ++c) {
      v.emplace_back(c, s.value_offset + c, one);
      out.emplace_back(s.retrieve_offset + h * k + c, h * k + c, one);
    }
    p.heads.push_back({tfm::make_sparse(w, s.embed_dim, std::move(q)), tfm::make_sparse(w, s.embed_dim, std::move(key)),
                       tfm::make_sparse(k, s.embed_dim, std::move(v))});
  }
  p.out = tfm::make_sparse(s.embed_dim, s.c_max * k, std::move(out));
  return p;
}

ff::Piece build_place_ff(const CotSchedule& s) {
  const Scaled one = s.precision.one();
  const int k = s.alphabet;
  ff::Piece p;
  for (int h = 0; h < s.c_max; ++h)
    for (int c = 0; c < k; ++c) {
      const int r = s.retrieve_offset + h * k + c;
      ff::Unit u{{{r, one}}, 0, {{r, -one}}};
      for (const auto& fb : s.functions)
        if (h < fb.arity) u.out.emplace_back(fb.args_offset + h * k + c, one);
      p.units.push_back(std::move(u));
    }
  return p;
}

Compiled compile_cot(const CompGraph& g, const CotConfig& cfg) {
  g.validate();
  const int n = g.input_count();
  const int k = static_cast<int>(g.alphabet.size());
  const int nf = static_cast<int>(g.funcs.size());

  CotSchedule s;
  s.n = n;
  s.size = g.size();
  s.alphabet = k;
  s.steps = static_cast<int>(g.size()) - n;

  // Function blocks: graph functions in order, then the output copy.
  std::vector<NodeFunc> funcs = g.funcs;
  funcs.push_back(NodeFunc::from_callable("copy", 1, k, [](std::span<const int> a) { return a[0]; }));
  for (const auto& f : funcs) s.functions.push_back({f.name(), f.arity(), f.is_gate(), 0, 0});
  for (int v = n; v < g.vertex_count(); ++v) {
    s.step_vertex.push_back(v);
    s.step_function.push_back(g.node_at(v).func);
  }
  for (int o : g.outputs) {
    s.step_vertex.push_back(o);
    s.step_function.push_back(nf);
  }

  int c_max = 1;
  for (const auto& f : funcs) {
    c_max = std::max(c_max, f.arity());
    s.c_sum += f.arity();
  }
  if (cfg.max_fan_in) {
    if (c_max > *cfg.max_fan_in)
      throw ValidationError("cot: fan-in " + std::to_string(c_max) + " exceeds the configured maximum " +
                            std::to_string(*cfg.max_fan_in));
    c_max = std::max(c_max, *cfg.max_fan_in);
  }
  s.c_max = c_max;
  s.code_bits = choose_code_bits(g, s.steps, cfg);

  // Integer range: code keys need 2^(s+1) (int_bits s+2); gates need their
  // count ranges.
  int ib = s.code_bits + 2;
  for (const auto& f : funcs) {
    std::int64_t need = f.arity();
    if (f.gate_kind() == graph::GateKind::Majority)
      need = std::int64_t{2} * f.arity() * (f.arity() + 1);
    ib = std::max(ib, int_bits_for(need));
  }
  s.precision = PrecisionSpec::make(ib, s.code_bits);

  const int w = 2 * s.code_bits;
  int off = 0;
  s.value_offset = off;
  off += k;
  s.func_offset = off;
  off += static_cast<int>(funcs.size());
  s.pos_offset = off;
  off += w;
  s.pred_offset = off;
  off += c_max * w;
  s.retrieve_offset = off;
  off += c_max * k;
  for (auto& fb : s.functions) {
    fb.z_offset = off;
    off += k;
    fb.args_offset = off;
    off += fb.arity * k;
  }
  s.embed_dim = off;

  const PrecisionSpec& spec = s.precision;
  const Scaled one = spec.one();
  tfm::TfWeights wts;
  wts.precision = spec;
  wts.embed_dim = s.embed_dim;
  wts.vocab = g.alphabet;
  wts.mode = tfm::RunMode::Cot;
  wts.budget = s.steps;
  wts.output_len = static_cast<int>(g.outputs.size());

  {
    std::vector<Triplet> we;
    for (int c = 0; c < k; ++c) we.emplace_back(c, s.value_offset + c, one);
    wts.word_embed = tfm::make_sparse(k, s.embed_dim, std::move(we));
  }
  {
    // Row p-1 holds position p; the next decoded vertex is at position p+1.
    const int max_len = n + s.steps;
    std::vector<Triplet> pe;
    for (int p = 1; p <= max_len; ++p) {
      const int row = p - 1;
      set_code(pe, row, s.pos_offset, fxp::onehot_codes(p, s.code_bits, spec).key);
      const int step = p + 1 - n;  // 1-based step index
      if (step < 1 || step > s.steps) continue;
      const int v = s.step_vertex[step - 1];
      const int fi = s.step_function[step - 1];
      pe.emplace_back(row, s.func_offset + fi, one);
      std::vector<int> preds;
      if (fi == nf)
        preds = {v};
      else
        preds = g.node_at(v).preds;
      for (int h = 0; h < c_max; ++h) {
        const int pos = h < static_cast<int>(preds.size()) ? preds[h] + 1 : 1;
        set_code(pe, row, s.pred_offset + h * w, fxp::onehot_codes(pos, s.code_bits, spec).query);
      }
    }
    wts.pos_embed = tfm::make_sparse(max_len, s.embed_dim, std::move(pe));
  }

  tfm::Layer retrieve;
  retrieve.attn = build_pred_heads(s);
  retrieve.ff = ff::to_feedforward(build_place_ff(s), s.embed_dim, spec);

  std::vector<ff::Piece> compute, gates;
  for (std::size_t j = 0; j < funcs.size(); ++j) {
    const auto& fb = s.functions[j];
    const ff::Slots slots{fb.z_offset, fb.args_offset, s.func_offset + static_cast<int>(j), {}};
    auto st = ff::build_function_ff(funcs[j], slots, spec);
    compute.push_back(std::move(st.compute));
    gates.push_back(std::move(st.gate));
  }
  tfm::Layer lookup, gate;
  lookup.attn.scope = gate.attn.scope = tfm::Scope::Causal;
  lookup.ff = ff::build_concat_ff(compute, s.embed_dim, spec);
  gate.ff = ff::build_concat_ff(gates, s.embed_dim, spec);
  wts.layers = {std::move(retrieve), std::move(lookup), std::move(gate)};

  {
    std::vector<Triplet> out;
    for (const auto& fb : s.functions)
      for (int c = 0; c < k; ++c) out.emplace_back(c, fb.z_offset + c, one);
    wts.out_proj = tfm::make_sparse(k, s.embed_dim, std::move(out));
  }
  wts.validate();

  std::int64_t wsum = 0;
  for (const auto& f : funcs) wsum += function_weight(f);
  s.parameters = wts.parameter_count(false);
  s.parameter_bound = 25 * wsum * k * c_max + 4 * static_cast<std::int64_t>(c_max) * (s.code_bits + k);
  if (s.parameters > s.parameter_bound)
    throw std::logic_error("cot: parameter count " + std::to_string(s.parameters) + " exceeds bound " +
                           std::to_string(s.parameter_bound));
  return {std::move(wts), std::move(s)};
}

void CotSchedule::write_report(std::ostream& out) const {
  out << "cot-schedule 1\n";
  out << "precision " << precision.int_bits << ' ' << precision.frac_bits << '\n';
  out << "code_bits " << code_bits << '\n';
  out << "inputs " << n << '\n';
  out << "size " << size << '\n';
  out << "steps " << steps << '\n';
  out << "alphabet " << alphabet << '\n';
  out << "heads " << c_max << '\n';
  out << "c_sum " << c_sum << '\n';
  out << "embed_dim " << embed_dim << '\n';
  out << "offset value " << value_offset << '\n';
  out << "offset function " << func_offset << '\n';
  out << "offset position " << pos_offset << '\n';
  out << "offset predecessors " << pred_offset << '\n';
  out << "offset retrieved " << retrieve_offset << '\n';
  for (const auto& f : functions)
    out << "function " << f.name << " arity " << f.arity << (f.gate ? " gate" : " table") << " z " << f.z_offset
        << " args " << f.args_offset << '\n';
  out << "parameters " << parameters << '\n';
  out << "parameter_bound " << parameter_bound << '\n';
  for (std::size_t i = 0; i < step_vertex.size(); ++i)
    out << "step " << i + 1 << " vertex " << step_vertex[i] << " function " << functions[step_function[i]].name
        << '\n';
}

void save_schedule(const CotSchedule& sched, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write schedule '" + path + "'");
  sched.write_report(out);
}

}  // namespace dagtf::cot
