#include "dagtf/ff_blocks.hpp"

#include <string>

namespace dagtf::ff {

using graph::GateKind;

std::set<int> Piece::reads() const {
  std::set<int> s;
  for (const auto& u : units)
    for (const auto& [c, w] : u.in) s.insert(c);
  return s;
}

std::set<int> Piece::writes() const {
  std::set<int> s;
  for (const auto& u : units)
    for (const auto& [c, w] : u.out) s.insert(c);
  return s;
}

void Piece::append(const Piece& other) { units.insert(units.end(), other.units.begin(), other.units.end()); }

namespace {

void require_fits(std::int64_t v, const PrecisionSpec& spec, const std::string& what) {
  if (v * spec.one() > spec.max_scaled())
    throw ValidationError(what + ": needs " + std::to_string(v) + " but precision " + spec.to_string() +
                          " saturates earlier");
}

}  // namespace

Piece gate_block(int out, int width, int gate, const PrecisionSpec& spec) {
  const Scaled one = spec.one();
  Piece p;
  for (int c = 0; c < width; ++c) {
    p.units.push_back({{{out + c, one}, {gate, one}}, -one, {{out + c, one}}});
    p.units.push_back({{{out + c, one}}, 0, {{out + c, -one}}});
  }
  return p;
}

TwoStage build_lookup_ff(const graph::NodeFunc& f, const Slots& slots, const PrecisionSpec& spec) {
  if (f.is_gate()) throw ValidationError("lookup: '" + f.name() + "' is a symbolic gate");
  const int a = f.arity();
  const int k = f.alphabet_size();
  const auto& table = f.entries();
  if (!slots.arg_bases.empty() && static_cast<int>(slots.arg_bases.size()) != a)
    throw ValidationError("lookup: argument bases disagree with arity");
  if (static_cast<std::int64_t>(table.size()) != f.table_size())
    throw ValidationError("lookup: table of '" + f.name() + "' is incomplete");
  require_fits(a, spec, "lookup '" + f.name() + "'");
  const Scaled one = spec.one();
  TwoStage st;
  std::vector<int> digits(a, 0);
  for (std::size_t row = 0; row < table.size(); ++row) {
    // Row index is lexicographic with the first argument most significant.
    std::size_t r = row;
    for (int i = a - 1; i >= 0; --i) {
      digits[i] = static_cast<int>(r % k);
      r /= k;
    }
    Unit u;
    for (int i = 0; i < a; ++i) u.in.emplace_back(slots.arg_base(i, k) + digits[i], one);
    u.bias = -(a - 1) * one;
    u.out.emplace_back(slots.out + table[row], one);
    st.compute.units.push_back(std::move(u));
  }
  st.gate = gate_block(slots.out, k, slots.gate, spec);
  return st;
}

TwoStage build_gate_ff(GateKind kind, int m, const Slots& slots, const PrecisionSpec& spec) {
  if (m < 1) throw ValidationError("gate: arity must be positive");
  if (!slots.arg_bases.empty() && static_cast<int>(slots.arg_bases.size()) != m)
    throw ValidationError("gate: argument bases disagree with arity");
  const Scaled one = spec.one();
  // Column of argument i taking bit b.
  auto col = [&](int i, int b) { return slots.arg_base(i, 2) + b; };
  auto sums = [&](Scaled w0, Scaled w1) {
    std::vector<std::pair<int, Scaled>> in;
    for (int i = 0; i < m; ++i) {
      if (w0 != 0) in.emplace_back(col(i, 0), w0);
      if (w1 != 0) in.emplace_back(col(i, 1), w1);
    }
    return in;
  };
  const int z0 = slots.out, z1 = slots.out + 1;
  TwoStage st;
  auto& u = st.compute.units;
  // All arguments one-hot: S0 + S1 = m.
  const Unit all{sums(one, one), -(m - 1) * one, {}};
  switch (kind) {
    case GateKind::And: {
      require_fits(m, spec, "AND gate");
      Unit p = all;
      p.out = {{z0, one}};
      u.push_back(p);
      u.push_back({sums(0, one), -(m - 1) * one, {{z1, one}, {z0, -one}}});
      break;
    }
    case GateKind::Or: {
      require_fits(m, spec, "OR gate");
      Unit p = all;
      p.out = {{z1, one}};
      u.push_back(p);
      u.push_back({sums(one, 0), -(m - 1) * one, {{z0, one}, {z1, -one}}});
      break;
    }
    case GateKind::Majority: {
      const int k = m / 2 + 1;
      require_fits(static_cast<std::int64_t>(m) * (m + 1), spec, "MAJORITY gate");
      require_fits(static_cast<std::int64_t>(m) * m + k, spec, "MAJORITY gate");
      Unit p = all;
      p.out = {{z0, one}};
      u.push_back(p);
      // S1 - k + 1 + m (S0 + S1 - m) and the same shifted by one.
      const auto in = sums(m * one, (m + 1) * one);
      const Scaled base = (static_cast<Scaled>(m) * m + k) * one;
      u.push_back({in, -base + one, {{z1, one}, {z0, -one}}});
      u.push_back({in, -base, {{z1, -one}, {z0, one}}});
      break;
    }
    case GateKind::None:
      throw ValidationError("gate: not a gate");
  }
  st.gate = gate_block(slots.out, 2, slots.gate, spec);
  return st;
}

TwoStage build_function_ff(const graph::NodeFunc& f, const Slots& slots, const PrecisionSpec& spec) {
  if (!f.is_gate()) return build_lookup_ff(f, slots, spec);
  if (f.alphabet_size() != 2) throw ValidationError("gate '" + f.name() + "' needs a binary alphabet");
  return build_gate_ff(f.gate_kind(), f.arity(), slots, spec);
}

tfm::FeedForward to_feedforward(const Piece& piece, int embed_dim, const PrecisionSpec& spec) {
  std::vector<tfm::Triplet> w1, w2;
  const int hidden = static_cast<int>(piece.units.size());
  tfm::FxVector b = tfm::FxVector::Zero(hidden);
  for (int h = 0; h < hidden; ++h) {
    const auto& u = piece.units[h];
    for (const auto& [c, w] : u.in) {
      if (c < 0 || c >= embed_dim) throw ValidationError("ff: input column out of range");
      w1.emplace_back(h, c, w);
    }
    for (const auto& [c, w] : u.out) {
      if (c < 0 || c >= embed_dim) throw ValidationError("ff: output column out of range");
      w2.emplace_back(c, h, w);
    }
    b[h] = u.bias;
  }
  tfm::FeedForward ff{tfm::make_sparse(hidden, embed_dim, std::move(w1)), b,
                      tfm::make_sparse(embed_dim, hidden, std::move(w2))};
  for (Eigen::Index i = 0; i < b.size(); ++i)
    if (b[i] > spec.max_scaled() || b[i] < -spec.max_scaled()) throw ValidationError("ff: bias not representable");
  return ff;
}

tfm::FeedForward build_concat_ff(const std::vector<Piece>& pieces, int embed_dim, const PrecisionSpec& spec) {
  Piece all;
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    const auto wi = pieces[i].writes();
    for (std::size_t j = 0; j < pieces.size(); ++j) {
      if (i == j) continue;
      const auto rj = pieces[j].reads();
      const auto wj = pieces[j].writes();
      for (int c : wi)
        if (rj.count(c) || wj.count(c))
          throw ValidationError("concat: blocks " + std::to_string(i) + " and " + std::to_string(j) +
                                " overlap at column " + std::to_string(c));
    }
    all.append(pieces[i]);
  }
  return to_feedforward(all, embed_dim, spec);
}

tfm::FeedForward empty_ff(int embed_dim) {
  return {tfm::make_sparse(0, embed_dim, {}), tfm::FxVector(0), tfm::make_sparse(embed_dim, 0, {})};
}

}  // namespace dagtf::ff
