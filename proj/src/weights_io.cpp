#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "dagtf/machine.hpp"

namespace dagtf::tfm {

namespace {

constexpr const char* kMagic = "dagtf-weights";
constexpr int kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

std::uint64_t get_bytes(std::istream& in, int n) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), n);
  if (!in) throw ValidationError("weights: truncated tensor data");
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void put_matrix(std::ostream& out, const SparseW& m) {
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  put_u64(out, static_cast<std::uint64_t>(m.nonZeros()));
  for (int r = 0; r < m.outerSize(); ++r)
    for (SparseW::InnerIterator it(m, r); it; ++it) {
      put_u32(out, static_cast<std::uint32_t>(r));
      put_u32(out, static_cast<std::uint32_t>(it.col()));
      put_u64(out, static_cast<std::uint64_t>(it.value()));
    }
}

SparseW get_matrix(std::istream& in) {
  const auto rows = static_cast<int>(get_bytes(in, 4));
  const auto cols = static_cast<int>(get_bytes(in, 4));
  const auto nnz = get_bytes(in, 8);
  if (nnz > static_cast<std::uint64_t>(rows) * static_cast<std::uint64_t>(cols))
    throw ValidationError("weights: tensor claims more entries than cells");
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(nnz));
  for (std::uint64_t k = 0; k < nnz; ++k) {
    const auto r = static_cast<int>(get_bytes(in, 4));
    const auto c = static_cast<int>(get_bytes(in, 4));
    const auto v = static_cast<Scaled>(get_bytes(in, 8));
    if (r >= rows || c >= cols) throw ValidationError("weights: tensor entry out of bounds");
    t.emplace_back(r, c, v);
  }
  return make_sparse(rows, cols, std::move(t));
}

void put_vector(std::ostream& out, const FxVector& v) {
  put_u32(out, static_cast<std::uint32_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) put_u64(out, static_cast<std::uint64_t>(v[i]));
}

FxVector get_vector(std::istream& in) {
  const auto n = static_cast<Eigen::Index>(get_bytes(in, 4));
  FxVector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = static_cast<Scaled>(get_bytes(in, 8));
  return v;
}

void write_header(const TfWeights& w, std::ostream& out) {
  out << kMagic << ' ' << kVersion << '\n';
  out << "precision " << w.precision.int_bits << ' ' << w.precision.frac_bits << '\n';
  out << "mode " << to_string(w.mode) << '\n';
  out << "embed_dim " << w.embed_dim << '\n';
  out << "max_len " << w.max_len() << '\n';
  out << "vocab " << w.vocab.size() << '\n';
  for (const auto& t : w.vocab) out << "token " << t << '\n';
  out << "budget " << w.budget << '\n';
  out << "output_len " << w.output_len << '\n';
  out << "layers " << w.layers.size() << '\n';
  for (std::size_t l = 0; l < w.layers.size(); ++l)
    out << "layer " << l << " heads " << w.layers[l].attn.heads.size() << " scope " << to_string(w.layers[l].attn.scope)
        << '\n';
  out << "end\n";
}

std::string expect_key(std::istream& in, const std::string& key) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("weights: header ends before '" + key + "'");
  std::istringstream ls(line);
  std::string k;
  ls >> k;
  if (k != key) throw ValidationError("weights: expected '" + key + "', found '" + k + "'");
  std::string rest;
  std::getline(ls, rest);
  const auto start = rest.find_first_not_of(' ');
  return start == std::string::npos ? "" : rest.substr(start);
}

int to_int(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(what);
    return v;
  } catch (const std::logic_error&) {
    throw ValidationError("weights: bad integer for " + what + ": '" + s + "'");
  }
}

}  // namespace

void write_weights(const TfWeights& w, std::ostream& out) {
  for (const auto& t : w.vocab)
    if (t.empty() || t.find_first_of(" \t\r\n") != std::string::npos)
      throw ValidationError("weights: vocabulary tokens may not contain whitespace");
  write_header(w, out);
  put_matrix(out, w.word_embed);
  put_matrix(out, w.pos_embed);
  for (const auto& l : w.layers) {
    for (const auto& h : l.attn.heads) {
      put_matrix(out, h.query);
      put_matrix(out, h.key);
      put_matrix(out, h.value);
    }
    put_matrix(out, l.attn.out);
    put_matrix(out, l.ff.w1);
    put_vector(out, l.ff.b);
    put_matrix(out, l.ff.w2);
  }
  put_matrix(out, w.out_proj);
}

TfWeights read_weights(std::istream& in) {
  TfWeights w;
  {
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("weights: empty file");
    std::istringstream ls(line);
    std::string magic;
    int version = 0;
    ls >> magic >> version;
    if (magic != kMagic) throw ValidationError("weights: not a weight file");
    if (version != kVersion) throw ValidationError("weights: unsupported version " + std::to_string(version));
  }
  {
    std::istringstream ps(expect_key(in, "precision"));
    int ib = 0, fb = 0;
    if (!(ps >> ib >> fb)) throw ValidationError("weights: bad precision line");
    w.precision = PrecisionSpec::make(ib, fb);
  }
  const std::string mode = expect_key(in, "mode");
  if (mode == "cot")
    w.mode = RunMode::Cot;
  else if (mode == "loop")
    w.mode = RunMode::Loop;
  else
    throw ValidationError("weights: unknown mode '" + mode + "'");
  w.embed_dim = to_int(expect_key(in, "embed_dim"), "embed_dim");
  const int max_len = to_int(expect_key(in, "max_len"), "max_len");
  const int vocab = to_int(expect_key(in, "vocab"), "vocab");
  for (int i = 0; i < vocab; ++i) w.vocab.push_back(expect_key(in, "token"));
  w.budget = to_int(expect_key(in, "budget"), "budget");
  w.output_len = to_int(expect_key(in, "output_len"), "output_len");
  const int layers = to_int(expect_key(in, "layers"), "layers");
  std::vector<std::pair<int, Scope>> layer_info;
  for (int l = 0; l < layers; ++l) {
    std::istringstream ls(expect_key(in, "layer"));
    int idx = -1, heads = 0;
    std::string kh, ks, scope;
    ls >> idx >> kh >> heads >> ks >> scope;
    if (idx != l || kh != "heads" || ks != "scope" || (scope != "causal" && scope != "full"))
      throw ValidationError("weights: bad layer line " + std::to_string(l));
    layer_info.emplace_back(heads, scope == "causal" ? Scope::Causal : Scope::Full);
  }
  expect_key(in, "end");
  w.word_embed = get_matrix(in);
  w.pos_embed = get_matrix(in);
  if (w.pos_embed.rows() != max_len) throw ValidationError("weights: positional table length disagrees with header");
  for (const auto& [heads, scope] : layer_info) {
    Layer layer;
    layer.attn.scope = scope;
    for (int h = 0; h < heads; ++h) {
      AttentionHead hd;
      hd.query = get_matrix(in);
      hd.key = get_matrix(in);
      hd.value = get_matrix(in);
      layer.attn.heads.push_back(std::move(hd));
    }
    layer.attn.out = get_matrix(in);
    layer.ff.w1 = get_matrix(in);
    layer.ff.b = get_vector(in);
    layer.ff.w2 = get_matrix(in);
    w.layers.push_back(std::move(layer));
  }
  w.out_proj = get_matrix(in);
  w.validate();
  return w;
}

void save_weights(const TfWeights& w, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write weight file '" + path + "'");
  write_weights(w, out);
  if (!out) throw std::runtime_error("error while writing weight file '" + path + "'");
}

TfWeights load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open weight file '" + path + "'");
  return read_weights(in);
}

void dump_weights(const TfWeights& w, std::ostream& out) {
  write_header(w, out);
  const double scale = static_cast<double>(w.precision.one());
  auto dump = [&](const std::string& name, const SparseW& m) {
    out << "tensor " << name << ' ' << m.rows() << ' ' << m.cols() << ' ' << m.nonZeros() << '\n';
    for (int r = 0; r < m.outerSize(); ++r)
      for (SparseW::InnerIterator it(m, r); it; ++it)
        out << "  " << r << ' ' << it.col() << ' ' << it.value() << ' ' << static_cast<double>(it.value()) / scale << '\n';
  };
  dump("word_embed", w.word_embed);
  dump("pos_embed", w.pos_embed);
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    for (std::size_t h = 0; h < w.layers[l].attn.heads.size(); ++h) {
      const std::string hp = p + "head" + std::to_string(h) + ".";
      dump(hp + "query", w.layers[l].attn.heads[h].query);
      dump(hp + "key", w.layers[l].attn.heads[h].key);
      dump(hp + "value", w.layers[l].attn.heads[h].value);
    }
    dump(p + "attn_out", w.layers[l].attn.out);
    dump(p + "w1", w.layers[l].ff.w1);
    const auto& b = w.layers[l].ff.b;
    out << "vector " << p << "b " << b.size() << '\n';
    for (Eigen::Index i = 0; i < b.size(); ++i)
      if (b[i] != 0) out << "  " << i << ' ' << b[i] << ' ' << static_cast<double>(b[i]) / scale << '\n';
    dump(p + "w2", w.layers[l].ff.w2);
  }
  dump("out_proj", w.out_proj);
}

}  // namespace dagtf::tfm
