#include "dagtf/machine.hpp"

#include <algorithm>
#include <stdexcept>

namespace dagtf::tfm {

namespace raw = fxp::raw;

std::string to_string(Scope s) { return s == Scope::Causal ? "causal" : "full"; }
std::string to_string(RunMode m) { return m == RunMode::Cot ? "cot" : "loop"; }

SparseW make_sparse(int rows, int cols, std::vector<Triplet> triplets) {
  SparseW m(rows, cols);
  m.setFromTriplets(triplets.begin(), triplets.end());
  m.prune(Scaled{0});
  m.makeCompressed();
  return m;
}

int TfWeights::token_index(const std::string& tok) const {
  for (std::size_t i = 0; i < vocab.size(); ++i)
    if (vocab[i] == tok) return static_cast<int>(i);
  return -1;
}

namespace {

void check_shape(const SparseW& m, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
  if (m.rows() != rows || m.cols() != cols)
    throw ValidationError("weights: " + what + " is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                          ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
}

void check_range(const SparseW& m, const PrecisionSpec& spec, const std::string& what) {
  for (int k = 0; k < m.outerSize(); ++k)
    for (SparseW::InnerIterator it(m, k); it; ++it)
      if (it.value() > spec.max_scaled() || it.value() < -spec.max_scaled())
        throw ValidationError("weights: " + what + " has an entry outside [-B, B]");
}

// Nonzero entries of a dense vector, in index order.
struct SparseRow {
  std::vector<int> idx;
  std::vector<Scaled> val;
};

SparseRow nonzeros(const FxVector& v) {
  SparseRow r;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (v[i] != 0) {
      r.idx.push_back(static_cast<int>(i));
      r.val.push_back(v[i]);
    }
  return r;
}

// One query against keys/values 0..count-1. Returns the value-space output
// and optionally writes the attention weights.
FxVector attend(const FxVector& q, const std::vector<FxVector>& keys, const std::vector<SparseRow>& values,
                std::size_t count, Eigen::Index value_dim, const PrecisionSpec& spec, Scaled* weights_out) {
  std::vector<Scaled> e(count);
  Scaled z = 0;
  for (std::size_t j = 0; j < count; ++j) {
    const Scaled s = raw::inner({q.data(), static_cast<std::size_t>(q.size())},
                                {keys[j].data(), static_cast<std::size_t>(keys[j].size())}, spec);
    e[j] = raw::exp(s, spec);
    z = raw::add(z, e[j], spec);
  }
  if (z == 0) throw std::runtime_error("attention: all scores masked (normaliser is zero)");
  FxVector out = FxVector::Zero(value_dim);
  for (std::size_t j = 0; j < count; ++j) {
    const Scaled wj = e[j] == 0 ? 0 : raw::div(e[j], z, spec);
    if (weights_out) weights_out[j] = wj;
    if (wj == 0) continue;
    const SparseRow& v = values[j];
    for (std::size_t t = 0; t < v.idx.size(); ++t) out[v.idx[t]] = raw::add(out[v.idx[t]], raw::mul(wj, v.val[t], spec), spec);
  }
  return out;
}

FxVector ff_row(const FeedForward& ff, const Eigen::Ref<const FxVector>& x, const PrecisionSpec& spec) {
  if (ff.w1.rows() == 0) return FxVector::Zero(x.size());
  FxVector hidden = apply_sparse(ff.w1, x, spec);
  for (Eigen::Index k = 0; k < hidden.size(); ++k) {
    const Scaled v = raw::add(hidden[k], ff.b[k], spec);
    hidden[k] = v > 0 ? v : 0;
  }
  return apply_sparse(ff.w2, hidden, spec);
}

void add_into(Eigen::Ref<FxVector> x, const FxVector& y, const PrecisionSpec& spec) {
  for (Eigen::Index k = 0; k < x.size(); ++k)
    if (y[k] != 0) x[k] = raw::add(x[k], y[k], spec);
}

}  // namespace

void TfWeights::validate() const {
  const auto& p = precision;
  const auto d = static_cast<Eigen::Index>(embed_dim);
  if (embed_dim < 1) throw ValidationError("weights: embed_dim must be positive");
  if (vocab.empty()) throw ValidationError("weights: empty vocabulary");
  check_shape(word_embed, static_cast<Eigen::Index>(vocab.size()), d, "word embedding");
  if (pos_embed.rows() < 1) throw ValidationError("weights: empty positional table");
  check_shape(pos_embed, pos_embed.rows(), d, "positional embedding");
  check_shape(out_proj, static_cast<Eigen::Index>(vocab.size()), d, "output projection");
  check_range(word_embed, p, "word embedding");
  check_range(pos_embed, p, "positional embedding");
  check_range(out_proj, p, "output projection");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string tag = "layer " + std::to_string(l) + " ";
    const auto& a = layers[l].attn;
    Eigen::Index vsum = 0;
    for (std::size_t h = 0; h < a.heads.size(); ++h) {
      const auto& hd = a.heads[h];
      check_shape(hd.query, hd.query.rows(), d, tag + "query");
      check_shape(hd.key, hd.query.rows(), d, tag + "key");
      check_shape(hd.value, hd.value.rows(), d, tag + "value");
      check_range(hd.query, p, tag + "query");
      check_range(hd.key, p, tag + "key");
      check_range(hd.value, p, tag + "value");
      vsum += hd.value.rows();
    }
    if (!a.heads.empty()) {
      check_shape(a.out, d, vsum, tag + "attention output");
      check_range(a.out, p, tag + "attention output");
    }
    if (mode == RunMode::Cot && !a.heads.empty() && a.scope != Scope::Causal)
      throw ValidationError("weights: " + tag + "uses full attention in cot mode");
    const auto& ff = layers[l].ff;
    if (ff.w1.rows() > 0) {
      check_shape(ff.w1, ff.w1.rows(), d, tag + "W1");
      check_shape(ff.w2, d, ff.w1.rows(), tag + "W2");
      if (ff.b.size() != ff.w1.rows()) throw ValidationError("weights: " + tag + "bias length mismatch");
      check_range(ff.w1, p, tag + "W1");
      check_range(ff.w2, p, tag + "W2");
      for (Eigen::Index k = 0; k < ff.b.size(); ++k)
        if (ff.b[k] > p.max_scaled() || ff.b[k] < -p.max_scaled()) throw ValidationError("weights: " + tag + "bias out of range");
    }
  }
  if (output_len < 0 || budget < 0) throw ValidationError("weights: negative schedule values");
}

std::int64_t TfWeights::parameter_count(bool include_embeddings) const {
  std::int64_t n = out_proj.nonZeros();
  if (include_embeddings) n += word_embed.nonZeros() + pos_embed.nonZeros();
  for (const auto& l : layers) {
    for (const auto& h : l.attn.heads) n += h.query.nonZeros() + h.key.nonZeros() + h.value.nonZeros();
    if (!l.attn.heads.empty()) n += l.attn.out.nonZeros();
    n += l.ff.w1.nonZeros() + l.ff.w2.nonZeros() + (l.ff.b.array() != 0).count();
  }
  return n;
}

FxVector apply_sparse(const SparseW& w, const Eigen::Ref<const FxVector>& x, const PrecisionSpec& spec) {
  if (w.cols() != x.size()) throw std::invalid_argument("apply_sparse: shape mismatch");
  FxVector out(w.rows());
  for (int r = 0; r < w.outerSize(); ++r) {
    Scaled acc = 0;
    for (SparseW::InnerIterator it(w, r); it; ++it) {
      const Scaled xv = x[it.col()];
      if (xv != 0) acc = raw::add(acc, raw::mul(it.value(), xv, spec), spec);
    }
    out[r] = acc;
  }
  return out;
}

FxMatrix embed(const TfWeights& w, const std::vector<int>& tokens) {
  const auto n = static_cast<Eigen::Index>(tokens.size());
  if (n > w.max_len()) throw ValidationError("embed: sequence longer than positional table");
  FxMatrix h = FxMatrix::Zero(n, w.embed_dim);
  for (Eigen::Index p = 0; p < n; ++p) {
    const int tok = tokens[p];
    if (tok < 0 || tok >= static_cast<int>(w.vocab.size())) throw ValidationError("embed: token outside vocabulary");
    for (SparseW::InnerIterator it(w.word_embed, tok); it; ++it) h(p, it.col()) = it.value();
    for (SparseW::InnerIterator it(w.pos_embed, static_cast<int>(p)); it; ++it)
      h(p, it.col()) = raw::add(h(p, it.col()), it.value(), w.precision);
  }
  return h;
}

FxMatrix attention_layer(const FxMatrix& h, const AttentionParams& p, const PrecisionSpec& spec, AttentionAudit* audit) {
  const Eigen::Index n = h.rows();
  FxMatrix out = FxMatrix::Zero(n, h.cols());
  if (p.heads.empty()) return out;
  Eigen::Index vsum = 0;
  for (const auto& hd : p.heads) vsum += hd.value.rows();
  FxMatrix concat = FxMatrix::Zero(n, vsum);
  Eigen::Index voff = 0;
  if (audit) audit->weights.clear();
  for (const auto& hd : p.heads) {
    std::vector<FxVector> qs(n), ks(n);
    std::vector<SparseRow> vs(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const FxVector row = h.row(i).transpose();
      qs[i] = apply_sparse(hd.query, row, spec);
      ks[i] = apply_sparse(hd.key, row, spec);
      vs[i] = nonzeros(apply_sparse(hd.value, row, spec));
    }
    FxMatrix wts;
    if (audit) wts = FxMatrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const std::size_t count = p.scope == Scope::Causal ? static_cast<std::size_t>(i + 1) : static_cast<std::size_t>(n);
      const FxVector a = attend(qs[i], ks, vs, count, hd.value.rows(), spec, audit ? wts.row(i).data() : nullptr);
      concat.block(i, voff, 1, a.size()) = a.transpose();
    }
    if (audit) audit->weights.push_back(std::move(wts));
    voff += hd.value.rows();
  }
  for (Eigen::Index i = 0; i < n; ++i) out.row(i) = apply_sparse(p.out, concat.row(i).transpose(), spec).transpose();
  return out;
}

FxMatrix ff_layer(const FxMatrix& h, const FeedForward& ff, const PrecisionSpec& spec) {
  FxMatrix out(h.rows(), h.cols());
  for (Eigen::Index i = 0; i < h.rows(); ++i) out.row(i) = ff_row(ff, h.row(i).transpose(), spec).transpose();
  return out;
}

FxMatrix block_forward(const FxMatrix& h, const TfWeights& w, std::vector<AttentionAudit>* audits) {
  FxMatrix x = h;
  const auto& spec = w.precision;
  if (audits) audits->clear();
  for (const auto& layer : w.layers) {
    AttentionAudit audit;
    const FxMatrix a = attention_layer(x, layer.attn, spec, audits ? &audit : nullptr);
    if (audits) audits->push_back(std::move(audit));
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (Eigen::Index c = 0; c < x.cols(); ++c)
        if (a(i, c) != 0) x(i, c) = raw::add(x(i, c), a(i, c), spec);
    const FxMatrix f = ff_layer(x, layer.ff, spec);
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (Eigen::Index c = 0; c < x.cols(); ++c)
        if (f(i, c) != 0) x(i, c) = raw::add(x(i, c), f(i, c), spec);
  }
  return x;
}

FxVector logits(const TfWeights& w, const Eigen::Ref<const FxVector>& h) { return apply_sparse(w.out_proj, h, w.precision); }

int argmax_token(const FxVector& z) {
  int best = 0;
  for (Eigen::Index i = 1; i < z.size(); ++i)
    if (z[i] > z[best]) best = static_cast<int>(i);
  return best;
}

int sample_token(const FxVector& z, const PrecisionSpec& spec, std::mt19937_64& rng) {
  for (Eigen::Index i = 0; i < z.size(); ++i)
    if (z[i] <= 0) throw ValidationError("multinomial decoding needs every logit > 0");
  const Scaled total = raw::sum_iter({z.data(), static_cast<std::size_t>(z.size())}, spec);
  std::vector<Scaled> p(z.size());
  Scaled mass = 0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    p[i] = raw::div(z[i], total, spec);
    mass += p[i];
  }
  if (mass <= 0) throw ValidationError("multinomial decoding: probabilities round to zero");
  const Scaled u = std::uniform_int_distribution<Scaled>(0, mass - 1)(rng);
  Scaled acc = 0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    acc += p[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(z.size()) - 1;
}

std::uint64_t digest(const Eigen::Ref<const FxMatrix>& h) {
  std::uint64_t x = 0xcbf29ce484222325ULL;
  for (Eigen::Index i = 0; i < h.rows(); ++i)
    for (Eigen::Index c = 0; c < h.cols(); ++c) {
      auto v = static_cast<std::uint64_t>(h(i, c));
      for (int b = 0; b < 8; ++b) {
        x ^= (v >> (8 * b)) & 0xff;
        x *= 0x100000001b3ULL;
      }
    }
  return x;
}

std::int64_t saturated_entries(const Eigen::Ref<const FxMatrix>& h, const PrecisionSpec& spec) {
  return (h.array().abs() == spec.max_scaled()).count();
}

namespace {

// Causal decoder state: per layer, per head, the keys and values of every
// processed position. Appending a position never changes earlier rows.
class CotCache {
 public:
  explicit CotCache(const TfWeights& w) : w_(w), keys_(w.layers.size()), values_(w.layers.size()) {
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
      keys_[l].resize(w.layers[l].attn.heads.size());
      values_[l].resize(w.layers[l].attn.heads.size());
    }
  }

  // Runs a new position through every layer; returns its final row.
  FxVector push(int token, int position, std::vector<AttentionAudit>* audits) {
    const auto& spec = w_.precision;
    FxMatrix e = embed_one(token, position);
    FxVector x = e.row(0).transpose();
    if (audits) audits->assign(w_.layers.size(), {});
    for (std::size_t l = 0; l < w_.layers.size(); ++l) {
      const auto& attn = w_.layers[l].attn;
      if (!attn.heads.empty()) {
        Eigen::Index vsum = 0;
        for (const auto& hd : attn.heads) vsum += hd.value.rows();
        FxVector concat = FxVector::Zero(vsum);
        Eigen::Index voff = 0;
        for (std::size_t h = 0; h < attn.heads.size(); ++h) {
          const auto& hd = attn.heads[h];
          keys_[l][h].push_back(apply_sparse(hd.key, x, spec));
          values_[l][h].push_back(nonzeros(apply_sparse(hd.value, x, spec)));
          const FxVector q = apply_sparse(hd.query, x, spec);
          const std::size_t count = keys_[l][h].size();
          std::vector<Scaled> wts(count, 0);
          const FxVector a = attend(q, keys_[l][h], values_[l][h], count, hd.value.rows(), spec, wts.data());
          if (audits) {
            FxMatrix m(1, static_cast<Eigen::Index>(count));
            for (std::size_t j = 0; j < count; ++j) m(0, static_cast<Eigen::Index>(j)) = wts[j];
            (*audits)[l].weights.push_back(std::move(m));
          }
          concat.segment(voff, a.size()) = a;
          voff += a.size();
        }
        add_into(x, apply_sparse(attn.out, concat, spec), spec);
      }
      add_into(x, ff_row(w_.layers[l].ff, x, spec), spec);
    }
    return x;
  }

 private:
  FxMatrix embed_one(int token, int position) const {
    if (position > w_.max_len()) throw ValidationError("cot: position beyond positional table");
    if (token < 0 || token >= static_cast<int>(w_.vocab.size())) throw ValidationError("cot: token outside vocabulary");
    FxMatrix h = FxMatrix::Zero(1, w_.embed_dim);
    for (SparseW::InnerIterator it(w_.word_embed, token); it; ++it) h(0, it.col()) = it.value();
    for (SparseW::InnerIterator it(w_.pos_embed, position - 1); it; ++it)
      h(0, it.col()) = raw::add(h(0, it.col()), it.value(), w_.precision);
    return h;
  }

  const TfWeights& w_;
  std::vector<std::vector<std::vector<FxVector>>> keys_;
  std::vector<std::vector<std::vector<SparseRow>>> values_;
};

void check_cot_args(const TfWeights& w, const std::vector<int>& x, int budget, int output_len) {
  if (w.mode != RunMode::Cot) throw ValidationError("run_cot: weights are not in cot mode");
  if (x.empty()) throw ValidationError("run_cot: empty input");
  if (budget < 0) throw ValidationError("run_cot: negative budget");
  if (output_len < 0 || output_len > budget) throw ValidationError("run_cot: output length exceeds budget");
  if (static_cast<std::int64_t>(x.size()) + budget - 1 > w.max_len())
    throw ValidationError("run_cot: input plus budget exceeds the positional table (" + std::to_string(w.max_len()) + ")");
}

int decode_token(const FxVector& z, Decode decode, const PrecisionSpec& spec, std::mt19937_64& rng) {
  return decode == Decode::Argmax ? argmax_token(z) : sample_token(z, spec, rng);
}

}  // namespace

RunResult run_cot(const TfWeights& w, const std::vector<int>& x, int budget, Decode decode, std::mt19937_64& rng,
                  int output_len, const TraceOptions& opts) {
  check_cot_args(w, x, budget, output_len);
  CotCache cache(w);
  FxVector last;
  std::vector<AttentionAudit> audits;
  int pos = 0;
  for (int tok : x) last = cache.push(tok, ++pos, opts.keep_attention ? &audits : nullptr);
  RunResult r;
  for (int t = 0; t < budget; ++t) {
    const int tok = decode_token(logits(w, last), decode, w.precision, rng);
    TraceStep step;
    step.token = tok;
    step.state_digest = digest(last.transpose());
    step.saturated = saturated_entries(last.transpose(), w.precision);
    if (opts.keep_attention) step.attention = audits;
    if (opts.keep_states) step.state = last.transpose();
    r.trace.steps.push_back(std::move(step));
    r.appended.push_back(tok);
    if (t + 1 < budget) last = cache.push(tok, ++pos, opts.keep_attention ? &audits : nullptr);
  }
  r.output.assign(r.appended.end() - output_len, r.appended.end());
  return r;
}

RunResult run_cot_reference(const TfWeights& w, const std::vector<int>& x, int budget, Decode decode,
                            std::mt19937_64& rng, int output_len) {
  check_cot_args(w, x, budget, output_len);
  std::vector<int> seq = x;
  RunResult r;
  for (int t = 0; t < budget; ++t) {
    const FxMatrix h = block_forward(embed(w, seq), w);
    const FxVector last = h.row(h.rows() - 1).transpose();
    const int tok = decode_token(logits(w, last), decode, w.precision, rng);
    TraceStep step;
    step.token = tok;
    step.state_digest = digest(last.transpose());
    step.saturated = saturated_entries(last.transpose(), w.precision);
    r.trace.steps.push_back(std::move(step));
    r.appended.push_back(tok);
    seq.push_back(tok);
  }
  r.output.assign(r.appended.end() - output_len, r.appended.end());
  return r;
}

RunResult run_loop(const TfWeights& w, const std::vector<int>& x, int loops, int output_len, const TraceOptions& opts) {
  if (w.mode != RunMode::Loop) throw ValidationError("run_loop: weights are not in loop mode");
  if (x.empty()) throw ValidationError("run_loop: empty input");
  if (loops < 0) throw ValidationError("run_loop: negative loop count");
  if (output_len < 0 || output_len > static_cast<int>(x.size()))
    throw ValidationError("run_loop: output length exceeds input length");
  FxMatrix h = embed(w, x);
  RunResult r;
  for (int k = 0; k < loops; ++k) {
    std::vector<AttentionAudit> audits;
    h = block_forward(h, w, opts.keep_attention ? &audits : nullptr);
    TraceStep step;
    step.state_digest = digest(h);
    step.saturated = saturated_entries(h, w.precision);
    if (opts.keep_attention) step.attention = std::move(audits);
    if (opts.keep_states) step.state = h;
    r.trace.steps.push_back(std::move(step));
  }
  const auto n = static_cast<Eigen::Index>(x.size());
  for (int k = 0; k < output_len; ++k) {
    const FxVector row = h.row(n - output_len + k).transpose();
    r.output.push_back(argmax_token(logits(w, row)));
  }
  r.final_state = std::move(h);
  return r;
}

}  // namespace dagtf::tfm
