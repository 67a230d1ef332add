#include <random>
#include <sstream>

#include "doctest.h"
#include "dagtf/machine.hpp"

using namespace dagtf;
using namespace dagtf::tfm;

namespace {

// Vocabulary {a, b}; embedding = token one-hot in a 2-dim stream plus a
// constant 1 in dim 2; no layers; OUT reads the one-hot.
TfWeights copy_last_token(int max_len) {
  TfWeights w;
  w.precision = PrecisionSpec::make(4, 2);
  w.embed_dim = 3;
  w.vocab = {"a", "b"};
  const Scaled one = w.precision.one();
  w.word_embed = make_sparse(2, 3, {{0, 0, one}, {1, 1, one}, {0, 2, one}, {1, 2, one}});
  w.pos_embed = make_sparse(max_len, 3, {});
  w.out_proj = make_sparse(2, 3, {{0, 0, one}, {1, 1, one}});
  w.mode = RunMode::Cot;
  return w;
}

SparseW random_sparse(int rows, int cols, std::mt19937_64& rng, Scaled range, double density) {
  std::vector<Triplet> t;
  std::uniform_int_distribution<Scaled> val(-range, range);
  std::bernoulli_distribution keep(density);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      if (keep(rng)) t.emplace_back(r, c, val(rng));
  return make_sparse(rows, cols, std::move(t));
}

TfWeights random_cot(std::mt19937_64& rng, int layers, int heads) {
  TfWeights w;
  w.precision = PrecisionSpec::make(6, 3);
  w.embed_dim = 6;
  w.vocab = {"p", "q", "r"};
  w.mode = RunMode::Cot;
  w.word_embed = random_sparse(3, 6, rng, 8, 0.7);
  w.pos_embed = random_sparse(24, 6, rng, 8, 0.5);
  w.out_proj = random_sparse(3, 6, rng, 8, 0.8);
  for (int l = 0; l < layers; ++l) {
    Layer layer;
    for (int h = 0; h < heads; ++h)
      layer.attn.heads.push_back({random_sparse(2, 6, rng, 6, 0.6), random_sparse(2, 6, rng, 6, 0.6),
                                  random_sparse(3, 6, rng, 8, 0.6)});
    layer.attn.out = random_sparse(6, 3 * heads, rng, 8, 0.5);
    layer.ff.w1 = random_sparse(5, 6, rng, 8, 0.6);
    layer.ff.b = FxVector::Zero(5);
    for (int k = 0; k < 5; ++k) layer.ff.b[k] = static_cast<Scaled>(rng() % 9) - 4;
    layer.ff.w2 = random_sparse(6, 5, rng, 8, 0.6);
    w.layers.push_back(std::move(layer));
  }
  w.validate();
  return w;
}

}  // namespace

TEST_CASE("uniform attention averages values") {
  const auto spec = PrecisionSpec::make(4, 3);
  const Scaled one = spec.one();
  AttentionParams p;
  p.scope = Scope::Full;
  p.heads.push_back({make_sparse(1, 2, {}), make_sparse(1, 2, {}), make_sparse(2, 2, {{0, 0, one}, {1, 1, one}})});
  p.out = make_sparse(2, 2, {{0, 0, one}, {1, 1, one}});
  // Every position carries the same value and 1/4 is exact: output equals it.
  FxMatrix h(4, 2);
  h << 2 * one, -one, 2 * one, -one, 2 * one, -one, 2 * one, -one;
  const FxMatrix a = attention_layer(h, p, spec);
  for (int i = 0; i < 4; ++i) {
    CHECK(a(i, 0) == 2 * one);
    CHECK(a(i, 1) == -one);
  }
  // N = 1: O V x.
  // Three positions: 1/3 rounds to 3/8, so 2 * 3 * 3/8 = 2.25.
  CHECK(attention_layer(h.topRows(3), p, spec)(0, 0) == 18);
  FxMatrix single(1, 2);
  single << 3, 5;
  CHECK(attention_layer(single, p, spec) == single);
}

TEST_CASE("one-hot codes retrieve the matching position") {
  const int s = 3;
  const auto spec = PrecisionSpec::for_code_bits(s);
  const Scaled one = spec.one();
  const int n = 7;
  // Stream: [pos code (2s) | query code (2s) | value]. Query at position i
  // asks for position target[i].
  const std::vector<int> target{1, 1, 2, 1, 4, 3, 7};
  const int d = 4 * s + 1;
  FxMatrix h = FxMatrix::Zero(n, d);
  for (int i = 0; i < n; ++i) {
    const auto key = fxp::onehot_codes(i + 1, s, spec).key;
    const auto query = fxp::onehot_codes(target[i], s, spec).query;
    for (int k = 0; k < 2 * s; ++k) {
      h(i, k) = key[k];
      h(i, 2 * s + k) = query[k];
    }
    h(i, 4 * s) = (10 + i) * one;
  }
  std::vector<Triplet> qt, kt;
  for (int k = 0; k < 2 * s; ++k) {
    qt.emplace_back(k, 2 * s + k, one);
    kt.emplace_back(k, k, one);
  }
  AttentionParams p;
  p.scope = Scope::Full;
  p.heads.push_back({make_sparse(2 * s, d, qt), make_sparse(2 * s, d, kt), make_sparse(1, d, {{0, 4 * s, one}})});
  p.out = make_sparse(d, 1, {{4 * s, 0, one}});
  AttentionAudit audit;
  const FxMatrix a = attention_layer(h, p, spec, &audit);
  for (int i = 0; i < n; ++i) {
    CHECK(a(i, 4 * s) == (10 + target[i] - 1) * one);
    for (int j = 0; j < n; ++j) CHECK(audit.weights[0](i, j) == (j == target[i] - 1 ? one : 0));
  }
}

TEST_CASE("all-masked scores are an error") {
  // Score -B everywhere under a spec where exp(-B) rounds to 0.
  const auto spec = PrecisionSpec::make(4, 2);
  AttentionParams p;
  p.scope = Scope::Causal;
  p.heads.push_back({make_sparse(1, 1, {{0, 0, spec.max_scaled()}}), make_sparse(1, 1, {{0, 0, -spec.max_scaled()}}),
                     make_sparse(1, 1, {{0, 0, spec.one()}})});
  p.out = make_sparse(1, 1, {{0, 0, spec.one()}});
  FxMatrix h(1, 1);
  h << spec.max_scaled();
  CHECK_THROWS_AS(attention_layer(h, p, spec), std::runtime_error);
}

TEST_CASE("feed-forward fixtures") {
  const auto spec = PrecisionSpec::make(5, 2);
  const Scaled one = spec.one();
  FeedForward zero{make_sparse(3, 4, {}), FxVector::Zero(3), make_sparse(4, 3, {})};
  FxMatrix h = FxMatrix::Constant(2, 4, 3);
  CHECK(ff_layer(h, zero, spec) == FxMatrix::Zero(2, 4));

  // Position selector: stream (x1..x3, e1..e3); zero x_j unless e_j = 1.
  const Scaled B = spec.max_scaled();
  std::vector<Triplet> w1, w2;
  for (int j = 0; j < 3; ++j) {
    w1.emplace_back(j, j, one);
    w1.emplace_back(j, 3 + j, -B);
    w2.emplace_back(j, j, -one);
  }
  FeedForward sel{make_sparse(3, 6, w1), FxVector::Zero(3), make_sparse(6, 3, w2)};
  TfWeights w;
  w.precision = spec;
  w.embed_dim = 6;
  w.layers.push_back({AttentionParams{}, sel});
  FxMatrix x(3, 6);
  for (int i = 0; i < 3; ++i) {
    x.row(i) << 2 * one, one, 3 * one, 0, 0, 0;
    x(i, 3 + i) = one;
  }
  const FxMatrix y = block_forward(x, w);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      CHECK(y(i, j) == (i == j ? x(i, j) : 0));
      CHECK(y(i, 3 + j) == x(i, 3 + j));
    }
}

TEST_CASE("hand-computed single layer") {
  const auto spec = PrecisionSpec::make(4, 2);
  const Scaled one = spec.one();
  TfWeights w;
  w.precision = spec;
  w.embed_dim = 2;
  Layer l;
  l.attn.scope = Scope::Full;
  l.attn.heads.push_back({make_sparse(1, 2, {}), make_sparse(1, 2, {}), make_sparse(2, 2, {{0, 0, one}, {1, 1, one}})});
  l.attn.out = make_sparse(2, 2, {{0, 0, one}, {1, 1, one}});
  l.ff.w1 = make_sparse(2, 2, {{0, 0, one}, {0, 1, one}, {1, 0, one}, {1, 1, -one}});
  l.ff.b = FxVector(2);
  l.ff.b << -one, 0;
  l.ff.w2 = make_sparse(2, 2, {{0, 0, one}, {1, 1, one}});
  w.layers.push_back(l);
  FxMatrix x(2, 2);
  x << one, 0, 0, one;
  FxMatrix expect(2, 2);
  expect << 10, 6, 6, 6;  // (2.5, 1.5), (1.5, 1.5)
  CHECK(block_forward(x, w) == expect);
  // Identity composition.
  TfWeights id;
  id.precision = spec;
  id.embed_dim = 2;
  id.layers.resize(3);
  for (auto& layer : id.layers) layer.ff = {make_sparse(0, 2, {}), FxVector(0), make_sparse(2, 0, {})};
  CHECK(block_forward(x, id) == x);
}

TEST_CASE("copy weights continue the last token") {
  const auto w = copy_last_token(16);
  std::mt19937_64 rng(1);
  const auto r = run_cot(w, {0, 1, 1}, 5, Decode::Argmax, rng, 2);
  CHECK(r.appended == std::vector<int>{1, 1, 1, 1, 1});
  CHECK(r.output == std::vector<int>{1, 1});
  CHECK(r.trace.steps.size() == 5);
  CHECK_THROWS_AS(run_cot(w, {0}, 17, Decode::Argmax, rng, 1), ValidationError);
}

TEST_CASE("multinomial decoding") {
  auto w = copy_last_token(20001);
  // Both logits read the constant dim: (1, 1).
  const Scaled one = w.precision.one();
  w.out_proj = make_sparse(2, 3, {{0, 2, one}, {1, 2, one}});
  std::mt19937_64 a(42), b(42);
  const auto r1 = run_cot(w, {0}, 20000, Decode::Multinomial, a, 1);
  const auto r2 = run_cot(w, {0}, 20000, Decode::Multinomial, b, 1);
  CHECK(r1.appended == r2.appended);

  FxVector z(2);
  z << one, one;
  std::mt19937_64 rng(7);
  int ones = 0;
  for (int t = 0; t < 100000; ++t) ones += sample_token(z, w.precision, rng);
  CHECK(std::abs(ones / 100000.0 - 0.5) <= 0.01);
  z << one, 0;
  CHECK_THROWS(sample_token(z, w.precision, rng));
}

TEST_CASE("cached decoding equals full recomputation") {
  std::mt19937_64 rng(99);
  for (int t = 0; t < 30; ++t) {
    const auto w = random_cot(rng, 1 + static_cast<int>(rng() % 3), 1 + static_cast<int>(rng() % 2));
    std::vector<int> x(1 + rng() % 5);
    for (auto& v : x) v = static_cast<int>(rng() % 3);
    const int budget = 1 + static_cast<int>(rng() % 10);
    std::mt19937_64 r1(t), r2(t);
    try {
      const auto fast = run_cot(w, x, budget, Decode::Argmax, r1, 1);
      const auto slow = run_cot_reference(w, x, budget, Decode::Argmax, r2, 1);
      CHECK(fast.appended == slow.appended);
      for (std::size_t k = 0; k < fast.trace.steps.size(); ++k)
        CHECK(fast.trace.steps[k].state_digest == slow.trace.steps[k].state_digest);
    } catch (const std::runtime_error& e) {
      // A fully masked row is legal for random weights; both paths must agree on it.
      CHECK_THROWS(run_cot_reference(w, x, budget, Decode::Argmax, r2, 1));
    }
  }
}

TEST_CASE("weights round trip") {
  std::mt19937_64 rng(5);
  const auto w = random_cot(rng, 2, 2);
  std::stringstream buf;
  write_weights(w, buf);
  const auto back = read_weights(buf);
  CHECK(back.precision == w.precision);
  CHECK(back.vocab == w.vocab);
  CHECK(back.layers.size() == w.layers.size());
  CHECK(back.parameter_count(true) == w.parameter_count(true));
  std::stringstream again;
  write_weights(back, again);
  CHECK(again.str() == buf.str());
  std::ostringstream dump;
  dump_weights(w, dump);
  CHECK(dump.str().find("precision 6 3") != std::string::npos);
  std::stringstream junk("not weights\n");
  CHECK_THROWS_AS(read_weights(junk), ValidationError);

  auto bad = w;
  bad.layers[0].attn.scope = Scope::Full;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("zero loops echo the input") {
  auto w = copy_last_token(4);
  w.mode = RunMode::Loop;
  const auto r = run_loop(w, {1, 0, 0, 1}, 0, 3);
  CHECK(r.output == std::vector<int>{0, 0, 1});
  CHECK(r.trace.steps.empty());
  CHECK_THROWS_AS(run_loop(w, {1}, 0, 2), ValidationError);
  std::mt19937_64 rng(0);
  CHECK_THROWS_AS(run_cot(w, {1}, 1, Decode::Argmax, rng, 1), ValidationError);
}
