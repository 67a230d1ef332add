#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <map>

#include "doctest.h"
#include "dagtf/randapprox.hpp"
#include "dagtf/rng.hpp"

using namespace dagtf;
using namespace dagtf::approx;

namespace {

DnfFormula five_var_formula(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return random_dnf(5, 10, 3, rng);
}

DnfFormula satisfiable_formula(int n, int m, int w, std::mt19937_64& rng) {
  for (;;) {
    auto f = random_dnf(n, m, w, rng);
    if (exact_count(f) > 0) return f;
  }
}

double tv_to_uniform(const DnfFormula& f, const std::map<Assignment, int>& counts, int total) {
  const auto sat = satisfying_assignments(f);
  const double u = 1.0 / sat.size();
  double tv = 0;
  for (Assignment a : sat) {
    auto it = counts.find(a);
    tv += std::abs((it == counts.end() ? 0 : it->second) / static_cast<double>(total) - u);
  }
  for (const auto& [a, c] : counts)
    if (!f.satisfied_by(a)) tv += c / static_cast<double>(total);
  return tv / 2;
}

Rational path_probability(ConditionalModel& m, Assignment y, int n) {
  Rational p = 1;
  std::vector<bool> prefix;
  for (int i = 0; i < n; ++i) {
    const Rational p1 = m.prob_one(prefix);
    const bool bit = (y >> i) & 1;
    p *= bit ? p1 : Rational(1) - p1;
    prefix.push_back(bit);
  }
  return p;
}

// Ignores the formula: one half everywhere.
struct HalfModel : ConditionalModel {
  Rational prob_one(const std::vector<bool>&) override { return Rational(1, 2); }
};

}  // namespace

TEST_CASE("formula validation and file format") {
  CHECK_THROWS_AS(DnfFormula(3, {{{0, true}, {0, false}}}), ValidationError);
  CHECK_THROWS_AS(DnfFormula(3, {{{3, true}}}), ValidationError);
  CHECK_THROWS_AS(DnfFormula(3, {{}}), ValidationError);
  CHECK_THROWS_AS(DnfFormula(0, {}), ValidationError);

  const auto f = five_var_formula(1);
  CHECK(parse_dnf(print_dnf(f)) == f);
  const auto g = parse_dnf("c two clauses\np dnf 4 2\n1 -3 0\n2\n4 0\n");
  REQUIRE(g.clause_count() == 2);
  CHECK(g.clauses()[0] == std::vector<Literal>{{0, true}, {2, false}});
  CHECK(g.clauses()[1] == std::vector<Literal>{{1, true}, {3, true}});
  CHECK_THROWS_AS(parse_dnf("p dnf 3 1\n1 2\n"), ParseError);
  CHECK_THROWS_AS(parse_dnf("p dnf 3 2\n1 2 0\n"), ParseError);
  CHECK_THROWS_AS(parse_dnf("p dnf 3 1\n1 x 0\n"), ParseError);
  try {
    parse_dnf("p dnf 3 1\n\n1 7 0\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("exact count and coverage") {
  CHECK(exact_count(DnfFormula(1, {{{0, true}}})) == 1);
  CHECK(exact_count(DnfFormula(2, {{{0, true}}, {{1, true}}})) == 3);
  CHECK(exact_count(DnfFormula(3, {})) == 0);
  CHECK_THROWS_AS(exact_count(DnfFormula(25, {{{0, true}}})), ValidationError);

  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto f = five_var_formula(s);
    CHECK(coverage_size(f) == 40);
    CHECK(coverage_size(f) >= exact_count(f));
  }
  const DnfFormula one(6, {{{1, true}, {4, false}}});
  CHECK(coverage_size(one) == 16);
  CHECK(exact_count(one) == 16);
  const DnfFormula twice(3, {{{0, true}}, {{0, true}}});
  CHECK(coverage_size(twice) == 8);
  CHECK(exact_count(twice) == 4);
}

TEST_CASE("trial space enumeration on tiny formulas") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 200; ++t) {
    const int n = 1 + t % 3, m = 1 + (t / 3) % 3;
    const int w = 1 + static_cast<int>(rng() % n);
    const auto f = random_dnf(n, m, w, rng);
    // Every (clause, completion) pair carries weight 1/U.
    std::int64_t successes = 0;
    Rational klm_sum = 0;
    std::int64_t pairs = 0;
    for (int j = 0; j < f.clause_count(); ++j)
      for (Assignment a = 0; a < (Assignment{1} << n); ++a)
        if (f.clause_holds(j, a)) {
          ++pairs;
          successes += f.first_satisfied(a) == j;
          klm_sum += Rational(coverage_size(f), f.satisfied_count(a));
        }
    CHECK(pairs == coverage_size(f));
    CHECK(Rational(successes, pairs) == Rational(exact_count(f), coverage_size(f)));
    CHECK(klm_sum / pairs == exact_count(f));
  }
}

TEST_CASE("karp-luby trials") {
  std::mt19937_64 rng(5);
  const DnfFormula single(4, {{{0, true}, {2, false}}});
  for (int t = 0; t < 100; ++t) {
    CHECK(kl_trial(single, rng).success);
    CHECK(klm_trial(single, rng) == 4);
  }
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto f = five_var_formula(100 + s);
    const double p = static_cast<double>(exact_count(f)) / 40.0;
    int hits = 0;
    Rational sum = 0;
    for (int t = 0; t < 100000; ++t) {
      const auto tr = kl_trial(f, rng, false);
      hits += tr.success;
      CHECK(f.clause_holds(tr.clause, tr.assignment));
    }
    CHECK(std::abs(hits / 1e5 - p) <= 0.01);
    auto rep = fpras_count(f, 0.5, 0.5, rng, Estimator::Coverage, 100000);
    CHECK(std::abs(to_double(rep.estimate) / exact_count(f) - 1) <= 0.01);
  }
}

TEST_CASE("trial trace record") {
  std::mt19937_64 rng(9);
  const DnfFormula f(3, {{{1, true}, {2, false}}, {{0, false}}});
  const auto t = kl_trial(f, rng);
  const std::vector<std::string> formula{"c1", "2=", "+1", "3=", "-1", "c2", "1=", "-1"};
  REQUIRE(t.trace.size() > formula.size());
  CHECK(std::vector<std::string>(t.trace.begin(), t.trace.begin() + 8) == formula);
  CHECK(t.trace[8] == "<sep>");
  CHECK(t.trace.back() == "<eos>");
  CHECK(t.trace[t.trace.size() - 2] == (t.check_holds ? "Success" : "Fail"));
  int seps = 0;
  for (const auto& tok : t.trace) seps += tok == "<sep>";
  CHECK(seps == 4);
  // Assignment section lists every variable.
  auto it = std::find(t.trace.begin(), t.trace.end(), "<sep>");
  it = std::find(it + 1, t.trace.end(), "<sep>");
  CHECK(*(it + 1) == "1=");
  CHECK(*(it + 5) == "3=");
  CHECK(*(it + 7) == "<sep>");
  CHECK(t.check_holds == f.clause_holds(t.check_clause, t.assignment));
}

TEST_CASE("fpras trial count and guarantee") {
  CHECK(fpras_trials(10, 0.1, 0.1) == 8988);
  for (double eps : {0.3, 0.2, 0.1, 0.05}) {
    const auto t1 = fpras_trials(10, eps, 0.1), t2 = fpras_trials(10, eps / 2, 0.1);
    CHECK(t2 >= 4 * t1 - 3);
    CHECK(t2 <= 4 * t1);
  }
  CHECK_THROWS_AS(fpras_trials(10, 0, 0.1), ValidationError);
  CHECK_THROWS_AS(fpras_trials(10, 0.1, 1.0), ValidationError);

  std::mt19937_64 rng(13);
  const DnfFormula single(5, {{{0, true}, {1, true}, {2, true}}});
  CHECK(fpras_count(single, 0.3, 0.3, rng).estimate == 4);
  CHECK(fpras_count(DnfFormula(3, {}), 0.3, 0.3, rng).estimate == 0);

  int failures = 0;
  for (int i = 0; i < 200; ++i) {
    auto frng = make_stream(7, "formula/" + std::to_string(i));
    const auto f = random_dnf(5, 10, 3, frng);
    const auto rep = fpras_count(f, 0.1, 0.1, rng);
    CHECK(rep.trials == 8988);
    failures += std::abs(to_double(rep.estimate) / exact_count(f) - 1) > 0.1;
  }
  CHECK(failures <= 30);
}

TEST_CASE("median boosting") {
  CHECK(median_runs(0.1, 0.05) == 150);
  CHECK_THROWS_AS(median_runs(0.5, 0.05), ValidationError);
  CHECK_THROWS_AS(median_runs(0, 0.05), ValidationError);
  std::mt19937_64 rng(17);
  CHECK(median_boost([](std::mt19937_64&) { return Rational(7); }, 0.3, 0.1, rng).value == 7);
  // Correct answer 1 with probability 0.6, otherwise 0 or 2.
  auto weak = [](std::mt19937_64& r) -> Rational {
    const double u = std::uniform_real_distribution<double>(0, 1)(r);
    return u < 0.6 ? 1 : (u < 0.8 ? 0 : 2);
  };
  int failures = 0;
  for (int rep = 0; rep < 2000; ++rep) {
    const auto m = median_boost(weak, 0.1, 0.05, rng);
    CHECK(m.runs == 150);
    failures += m.value != 1;
  }
  CHECK(failures <= 140);
}

TEST_CASE("extension counts") {
  std::mt19937_64 rng(19);
  for (int k = 0; k < 20; ++k) {
    const auto f = random_dnf(5, 6, 2 + k % 3, rng);
    CHECK(ext_count(f, {}) == exact_count(f));
    for (Assignment a = 0; a < 32; ++a) {
      std::vector<bool> full;
      for (int i = 0; i < 5; ++i) full.push_back((a >> i) & 1);
      CHECK(ext_count(f, full) == (f.satisfied_by(a) ? 1u : 0u));
    }
    // Telescoping over every prefix.
    for (int len = 0; len < 5; ++len)
      for (Assignment a = 0; a < (Assignment{1} << len); ++a) {
        std::vector<bool> p;
        for (int i = 0; i < len; ++i) p.push_back((a >> i) & 1);
        auto p0 = p, p1 = p;
        p0.push_back(false);
        p1.push_back(true);
        CHECK(ext_count(f, p0) + ext_count(f, p1) == ext_count(f, p));
      }
  }
  const auto f = five_var_formula(4);
  const Rational e = ext_estimate(f, {}, 0.05, 0.01, rng);
  CHECK(std::abs(to_double(e) / exact_count(f) - 1) <= 0.05);
  // A satisfied clause makes the estimate exact.
  const DnfFormula g(4, {{{0, true}}, {{1, true}, {2, true}}});
  CHECK(ext_estimate(g, {true}, 0.5, 0.5, rng) == 8);
}

TEST_CASE("autoregressive sampler") {
  std::mt19937_64 rng(23);
  const DnfFormula unique(4, {{{0, true}, {1, false}, {2, true}, {3, true}}});
  ExactModel um(unique);
  for (int t = 0; t < 50; ++t) CHECK(autoregressive_sample(unique, um, rng).assignment == 0b1101);
  CHECK_THROWS_AS(autoregressive_sample(DnfFormula(3, {}), um, rng), ValidationError);

  for (int k = 0; k < 5; ++k) {
    const auto f = satisfiable_formula(4, 3, 2, rng);
    ExactModel m(f);
    std::map<Assignment, int> counts;
    for (int t = 0; t < 100000; ++t) {
      const auto s = autoregressive_sample(f, m, rng);
      ++counts[s.assignment];
      if (t < 100) {
        Rational prod = 1;
        for (const auto& q : s.conditionals) prod *= q;
        CHECK(prod == s.probability);
      }
    }
    CHECK(tv_to_uniform(f, counts, 100000) <= 0.02);
    // Conditionals normalize and telescope to 1/|F|.
    for (Assignment y : satisfying_assignments(f)) CHECK(path_probability(m, y, 4) == Rational(1, exact_count(f)));
  }
}

TEST_CASE("rejection sampler in exact mode") {
  CHECK(rejection_rounds(0.01) == 23);
  std::mt19937_64 rng(29);
  const auto f = satisfiable_formula(5, 10, 3, rng);
  ExactModel m(f);
  int accepted = 0, attempts = 0;
  std::map<Assignment, int> counts;
  const int total = 20000;
  for (int t = 0; t < total; ++t) {
    const auto r = fpaus_sample(f, m, 0.01, rng);
    CHECK(r.epsilon == 0);
    CHECK(static_cast<int>(r.acceptance.size()) == r.attempts);
    attempts += r.attempts;
    if (!r.accepted) continue;
    CHECK(f.satisfied_by(r.sample));
    ++accepted;
    ++counts[r.sample];
  }
  CHECK(accepted >= total * 0.99);
  CHECK(static_cast<double>(accepted) / attempts >= std::exp(-1.5) - 0.05);
  CHECK(tv_to_uniform(f, counts, accepted) <= 0.03);
}

TEST_CASE("rejection sampler frequencies pass chi-square") {
  int passes = 0;
  for (int k = 0; k < 100; ++k) {
    auto rng = make_stream(31, "chi/" + std::to_string(k));
    const auto f = satisfiable_formula(5, 10, 3, rng);
    const auto sat = satisfying_assignments(f);
    ExactModel m(f);
    const int total = 40 * static_cast<int>(sat.size());
    std::map<Assignment, int> counts;
    for (int t = 0; t < total;) {
      const auto r = fpaus_sample(f, m, 0.01, rng);
      if (r.accepted) ++counts[r.sample], ++t;
    }
    if (sat.size() == 1) {
      ++passes;
      continue;
    }
    double stat = 0;
    for (Assignment a : sat) {
      const double d = counts[a] - 40.0;
      stat += d * d / 40.0;
    }
    boost::math::chi_squared chi(static_cast<double>(sat.size() - 1));
    passes += stat <= boost::math::quantile(chi, 0.99);
  }
  CHECK(passes >= 95);
}

TEST_CASE("rejection sampler with estimated counts") {
  std::mt19937_64 rng(37);
  const auto f = satisfiable_formula(5, 10, 3, rng);
  EstimatedModel m(f, EstimatedModel::step_epsilon(5), 0.001, 41);
  CHECK(m.accuracy() == doctest::Approx(1.0 / 21));
  // Conditionals stay within the per-step band of the exact ones.
  ExactModel exact(f);
  for (Assignment y : satisfying_assignments(f)) {
    const double ratio = to_double(path_probability(m, y, 5) / path_probability(exact, y, 5));
    CHECK(ratio >= std::exp(-0.5));
    CHECK(ratio <= std::exp(0.5));
  }
  std::map<Assignment, int> counts;
  const int total = 20000;
  int accepted = 0;
  for (int t = 0; t < total; ++t) {
    const auto r = fpaus_sample(f, m, 0.01, rng);
    if (r.accepted) ++counts[r.sample], ++accepted;
  }
  CHECK(accepted >= total * 0.99);
  CHECK(tv_to_uniform(f, counts, accepted) <= 0.1);
  // Fresh estimator randomness per call still yields satisfying samples.
  for (int t = 0; t < 3; ++t) {
    const auto r = fpaus_sample(f, 0.1, rng);
    if (r.accepted) CHECK(f.satisfied_by(r.sample));
    CHECK(r.epsilon == doctest::Approx(1.0 / 21));
  }
}

TEST_CASE("weak probable approximation check") {
  std::mt19937_64 rng(43);
  const auto f = satisfiable_formula(5, 10, 3, rng);
  auto exact = [&](std::mt19937_64&) { return std::make_unique<ExactModel>(f); };
  const auto ok = weak_probable_check(exact, f, 10, 0.2, 200, 8, rng);
  CHECK(ok.passed);
  CHECK(ok.min_hit_rate == 1.0);

  auto fpras = [&](std::mt19937_64& r) { return std::make_unique<EstimatedModel>(f, 1.0 / 21, 0.05, r()); };
  CHECK(weak_probable_check(fpras, f, 10, 0.2, 200, 4, rng).passed);

  const DnfFormula skew(3, {{{0, true}, {1, true}, {2, true}}, {{0, false}, {1, true}}});
  auto half = [](std::mt19937_64&) { return std::make_unique<HalfModel>(); };
  const auto bad = weak_probable_check(half, skew, 10, 0.2, 200, 8, rng);
  CHECK_FALSE(bad.passed);
  CHECK_THROWS_AS(weak_probable_check(exact, f, 10, 0.05, 50, 8, rng), ValidationError);
}
