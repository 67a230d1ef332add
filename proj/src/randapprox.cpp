#include "dagtf/randapprox.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace dagtf::approx {

namespace {

using u128 = unsigned __int128;

void check_open_unit(double x, const char* name) {
  if (!(x > 0 && x < 1)) throw ValidationError(std::string(name) + " must lie in (0, 1)");
}

u128 coverage128(const DnfFormula& f) {
  u128 u = 0;
  for (int j = 0; j < f.clause_count(); ++j) u += u128{1} << (f.var_count() - f.width(j));
  return u;
}

// Uniform in [0, bound), bound > 0.
u128 uniform128(u128 bound, std::mt19937_64& rng) {
  if (bound <= u128{~0ULL}) return std::uniform_int_distribution<std::uint64_t>(0, static_cast<std::uint64_t>(bound - 1))(rng);
  int bits = 0;
  while (bits < 128 && (bound - 1) >> bits) ++bits;
  const u128 mask = bits == 128 ? ~u128{0} : (u128{1} << bits) - 1;
  for (;;) {
    const u128 r = ((u128{rng()} << 64) | rng()) & mask;
    if (r < bound) return r;
  }
}

Assignment full_mask(int n) { return n >= 64 ? ~Assignment{0} : (Assignment{1} << n) - 1; }

std::vector<std::string> serialize_assignment(Assignment a, int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) {
    out.push_back(std::to_string(i + 1) + "=");
    out.push_back((a >> i) & 1 ? "+1" : "-1");
  }
  return out;
}

}  // namespace

DnfFormula::DnfFormula(int n, std::vector<std::vector<Literal>> clauses, bool allow_empty)
    : n_(n), clauses_(std::move(clauses)) {
  if (n > 62 || n < (allow_empty ? 0 : 1)) throw ValidationError("dnf: variable count must be in 1..62");
  for (std::size_t j = 0; j < clauses_.size(); ++j) {
    const auto& c = clauses_[j];
    if (c.empty() && !allow_empty) throw ValidationError("dnf: clause " + std::to_string(j + 1) + " is empty");
    Assignment care = 0, value = 0;
    for (const auto& lit : c) {
      if (lit.var < 0 || lit.var >= n)
        throw ValidationError("dnf: clause " + std::to_string(j + 1) + " names variable " +
                              std::to_string(lit.var + 1) + " outside 1.." + std::to_string(n));
      const Assignment bit = Assignment{1} << lit.var;
      if (care & bit)
        throw ValidationError("dnf: clause " + std::to_string(j + 1) + " repeats variable " +
                              std::to_string(lit.var + 1));
      care |= bit;
      if (lit.positive) value |= bit;
    }
    care_.push_back(care);
    value_.push_back(value);
  }
}

bool DnfFormula::satisfied_by(Assignment a) const { return first_satisfied(a).has_value(); }

int DnfFormula::satisfied_count(Assignment a) const {
  int k = 0;
  for (int j = 0; j < clause_count(); ++j) k += clause_holds(j, a);
  return k;
}

std::optional<int> DnfFormula::first_satisfied(Assignment a) const {
  for (int j = 0; j < clause_count(); ++j)
    if (clause_holds(j, a)) return j;
  return std::nullopt;
}

DnfFormula random_dnf(int n, int m, int w, std::mt19937_64& rng) {
  if (w < 1 || w > n) throw ValidationError("random dnf: width must be in 1..n");
  if (m < 0) throw ValidationError("random dnf: clause count must be nonnegative");
  std::vector<std::vector<Literal>> clauses;
  std::vector<int> vars(n);
  for (int c = 0; c < m; ++c) {
    std::iota(vars.begin(), vars.end(), 0);
    std::vector<Literal> clause;
    for (int k = 0; k < w; ++k) {
      const int pick = std::uniform_int_distribution<int>(k, n - 1)(rng);
      std::swap(vars[k], vars[pick]);
      clause.push_back({vars[k], (rng() & 1) != 0});
    }
    std::sort(clause.begin(), clause.end(), [](const Literal& a, const Literal& b) { return a.var < b.var; });
    clauses.push_back(std::move(clause));
  }
  return DnfFormula(n, std::move(clauses));
}

DnfFormula parse_dnf(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  int n = -1, m = -1;
  std::vector<std::vector<Literal>> clauses;
  std::vector<Literal> current;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tok;
    if (!(ls >> tok) || tok == "c") continue;
    if (tok == "p") {
      std::string kind;
      if (n >= 0) throw ParseError("dnf: duplicate header", lineno, 1);
      if (!(ls >> kind >> n >> m) || kind != "dnf" || n < 1 || m < 0)
        throw ParseError("dnf: expected 'p dnf <vars> <clauses>'", lineno, 1);
      continue;
    }
    if (n < 0) throw ParseError("dnf: clause before header", lineno, 1);
    do {
      long v = 0;
      try {
        std::size_t used = 0;
        v = std::stol(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ParseError("dnf: expected a literal, got '" + tok + "'", lineno, 1);
      }
      if (v == 0) {
        clauses.push_back(std::move(current));
        current.clear();
      } else {
        if (std::labs(v) > n) throw ParseError("dnf: literal " + tok + " out of range", lineno, 1);
        current.push_back({static_cast<int>(std::labs(v)) - 1, v > 0});
      }
    } while (ls >> tok);
  }
  if (n < 0) throw ParseError("dnf: missing header", lineno, 1);
  if (!current.empty()) throw ParseError("dnf: last clause lacks terminating 0", lineno, 1);
  if (static_cast<int>(clauses.size()) != m)
    throw ParseError("dnf: header promises " + std::to_string(m) + " clauses, found " +
                         std::to_string(clauses.size()),
                     lineno, 1);
  return DnfFormula(n, std::move(clauses));
}

std::string print_dnf(const DnfFormula& f) {
  std::ostringstream out;
  out << "p dnf " << f.var_count() << ' ' << f.clause_count() << '\n';
  for (const auto& c : f.clauses()) {
    for (const auto& lit : c) out << (lit.positive ? "" : "-") << lit.var + 1 << ' ';
    out << "0\n";
  }
  return out.str();
}

DnfFormula load_dnf(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open formula file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_dnf(buf.str());
}

std::vector<std::string> serialize_clause(const DnfFormula& f, int j) {
  std::vector<std::string> out{"c" + std::to_string(j + 1)};
  for (const auto& lit : f.clauses()[j]) {
    out.push_back(std::to_string(lit.var + 1) + "=");
    out.push_back(lit.positive ? "+1" : "-1");
  }
  return out;
}

std::vector<std::string> serialize_formula(const DnfFormula& f) {
  std::vector<std::string> out;
  for (int j = 0; j < f.clause_count(); ++j) {
    auto c = serialize_clause(f, j);
    out.insert(out.end(), c.begin(), c.end());
  }
  return out;
}

std::uint64_t exact_count(const DnfFormula& f) {
  if (f.var_count() > kExactVarLimit)
    throw ValidationError("exact count: " + std::to_string(f.var_count()) + " variables exceed the limit of " +
                          std::to_string(kExactVarLimit));
  std::uint64_t count = 0;
  const Assignment end = Assignment{1} << f.var_count();
  for (Assignment a = 0; a < end; ++a) count += f.satisfied_by(a);
  return count;
}

std::vector<Assignment> satisfying_assignments(const DnfFormula& f) {
  if (f.var_count() > kExactVarLimit) throw ValidationError("satisfying assignments: too many variables");
  std::vector<Assignment> out;
  const Assignment end = Assignment{1} << f.var_count();
  for (Assignment a = 0; a < end; ++a)
    if (f.satisfied_by(a)) out.push_back(a);
  return out;
}

BigInt coverage_size(const DnfFormula& f) {
  BigInt u = 0;
  for (int j = 0; j < f.clause_count(); ++j) u += BigInt(1) << (f.var_count() - f.width(j));
  return u;
}

CoveragePoint sample_coverage(const DnfFormula& f, std::mt19937_64& rng) {
  if (f.clause_count() == 0) throw ValidationError("coverage sample: formula has no clauses");
  u128 r = uniform128(coverage128(f), rng);
  int j = 0;
  for (;; ++j) {
    const u128 size = u128{1} << (f.var_count() - f.width(j));
    if (r < size) break;
    r -= size;
  }
  const Assignment free = ~f.care_mask(j) & full_mask(f.var_count());
  return {j, (rng() & free) | f.value_mask(j)};
}

KlTrial kl_trial(const DnfFormula& f, std::mt19937_64& rng, bool with_trace) {
  const auto pt = sample_coverage(f, rng);
  KlTrial t;
  t.clause = pt.clause;
  t.assignment = pt.assignment;
  t.success = f.first_satisfied(pt.assignment) == pt.clause;
  t.check_clause = std::uniform_int_distribution<int>(0, f.clause_count() - 1)(rng);
  t.check_holds = f.clause_holds(t.check_clause, pt.assignment);
  if (with_trace) {
    auto add = [&](const std::vector<std::string>& v) { t.trace.insert(t.trace.end(), v.begin(), v.end()); };
    add(serialize_formula(f));
    t.trace.push_back("<sep>");
    add(serialize_clause(f, t.clause));
    t.trace.push_back("<sep>");
    add(serialize_assignment(t.assignment, f.var_count()));
    t.trace.push_back("<sep>");
    add(serialize_clause(f, t.check_clause));
    t.trace.push_back("<sep>");
    t.trace.push_back(t.check_holds ? "Success" : "Fail");
    t.trace.push_back("<eos>");
  }
  return t;
}

Rational klm_trial(const DnfFormula& f, std::mt19937_64& rng) {
  const auto pt = sample_coverage(f, rng);
  return Rational(coverage_size(f), f.satisfied_count(pt.assignment));
}

std::string to_string(Estimator e) { return e == Estimator::KarpLuby ? "karp-luby" : "coverage"; }

std::int64_t fpras_trials(int m, double eps, double delta) {
  check_open_unit(eps, "epsilon");
  check_open_unit(delta, "delta");
  const double t = std::ceil(3.0 * m * std::log(2.0 / delta) / (eps * eps));
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(t));
}

EstimatorReport fpras_count(const DnfFormula& f, double eps, double delta, std::mt19937_64& rng, Estimator kind,
                            std::optional<std::int64_t> trials) {
  EstimatorReport rep;
  rep.epsilon = eps;
  rep.delta = delta;
  rep.kind = kind;
  rep.trials = fpras_trials(f.clause_count(), eps, delta);
  if (trials) {
    if (*trials < 1) throw ValidationError("fpras: trial count must be positive");
    rep.trials = *trials;
  }
  if (f.clause_count() == 0) {
    rep.estimate = 0;
    return rep;
  }
  const BigInt u = coverage_size(f);
  if (kind == Estimator::KarpLuby) {
    std::int64_t successes = 0;
    for (std::int64_t t = 0; t < rep.trials; ++t) successes += kl_trial(f, rng, false).success;
    rep.estimate = Rational(u * successes, rep.trials);
  } else {
    // Histogram of N(a) keeps the exact mean cheap.
    std::vector<std::int64_t> hist(f.clause_count() + 1, 0);
    for (std::int64_t t = 0; t < rep.trials; ++t) ++hist[f.satisfied_count(sample_coverage(f, rng).assignment)];
    Rational sum = 0;
    for (int k = 1; k <= f.clause_count(); ++k)
      if (hist[k]) sum += Rational(BigInt(hist[k]), k);
    rep.estimate = Rational(u) * sum / rep.trials;
  }
  return rep;
}

int median_runs(double gamma, double delta) {
  if (!(gamma > 0 && gamma < 0.5)) throw ValidationError("median boost: gamma must lie in (0, 1/2)");
  check_open_unit(delta, "delta");
  return static_cast<int>(std::ceil(std::log(1.0 / delta) / (2.0 * gamma * gamma)));
}

MedianReport median_boost(const std::function<Rational(std::mt19937_64&)>& run, double gamma, double delta,
                          std::mt19937_64& rng) {
  MedianReport rep;
  rep.runs = median_runs(gamma, delta);
  std::vector<Rational> values;
  values.reserve(rep.runs);
  for (int i = 0; i < rep.runs; ++i) values.push_back(run(rng));
  const auto mid = values.begin() + (rep.runs - 1) / 2;
  std::nth_element(values.begin(), mid, values.end());
  rep.value = *mid;
  return rep;
}

DnfFormula restrict_formula(const DnfFormula& f, const std::vector<bool>& prefix) {
  const int k = static_cast<int>(prefix.size());
  if (k > f.var_count()) throw ValidationError("restrict: prefix longer than the variable count");
  std::vector<std::vector<Literal>> out;
  for (const auto& c : f.clauses()) {
    std::vector<Literal> rest;
    bool falsified = false;
    for (const auto& lit : c) {
      if (lit.var < k) {
        if (prefix[lit.var] != lit.positive) falsified = true;
      } else {
        rest.push_back({lit.var - k, lit.positive});
      }
    }
    if (!falsified) out.push_back(std::move(rest));
  }
  return DnfFormula(f.var_count() - k, std::move(out), true);
}

std::uint64_t ext_count(const DnfFormula& f, const std::vector<bool>& prefix) {
  return exact_count(restrict_formula(f, prefix));
}

Rational ext_estimate(const DnfFormula& f, const std::vector<bool>& prefix, double eps, double delta,
                      std::mt19937_64& rng) {
  const DnfFormula r = restrict_formula(f, prefix);
  for (int j = 0; j < r.clause_count(); ++j)
    if (r.width(j) == 0) return Rational(BigInt(1) << r.var_count());
  return fpras_count(r, eps, delta, rng).estimate;
}

ExactModel::ExactModel(const DnfFormula& f) : f_(f) {}

Rational ExactModel::prob_one(const std::vector<bool>& prefix) {
  if (auto it = memo_.find(prefix); it != memo_.end()) return it->second;
  auto p = prefix;
  p.push_back(false);
  const std::uint64_t c0 = ext_count(f_, p);
  p.back() = true;
  const std::uint64_t c1 = ext_count(f_, p);
  if (c0 + c1 == 0) throw ValidationError("conditional undefined: prefix has no satisfying extension");
  return memo_[prefix] = Rational(BigInt(c1), BigInt(c0 + c1));
}

EstimatedModel::EstimatedModel(const DnfFormula& f, double eps, double delta, std::uint64_t seed)
    : f_(f), eps_(eps), delta_(delta), rng_(seed) {
  check_open_unit(eps, "epsilon");
  check_open_unit(delta, "delta");
}

Rational EstimatedModel::prob_one(const std::vector<bool>& prefix) {
  if (auto it = memo_.find(prefix); it != memo_.end()) return it->second;
  auto p = prefix;
  p.push_back(false);
  const Rational e0 = ext_estimate(f_, p, eps_, delta_, rng_);
  p.back() = true;
  const Rational e1 = ext_estimate(f_, p, eps_, delta_, rng_);
  if (e0 + e1 == 0) throw ValidationError("conditional undefined: prefix has no satisfying extension");
  return memo_[prefix] = e1 / (e0 + e1);
}

bool bernoulli(const Rational& p, std::mt19937_64& rng) {
  if (p <= 0) return false;
  if (p >= 1) return true;
  const BigInt num = boost::multiprecision::numerator(p), den = boost::multiprecision::denominator(p);
  const unsigned bits = boost::multiprecision::msb(den) + 1;
  if (bits <= 63) {
    const auto d = den.convert_to<std::uint64_t>();
    return std::uniform_int_distribution<std::uint64_t>(0, d - 1)(rng) < num.convert_to<std::uint64_t>();
  }
  for (;;) {
    BigInt r = 0;
    for (unsigned got = 0; got < bits; got += 64) r = (r << 64) | BigInt(rng());
    r &= (BigInt(1) << bits) - 1;
    if (r < den) return r < num;
  }
}

ArSample autoregressive_sample(const DnfFormula& f, ConditionalModel& model, std::mt19937_64& rng) {
  // Clauses never contradict themselves, so any clause makes F satisfiable.
  if (f.clause_count() == 0) throw ValidationError("sampler: formula is unsatisfiable");
  ArSample s;
  s.probability = 1;
  std::vector<bool> prefix;
  for (int i = 0; i < f.var_count(); ++i) {
    const Rational p1 = model.prob_one(prefix);
    if (p1 < 0 || p1 > 1) throw ValidationError("sampler: conditional outside [0, 1]");
    const bool bit = bernoulli(p1, rng);
    const Rational q = bit ? p1 : Rational(1) - p1;
    s.conditionals.push_back(q);
    s.probability *= q;
    if (bit) s.assignment |= Assignment{1} << i;
    prefix.push_back(bit);
  }
  return s;
}

int rejection_rounds(double delta) {
  check_open_unit(delta, "delta");
  return static_cast<int>(std::ceil(std::log(3.0 / delta) / std::log(1.0 / (1.0 - std::exp(-1.5)))));
}

SamplerReport fpaus_sample(const DnfFormula& f, ConditionalModel& model, double eps, std::mt19937_64& rng) {
  check_open_unit(eps, "epsilon");
  SamplerReport rep;
  rep.epsilon = model.accuracy();
  const Rational pz = autoregressive_sample(f, model, rng).probability;
  const int rounds = rejection_rounds(eps);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int r = 0; r < rounds; ++r) {
    const ArSample y = autoregressive_sample(f, model, rng);
    ++rep.attempts;
    const double accept = std::min(1.0, std::exp(-1.0) * to_double(pz / y.probability));
    const bool ok = unit(rng) < accept;
    rep.acceptance.push_back(ok);
    if (ok) {
      if (!f.satisfied_by(y.assignment)) throw ValidationError("sampler: accepted a non-satisfying assignment");
      rep.sample = y.assignment;
      rep.accepted = true;
      break;
    }
  }
  return rep;
}

SamplerReport fpaus_sample(const DnfFormula& f, double eps, std::mt19937_64& rng) {
  const int n = f.var_count();
  EstimatedModel model(f, EstimatedModel::step_epsilon(n), eps / (2.0 * n), rng());
  return fpaus_sample(f, model, eps, rng);
}

WeakCheck weak_probable_check(const std::function<std::unique_ptr<ConditionalModel>(std::mt19937_64&)>& make_model,
                              const DnfFormula& f, double alpha, double gamma, int trials, int prefixes,
                              std::mt19937_64& rng) {
  if (!(alpha >= 1)) throw ValidationError("weak check: alpha must be at least 1");
  if (!(gamma > 0 && gamma < 0.5)) throw ValidationError("weak check: gamma must lie in (0, 1/2)");
  if (trials < 1 || prefixes < 1) throw ValidationError("weak check: trials and prefixes must be positive");
  WeakCheck out;
  out.prefixes = prefixes;
  out.margin = std::sqrt(std::log(2.0 * prefixes / 0.01) / (2.0 * trials));
  if (out.margin >= gamma)
    throw ValidationError("weak check: " + std::to_string(trials) + " trials give margin " +
                          std::to_string(out.margin) + ", not below gamma");
  ExactModel exact(f);
  for (int k = 0; k < prefixes; ++k) {
    const Assignment y = autoregressive_sample(f, exact, rng).assignment;
    const int pos = std::uniform_int_distribution<int>(0, f.var_count() - 1)(rng);
    std::vector<bool> prefix;
    for (int i = 0; i < pos; ++i) prefix.push_back((y >> i) & 1);
    const bool next = (y >> pos) & 1;
    const Rational p1 = exact.prob_one(prefix);
    const double truth = to_double(next ? p1 : Rational(1) - p1);
    int hits = 0;
    for (int t = 0; t < trials; ++t) {
      const Rational q1 = make_model(rng)->prob_one(prefix);
      const double q = to_double(next ? q1 : Rational(1) - q1);
      hits += std::abs(q - truth) <= truth / alpha;
    }
    out.min_hit_rate = std::min(out.min_hit_rate, static_cast<double>(hits) / trials);
  }
  out.passed = out.min_hit_rate >= 0.5 + gamma - out.margin;
  return out;
}

double to_double(const Rational& r) { return r.convert_to<double>(); }

std::string to_string(const Rational& r) {
  const BigInt den = boost::multiprecision::denominator(r);
  if (den == 1) return boost::multiprecision::numerator(r).str();
  return boost::multiprecision::numerator(r).str() + "/" + den.str();
}

}  // namespace dagtf::approx
