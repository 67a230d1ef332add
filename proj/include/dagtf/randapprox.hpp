#pragma once
// DNF counting and almost-uniform sampling: exact oracle, Karp-Luby trials,
// median boosting, extension counts and a rejection-corrected
// autoregressive sampler.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "dagtf/errors.hpp"

namespace dagtf::approx {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;
using Assignment = std::uint64_t;  // bit i = value of variable i (0-based)

struct Literal {
  int var = 0;  // 0-based
  bool positive = true;

  friend bool operator==(const Literal&, const Literal&) = default;
};

class DnfFormula {
 public:
  DnfFormula() = default;
  // Throws ValidationError unless 1 <= n <= 62 and every clause has
  // distinct in-range variables; empty clauses only when allow_empty.
  DnfFormula(int n, std::vector<std::vector<Literal>> clauses, bool allow_empty = false);

  int var_count() const { return n_; }
  int clause_count() const { return static_cast<int>(clauses_.size()); }
  const std::vector<std::vector<Literal>>& clauses() const { return clauses_; }
  int width(int j) const { return static_cast<int>(clauses_[j].size()); }
  bool clause_holds(int j, Assignment a) const { return (a & care_[j]) == value_[j]; }
  bool satisfied_by(Assignment a) const;
  int satisfied_count(Assignment a) const;  // N(a)
  std::optional<int> first_satisfied(Assignment a) const;
  Assignment care_mask(int j) const { return care_[j]; }
  Assignment value_mask(int j) const { return value_[j]; }

  friend bool operator==(const DnfFormula& a, const DnfFormula& b) {
    return a.n_ == b.n_ && a.clauses_ == b.clauses_;
  }

 private:
  int n_ = 0;
  std::vector<std::vector<Literal>> clauses_;
  std::vector<Assignment> care_, value_;
};

// m clauses of w distinct variables, each literal's sign a fair coin.
DnfFormula random_dnf(int n, int m, int w, std::mt19937_64& rng);
// "p dnf n m" then one clause per line: signed 1-based literals, 0-terminated.
DnfFormula parse_dnf(const std::string& text);
std::string print_dnf(const DnfFormula& f);
DnfFormula load_dnf(const std::string& path);
// Tokens: per clause "c<j>" then "<var>=" "+1"|"-1" pairs (1-based).
std::vector<std::string> serialize_clause(const DnfFormula& f, int j);
std::vector<std::string> serialize_formula(const DnfFormula& f);

inline constexpr int kExactVarLimit = 24;
std::uint64_t exact_count(const DnfFormula& f);  // n <= 24
std::vector<Assignment> satisfying_assignments(const DnfFormula& f);
// U = sum_j 2^(n - |C_j|).
BigInt coverage_size(const DnfFormula& f);

// Clause drawn with probability 2^(n-|C_j|)/U, completion uniform.
struct CoveragePoint {
  int clause = 0;
  Assignment assignment = 0;
};
CoveragePoint sample_coverage(const DnfFormula& f, std::mt19937_64& rng);

struct KlTrial {
  bool success = false;  // sampled clause is the first one satisfied
  int clause = 0;
  Assignment assignment = 0;
  int check_clause = 0;  // uniform, recorded for the trace only
  bool check_holds = false;
  std::vector<std::string> trace;
};
// Trace: formula <sep> sampled clause <sep> assignment <sep> check clause
// <sep> Success|Fail <eos>.
KlTrial kl_trial(const DnfFormula& f, std::mt19937_64& rng, bool with_trace = true);
// U / N(a); unbiased for |F|.
Rational klm_trial(const DnfFormula& f, std::mt19937_64& rng);

enum class Estimator { KarpLuby, Coverage };
std::string to_string(Estimator e);

struct EstimatorReport {
  Rational estimate;
  std::int64_t trials = 0;
  double epsilon = 0;
  double delta = 0;
  std::uint64_t seed = 0;
  Estimator kind = Estimator::KarpLuby;
};

// ceil(3 m ln(2/delta) / eps^2).
std::int64_t fpras_trials(int m, double eps, double delta);
// KarpLuby: U * successes / T. Coverage: mean of klm_trial. A trial count
// override replaces the formula (for budget sweeps).
EstimatorReport fpras_count(const DnfFormula& f, double eps, double delta, std::mt19937_64& rng,
                            Estimator kind = Estimator::KarpLuby, std::optional<std::int64_t> trials = {});

struct MedianReport {
  Rational value;
  int runs = 0;
};
// ceil(ln(1/delta) / (2 gamma^2)).
int median_runs(double gamma, double delta);
// Lower median of median_runs(gamma, delta) independent runs.
MedianReport median_boost(const std::function<Rational(std::mt19937_64&)>& run, double gamma, double delta,
                          std::mt19937_64& rng);

// Variables 0..prefix.size()-1 fixed; the result ranges over the rest.
// Satisfied clauses become empty (always true), falsified ones vanish.
DnfFormula restrict_formula(const DnfFormula& f, const std::vector<bool>& prefix);
std::uint64_t ext_count(const DnfFormula& f, const std::vector<bool>& prefix);
Rational ext_estimate(const DnfFormula& f, const std::vector<bool>& prefix, double eps, double delta,
                      std::mt19937_64& rng);

// P(next variable = 1 | prefix).
class ConditionalModel {
 public:
  virtual ~ConditionalModel() = default;
  virtual Rational prob_one(const std::vector<bool>& prefix) = 0;
  // Relative accuracy of the underlying counts; 0 when exact.
  virtual double accuracy() const { return 0; }
};

class ExactModel : public ConditionalModel {
 public:
  explicit ExactModel(const DnfFormula& f);
  Rational prob_one(const std::vector<bool>& prefix) override;

 private:
  DnfFormula f_;
  std::map<std::vector<bool>, Rational> memo_;
};

// Ratio of two estimated extension counts. Each prefix is estimated once
// and remembered, so one model is one draw of the estimator's randomness.
class EstimatedModel : public ConditionalModel {
 public:
  EstimatedModel(const DnfFormula& f, double eps, double delta, std::uint64_t seed);
  Rational prob_one(const std::vector<bool>& prefix) override;
  double accuracy() const override { return eps_; }
  // Per-count accuracy giving conditionals within 1 +- 1/(2n).
  static double step_epsilon(int n) { return 1.0 / (4.0 * n + 1.0); }

 private:
  DnfFormula f_;
  double eps_, delta_;
  std::mt19937_64 rng_;
  std::map<std::vector<bool>, Rational> memo_;
};

bool bernoulli(const Rational& p, std::mt19937_64& rng);

struct ArSample {
  Assignment assignment = 0;
  std::vector<Rational> conditionals;  // probability of each chosen value
  Rational probability;                // their product
};
// Throws ValidationError when F has no clauses (the only unsatisfiable case).
ArSample autoregressive_sample(const DnfFormula& f, ConditionalModel& model, std::mt19937_64& rng);

struct SamplerReport {
  Assignment sample = 0;
  bool accepted = false;
  int attempts = 0;
  std::vector<bool> acceptance;  // per attempt
  double epsilon = 0;  // count accuracy behind the conditionals
};
// ceil(ln(3/delta) / ln(1/(1 - e^-3/2))).
int rejection_rounds(double delta);
// Preliminary draw z sets phi0 = pi(z)/e; each round draws y ~ pi and
// accepts with min(1, phi0/pi(y)).
SamplerReport fpaus_sample(const DnfFormula& f, ConditionalModel& model, double eps, std::mt19937_64& rng);
// Estimated-count model at the step accuracy, fresh randomness.
SamplerReport fpaus_sample(const DnfFormula& f, double eps, std::mt19937_64& rng);

struct WeakCheck {
  bool passed = false;
  double min_hit_rate = 1.0;
  double margin = 0;
  int prefixes = 0;
};
// For sampled prefixes along uniform satisfying assignments, counts how
// often a fresh model lands within (1 +- 1/alpha) of the true conditional.
// Passes when every prefix hits at least 1/2 + gamma - margin, with a
// Hoeffding margin at confidence 0.99. Throws when margin >= gamma.
WeakCheck weak_probable_check(const std::function<std::unique_ptr<ConditionalModel>(std::mt19937_64&)>& make_model,
                              const DnfFormula& f, double alpha, double gamma, int trials, int prefixes,
                              std::mt19937_64& rng);

double to_double(const Rational& r);
std::string to_string(const Rational& r);  // "p/q" or "p"

}  // namespace dagtf::approx
