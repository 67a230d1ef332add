#include "dagtf/fxp.hpp"

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#define MPFR_USE_INTMAX_T
#include <mpfr.h>

namespace dagtf::fxp {

namespace {

constexpr int kMaxTotalBits = 60;

__int128 abs128(__int128 v) { return v < 0 ? -v : v; }

void require_same(const PrecisionSpec& a, const PrecisionSpec& b) {
  if (!(a == b)) throw std::invalid_argument("fxp: operands carry different precision specs");
}

}  // namespace

PrecisionSpec PrecisionSpec::make(int int_bits, int frac_bits) {
  if (int_bits < 2 || frac_bits < 0)
    throw ValidationError("precision: need int_bits >= 2 and frac_bits >= 0");
  if (int_bits + frac_bits > kMaxTotalBits)
    throw ValidationError("precision: int_bits + frac_bits must be <= " + std::to_string(kMaxTotalBits));
  PrecisionSpec p{int_bits, frac_bits};
  // exp(-B) must land below half a grid step: B > (frac+1) ln 2.
  const long double b = static_cast<long double>(p.max_scaled()) / static_cast<long double>(p.one());
  if (!(b > (frac_bits + 1) * std::log(2.0L)))
    throw ValidationError("precision " + p.to_string() + ": exp(-B) would not round to zero");
  return p;
}

PrecisionSpec PrecisionSpec::for_code_bits(int s) { return make(s + 2, s); }

PrecisionSpec PrecisionSpec::parse(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw ValidationError("precision must look like int:frac, got '" + text + "'");
  try {
    std::size_t used_a = 0, used_b = 0;
    const std::string a = text.substr(0, colon), b = text.substr(colon + 1);
    const int ib = std::stoi(a, &used_a);
    const int fb = std::stoi(b, &used_b);
    if (used_a != a.size() || used_b != b.size()) throw std::invalid_argument("trailing");
    return make(ib, fb);
  } catch (const std::logic_error&) {
    throw ValidationError("precision must look like int:frac, got '" + text + "'");
  }
}

double PrecisionSpec::bound() const {
  return static_cast<double>(max_scaled()) / static_cast<double>(one());
}

std::string PrecisionSpec::to_string() const {
  return std::to_string(int_bits) + ":" + std::to_string(frac_bits);
}

FxNum::FxNum(Scaled scaled, PrecisionSpec spec) : scaled_(scaled), spec_(spec) {
  if (scaled > spec.max_scaled() || scaled < -spec.max_scaled())
    throw std::out_of_range("FxNum: scaled value outside [-B, B]");
}

FxNum FxNum::from_int(std::int64_t v, PrecisionSpec spec) {
  return FxNum(raw::saturate(static_cast<__int128>(v) << spec.frac_bits, spec), spec);
}

FxNum FxNum::from_rational(const Rational& x, PrecisionSpec spec) { return round_to(x, spec); }

FxNum FxNum::from_double(double x, PrecisionSpec spec) {
  const long double scaled = std::ldexp(static_cast<long double>(x), spec.frac_bits);
  const long double r = std::round(scaled);  // half away from zero
  const long double m = static_cast<long double>(spec.max_scaled());
  return FxNum(static_cast<Scaled>(r > m ? m : (r < -m ? -m : r)), spec);
}

double FxNum::to_double() const { return std::ldexp(static_cast<double>(scaled_), -spec_.frac_bits); }

Rational FxNum::to_rational() const { return Rational(scaled_, spec_.one()); }

namespace raw {

Scaled saturate(__int128 v, const PrecisionSpec& spec) {
  const Scaled m = spec.max_scaled();
  if (v > m) return m;
  if (v < -m) return -m;
  return static_cast<Scaled>(v);
}

Scaled round_div(__int128 num, __int128 den, const PrecisionSpec& spec) {
  if (den <= 0) throw std::invalid_argument("round_div: denominator must be positive");
  const __int128 mag = (2 * abs128(num) + den) / (2 * den);
  return saturate(num < 0 ? -mag : mag, spec);
}

Scaled div(Scaled a, Scaled b, const PrecisionSpec& spec) {
  if (b == 0) throw std::domain_error("div_r: division by zero");
  __int128 num = static_cast<__int128>(a) << spec.frac_bits;
  __int128 den = b;
  if (den < 0) {
    num = -num;
    den = -den;
  }
  return round_div(num, den, spec);
}

namespace {

struct ExpKey {
  Scaled x;
  int int_bits;
  int frac_bits;
  bool operator==(const ExpKey&) const = default;
};

struct ExpKeyHash {
  std::size_t operator()(const ExpKey& k) const {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 0x9E3779B97F4A7C15ULL;
    h ^= static_cast<std::uint64_t>(k.int_bits * 131 + k.frac_bits) + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

Scaled exp_uncached(Scaled x, const PrecisionSpec& spec) {
  const mpfr_prec_t prec = 2 * (spec.int_bits + spec.frac_bits) + 64;
  mpfr_t v, limit;
  mpfr_init2(v, prec);
  mpfr_init2(limit, prec);
  mpfr_set_sj(v, x, MPFR_RNDN);
  mpfr_div_2si(v, v, spec.frac_bits, MPFR_RNDN);  // exact
  mpfr_exp(v, v, MPFR_RNDN);
  mpfr_mul_2si(v, v, spec.frac_bits, MPFR_RNDN);  // exact
  mpfr_round(v, v);                                // half away from zero
  mpfr_set_sj(limit, spec.max_scaled(), MPFR_RNDN);
  Scaled out;
  if (mpfr_cmp(v, limit) >= 0)
    out = spec.max_scaled();
  else
    out = static_cast<Scaled>(mpfr_get_sj(v, MPFR_RNDN));
  mpfr_clear(v);
  mpfr_clear(limit);
  return out;
}

}  // namespace

Scaled exp(Scaled x, const PrecisionSpec& spec) {
  thread_local std::unordered_map<ExpKey, Scaled, ExpKeyHash> cache;
  const ExpKey key{x, spec.int_bits, spec.frac_bits};
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  if (cache.size() > (1u << 20)) cache.clear();
  const Scaled r = exp_uncached(x, spec);
  cache.emplace(key, r);
  return r;
}

Scaled sum_iter(std::span<const Scaled> xs, const PrecisionSpec& spec) {
  Scaled acc = 0;
  for (Scaled x : xs) acc = add(acc, x, spec);
  return acc;
}

Scaled inner(std::span<const Scaled> a, std::span<const Scaled> b, const PrecisionSpec& spec) {
  if (a.size() != b.size()) throw std::invalid_argument("inner_r: length mismatch");
  Scaled acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == 0 || b[i] == 0) continue;  // adding an exact zero never changes acc
    acc = add(acc, mul(a[i], b[i], spec), spec);
  }
  return acc;
}

}  // namespace raw

FxNum round_to(const Rational& x, const PrecisionSpec& spec) {
  const __int128 num = static_cast<__int128>(x.numerator()) << spec.frac_bits;
  return FxNum(raw::round_div(num, x.denominator(), spec), spec);
}

FxNum add_r(const FxNum& a, const FxNum& b) {
  require_same(a.spec(), b.spec());
  return FxNum(raw::add(a.scaled(), b.scaled(), a.spec()), a.spec());
}

FxNum mul_r(const FxNum& a, const FxNum& b) {
  require_same(a.spec(), b.spec());
  return FxNum(raw::mul(a.scaled(), b.scaled(), a.spec()), a.spec());
}

FxNum div_r(const FxNum& a, const FxNum& b) {
  require_same(a.spec(), b.spec());
  return FxNum(raw::div(a.scaled(), b.scaled(), a.spec()), a.spec());
}

FxNum exp_r(const FxNum& x) { return FxNum(raw::exp(x.scaled(), x.spec()), x.spec()); }

FxNum sum_iter(std::span<const FxNum> xs, const PrecisionSpec& spec) {
  FxNum acc(0, spec);
  for (const auto& x : xs) acc = add_r(acc, x);
  return acc;
}

FxNum inner_r(const FxVector& a, const FxVector& b, const PrecisionSpec& spec) {
  return FxNum(raw::inner({a.data(), static_cast<std::size_t>(a.size())},
                          {b.data(), static_cast<std::size_t>(b.size())}, spec),
               spec);
}

FxMatrix matmul_r(const FxMatrix& a, const FxMatrix& b, const PrecisionSpec& spec) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul_r: shape mismatch");
  FxMatrix out = FxMatrix::Zero(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      Scaled acc = 0;
      for (Eigen::Index k = 0; k < a.cols(); ++k) {
        if (a(i, k) == 0 || b(k, j) == 0) continue;
        acc = raw::add(acc, raw::mul(a(i, k), b(k, j), spec), spec);
      }
      out(i, j) = acc;
    }
  }
  return out;
}

Eigen::VectorXi bin(std::int64_t i, int s) {
  if (s < 1 || s > 62) throw std::invalid_argument("bin: width out of range");
  if (i < 0 || i >= (std::int64_t{1} << s)) throw std::out_of_range("bin: value does not fit in width");
  Eigen::VectorXi out(s);
  for (int k = 0; k < s; ++k) out[k] = static_cast<int>((i >> k) & 1);
  return out;
}

Eigen::VectorXi sbin(std::int64_t i, int s) {
  Eigen::VectorXi b = bin(i, s);
  return (2 * b.array() - 1).matrix();
}

Eigen::VectorXi interleave(const Eigen::VectorXi& a, const Eigen::VectorXi& b) {
  if (a.size() != b.size()) throw std::invalid_argument("interleave: length mismatch");
  Eigen::VectorXi out(2 * a.size());
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    out[2 * k] = a[k];
    out[2 * k + 1] = b[k];
  }
  return out;
}

CodePair onehot_codes(std::int64_t i, int s, const PrecisionSpec& spec) {
  const __int128 scale = static_cast<__int128>(1) << (s + 1);
  if ((scale << spec.frac_bits) > spec.max_scaled())
    throw ValidationError("onehot_codes: 2^(s+1) is not representable under " + spec.to_string());
  const Eigen::VectorXi code = sbin(i, s);
  const Eigen::VectorXi q = interleave(code, Eigen::VectorXi::Ones(s));
  const Eigen::VectorXi k = interleave(code, Eigen::VectorXi::Constant(s, -1));
  CodePair out{FxVector(2 * s), FxVector(2 * s)};
  for (int t = 0; t < 2 * s; ++t) {
    out.query[t] = static_cast<Scaled>(q[t]) * spec.one();
    out.key[t] = static_cast<Scaled>(scale * k[t]) * spec.one();
  }
  return out;
}

}  // namespace dagtf::fxp
