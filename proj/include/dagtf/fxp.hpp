#pragma once
// Fixed-point arithmetic with explicit rounding.
//
// Every value is an integer multiple of 2^-frac_bits, clipped to [-B, B]
// with B = (2^(int_bits+frac_bits) - 1) * 2^-frac_bits. Each primitive
// operation rounds its exact result to the grid (half away from zero) and
// then saturates. Vectors and matrices store the scaled integers directly.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <boost/rational.hpp>

#include "dagtf/errors.hpp"

namespace dagtf::fxp {

using Scaled = std::int64_t;
using Rational = boost::rational<std::int64_t>;

using FxVector = Eigen::Matrix<Scaled, Eigen::Dynamic, 1>;
using FxMatrix = Eigen::Matrix<Scaled, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct PrecisionSpec {
  int int_bits = 5;
  int frac_bits = 3;

  // Validating constructor. Rejects widths that would overflow 128-bit
  // intermediates and grids where exp(-B) does not round to zero.
  static PrecisionSpec make(int int_bits, int frac_bits);
  // frac = s, int = s + 2: enough room for the 2^(s+1) key scale.
  static PrecisionSpec for_code_bits(int s);
  // Parses "int:frac".
  static PrecisionSpec parse(const std::string& text);

  Scaled max_scaled() const { return (Scaled{1} << (int_bits + frac_bits)) - 1; }
  Scaled one() const { return Scaled{1} << frac_bits; }
  double bound() const;
  std::string to_string() const;

  friend bool operator==(const PrecisionSpec&, const PrecisionSpec&) = default;
};

// Scalar value on the grid of a given spec.
class FxNum {
 public:
  FxNum() = default;
  FxNum(Scaled scaled, PrecisionSpec spec);

  static FxNum from_int(std::int64_t v, PrecisionSpec spec);
  static FxNum from_rational(const Rational& x, PrecisionSpec spec);
  static FxNum from_double(double x, PrecisionSpec spec);

  Scaled scaled() const { return scaled_; }
  const PrecisionSpec& spec() const { return spec_; }
  double to_double() const;
  Rational to_rational() const;
  bool saturated() const { return scaled_ == spec_.max_scaled() || scaled_ == -spec_.max_scaled(); }

  friend bool operator==(const FxNum& a, const FxNum& b) {
    return a.scaled_ == b.scaled_ && a.spec_ == b.spec_;
  }

 private:
  Scaled scaled_ = 0;
  PrecisionSpec spec_{};
};

// Scaled-integer primitives. These are the hot path used by the
// interpreter; FxNum overloads below forward to them.
namespace raw {

Scaled saturate(__int128 v, const PrecisionSpec& spec);
// round(num / den) half away from zero, den > 0, then saturate.
Scaled round_div(__int128 num, __int128 den, const PrecisionSpec& spec);

inline Scaled add(Scaled a, Scaled b, const PrecisionSpec& spec) {
  Scaled s = a + b;
  const Scaled m = spec.max_scaled();
  return s > m ? m : (s < -m ? -m : s);
}

inline Scaled mul(Scaled a, Scaled b, const PrecisionSpec& spec) {
  const __int128 p = static_cast<__int128>(a) * b;
  const int f = spec.frac_bits;
  __int128 q = p;
  if (f > 0) {
    const __int128 mag = p < 0 ? -p : p;
    q = (mag + (static_cast<__int128>(1) << (f - 1))) >> f;
    if (p < 0) q = -q;
  }
  const Scaled m = spec.max_scaled();
  return q > m ? m : (q < -m ? -m : static_cast<Scaled>(q));
}

Scaled div(Scaled a, Scaled b, const PrecisionSpec& spec);
Scaled exp(Scaled x, const PrecisionSpec& spec);
// Left fold with rounding after every addition.
Scaled sum_iter(std::span<const Scaled> xs, const PrecisionSpec& spec);
// sum_iter over the elementwise mul products, in index order.
Scaled inner(std::span<const Scaled> a, std::span<const Scaled> b, const PrecisionSpec& spec);

}  // namespace raw

FxNum round_to(const Rational& x, const PrecisionSpec& spec);
FxNum add_r(const FxNum& a, const FxNum& b);
FxNum mul_r(const FxNum& a, const FxNum& b);
FxNum div_r(const FxNum& a, const FxNum& b);
FxNum exp_r(const FxNum& x);
// Empty input gives 0.
FxNum sum_iter(std::span<const FxNum> xs, const PrecisionSpec& spec);

FxNum inner_r(const FxVector& a, const FxVector& b, const PrecisionSpec& spec);
FxMatrix matmul_r(const FxMatrix& a, const FxMatrix& b, const PrecisionSpec& spec);

// Binary codes. bin is LSB first with entries 0/1; sbin maps to {-1,+1}.
Eigen::VectorXi bin(std::int64_t i, int s);
Eigen::VectorXi sbin(std::int64_t i, int s);
Eigen::VectorXi interleave(const Eigen::VectorXi& a, const Eigen::VectorXi& b);

struct CodePair {
  FxVector query;
  FxVector key;
};
// query = interleave(sbin(i), 1), key = 2^(s+1) * interleave(sbin(i), -1).
// Query of i against key of j gives 0 when i == j and saturates to -B otherwise.
CodePair onehot_codes(std::int64_t i, int s, const PrecisionSpec& spec);

}  // namespace dagtf::fxp
