#include <cmath>
#include <random>

#include <boost/multiprecision/cpp_int.hpp>
#include <gtest/gtest.h>

#include "qlmm/bitfloat.hpp"

using namespace qlmm;
using Rational = boost::multiprecision::cpp_rational;
using Int = boost::multiprecision::cpp_int;

namespace {

Rational pow2(int e) {
  return e >= 0 ? Rational(Int(1) << e) : Rational(Int(1), Int(1) << -e);
}

/// floor(log2 |q|) for q != 0, by exact comparison.
int floor_log2(const Rational& q) {
  const Rational a = abs(q);
  int e = static_cast<int>(msb(numerator(a))) - static_cast<int>(msb(denominator(a)));
  while (pow2(e) > a) --e;
  while (pow2(e + 1) <= a) ++e;
  return e;
}

/// Truncate toward zero to `bits` significant bits.
Rational trunc_bits(const Rational& q, int bits) {
  if (q == 0) return 0;
  const int e = floor_log2(q);
  const Rational ulp = pow2(e - bits + 1);
  const Rational a = abs(q) / ulp;
  const Int whole = numerator(a) / denominator(a);
  return (q < 0 ? -1 : 1) * Rational(whole) * ulp;
}

Rational exact(const SoftValue& x) {
  return Rational(x.mantissa()) * pow2(x.binary_exponent() - (x.format().mantissa_bits() - 1));
}

Rational exact(double v) {
  int e = 0;
  const double f = std::frexp(v, &e);
  return Rational(static_cast<long long>(std::ldexp(f, 53))) * pow2(e - 53);
}

enum class Outcome { value, margin, overflow };

/// Expected result of a + b: margin check, then exact sum truncated to M bits.
std::pair<Outcome, Rational> oracle_add(const SoftValue& a, const SoftValue& b) {
  const FloatFormat& f = a.format();
  if (static_cast<int>(b.exponent_field()) - static_cast<int>(a.exponent_field()) > f.margin_bits()) {
    return {Outcome::margin, 0};
  }
  const Rational s = trunc_bits(exact(a) + exact(b), f.mantissa_bits());
  if (floor_log2(s) > f.max_binary_exponent()) {
    return {Outcome::overflow, 0};
  }
  return {Outcome::value, s};
}

void expect_matches_oracle(const SoftValue& a, const SoftValue& b) {
  AncillaLedger ledger;
  const auto [outcome, want] = oracle_add(a, b);
  switch (outcome) {
    case Outcome::margin:
      EXPECT_THROW((void)add_margined(a, b, ledger), MarginError) << to_string(a) << " + " << to_string(b);
      break;
    case Outcome::overflow:
      EXPECT_THROW((void)add_margined(a, b, ledger), OverflowError) << to_string(a) << " + " << to_string(b);
      break;
    case Outcome::value:
      EXPECT_EQ(exact(add_margined(a, b, ledger)), want) << to_string(a) << " + " << to_string(b);
      break;
  }
}

}  // namespace

TEST(FloatFormat, RejectsZeroMargin) {
  EXPECT_THROW(FloatFormat(4, 3, 0, 0), FormatError);
  EXPECT_THROW(FloatFormat(1, 3, 0, 1), FormatError);
  EXPECT_THROW(FloatFormat(4, 0, 0, 1), FormatError);
  EXPECT_NO_THROW(FloatFormat(4, 3, 0, 1));
}

TEST(FloatFormat, RangeEndpoints) {
  const FloatFormat f(4, 3, 0, 1);
  EXPECT_EQ(f.w_lower(), 1.0);
  EXPECT_EQ(f.w_upper(), 15.0 * 16.0);
  const FloatFormat g(25, 3, -4, 1);
  EXPECT_EQ(g.w_lower(), 0.0625);
  EXPECT_EQ(g.w_upper(), (std::ldexp(1.0, 25) - 1) * std::ldexp(1.0, 7 - 4 - 24));
}

TEST(Encode, TruncatesTowardZero) {
  const FloatFormat f(4, 3, 0, 1);
  EXPECT_EQ(encode(10.9, f).decode(), 10.0);
  EXPECT_EQ(encode(15.99, f).decode(), 15.0);
  EXPECT_EQ(encode(17.0, f).decode(), 16.0);
  EXPECT_EQ(encode(1.0, f).decode(), 1.0);
  EXPECT_EQ(encode(240.0, f).decode(), 240.0);
}

TEST(Encode, RejectsOutOfRange) {
  const FloatFormat f(4, 3, 0, 1);
  EXPECT_THROW((void)encode(0.99, f), UnderflowError);
  EXPECT_THROW((void)encode(240.5, f), OverflowError);
  EXPECT_THROW((void)encode(-1.0, f), NegativeResultError);
}

TEST(Encode, AgreesWithRationalTruncation) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const FloatFormat f(13, 5, -9, 2);
  for (int i = 0; i < 2000; ++i) {
    const double v = f.w_lower() * std::pow(f.w_upper() / f.w_lower(), u(rng));
    if (v > f.w_upper() || v < f.w_lower()) continue;
    EXPECT_EQ(exact(encode(v, f)), trunc_bits(exact(v), 13)) << v;
  }
}

TEST(AddMargined, ExhaustiveFourBitMantissaThreeBitExponent) {
  for (int margin = 1; margin <= 3; ++margin) {
    const FloatFormat f(4, 3, -2, margin);
    for (std::uint32_t ea = 0; ea < 8; ++ea) {
      for (std::uint64_t ma = 8; ma < 16; ++ma) {
        for (std::uint32_t eb = 0; eb < 8; ++eb) {
          for (std::uint64_t mb = 8; mb < 16; ++mb) {
            expect_matches_oracle(SoftValue(ma, ea, f), SoftValue(mb, eb, f));
          }
        }
      }
    }
  }
}

TEST(AddMargined, RandomCasesMatchRationalOracle) {
  std::mt19937_64 rng(20240601);
  std::uniform_int_distribution<int> offset(-6, 6), margin(1, 3), field(0, 7), mant(8, 15);
  for (int i = 0; i < 10000; ++i) {
    const FloatFormat f(4, 3, offset(rng), margin(rng));
    expect_matches_oracle(SoftValue(mant(rng), field(rng), f), SoftValue(mant(rng), field(rng), f));
  }
}

TEST(AddMargined, RandomWideFormats) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 2000; ++i) {
    const int m = std::uniform_int_distribution<int>(2, 53)(rng);
    const int e = std::uniform_int_distribution<int>(1, 6)(rng);
    const FloatFormat f(m, e, std::uniform_int_distribution<int>(-40, 10)(rng),
                        std::uniform_int_distribution<int>(1, 5)(rng));
    std::uniform_int_distribution<std::uint64_t> mant(std::uint64_t{1} << (m - 1), (std::uint64_t{1} << m) - 1);
    std::uniform_int_distribution<std::uint32_t> field(0, f.max_exponent_field());
    expect_matches_oracle(SoftValue(mant(rng), field(rng), f), SoftValue(mant(rng), field(rng), f));
  }
}

TEST(AddMargined, MarginIsDirectional) {
  const FloatFormat f(4, 3, 0, 1);
  AncillaLedger ledger;
  const SoftValue small(8, 1, f), big(8, 4, f);
  EXPECT_THROW((void)add_margined(small, big, ledger), MarginError);
  EXPECT_NO_THROW((void)add_margined(big, small, ledger));
}

TEST(AddMargined, RejectsMixedFormats) {
  AncillaLedger ledger;
  EXPECT_THROW((void)add_margined(SoftValue(8, 1, FloatFormat(4, 3, 0, 1)), SoftValue(8, 1, FloatFormat(4, 3, 1, 1)),
                                  ledger),
               FormatError);
}

TEST(AncillaLedger, GrowsByMarginCostPerAddition) {
  EXPECT_EQ(adder_ancilla_cost(1), 4u);
  EXPECT_EQ(adder_ancilla_cost(2), 6u);
  EXPECT_EQ(adder_ancilla_cost(3), 7u);
  EXPECT_EQ(adder_ancilla_cost(4), 9u);
  EXPECT_EQ(adder_ancilla_cost(8), 14u);
  for (int a = 1; a <= 8; ++a) {
    const FloatFormat f(6, 4, 0, a);
    AncillaLedger ledger;
    SoftValue x(32, 3, f);
    const int n = 9;
    for (int i = 0; i < n; ++i) {
      x = add_margined(x, SoftValue(32, 0, f), ledger);
    }
    const auto floor_log2_a = static_cast<std::uint64_t>(std::floor(std::log2(a)));
    EXPECT_EQ(ledger.consumed(), static_cast<std::uint64_t>(n) * (a + floor_log2_a + 3));
  }
}

TEST(AncillaLedger, FailedAdditionConsumesNothing) {
  const FloatFormat f(4, 3, 0, 1);
  AncillaLedger ledger;
  EXPECT_THROW((void)add_margined(SoftValue(8, 0, f), SoftValue(8, 5, f), ledger), MarginError);
  EXPECT_EQ(ledger.consumed(), 0u);
}

TEST(ScalePow2, MovesOnlyTheExponent) {
  const FloatFormat f(5, 3, 0, 1);
  const SoftValue x(21, 3, f);
  EXPECT_EQ(scale_pow2(x, -2).decode(), x.decode() / 4);
  EXPECT_EQ(scale_pow2(x, 4).decode(), x.decode() * 16);
  EXPECT_THROW((void)scale_pow2(x, -4), UnderflowError);
  EXPECT_THROW((void)scale_pow2(x, 5), OverflowError);
}

TEST(WeightedSum, NestedTruncationMatchesOracle) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> coef(-2.0, 2.0), val(0.5, 40.0);
  const FloatFormat f(12, 4, -6, 1);
  const int bits = f.mantissa_bits();
  int checked = 0;
  for (int i = 0; i < 3000; ++i) {
    const std::size_t n = 1 + rng() % 5;
    std::vector<double> c(n);
    std::vector<WorkValue> v;
    std::vector<Rational> vq;
    for (std::size_t j = 0; j < n; ++j) {
      c[j] = coef(rng);
      const WorkValue w = WorkValue::from_real(val(rng), bits);
      v.push_back(w);
      vq.push_back(exact(w.to_real()));
    }
    Rational acc = trunc_bits(exact(c[0]) * vq[0], bits);
    for (std::size_t j = 1; j < n; ++j) {
      acc = trunc_bits(acc + trunc_bits(exact(c[j]) * vq[j], bits), bits);
    }
    AncillaLedger ledger;
    if (acc < 0) {
      EXPECT_THROW((void)weighted_sum(c, v, f, ledger), NegativeResultError);
      continue;
    }
    if (acc < exact(f.w_lower()) || floor_log2(acc) > f.max_binary_exponent()) {
      continue;
    }
    EXPECT_EQ(exact(weighted_sum(c, v, f, ledger, 17)), acc);
    EXPECT_EQ(ledger.consumed(), 0u);
    EXPECT_EQ(ledger.reusable_peak(), 17u);
    ++checked;
  }
  EXPECT_GT(checked, 500);
}

TEST(WeightedSum, ReusablePeakIsAHighWaterMark) {
  const FloatFormat f(8, 4, -4, 1);
  AncillaLedger ledger;
  const std::vector<SoftValue> v{encode(3.0, f)};
  const std::vector<double> c{1.0};
  (void)weighted_sum(c, v, ledger, 12);
  (void)weighted_sum(c, v, ledger, 5);
  EXPECT_EQ(ledger.reusable_peak(), 12u);
}

TEST(SoftValueText, RoundTrips) {
  const SoftValue x(0b1011001, 5, FloatFormat(7, 3, -3, 2));
  EXPECT_EQ(to_string(x), "m:89 e:5 @M7E3A2off-3");
  EXPECT_EQ(parse_soft_value(to_string(x)), x);
  EXPECT_THROW((void)parse_soft_value("m:89 e:5"), FormatError);
  EXPECT_THROW((void)parse_soft_value("m:3 e:5 @M7E3A2off-3"), FormatError);
}
