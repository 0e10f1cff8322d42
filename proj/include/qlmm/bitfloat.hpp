/**
 * @file bitfloat.hpp
 * @brief Bit-exact unsigned floating point with an explicit leading mantissa bit,
 *        margined register addition and ancilla bookkeeping.
 *
 * A value in a FloatFormat(M, E, offset, A) is
 *
 *     mantissa * 2^(exponent_field + offset - (M - 1)),   mantissa in [2^(M-1), 2^M),
 *
 * with exponent_field in [0, 2^E). Every rounding step truncates toward zero, which
 * is what the register-level adder does when it drops shifted-out bits.
 */
#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "qlmm/errors.hpp"

namespace qlmm {

/// Ancillas left dirty by one margined addition with an A-bit margin.
[[nodiscard]] constexpr std::uint64_t adder_ancilla_cost(int margin_bits) noexcept {
  const auto a = static_cast<std::uint64_t>(margin_bits);
  return a + static_cast<std::uint64_t>(std::bit_width(a) - 1) + 3;
}

class FloatFormat {
 public:
  static constexpr int kMaxMantissaBits = 53;
  static constexpr int kMaxExponentBits = 10;

  FloatFormat(int mantissa_bits, int exponent_bits, int exponent_offset, int margin_bits)
      : mantissa_bits_(mantissa_bits),
        exponent_bits_(exponent_bits),
        exponent_offset_(exponent_offset),
        margin_bits_(margin_bits) {
    if (mantissa_bits < 2 || mantissa_bits > kMaxMantissaBits) {
      throw FormatError("mantissa_bits must lie in [2, 53], got " + std::to_string(mantissa_bits));
    }
    if (exponent_bits < 1 || exponent_bits > kMaxExponentBits) {
      throw FormatError("exponent_bits must lie in [1, 10], got " + std::to_string(exponent_bits));
    }
    // A = 0 leaves the margined adder with no room for the smaller operand.
    if (margin_bits < 1 || margin_bits > 62) {
      throw FormatError("margin_bits must lie in [1, 62], got " + std::to_string(margin_bits));
    }
    if (min_binary_exponent() - (mantissa_bits - 1) < -1000 || max_binary_exponent() > 1000) {
      throw FormatError("exponent_offset " + std::to_string(exponent_offset) + " leaves the double range");
    }
  }

  [[nodiscard]] int mantissa_bits() const noexcept { return mantissa_bits_; }
  [[nodiscard]] int exponent_bits() const noexcept { return exponent_bits_; }
  [[nodiscard]] int exponent_offset() const noexcept { return exponent_offset_; }
  [[nodiscard]] int margin_bits() const noexcept { return margin_bits_; }

  [[nodiscard]] std::uint32_t max_exponent_field() const noexcept {
    return (std::uint32_t{1} << exponent_bits_) - 1;
  }
  [[nodiscard]] int min_binary_exponent() const noexcept { return exponent_offset_; }
  [[nodiscard]] int max_binary_exponent() const noexcept {
    return static_cast<int>(max_exponent_field()) + exponent_offset_;
  }

  /// Smallest representable value, 2^offset.
  [[nodiscard]] double w_lower() const noexcept { return std::ldexp(1.0, min_binary_exponent()); }

  /// Largest representable value, (2^M - 1) * 2^(2^E - 1 + offset - (M - 1)).
  [[nodiscard]] double w_upper() const noexcept {
    const double top = std::ldexp(1.0, mantissa_bits_) - 1.0;
    return std::ldexp(top, max_binary_exponent() - (mantissa_bits_ - 1));
  }

  /// Qubits of one stored value (mantissa + exponent registers).
  [[nodiscard]] int register_bits() const noexcept { return mantissa_bits_ + exponent_bits_; }

  friend bool operator==(const FloatFormat&, const FloatFormat&) = default;

 private:
  int mantissa_bits_;
  int exponent_bits_;
  int exponent_offset_;
  int margin_bits_;
};

class SoftValue {
 public:
  SoftValue(std::uint64_t mantissa, std::uint32_t exponent_field, const FloatFormat& format)
      : mantissa_(mantissa), exponent_field_(exponent_field), format_(format) {
    const int m = format.mantissa_bits();
    if (mantissa < (std::uint64_t{1} << (m - 1)) || mantissa >= (std::uint64_t{1} << m)) {
      throw FormatError("mantissa " + std::to_string(mantissa) + " is not normalized to " +
                        std::to_string(m) + " bits");
    }
    if (exponent_field > format.max_exponent_field()) {
      throw FormatError("exponent field " + std::to_string(exponent_field) + " exceeds " +
                        std::to_string(format.exponent_bits()) + " bits");
    }
  }

  [[nodiscard]] std::uint64_t mantissa() const noexcept { return mantissa_; }
  [[nodiscard]] std::uint32_t exponent_field() const noexcept { return exponent_field_; }
  [[nodiscard]] const FloatFormat& format() const noexcept { return format_; }

  /// Exponent of the leading mantissa bit.
  [[nodiscard]] int binary_exponent() const noexcept {
    return static_cast<int>(exponent_field_) + format_.exponent_offset();
  }

  /// Exact: M <= 53 bits always fit a double.
  [[nodiscard]] double decode() const noexcept {
    return std::ldexp(static_cast<double>(mantissa_), binary_exponent() - (format_.mantissa_bits() - 1));
  }

  friend bool operator==(const SoftValue&, const SoftValue&) = default;

  /// Ordering by bit pattern; only meaningful within one format.
  friend std::strong_ordering operator<=>(const SoftValue& a, const SoftValue& b) {
    if (auto c = a.exponent_field_ <=> b.exponent_field_; c != 0) {
      return c;
    }
    return a.mantissa_ <=> b.mantissa_;
  }

 private:
  std::uint64_t mantissa_;
  std::uint32_t exponent_field_;
  FloatFormat format_;
};

class AncillaLedger {
 public:
  void consume(std::uint64_t qubits) noexcept { consumed_ += qubits; }
  void reserve_workspace(std::uint64_t qubits) noexcept { reusable_peak_ = std::max(reusable_peak_, qubits); }

  /// Non-uncomputable ancillas accrued so far; never decreases.
  [[nodiscard]] std::uint64_t consumed() const noexcept { return consumed_; }
  /// High-water mark of workspace that is uncomputed after use.
  [[nodiscard]] std::uint64_t reusable_peak() const noexcept { return reusable_peak_; }

 private:
  std::uint64_t consumed_ = 0;
  std::uint64_t reusable_peak_ = 0;
};

namespace detail {

using BigInt = boost::multiprecision::cpp_int;

/// Exact signed dyadic rational mantissa * 2^exponent.
struct Dyadic {
  BigInt mantissa = 0;
  int exponent = 0;
};

inline Dyadic dyadic_from_double(double v) {
  if (!std::isfinite(v)) {
    throw Error("non-finite value in dyadic arithmetic");
  }
  if (v == 0.0) {
    return {};
  }
  int e = 0;
  const double f = std::frexp(v, &e);
  const auto m = static_cast<std::int64_t>(std::ldexp(f, 53));
  return {BigInt(m), e - 53};
}

inline Dyadic dyadic_from_soft(const SoftValue& x) {
  return {BigInt(x.mantissa()), x.binary_exponent() - (x.format().mantissa_bits() - 1)};
}

/// Number of significant bits of |m|.
inline int bit_length(const BigInt& m) {
  if (m == 0) {
    return 0;
  }
  return static_cast<int>(boost::multiprecision::msb(boost::multiprecision::abs(m))) + 1;
}

/// Truncate toward zero to at most `bits` significant bits.
inline Dyadic truncate(Dyadic d, int bits) {
  const int n = bit_length(d.mantissa);
  if (n <= bits) {
    return d;
  }
  const int shift = n - bits;
  const bool negative = d.mantissa < 0;
  BigInt mag = boost::multiprecision::abs(d.mantissa) >> shift;
  d.mantissa = negative ? BigInt(-mag) : mag;
  d.exponent += shift;
  return d;
}

inline Dyadic add(const Dyadic& a, const Dyadic& b) {
  if (a.mantissa == 0) {
    return b;
  }
  if (b.mantissa == 0) {
    return a;
  }
  const int e = std::min(a.exponent, b.exponent);
  BigInt sum = (a.mantissa << (a.exponent - e)) + (b.mantissa << (b.exponent - e));
  return {std::move(sum), e};
}

inline Dyadic multiply(const Dyadic& a, const Dyadic& b) {
  return {a.mantissa * b.mantissa, a.exponent + b.exponent};
}

inline double to_double(const Dyadic& d) {
  if (d.mantissa == 0) {
    return 0.0;
  }
  const Dyadic t = truncate(d, 53);
  return std::ldexp(t.mantissa.convert_to<double>(), t.exponent);
}

inline int sign(const Dyadic& d) { return d.mantissa < 0 ? -1 : (d.mantissa > 0 ? 1 : 0); }

/// Truncate a strictly positive dyadic into `format`.
inline SoftValue to_soft(const Dyadic& d, const FloatFormat& format) {
  if (d.mantissa < 0) {
    throw NegativeResultError("negative value cannot be stored in an unsigned format");
  }
  if (d.mantissa == 0) {
    throw UnderflowError("zero is not representable");
  }
  const int m_bits = format.mantissa_bits();
  Dyadic t = truncate(d, m_bits);
  const int n = bit_length(t.mantissa);
  if (n < m_bits) {
    t.mantissa <<= (m_bits - n);
    t.exponent -= (m_bits - n);
  }
  const int binary_exponent = t.exponent + m_bits - 1;
  if (binary_exponent > format.max_binary_exponent()) {
    throw OverflowError("value 2^" + std::to_string(binary_exponent) + " exceeds w_upper");
  }
  if (binary_exponent < format.min_binary_exponent()) {
    throw UnderflowError("value 2^" + std::to_string(binary_exponent) + " is below w_lower");
  }
  return SoftValue(t.mantissa.convert_to<std::uint64_t>(),
                   static_cast<std::uint32_t>(binary_exponent - format.exponent_offset()), format);
}

}  // namespace detail

/// Nearest representable value not exceeding `value`.
[[nodiscard]] inline SoftValue encode(double value, const FloatFormat& format) {
  if (std::isnan(value)) {
    throw Error("cannot encode NaN");
  }
  if (value < 0.0) {
    throw NegativeResultError("cannot encode negative value " + std::to_string(value));
  }
  if (value > format.w_upper()) {
    throw OverflowError("value " + std::to_string(value) + " exceeds w_upper " + std::to_string(format.w_upper()));
  }
  if (value < format.w_lower()) {
    throw UnderflowError("value " + std::to_string(value) + " is below w_lower " +
                         std::to_string(format.w_lower()));
  }
  int e = 0;
  const double f = std::frexp(value, &e);
  const auto mantissa = static_cast<std::uint64_t>(std::floor(std::ldexp(f, format.mantissa_bits())));
  return SoftValue(mantissa, static_cast<std::uint32_t>(e - 1 - format.exponent_offset()), format);
}

/// Multiply by 2^n through the exponent register alone.
[[nodiscard]] inline SoftValue scale_pow2(const SoftValue& x, int n) {
  const long long field = static_cast<long long>(x.exponent_field()) + n;
  if (field < 0) {
    throw UnderflowError("exponent field underflows after scaling by 2^" + std::to_string(n));
  }
  if (field > static_cast<long long>(x.format().max_exponent_field())) {
    throw OverflowError("exponent field overflows after scaling by 2^" + std::to_string(n));
  }
  return SoftValue(x.mantissa(), static_cast<std::uint32_t>(field), x.format());
}

/**
 * Register-level addition a + b with the result written over `a`.
 *
 * The mantissa of the operand with the smaller exponent is shifted right to align.
 * When `a` is the smaller one its shifted-out bits land in the A-bit margin, so the
 * exponent gap exp(b) - exp(a) may not exceed A. The aligned mantissas are added,
 * a carry renormalizes by one bit, and every dropped bit truncates. Each call leaves
 * A + floor(log2 A) + 3 ancillas that cannot be uncomputed.
 */
[[nodiscard]] inline SoftValue add_margined(const SoftValue& a, const SoftValue& b, AncillaLedger& ledger) {
  if (!(a.format() == b.format())) {
    throw FormatError("add_margined operands must share a format");
  }
  const FloatFormat& fmt = a.format();
  const int m_bits = fmt.mantissa_bits();
  const long long ea = a.exponent_field();
  const long long eb = b.exponent_field();
  if (eb - ea > fmt.margin_bits()) {
    throw MarginError("exponent gap " + std::to_string(eb - ea) + " exceeds the " +
                      std::to_string(fmt.margin_bits()) + "-bit margin");
  }

  std::uint64_t sum = 0;
  long long exponent = 0;
  if (ea >= eb) {
    const long long gap = ea - eb;
    sum = a.mantissa() + (gap >= 64 ? 0 : (b.mantissa() >> gap));
    exponent = ea;
  } else {
    sum = b.mantissa() + (a.mantissa() >> (eb - ea));
    exponent = eb;
  }
  if (sum >> m_bits) {
    sum >>= 1;
    ++exponent;
  }
  if (exponent > static_cast<long long>(fmt.max_exponent_field())) {
    throw OverflowError("margined sum exceeds w_upper");
  }
  ledger.consume(adder_ancilla_cost(fmt.margin_bits()));
  return SoftValue(sum, static_cast<std::uint32_t>(exponent), fmt);
}

/**
 * Signed working-register value with a bounded number of significant bits.
 *
 * Derivative registers, Runge-Kutta stages and partial sums can be negative or zero,
 * so they live here rather than in SoftValue. Every producing operation truncates
 * toward zero to the requested precision.
 */
class WorkValue {
 public:
  WorkValue() = default;

  [[nodiscard]] static WorkValue from_real(double v, int bits) {
    return WorkValue(detail::truncate(detail::dyadic_from_double(v), bits));
  }
  [[nodiscard]] static WorkValue from_soft(const SoftValue& x) { return WorkValue(detail::dyadic_from_soft(x)); }

  [[nodiscard]] double to_real() const { return detail::to_double(value_); }
  [[nodiscard]] int sign() const { return detail::sign(value_); }
  [[nodiscard]] const detail::Dyadic& dyadic() const noexcept { return value_; }

  /// trunc(c * this)
  [[nodiscard]] WorkValue scaled(double c, int bits) const {
    return WorkValue(detail::truncate(detail::multiply(value_, detail::dyadic_from_double(c)), bits));
  }

  /// trunc(a + b)
  [[nodiscard]] friend WorkValue sum(const WorkValue& a, const WorkValue& b, int bits) {
    return WorkValue(detail::truncate(detail::add(a.value_, b.value_), bits));
  }

  /// Store into an unsigned format (truncating); requires a strictly positive value.
  [[nodiscard]] SoftValue to_soft(const FloatFormat& format) const { return detail::to_soft(value_, format); }

 private:
  explicit WorkValue(detail::Dyadic d) : value_(std::move(d)) {}

  detail::Dyadic value_;
};

/**
 * trunc(... trunc(trunc(c0 v0) + trunc(c1 v1)) ...), stored into `format`.
 *
 * The workspace is uncomputed afterwards, so only the ledger's reusable peak moves.
 */
[[nodiscard]] inline SoftValue weighted_sum(std::span<const double> coeffs, std::span<const WorkValue> values,
                                            const FloatFormat& format, AncillaLedger& ledger,
                                            std::uint64_t workspace_qubits = 0) {
  if (coeffs.size() != values.size() || coeffs.empty()) {
    throw Error("weighted_sum needs one coefficient per value and at least one term");
  }
  const int bits = format.mantissa_bits();
  WorkValue acc = values[0].scaled(coeffs[0], bits);
  for (std::size_t i = 1; i < coeffs.size(); ++i) {
    acc = sum(acc, values[i].scaled(coeffs[i], bits), bits);
  }
  ledger.reserve_workspace(workspace_qubits);
  if (acc.sign() < 0) {
    throw NegativeResultError("weighted sum is negative (" + std::to_string(acc.to_real()) + ")");
  }
  return acc.to_soft(format);
}

[[nodiscard]] inline SoftValue weighted_sum(std::span<const double> coeffs, std::span<const SoftValue> values,
                                            AncillaLedger& ledger, std::uint64_t workspace_qubits = 0) {
  if (values.empty()) {
    throw Error("weighted_sum needs at least one term");
  }
  for (const auto& v : values) {
    if (!(v.format() == values[0].format())) {
      throw FormatError("weighted_sum values must share a format");
    }
  }
  std::vector<WorkValue> work;
  work.reserve(values.size());
  for (const auto& v : values) {
    work.push_back(WorkValue::from_soft(v));
  }
  return weighted_sum(coeffs, work, values[0].format(), ledger, workspace_qubits);
}

// Golden-file text form: "m:<mantissa> e:<field> @M<M>E<E>A<A>off<offset>".

[[nodiscard]] inline std::string to_string(const FloatFormat& f) {
  return "@M" + std::to_string(f.mantissa_bits()) + "E" + std::to_string(f.exponent_bits()) + "A" +
         std::to_string(f.margin_bits()) + "off" + std::to_string(f.exponent_offset());
}

[[nodiscard]] inline std::string to_string(const SoftValue& x) {
  return "m:" + std::to_string(x.mantissa()) + " e:" + std::to_string(x.exponent_field()) + " " +
         to_string(x.format());
}

[[nodiscard]] inline SoftValue parse_soft_value(const std::string& text) {
  std::uint64_t mantissa = 0;
  std::uint32_t field = 0;
  int m = 0, e = 0, a = 0, off = 0;
  char tail = 0;
  const int n = std::sscanf(text.c_str(), "m:%lu e:%u @M%dE%dA%doff%d%c", &mantissa, &field, &m, &e, &a, &off, &tail);
  if (n != 6) {
    throw FormatError("malformed SoftValue text '" + text + "'");
  }
  return SoftValue(mantissa, field, FloatFormat(m, e, off, a));
}

}  // namespace qlmm
