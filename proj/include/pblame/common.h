#ifndef PBLAME_COMMON_H
#define PBLAME_COMMON_H

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace pblame {

// Error taxonomy. The CLI maps codes to distinct exit statuses.
enum class Errc { parse = 2, fit = 3, query = 4, nbound = 5, io = 6 };

class Error : public std::runtime_error {
 public:
  Error(Errc code, std::string msg) : std::runtime_error(std::move(msg)), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

inline Error parse_error(const std::string& msg) { return Error(Errc::parse, msg); }
inline Error fit_error(const std::string& msg) { return Error(Errc::fit, msg); }
inline Error query_error(const std::string& msg) { return Error(Errc::query, msg); }
inline Error nbound_error(const std::string& msg) { return Error(Errc::nbound, msg); }
inline Error io_error(const std::string& msg) { return Error(Errc::io, msg); }

// Complete assignment over at most 64 variables, bit i = value of variable i
// in declaration order.
using Bits = uint64_t;

constexpr int kMaxVars = 64;

inline bool bit(Bits b, int i) { return (b >> i) & 1u; }
inline Bits set_bit(Bits b, int i, bool v) {
  return v ? (b | (Bits(1) << i)) : (b & ~(Bits(1) << i));
}

// Uniform double in [0,1). std::mt19937_64 output is pinned by the standard;
// the distribution adapters are not, so we map raw bits ourselves to keep
// generated datasets byte-stable across standard libraries.
inline double next_unit(std::mt19937_64& rng) {
  return double(rng() >> 11) * 0x1.0p-53;
}

// Compensated accumulator for the linear-space sums in blame and the oracle.
class KahanSum {
 public:
  void add(double x) {
    double y = x - c_;
    double t = s_ + y;
    c_ = (t - s_) - y;
    s_ = t;
  }
  double value() const { return s_; }

 private:
  double s_ = 0.0, c_ = 0.0;
};

// Probability in log domain; -inf encodes 0.
class LogProb {
 public:
  LogProb() : lp_(-std::numeric_limits<double>::infinity()) {}
  static LogProb zero() { return LogProb(); }
  static LogProb one() { return from_log(0.0); }
  static LogProb from_log(double lp) {
    LogProb p;
    p.lp_ = lp;
    return p;
  }
  static LogProb from_linear(double v) {
    return v > 0 ? from_log(std::log(v)) : LogProb();
  }
  double log() const { return lp_; }
  double linear() const { return std::exp(lp_); }
  bool is_zero() const { return lp_ == -std::numeric_limits<double>::infinity(); }
  LogProb operator*(LogProb o) const {
    if (is_zero() || o.is_zero()) return LogProb();
    return from_log(lp_ + o.lp_);
  }
  LogProb operator+(LogProb o) const {
    if (is_zero()) return o;
    if (o.is_zero()) return *this;
    double hi = lp_ > o.lp_ ? lp_ : o.lp_;
    double lo = lp_ > o.lp_ ? o.lp_ : lp_;
    return from_log(hi + std::log1p(std::exp(lo - hi)));
  }
  bool operator<(LogProb o) const { return lp_ < o.lp_; }
  bool operator>(LogProb o) const { return lp_ > o.lp_; }

 private:
  double lp_;
};

// Round-trip-exact double formatting for all serializers.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace pblame

#endif
