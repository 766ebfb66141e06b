#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace prinstrat {

/// Closed interval [lo, hi]; endpoints may be infinite.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  Interval() = default;
  Interval(double lo_, double hi_) : lo(lo_), hi(hi_) {
    if (std::isnan(lo) || std::isnan(hi) || lo > hi)
      throw std::invalid_argument("Interval: require lo <= hi, got [" +
                                  std::to_string(lo_) + ", " + std::to_string(hi_) + "]");
  }

  double width() const { return hi - lo; }
  bool contains(double x) const { return x >= lo && x <= hi; }
  bool is_finite() const { return std::isfinite(lo) && std::isfinite(hi); }

  static Interval whole() {
    Interval iv;
    iv.lo = -std::numeric_limits<double>::infinity();
    iv.hi = std::numeric_limits<double>::infinity();
    return iv;
  }
};

// Error taxonomy, mirrored by the CLI exit codes.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace prinstrat
