#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <string>

namespace svhmc {

/// Shortest decimal that round-trips to the same double; "nan", "inf", "-inf"
/// for non-finite values.
inline std::string shortest(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string fixed(double v, int digits) {
  if (!std::isfinite(v)) return shortest(v);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace svhmc
