#pragma once

#include <charconv>
#include <cmath>
#include <string>

namespace ppln {

// Shortest representation that round-trips.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// Six significant digits, for human-facing summaries.
inline std::string format_sig6(double v) {
  if (!std::isfinite(v)) return format_double(v);
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 6);
  return std::string(buf, res.ptr);
}

}  // namespace ppln
