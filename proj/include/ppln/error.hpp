#pragma once

#include <stdexcept>
#include <string>

namespace ppln {

// Mirrors ppln_status in ppln.h; values are part of the C ABI.
enum class ErrorCode : int {
  invalid_argument = 1,
  out_of_range = 2,
  no_solution = 3,
  no_convergence = 4,
  io = 5,
  parse = 6,
  no_signal = 7,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

}  // namespace ppln
