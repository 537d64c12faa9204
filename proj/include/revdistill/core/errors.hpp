#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace revdistill {

// Fatal misconfiguration: unknown backbone, unresolvable weights, bad flags.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Problems with datasets or input files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shape mismatches on public interfaces.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values encountered where finite math is required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
[[noreturn]] inline void check_failed(const char* expr, const char* file, int line,
                                      const std::string& msg) {
  std::ostringstream os;
  os << "invariant violated: " << expr << " at " << file << ":" << line;
  if (!msg.empty()) os << " (" << msg << ")";
  throw std::logic_error(os.str());
}
}  // namespace detail

}  // namespace revdistill

// Internal invariant check. Always on; these guard programming errors, not
// user input.
#define RD_CHECK(expr)                                                        \
  do {                                                                        \
    if (!(expr)) ::revdistill::detail::check_failed(#expr, __FILE__, __LINE__, ""); \
  } while (0)

#define RD_CHECK_MSG(expr, msg)                                               \
  do {                                                                        \
    if (!(expr)) {                                                            \
      std::ostringstream rd_os_;                                              \
      rd_os_ << msg;                                                          \
      ::revdistill::detail::check_failed(#expr, __FILE__, __LINE__, rd_os_.str()); \
    }                                                                         \
  } while (0)
