#pragma once

#include <stdexcept>
#include <string>

namespace fundus {

// Bad input from the user or a precondition violation at an API boundary.
// The CLI maps this to exit code 2; anything else lands on exit code 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::runtime_error(msg);
}

inline void require_input(bool cond, const std::string& msg) {
  if (!cond) throw UsageError(msg);
}

}  // namespace fundus
