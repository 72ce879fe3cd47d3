#pragma once

#include <stdexcept>
#include <string>

namespace coherency {

// Broad failure classes. The CLI maps them onto exit codes 1, 2 and 3.
enum class ErrorKind { Usage, Numerical, Io };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void usage_error(const std::string& what);
[[noreturn]] void numerical_error(const std::string& what);
[[noreturn]] void io_error(const std::string& what);

}  // namespace coherency
