#include "coherency/error.hpp"

namespace coherency {

Error::Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(what), kind_(kind) {}

void usage_error(const std::string& what) { throw Error(ErrorKind::Usage, what); }
void numerical_error(const std::string& what) { throw Error(ErrorKind::Numerical, what); }
void io_error(const std::string& what) { throw Error(ErrorKind::Io, what); }

}  // namespace coherency
