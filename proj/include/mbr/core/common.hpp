#pragma once

#include <cstdint>
#include <stdexcept>
#include <sstream>
#include <string>

namespace mbr {

using Index = std::ptrdiff_t;

// Runtime failure (I/O, numerical abort, contract violation at runtime).
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Bad user input: config keys, preset names, malformed manifests.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(what) {}
};

namespace detail {
inline void format_into(std::ostringstream&) {}
template <typename T, typename... Rest>
void format_into(std::ostringstream& os, const T& v, const Rest&... rest) {
  os << v;
  format_into(os, rest...);
}
}  // namespace detail

template <typename... Args>
std::string strcat_all(const Args&... args) {
  std::ostringstream os;
  detail::format_into(os, args...);
  return os.str();
}

template <typename... Args>
[[noreturn]] void fail(const Args&... args) {
  throw Error(strcat_all(args...));
}

template <typename... Args>
[[noreturn]] void fail_validation(const Args&... args) {
  throw ValidationError(strcat_all(args...));
}

#define MBR_CHECK(cond, ...)                                        \
  do {                                                              \
    if (!(cond)) ::mbr::fail("check failed: " #cond " ", ##__VA_ARGS__); \
  } while (0)

}  // namespace mbr
