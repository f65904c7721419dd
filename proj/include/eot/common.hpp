#pragma once

#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>

namespace eot {

// Error taxonomy. Everything user-facing derives from Error so callers can
// catch one type at the boundary; the concrete types map to distinct
// failure classes (bad tensor geometry, bad config, bad dataset, bad file).
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error("shape error: " + msg) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& msg) : Error("dataset error: " + msg) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error("io error: " + msg) {}
};

class LoadError : public Error {
 public:
  explicit LoadError(const std::string& msg) : Error("load error: " + msg) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& msg) : Error("validation error: " + msg) {}
};

class EngineError : public Error {
 public:
  explicit EngineError(const std::string& msg) : Error("engine error: " + msg) {}
};

namespace detail {

inline std::string cat() { return {}; }

template <typename Head, typename... Tail>
std::string cat(const Head& head, const Tail&... tail) {
  std::ostringstream os;
  os << head;
  return os.str() + cat(tail...);
}

}  // namespace detail

template <typename E = Error, typename... Args>
void require(bool cond, const Args&... parts) {
  if (!cond) throw E(detail::cat(parts...));
}

}  // namespace eot
