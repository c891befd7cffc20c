#pragma once

#include <functional>
#include <iostream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace sdsbm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller supplied arguments that violate an operation's preconditions.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data (CSV rows, typings, events).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A numerical routine hit a non-positive variance or a non-finite value.
class NumericalError : public Error {
 public:
  using Error::Error;
};

using WarningHandler = std::function<void(std::string_view)>;

inline WarningHandler& warning_handler() {
  static WarningHandler handler = [](std::string_view msg) {
    std::cerr << "sdsbm warning: " << msg << '\n';
  };
  return handler;
}

/// Replaces the sink for library warnings and returns the previous one.
inline WarningHandler set_warning_handler(WarningHandler handler) {
  WarningHandler previous = std::move(warning_handler());
  warning_handler() = std::move(handler);
  return previous;
}

inline void warn(std::string_view msg) {
  if (warning_handler()) warning_handler()(msg);
}

}  // namespace sdsbm
