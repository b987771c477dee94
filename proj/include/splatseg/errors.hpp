#pragma once

#include <stdexcept>
#include <string>

namespace splatseg {

// Bad or inconsistent input data (files, shapes, invariant violations).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values or other numerical breakdown.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace splatseg
