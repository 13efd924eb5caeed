#pragma once

#include <stdexcept>
#include <string>

namespace mocap {

// Bad or inconsistent input data / configuration. CLI maps this to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Geometrically degenerate problem (point behind camera, parallel rays, ...).
class DegenerateError : public ValidationError {
 public:
  explicit DegenerateError(const std::string& what) : ValidationError(what) {}
};

// An iterative solver failed to make progress. CLI maps this to exit code 3.
class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mocap
