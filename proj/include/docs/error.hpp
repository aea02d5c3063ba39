#pragma once

#include <stdexcept>
#include <string>

namespace docs {

// Shape or argument contract violated by the caller.
class shape_error : public std::invalid_argument {
 public:
  explicit shape_error(const std::string& what) : std::invalid_argument(what) {}
};

// Bad or missing input data (files, manifests, checkpoints).
class data_error : public std::runtime_error {
 public:
  explicit data_error(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values or failed numeric verification.
class numeric_error : public std::runtime_error {
 public:
  explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace docs
