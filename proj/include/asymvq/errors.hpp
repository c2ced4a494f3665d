#pragma once

#include <stdexcept>
#include <string>

namespace asymvq {

/// Invalid or inconsistent configuration (bad key, incompatible checkpoint, dimension mismatch
/// between configured components).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data that violates an operation's precondition (indivisible resolution, non-binary mask).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not line up for an operation.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training diverged (non-finite loss) or otherwise cannot continue.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace asymvq
