#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace snmm {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

// Error hierarchy. Every failure the library reports derives from Error so
// callers (the CLI in particular) can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

/// Raised when a skew-normal component keeps (almost) no mass in free space.
class BlockedComponentError : public Error {
 public:
  using Error::Error;
};

}  // namespace snmm
