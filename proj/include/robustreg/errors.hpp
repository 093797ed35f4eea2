#pragma once

#include <stdexcept>
#include <string>

namespace robustreg {

/// An estimator could not produce a result (e.g. no usable rows survived a
/// magnitude filter). Distinct from argument validation failures.
class EstimationError : public std::runtime_error {
 public:
  explicit EstimationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A matrix required to be full rank / positive definite was not.
class SingularMatrixError : public std::runtime_error {
 public:
  explicit SingularMatrixError(const std::string& msg) : std::runtime_error(msg) {}
};

/// An operation needed ground truth that the instance does not carry.
class MissingTruthError : public std::logic_error {
 public:
  explicit MissingTruthError(const std::string& msg) : std::logic_error(msg) {}
};

}  // namespace robustreg
