#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mgdm {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
// One sample path per row.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using SparseMatrix = Eigen::SparseMatrix<double>;
using ConstVectorRef = Eigen::Ref<const Vector>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parameters that can never produce a valid object (lag >= d, gamma <= 0, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

/// Invalid or non-stationary process parameters.
class ModelError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the support of a density.
class DomainError : public Error {
 public:
  using Error::Error;
};

class SingularFlowError : public Error {
 public:
  SingularFlowError(const std::string& what, Index particle)
      : Error(what), particle_(particle) {}
  /// Offending particle, or -1 when the coupled K x K factor is singular.
  Index particle() const { return particle_; }

 private:
  Index particle_;
};

/// A dense oracle was asked to materialize a matrix beyond its cap.
class OracleScaleError : public Error {
 public:
  using Error::Error;
};

}  // namespace mgdm
