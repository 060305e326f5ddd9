#pragma once

#include "mgdm/types.hpp"

#include <Eigen/SparseLU>

#include <cmath>
#include <limits>
#include <memory>

namespace mgdm {

/// log|det A| together with the sign of det A (0 when singular).
template <typename Scalar = double>
struct LogDet {
  Scalar log_abs = 0;
  int sign = 1;

  LogDet& operator+=(const LogDet& other) {
    log_abs += other.log_abs;
    sign *= other.sign;
    return *this;
  }
};

/// log|det| and sign read off an existing partial-pivoting LU.
template <typename Scalar>
LogDet<Scalar> log_abs_det(const Eigen::PartialPivLU<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>>& lu) {
  LogDet<Scalar> out;
  const auto& lu_matrix = lu.matrixLU();
  if (lu_matrix.rows() == 0) return out;
  out.sign = static_cast<int>(lu.permutationP().determinant());
  for (Index i = 0; i < lu_matrix.rows(); ++i) {
    const Scalar u = lu_matrix(i, i);
    if (u == Scalar(0)) {
      out.sign = 0;
      out.log_abs = -std::numeric_limits<Scalar>::infinity();
      return out;
    }
    if (u < Scalar(0)) out.sign = -out.sign;
    out.log_abs += std::log(std::abs(u));
  }
  return out;
}

template <typename Derived>
LogDet<typename Derived::Scalar> log_abs_det(const Eigen::MatrixBase<Derived>& a) {
  using Scalar = typename Derived::Scalar;
  if (a.rows() == 0) return {};
  const Eigen::PartialPivLU<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> lu(a);
  return log_abs_det<Scalar>(lu);
}

/// Largest absolute eigenvalue of a symmetric matrix.
template <typename Derived>
typename Derived::Scalar symmetric_spectral_norm(const Eigen::MatrixBase<Derived>& a) {
  if (a.rows() == 0) return 0;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>>
      eig(a, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().cwiseAbs().maxCoeff();
}

/// Spectral norm of a wide K x d matrix via the K x K Gram matrix.
template <typename Derived>
typename Derived::Scalar spectral_norm(const Eigen::MatrixBase<Derived>& a) {
  if (a.size() == 0) return 0;
  using Scalar = typename Derived::Scalar;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> gram =
      a.rows() <= a.cols() ? (a * a.transpose()).eval() : (a.transpose() * a).eval();
  return std::sqrt(std::max(Scalar(0), symmetric_spectral_norm(gram)));
}

/// LU factorization of a square matrix, dense or sparse, used for the
/// repeated solves and determinants of the flow Jacobian factors.
class SquareFactor {
 public:
  explicit SquareFactor(const Matrix& dense);
  explicit SquareFactor(const SparseMatrix& sparse);

  Index size() const { return size_; }
  LogDet<double> log_det() const { return log_det_; }
  bool singular() const { return log_det_.sign == 0; }
  Matrix solve(const Matrix& rhs) const;

 private:
  Index size_ = 0;
  LogDet<double> log_det_;
  std::unique_ptr<Eigen::PartialPivLU<Matrix>> dense_;
  // Natural ordering keeps the LU fill inside the band of banded inputs.
  std::unique_ptr<Eigen::SparseLU<SparseMatrix, Eigen::NaturalOrdering<int>>> sparse_;
};

}  // namespace mgdm
