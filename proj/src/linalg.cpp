#include "mgdm/linalg.hpp"

namespace mgdm {

SquareFactor::SquareFactor(const Matrix& dense) : size_(dense.rows()) {
  if (dense.rows() != dense.cols()) throw DimensionError("SquareFactor: matrix is not square");
  if (size_ == 0) return;
  dense_ = std::make_unique<Eigen::PartialPivLU<Matrix>>(dense);
  log_det_ = log_abs_det<double>(*dense_);
  if (log_det_.sign == 0) dense_.reset();
}

SquareFactor::SquareFactor(const SparseMatrix& sparse) : size_(sparse.rows()) {
  if (sparse.rows() != sparse.cols()) throw DimensionError("SquareFactor: matrix is not square");
  if (size_ == 0) return;
  sparse_ = std::make_unique<Eigen::SparseLU<SparseMatrix, Eigen::NaturalOrdering<int>>>();
  sparse_->analyzePattern(sparse);
  sparse_->factorize(sparse);
  if (sparse_->info() != Eigen::Success) {
    log_det_.sign = 0;
    log_det_.log_abs = -std::numeric_limits<double>::infinity();
    sparse_.reset();
    return;
  }
  log_det_.log_abs = sparse_->logAbsDeterminant();
  log_det_.sign = static_cast<int>(sparse_->signDeterminant());
  if (!std::isfinite(log_det_.log_abs)) log_det_.sign = 0;
}

Matrix SquareFactor::solve(const Matrix& rhs) const {
  if (rhs.rows() != size_) throw DimensionError("SquareFactor::solve: row mismatch");
  if (singular()) throw SingularFlowError("SquareFactor::solve: singular factor", -1);
  if (size_ == 0) return rhs;
  if (dense_) return dense_->solve(rhs);
  return sparse_->solve(rhs);
}

}  // namespace mgdm
