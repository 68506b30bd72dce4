#pragma once

#include <Eigen/Dense>

namespace kfdmd::linalg {

using Index = Eigen::Index;

// (A + A^T) / 2.
Eigen::MatrixXd symmetrize(const Eigen::Ref<const Eigen::MatrixXd>& a);

// Smallest eigenvalue of a symmetric matrix.
double min_eigenvalue(const Eigen::Ref<const Eigen::MatrixXd>& a);

// Symmetric square root of a symmetric PSD matrix; negative eigenvalues are
// clipped to zero.
Eigen::MatrixXd psd_sqrt(const Eigen::Ref<const Eigen::MatrixXd>& a);

// Symmetric inverse square root of a symmetric positive-definite matrix.
Eigen::MatrixXd spd_inv_sqrt(const Eigen::Ref<const Eigen::MatrixXd>& a);

// Solves A X = B for symmetric positive-definite A by Cholesky. Throws
// NumericalError when A is not numerically positive definite.
Eigen::MatrixXd spd_solve(const Eigen::Ref<const Eigen::MatrixXd>& a, const Eigen::Ref<const Eigen::MatrixXd>& b);

// Largest singular value.
double spectral_norm(const Eigen::Ref<const Eigen::MatrixXd>& a);

// rows x cols matrix (rows < cols) with orthonormal rows that are all
// orthogonal to the ones vector, built from the Helmert basis.
Eigen::MatrixXd helmert_rows(Index rows, Index cols);

}  // namespace kfdmd::linalg
