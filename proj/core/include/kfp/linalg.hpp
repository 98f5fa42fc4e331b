#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace kfp {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double>;

/// Largest eigenvalue of the symmetric part (M + Mᵀ)/2.
double lambda_max_sym(const Mat& m);

/// Spectral norm (largest singular value).
double spectral_norm(const Mat& m);

}  // namespace kfp

namespace kfp {

/// Solves A·M + Mᵀ·A = -Q for A through the vectorized (Kronecker) system.
/// Dense direct solve; intended for the small 2d × 2d matrices of this library.
Mat solve_lyapunov_equation(const Mat& m, const Mat& q);

/// Max real part over the eigenvalues of M.
double spectral_abscissa(const Mat& m);

}  // namespace kfp
