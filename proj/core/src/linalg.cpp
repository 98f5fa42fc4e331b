#include "kfp/linalg.hpp"

#include <Eigen/Eigenvalues>

namespace kfp {

double lambda_max_sym(const Mat& m) {
  const Mat s = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(s, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

double spectral_norm(const Mat& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(m);
  return svd.singularValues()(0);
}

double spectral_abscissa(const Mat& m) {
  Eigen::EigenSolver<Mat> es(m, false);
  return es.eigenvalues().real().maxCoeff();
}

Mat solve_lyapunov_equation(const Mat& m, const Mat& q) {
  const Eigen::Index n = m.rows();
  // vec(A M) = (Mᵀ ⊗ I) vec(A), vec(Mᵀ A) = (I ⊗ Mᵀ) vec(A), column-major vec.
  Mat k = Mat::Zero(n * n, n * n);
  const Mat id = Mat::Identity(n, n);
  const Mat mt = m.transpose();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      k.block(i * n, j * n, n, n) += mt(i, j) * id;
      if (i == j) k.block(i * n, j * n, n, n) += mt;
    }
  }
  const Vec rhs = -Eigen::Map<const Vec>(q.data(), n * n);
  const Vec sol = k.fullPivLu().solve(rhs);
  Mat a = Eigen::Map<const Mat>(sol.data(), n, n);
  return 0.5 * (a + a.transpose());
}

}  // namespace kfp
