#pragma once

// Independent reference computations used by the tests. None of these call into
// the code they check beyond evaluating the drift.

#include <cmath>
#include <utility>

#include "kfp/model.hpp"

namespace oracle {

/// Centered finite-difference Jacobian of the drift.
inline kfp::DriftJacobian fd_jacobian(const kfp::ModelSpec& m, const kfp::PhasePoint& z,
                                      double h = 1e-5) {
  const int d = m.d;
  kfp::DriftJacobian j{kfp::Mat(d, d), kfp::Mat(d, d)};
  for (int k = 0; k < d; ++k) {
    kfp::PhasePoint a = z, b = z;
    a.x(k) += h;
    b.x(k) -= h;
    j.dxb.col(k) = (kfp::eval_drift(m, a) - kfp::eval_drift(m, b)) / (2 * h);
    a = z;
    b = z;
    a.v(k) += h;
    b.v(k) -= h;
    j.dvb.col(k) = (kfp::eval_drift(m, a) - kfp::eval_drift(m, b)) / (2 * h);
  }
  return j;
}

/// Eigenvalues of [[a, b], [b, c]] from the characteristic polynomial.
inline std::pair<double, double> eig2_sym(double a, double b, double c) {
  const double tr = a + c, det = a * c - b * b;
  const double disc = std::sqrt(tr * tr / 4 - det);
  return {tr / 2 - disc, tr / 2 + disc};
}

/// A = [[a, b], [b, c]] solving AM + MᵀA = -I for M = [[0, 1], [-1, -γ]], by hand:
/// the (0,0), (0,1) and (1,1) entries give -2b = -1, a - γb - c = 0, 2(b - γc) = -1.
struct Lyap2 {
  double a, b, c;
};
inline Lyap2 lyapunov_oscillator(double gamma) {
  const double b = 0.5;
  const double c = (b + 0.5) / gamma;
  return {c + gamma * b, b, c};
}

/// Hand expansion of -2σ²E_v + ∂_t D² + 2 D² J for d = 1, J = [[0, bx], [1, bv]].
struct Rt2 {
  double r00, r01, r10, r11;
};
inline Rt2 rt_expanded(double t, double eps, double bx, double bv, double sigma) {
  const double a = 1 - std::exp(-t / 3), ap = std::exp(-t / 3) / 3;
  return {eps * (3 * ap - 2) * a * a,
          eps * (2 * a * a * a * bx - 2 * a * a * bv - 2 * ap * a),
          eps * 2 * (1 - ap) * a,
          eps * (2 * (-a * a * bx + a * bv) + ap) - 2 * sigma * sigma};
}

/// x'' + x' + x = 0, x(0) = 1, x'(0) = 0: ω = √3/2.
inline std::pair<double, double> damped_oscillator(double t) {
  const double w = std::sqrt(3.0) / 2;
  const double e = std::exp(-t / 2);
  return {e * (std::cos(w * t) + std::sin(w * t) / (2 * w)), -e * std::sin(w * t) / w};
}

/// ∫₀ᵗ α² by composite Simpson with n panels.
inline double alpha_sq_quadrature(double t, int n = 20000) {
  auto f = [](double s) {
    const double a = 1 - std::exp(-s / 3);
    return a * a;
  };
  const double h = t / n;
  double s = f(0) + f(t);
  for (int i = 1; i < n; ++i) s += f(i * h) * (i % 2 ? 4 : 2);
  return s * h / 3;
}

}  // namespace oracle
