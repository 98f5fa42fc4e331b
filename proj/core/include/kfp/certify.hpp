#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "kfp/linalg.hpp"
#include "kfp/model.hpp"

namespace kfp {

/// Witness of the contraction condition
///   (v - v', b(z) - b(z'))·A(z - z') ≤ -eps_contract |z - z'|²  whenever |z - z'| ≥ R.
/// kappa is the rate of the linear part alone.
struct ContractionCertificate {
  Mat A;
  double kappa = 0.0;
  double R = 0.0;
  double eps_contract = 0.0;
  double A_opnorm = 0.0;
  /// How R and eps_contract were obtained: "linear", "gradient" or "bounded".
  std::string route = "linear";

  int dim() const { return static_cast<int>(A.rows() / 2); }
  /// Throws ContractViolation unless A is symmetric positive definite,
  /// 0 < eps_contract ≤ kappa and A_opnorm matches λ_max(A).
  void validate() const;
  /// The certificate for c·A; all rates scale with c, R is unchanged.
  ContractionCertificate scaled(double c) const;
};

struct LinearCertificate {
  Mat M;
  Mat A;
  double kappa = 0.0;
  double A_opnorm = 0.0;
  /// ‖AM + MᵀA + Id‖_max.
  double residual = 0.0;
};

/// A with A·M + Mᵀ·A = -Id. Throws CertificationInfeasible if M is not Hurwitz.
Mat solve_lyapunov(const Mat& M);

LinearCertificate certify_linear_matrix(const Mat& M);
/// M = [[0, Id], [-Id, -γ Id]].
LinearCertificate certify_linear(double gamma, int d);

/// Geometric search grid for the exclusion radius: R_k = 2^{k/8}, k ≥ -80.
double radius_grid(int k);

/// Gradient route: eps = κ - |A| (2 M_rad ‖∇F‖∞ / R + κ'); requires κ' < κ/|A|.
/// Returns the smallest grid R with eps ≥ target_fraction·(κ - |A| κ').
ContractionCertificate certify_perturbed(const LinearCertificate& linear,
                                         const PerturbationBounds& bounds,
                                         double target_fraction = 0.5);

/// Bounded route: |F(z) - F(z')| ≤ 2‖F‖∞ ≤ (2‖F‖∞/R)|z - z'| when |z - z'| ≥ R,
/// so eps = κ - 2|A|‖F‖∞/R. Smallest grid R with eps ≥ target_fraction·κ.
ContractionCertificate certify_bounded(const LinearCertificate& linear,
                                       const PerturbationBounds& bounds,
                                       double target_fraction = 0.5);

enum class CertifyRoute { gradient, bounded };

CertifyRoute parse_certify_route(const std::string& name);
std::string to_string(CertifyRoute route);

/// Linear certificate of linear_part(model) followed by the selected route.
ContractionCertificate certify_model(const ModelSpec& model,
                                     CertifyRoute route = CertifyRoute::gradient,
                                     double target_fraction = 0.5);

/// (v - v', b(z) - b(z'))·A(z - z') + eps_contract |z - z'|². Positive means violated.
double contraction_margin(const ContractionCertificate& cert, const ModelSpec& model,
                          const PhasePoint& z, const PhasePoint& zp);

struct FalsifierReport {
  long long n_pairs = 0;
  long long violations = 0;
  /// Largest margin / |z - z'|² seen; -inf when n_pairs = 0.
  double worst_relative_margin = 0.0;
  PhasePoint worst_z;
  PhasePoint worst_zp;
  /// Margins up to tolerance·|z - z'|² count as rounding, not violations.
  double tolerance = 0.0;
};

/// Samples pairs with |z - z'| log-uniform in [max(R, 1e-3), 100R + 10]: z ~ N(0, (2 + R)² Id),
/// z' = z + gap·u with u uniform on the sphere. Pair i uses RNG stream (seed, i), so the
/// report does not depend on the worker count.
FalsifierReport falsify_condition(const ContractionCertificate& cert, const ModelSpec& model,
                                  long long n_pairs, std::uint64_t seed, int workers = 0);

void write_certificate(const std::filesystem::path& path, const ContractionCertificate& cert);
ContractionCertificate read_certificate(const std::filesystem::path& path);

}  // namespace kfp
