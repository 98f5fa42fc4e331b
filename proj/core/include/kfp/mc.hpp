#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kfp/certify.hpp"
#include "kfp/linalg.hpp"
#include "kfp/model.hpp"

namespace kfp {

enum class Integrator { euler_maruyama, splitting_oab };

Integrator parse_integrator(const std::string& name);
std::string to_string(Integrator integrator);

struct SdeRunConfig {
  double dt = 0.01;
  double T = 1.0;
  long long n_traj = 1;
  std::uint64_t seed = 0;
  Integrator integrator = Integrator::euler_maruyama;
  /// Times in [0, T], rounded to the nearest step. Empty → {0, T}.
  std::vector<double> snapshot_times;
  /// 0 → hardware concurrency. Results do not depend on it.
  int workers = 0;

  void validate() const;
};

struct Trajectory {
  std::vector<double> t;
  std::vector<PhasePoint> z;
};

/// n_traj trajectories from z0; trajectory i draws its noise from stream (seed, i).
/// Euler-Maruyama: x += v dt, v += b dt + √(2σ² dt) ξ. Splitting: half kick with
/// the nonlinear remainder, exact Gaussian step of the linear part, half kick.
/// Throws Divergence when |z| exceeds 1e8.
std::vector<Trajectory> integrate(const ModelSpec& model, const PhasePoint& z0,
                                  const SdeRunConfig& cfg);

struct CouplingStats {
  std::vector<double> times;
  std::vector<double> mean_sq_dist;
  std::vector<double> mean_A_dist;
  /// 95% normal-approximation half-widths.
  std::vector<double> ci_sq_dist;
  std::vector<double> ci_A_dist;
};

struct CouplingResult {
  CouplingStats stats;
  /// e^{growth_rate t} |Δz₀|² at each snapshot; growth_rate = 2K + dt G² for
  /// Euler-Maruyama (G = 1 + ‖∇b‖∞ bounds the one-step expansion), 2K otherwise.
  std::vector<double> bound;
  double growth_rate = 0.0;
  long long verdict1_violations = 0;
  bool verdict1 = true;

  /// Pathwise A-form drift: for |Δ_n| ≥ R, (Q_{n+1} - Q_n)/dt ≤ -2 eps |Δ_n|² + bias |Δ_n|².
  double bias_coeff = 0.0;
  long long verdict2_checks = 0;
  long long verdict2_violations = 0;
  /// max of ((Q_{n+1} - Q_n)/dt + 2 eps |Δ_n|²) / |Δ_n|² - bias_coeff over the checks.
  double verdict2_worst = 0.0;
  bool verdict2 = true;
};

/// Synchronous coupling: pair i evolves both copies with the noise of stream (seed, i).
CouplingResult couple_synchronous(const ModelSpec& model, const PhasePoint& z0,
                                  const PhasePoint& z0p, const SdeRunConfig& cfg,
                                  const ContractionCertificate& cert, double K);

struct MomentEstimate {
  double value = 0.0;
  double ci = 0.0;  // 95% half-width
};

/// Stationary moments of the first coordinate pair (x₁, v₁).
struct ErgodicMoments {
  MomentEstimate mean_x;
  MomentEstimate mean_v;
  MomentEstimate var_x;
  MomentEstimate var_v;
  MomentEstimate cov_xv;
  MomentEstimate cov_x2v2;
  long long batches = 0;
  long long samples = 0;
};

/// Time averages after burn_in over all trajectories; confidence intervals from
/// batch means (batches_per_traj per trajectory) with the delta method for
/// covariances.
ErgodicMoments ergodic_moments(const ModelSpec& model, const PhasePoint& z0,
                               const SdeRunConfig& cfg, double burn_in, int batches_per_traj = 10);

}  // namespace kfp
