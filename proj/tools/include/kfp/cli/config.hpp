#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kfp/certify.hpp"
#include "kfp/errors.hpp"
#include "kfp/mc.hpp"
#include "kfp/model.hpp"
#include "kfp/textio.hpp"

namespace kfp::cli {

/// Bad command line or configuration; maps to exit code 64.
class UsageError : public Error {
 public:
  using Error::Error;
};

struct GridConfig {
  int nx = 128;
  int nv = 128;
  /// Empty → default_halfwidths(model).
  std::optional<double> halfwidth_x;
  std::optional<double> halfwidth_v;
  bool reference_weighting = true;
};

struct EvolveConfig {
  double T = 10.0;
  /// Empty → the CFL bound of the assembled generator.
  std::optional<double> dt;
  /// h₀ = 1 + amplitude·sin(x)·exp(-v²/8).
  double amplitude = 0.5;
  double slack = 0.05;
  /// Budget for |Δ‖g‖²/Δt + 2σ²‖∇_v g‖²| in units of ‖g₀‖² per time unit.
  double dissipation_tol = 0.05;
  /// Times at which `evolve` writes the density and relative density.
  std::vector<double> snapshots;
};

enum class PoincareConstant { rayleigh, prop2 };

struct PoincareConfig {
  PoincareConstant constant = PoincareConstant::rayleigh;
  double t0 = 5.0;
  std::optional<double> dt;
  /// Grid used for the operator-norm power iteration (it dominates the cost).
  int opnorm_n = 64;
};

struct CertifyConfig {
  CertifyRoute route = CertifyRoute::gradient;
  double target_fraction = 0.5;
  long long n_pairs = 100000;
};

struct McConfig {
  double dt = 0.01;
  double T = 5.0;
  long long n_traj = 10000;
  Integrator integrator = Integrator::euler_maruyama;
  std::vector<double> snapshots;
  std::vector<double> z0 = {3.0, 0.0};
  std::vector<double> z0p = {-3.0, 0.0};
  /// Ergodic averages (moments command).
  long long ergodic_traj = 200;
  double ergodic_T = 500.0;
  double burn_in = 20.0;
  Integrator ergodic_integrator = Integrator::splitting_oab;
};

struct RunConfig {
  ModelSpec model;
  GridConfig grid;
  EvolveConfig evolve;
  PoincareConfig poincare;
  CertifyConfig certify;
  McConfig mc;
  std::filesystem::path output_dir = "kfp-out";
  std::uint64_t seed = 0;
  int workers = 0;
  /// Effective value of every key, for the config echo.
  std::vector<std::pair<std::string, std::string>> echo;
};

/// Every recognised "section.key".
const std::vector<std::string>& known_keys();

/// Builds a RunConfig; unknown keys, missing required keys (model.family, model.gamma)
/// and malformed values raise UsageError.
RunConfig parse_config(const KeyValues& kv);

/// Reads the file, applies `section.key=value` overrides in order, then parses.
RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides);

/// Writes config.echo.ini with the effective value of every key.
void write_config_echo(const RunConfig& cfg, const std::filesystem::path& dir);

PhasePoint to_phase_point(const std::vector<double>& z, int d);

}  // namespace kfp::cli
