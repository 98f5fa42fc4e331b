#include <cmath>

#include "doctest.h"
#include "kfp/errors.hpp"
#include "kfp/mc.hpp"
#include <unsupported/Eigen/MatrixFunctions>
#include "oracles.hpp"

using namespace kfp;

TEST_CASE("deterministic oscillator converges at first order") {
  ModelSpec m = ModelSpec::perturbed_harmonic(1.0);
  m.sigma = 1e-300;  // effectively noiseless; σ must stay positive
  double prev = 0.0;
  for (double dt : {0.02, 0.01, 0.005}) {
    SdeRunConfig cfg;
    cfg.dt = dt;
    cfg.T = 5.0;
    const auto tr = integrate(m, PhasePoint(1.0, 0.0), cfg);
    const auto [x, v] = oracle::damped_oscillator(5.0);
    const double err = std::hypot(tr[0].z.back().x(0) - x, tr[0].z.back().v(0) - v);
    if (prev > 0.0) CHECK(err == doctest::Approx(prev / 2).epsilon(0.1));
    prev = err;
  }
  SdeRunConfig cfg;
  cfg.dt = 0.05;
  cfg.T = 5.0;
  cfg.integrator = Integrator::splitting_oab;
  const auto tr = integrate(m, PhasePoint(1.0, 0.0), cfg);
  const auto [x, v] = oracle::damped_oscillator(5.0);
  CHECK(std::abs(tr[0].z.back().x(0) - x) < 1e-12);
  CHECK(std::abs(tr[0].z.back().v(0) - v) < 1e-12);
}

TEST_CASE("T = 0 returns the initial point") {
  SdeRunConfig cfg;
  cfg.T = 0.0;
  const auto tr = integrate(ModelSpec::perturbed_harmonic(1.0), PhasePoint(0.3, -0.2), cfg);
  REQUIRE(tr[0].z.size() == 1);
  CHECK(tr[0].z[0].x(0) == 0.3);
  CHECK(tr[0].z[0].v(0) == -0.2);
}

TEST_CASE("same seed gives bit-identical runs for any worker count") {
  const auto m = ModelSpec::perturbed_harmonic(1.0, {Perturbation::Family::trig, 0.3});
  SdeRunConfig cfg;
  cfg.T = 2.0;
  cfg.n_traj = 100;
  cfg.seed = 99;
  cfg.workers = 1;
  const auto a = integrate(m, PhasePoint(0.5, 0.5), cfg);
  cfg.workers = 5;
  const auto b = integrate(m, PhasePoint(0.5, 0.5), cfg);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].z.back().stacked() == b[i].z.back().stacked());
  cfg.seed = 100;
  const auto c = integrate(m, PhasePoint(0.5, 0.5), cfg);
  CHECK(a[0].z.back().stacked() != c[0].z.back().stacked());
}

TEST_CASE("blow-up is reported as divergence") {
  ModelSpec m;
  m.drift = CustomDrift{[](const PhasePoint& z) { Vec b = 10.0 * z.x + 10.0 * z.v; return b; }, {}};
  SdeRunConfig cfg;
  cfg.dt = 0.1;
  cfg.T = 100.0;
  CHECK_THROWS_AS(integrate(m, PhasePoint(1.0, 1.0), cfg), Divergence);
}

TEST_CASE("equal starts stay equal under synchronous coupling") {
  const auto m = ModelSpec::perturbed_harmonic(1.0, {Perturbation::Family::trig, 0.3});
  const auto cert = certify_model(m, CertifyRoute::bounded);
  SdeRunConfig cfg;
  cfg.T = 3.0;
  cfg.n_traj = 50;
  cfg.snapshot_times = {0, 1, 2, 3};
  const auto r = couple_synchronous(m, PhasePoint(1.0, 0.0), PhasePoint(1.0, 0.0), cfg, cert,
                                    drift_bounds(m).one_sided_K);
  for (double d : r.stats.mean_sq_dist) CHECK(d == 0.0);
  CHECK(r.verdict1);
}

TEST_CASE("linear A-form decays at the exact rate") {
  const auto m = ModelSpec::perturbed_harmonic(1.0);
  const auto cert = certify_model(m);
  for (Integrator integ : {Integrator::euler_maruyama, Integrator::splitting_oab}) {
    double prev = 0.0;
    for (double dt : {0.01, 0.005}) {
      SdeRunConfig cfg;
      cfg.dt = dt;
      cfg.T = 1.0;
      cfg.n_traj = 4;
      cfg.integrator = integ;
      const auto r = couple_synchronous(m, PhasePoint(1.0, 0.0), PhasePoint(-1.0, 0.5), cfg, cert, 0.0);
      // Exact flow: d/dt Q = 2Δ·sym(AM)Δ = -|Δ|². Compare Q(1) with its closed form.
      Mat M = linear_part(m);
      Vec d0(2);
      d0 << 2.0, -0.5;
      const Vec d1 = (M * 1.0).exp() * d0;
      const double err = std::abs(r.stats.mean_A_dist.back() - d1.dot(cert.A * d1));
      if (prev > 0.0 && integ == Integrator::euler_maruyama) CHECK(err < 0.6 * prev);
      if (integ == Integrator::splitting_oab) CHECK(err < 1e-10);
      prev = err;
      CHECK(r.verdict2);
    }
  }
}

TEST_CASE("coupling verdicts on a perturbed model") {
  const auto m = ModelSpec::perturbed_harmonic(1.0, {Perturbation::Family::trig, 0.3});
  const auto cert = certify_model(m, CertifyRoute::bounded);
  SdeRunConfig cfg;
  cfg.dt = 0.01;
  cfg.T = 3.0;
  cfg.n_traj = 500;
  cfg.snapshot_times = {0, 0.5, 1, 2, 3};
  const auto r = couple_synchronous(m, PhasePoint(4.0, 0.0), PhasePoint(-4.0, 1.0), cfg, cert,
                                    drift_bounds(m).one_sided_K);
  CHECK(r.verdict1);
  CHECK(r.verdict2_checks > 0);
  CHECK(r.verdict2);
}

TEST_CASE("confidence half-widths shrink like n^-1/2") {
  const auto m = ModelSpec::perturbed_harmonic(1.0, {Perturbation::Family::trig, 0.3});
  const auto cert = certify_model(m, CertifyRoute::bounded);
  SdeRunConfig cfg;
  cfg.T = 2.0;
  cfg.snapshot_times = {2.0};
  cfg.n_traj = 400;
  const auto a = couple_synchronous(m, PhasePoint(2.0, 0.0), PhasePoint(-2.0, 0.0), cfg, cert, 1.0);
  cfg.n_traj = 1600;
  const auto b = couple_synchronous(m, PhasePoint(2.0, 0.0), PhasePoint(-2.0, 0.0), cfg, cert, 1.0);
  CHECK(b.stats.ci_sq_dist.back() == doctest::Approx(a.stats.ci_sq_dist.back() / 2).epsilon(0.25));
}

TEST_CASE("equilibrium moments") {
  SdeRunConfig cfg;
  cfg.dt = 0.01;
  cfg.T = 60.0;
  cfg.n_traj = 200;
  cfg.seed = 4;
  const auto r = ergodic_moments(ModelSpec::equilibrium(1.0), PhasePoint(0.0, 0.0), cfg, 10.0);
  CHECK(r.var_x.value == doctest::Approx(1.0).epsilon(0.05));
  CHECK(r.var_v.value == doctest::Approx(1.0).epsilon(0.05));
  CHECK(std::abs(r.cov_xv.value) < 0.05);
  CHECK(std::abs(r.cov_xv.value) < 4 * r.cov_xv.ci);

  const auto s = ergodic_moments(ModelSpec::equilibrium(2.0, 0.5), PhasePoint(0.0, 0.0), cfg, 10.0);
  CHECK(s.var_x.value == doctest::Approx(0.125).epsilon(0.1));
  CHECK(s.var_v.value == doctest::Approx(0.125).epsilon(0.1));
}

TEST_CASE("halving dt moves moments by less than the CI") {
  SdeRunConfig cfg;
  cfg.T = 40.0;
  cfg.n_traj = 200;
  cfg.seed = 12;
  cfg.integrator = Integrator::splitting_oab;
  const auto m = ModelSpec::perturbed_harmonic(1.0, {Perturbation::Family::trig, 0.3});
  cfg.dt = 0.02;
  const auto a = ergodic_moments(m, PhasePoint(0.0, 0.0), cfg, 5.0);
  cfg.dt = 0.01;
  const auto b = ergodic_moments(m, PhasePoint(0.0, 0.0), cfg, 5.0);
  CHECK(std::abs(a.var_x.value - b.var_x.value) < a.var_x.ci + b.var_x.ci);
  CHECK(std::abs(a.var_v.value - b.var_v.value) < a.var_v.ci + b.var_v.ci);
}

TEST_CASE("invalid run configurations") {
  SdeRunConfig cfg;
  cfg.dt = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ContractViolation);
  cfg.dt = 0.1;
  cfg.n_traj = 0;
  CHECK_THROWS_AS(cfg.validate(), ContractViolation);
  CHECK_THROWS_AS(parse_integrator("rk4"), ContractViolation);
}
