#include <vector>
#include <cmath>

#include "doctest.h"
#include "kfp/errors.hpp"
#include "kfp/pde.hpp"

using namespace kfp;

namespace {

const ModelSpec& harmonic() {
  static const ModelSpec m = ModelSpec::perturbed_harmonic(1.0);
  return m;
}

const ModelSpec& nonequilibrium() {
  static const ModelSpec m = ModelSpec::perturbed_harmonic(1.0, {Perturbation::Family::trig, 0.3});
  return m;
}

struct Setup {
  PhaseGrid grid;
  DiscreteGenerator gen;
  SteadyState ss;
};

const Setup& setup64() {
  static const Setup s = [] {
    Setup out;
    out.grid = PhaseGrid::symmetric(6, 6, 64, 64);
    out.gen = assemble_generator(ModelSpec::equilibrium(1.0), out.grid);
    out.ss = steady_state(out.gen);
    return out;
  }();
  return s;
}

}  // namespace

TEST_CASE("grid geometry") {
  const auto g = PhaseGrid::make(-1, 3, -2, 2, 4, 8);
  CHECK(g.hx == 1.0);
  CHECK(g.hv == 0.5);
  CHECK(g.x(0) == -0.5);
  CHECK(g.v(7) == 1.75);
  CHECK(g.index(1, 2) == 10);
  CHECK_THROWS_AS(PhaseGrid::make(1, 1, 0, 1, 4, 4), ContractViolation);
  CHECK_THROWS_AS(PhaseGrid::make(0, 1, 0, 1, 4096, 4096, 1000), ContractViolation);
}

TEST_CASE("default domain covers six standard deviations") {
  auto [hx, hv] = default_halfwidths(ModelSpec::equilibrium(1.0));
  CHECK(hx == doctest::Approx(6.0));
  CHECK(hv == doctest::Approx(6.0));
  std::tie(hx, hv) = default_halfwidths(nonequilibrium());
  CHECK(hx == doctest::Approx(9.0));
  std::tie(hx, hv) = default_halfwidths(ModelSpec::equilibrium(2.0, 0.5));
  CHECK(hv == doctest::Approx(6 * 0.5 / std::sqrt(2.0)));
}

TEST_CASE("generator annihilates constants and conserves mass") {
  for (bool ref : {true, false}) {
    const auto grid = PhaseGrid::symmetric(6, 6, 32, 32);
    const auto gen = assemble_generator(nonequilibrium(), grid, {ref});
    const Vec one = Vec::Ones(grid.size());
    CHECK((gen.observable * one).cwiseAbs().maxCoeff() <= 1e-12);
    // Off-diagonal rates are nonnegative.
    for (int k = 0; k < gen.observable.outerSize(); ++k)
      for (SpMat::InnerIterator it(gen.observable, k); it; ++it)
        if (it.row() != it.col()) CHECK(it.value() >= 0.0);
    // Density operator is the exact transpose.
    CHECK((SpMat(gen.density) - SpMat(gen.observable.transpose())).norm() == 0.0);
  }
}

TEST_CASE("generator applied to v reproduces the drift") {
  const auto grid = PhaseGrid::symmetric(6, 6, 64, 64);
  const auto gen = assemble_generator(harmonic(), grid);
  const Vec v = sample_field(grid, FieldKind::observable, [](double, double v) { return v; }).values;
  const Vec lv = gen.observable * v;
  double worst = 0.0;
  for (int i = 1; i < grid.nx - 1; ++i)
    for (int j = 1; j < grid.nv - 1; ++j)
      worst = std::max(worst, std::abs(lv(grid.index(i, j)) - (-grid.x(i) - grid.v(j))));
  CHECK(worst <= 1e-10);
}

TEST_CASE("generator applied to x converges to v at first order") {
  std::vector<double> errs;
  for (int n : {32, 64, 128}) {
    const auto grid = PhaseGrid::symmetric(6, 6, n, n);
    const auto gen = assemble_generator(harmonic(), grid);
    const Vec x = sample_field(grid, FieldKind::observable, [](double x, double) { return x; }).values;
    const Vec lx = gen.observable * x;
    double err = 0.0;
    for (int i = 1; i < grid.nx - 1; ++i)
      for (int j = 0; j < grid.nv; ++j)
        if (std::abs(grid.x(i)) < 1 && std::abs(grid.v(j)) < 1)
          err = std::max(err, std::abs(lx(grid.index(i, j)) - grid.v(j)));
    errs.push_back(err);
  }
  // two halvings of h; first order allows 1/4 up to the drift in sample points
  CHECK(errs[2] < 0.35 * errs[0]);
  CHECK(errs[2] > 0.0);
}

TEST_CASE("steady state of the equilibrium model") {
  const auto& s = setup64();
  CHECK(s.ss.residual <= 1e-8);
  CHECK(s.ss.mu.values.minCoeff() > 0.0);
  CHECK(total_mass(s.grid, s.ss.mu.values) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(mu_norm(s.grid, Vec::Ones(s.grid.size()), s.ss.mu.values) == doctest::Approx(1.0).epsilon(1e-12));
  const Vec gibbs = gibbs_on_grid(ModelSpec::equilibrium(1.0), s.grid);
  CHECK(l1_distance(s.grid, s.ss.mu.values, gibbs) < 5e-3);
  const auto m = grid_moments(s.grid, s.ss.mu.values);
  CHECK(std::abs(m.cov_xv) < 1e-3);
  CHECK(m.var_x == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("steady state of the equilibrium model at 128x128") {
  const auto grid = PhaseGrid::symmetric(6, 6, 128, 128);
  const auto gen = assemble_generator(ModelSpec::equilibrium(1.0), grid);
  const auto ss = steady_state(gen);
  CHECK(ss.mu.values.minCoeff() > 0.0);
  const Vec gibbs = gibbs_on_grid(ModelSpec::equilibrium(1.0), grid);
  CHECK(l1_distance(grid, ss.mu.values, gibbs) < 1e-3);
  CHECK(std::abs(grid_moments(grid, ss.mu.values).cov_xv) < 1e-4);
}

TEST_CASE("tiny grid is reported as too small") {
  const auto grid = PhaseGrid::symmetric(6, 6, 3, 3);
  const auto gen = assemble_generator(ModelSpec::equilibrium(1.0), grid);
  CHECK_THROWS_AS(steady_state(gen), GridTooSmall);
}

TEST_CASE("non-convergence is a solver error with history") {
  const auto& s = setup64();
  SteadyStateOptions o;
  o.tol = 0.0;
  o.max_iter = 2;
  try {
    steady_state(s.gen, o);
    FAIL("expected SolverError");
  } catch (const SolverError& e) {
    CHECK(e.history().size() == 2);
  }
}

TEST_CASE("density evolution: identity at T = 0, stationarity and mass conservation") {
  const auto& s = setup64();
  EvolveOptions o;
  o.T = 0.0;
  o.dt = 0.01;
  auto r = evolve_density(s.gen, s.ss.mu, o);
  REQUIRE(r.snapshots.size() == 1);
  CHECK(r.snapshots[0].field.values == s.ss.mu.values);

  o.T = 1.0;
  o.dt = cfl_dt(s.gen);
  o.snapshot_times = {0.25, 0.5, 1.0};
  r = evolve_density(s.gen, s.ss.mu, o);
  CHECK(r.snapshots.size() == 3);
  CHECK(r.max_conservation_drift <= 1e-12);
  for (const auto& snap : r.snapshots)
    CHECK((snap.field.values - s.ss.mu.values).norm() <= 1e-8 * s.ss.mu.values.norm());
}

TEST_CASE("relative density decays monotonically from an off-centre bump") {
  const auto& s = setup64();
  GridField f0 = sample_field(s.grid, FieldKind::density, [](double x, double v) {
    return std::exp(-((x - 1.5) * (x - 1.5) + v * v) / (2 * 0.49));
  });
  f0.values /= total_mass(s.grid, f0.values);
  EvolveOptions o;
  o.T = 3.0;
  o.dt = cfl_dt(s.gen);
  for (int k = 0; k <= 12; ++k) o.snapshot_times.push_back(0.25 * k);
  const auto r = evolve_density(s.gen, f0, o);
  CHECK(r.max_conservation_drift <= 1e-12);
  double prev = 1e300;
  for (const auto& snap : r.snapshots) {
    const Vec h = relative_density(snap.field, s.ss.mu.values).values.array() - 1.0;
    const double n = mu_norm(s.grid, h, s.ss.mu.values);
    CHECK(n <= prev + 1e-10);
    prev = n;
  }
}

TEST_CASE("CFL violation is refused with a suggestion") {
  const auto& s = setup64();
  EvolveOptions o;
  o.T = 1.0;
  o.dt = 10 * cfl_dt(s.gen);
  try {
    evolve_observable(s.gen, GridField{Vec::Ones(s.grid.size()), FieldKind::observable}, o);
    FAIL("expected CflViolation");
  } catch (const CflViolation& e) {
    CHECK(e.suggested_dt() == doctest::Approx(cfl_dt(s.gen)));
  }
}

TEST_CASE("observable evolution: constants, mean conservation, contraction") {
  const auto& s = setup64();
  EvolveOptions o;
  o.T = 5.0;
  o.dt = cfl_dt(s.gen);
  const auto c = evolve_observable(s.gen, GridField{Vec::Constant(s.grid.size(), 2.5), FieldKind::observable}, o);
  CHECK((c.snapshots.back().field.values.array() - 2.5).abs().maxCoeff() <= 1e-12);

  const Vec g0 = sample_field(s.grid, FieldKind::observable, [](double x, double v) {
    return std::sin(x) + v * v / 4;
  }).values;
  const auto r = evolve_observable(s.gen, GridField{g0, FieldKind::observable}, o, s.ss.mu.values);
  // drift per step against a budget of 1e-10 per unit time
  CHECK(r.max_conservation_drift <= 1e-10 * r.dt);
  const Vec& mu = s.ss.mu.values;
  const double m0 = mu_mean(s.grid, g0, mu);
  const Vec gT = r.snapshots.back().field.values;
  CHECK(mu_norm(s.grid, gT.array() - m0, mu) <= mu_norm(s.grid, g0.array() - m0, mu));
}

TEST_CASE("density and observable steps are dual in the Lebesgue pairing") {
  const auto grid = PhaseGrid::symmetric(6, 6, 24, 24);
  const auto gen = assemble_generator(nonequilibrium(), grid);
  const CrankNicolson obs(gen.observable, 0.01);
  const CrankNicolson den(gen.density, 0.01);
  const Vec f = Vec::Random(grid.size()), g = Vec::Random(grid.size());
  CHECK(den.step(f).dot(g) == doctest::Approx(f.dot(obs.step(g))).epsilon(1e-12));
}

TEST_CASE("commutation relation at first order") {
  // ∇(L g) - L(∇g) - J∇g → 0 with J = [[0, ∂_x b], [1, ∂_v b]] applied to (g_x, g_v).
  const auto& m = nonequilibrium();
  auto g_fn = [](double x, double v) { return std::sin(0.7 * x) * std::cos(0.5 * v) + 0.1 * x * v; };
  double prev = 0.0;
  for (int n : {40, 80, 160}) {
    const auto grid = PhaseGrid::symmetric(6, 6, n, n);
    const auto gen = assemble_generator(m, grid);
    const Vec g = sample_field(grid, FieldKind::observable, g_fn).values;
    const auto [gx, gv] = gradient(grid, g);
    const auto [lgx, lgv] = gradient(grid, Vec(gen.observable * g));
    const Vec l_gx = gen.observable * gx, l_gv = gen.observable * gv;
    double err = 0.0;
    for (int i = 0; i < grid.nx; ++i) {
      for (int j = 0; j < grid.nv; ++j) {
        if (std::abs(grid.x(i)) > 2 || std::abs(grid.v(j)) > 2) continue;
        const int k = grid.index(i, j);
        const auto jac = eval_jacobian(m, PhasePoint(grid.x(i), grid.v(j)));
        err = std::max(err, std::abs(lgx(k) - l_gx(k) - jac.dxb(0, 0) * gv(k)));
        err = std::max(err, std::abs(lgv(k) - l_gv(k) - gx(k) - jac.dvb(0, 0) * gv(k)));
      }
    }
    if (prev > 0.0) CHECK(err < 0.7 * prev);
    prev = err;
  }
}

TEST_CASE("field helpers") {
  const auto& s = setup64();
  const auto one = relative_density(s.ss.mu, s.ss.mu.values);
  CHECK((one.values.array() - 1.0).abs().maxCoeff() == 0.0);
  const Vec g = sample_field(s.grid, FieldKind::observable, [](double x, double v) { return x + 2 * v; }).values;
  const auto [gx, gv] = gradient(s.grid, g);
  CHECK((gx.array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK((gv.array() - 2.0).abs().maxCoeff() < 1e-12);
  Vec bad = s.ss.mu.values;
  bad(3) = 0.0;
  CHECK_THROWS_AS(mu_norm(s.grid, g, bad), ContractViolation);
  CHECK_THROWS_AS(relative_density(s.ss.mu, bad), ContractViolation);
}
