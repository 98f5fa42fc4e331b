#include <cmath>
#include <map>
#include <random>

#include "doctest.h"
#include "kfp/errors.hpp"
#include "kfp/hypo.hpp"
#include "oracles.hpp"

using namespace kfp;

namespace {

struct Setup {
  PhaseGrid grid;
  DiscreteGenerator gen;
  Vec mu;
};

const Setup& setup(int n) {
  static std::map<int, Setup> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  Setup s;
  s.grid = PhaseGrid::symmetric(6, 6, n, n);
  s.gen = assemble_generator(ModelSpec::equilibrium(1.0), s.grid);
  s.mu = steady_state(s.gen).mu.values;
  return cache.emplace(n, std::move(s)).first->second;
}

}  // namespace

TEST_CASE("alpha and D squared at t = 0 and in the limit") {
  CHECK(alpha(0.0) == 0.0);
  CHECK(d_sq(0.0, 0.3).cwiseAbs().maxCoeff() == 0.0);
  CHECK(alpha(200.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(spectral_norm(d_sq(200.0, 0.3)) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK_THROWS_AS(alpha(-1.0), ContractViolation);
}

TEST_CASE("alpha is strictly increasing") {
  double prev = -1.0;
  for (int k = 0; k <= 1000; ++k) {
    const double a = alpha(0.05 * k);
    CHECK(a > prev);
    prev = a;
  }
}

TEST_CASE("D squared eigenvalues match the characteristic polynomial") {
  for (double t : {0.1, 1.0, 4.0, 30.0}) {
    const double eps = 0.17;
    const Mat m = d_sq(t, eps) / eps;
    const auto [lo, hi] = oracle::eig2_sym(m(0, 0), m(0, 1), m(1, 1));
    const double a = alpha(t);
    CHECK(std::abs(lo) < 1e-15);
    CHECK(hi == doctest::Approx(a * (1 + a * a)).epsilon(1e-14));
  }
}

TEST_CASE("operator norm of D squared stays below 2 eps") {
  for (int k = 0; k <= 10000; ++k) CHECK(spectral_norm(d_sq(0.01 * k, 1.0)) <= 2.0 + 1e-14);
}

TEST_CASE("time derivative of D squared matches finite differences") {
  for (double t : {0.0, 0.5, 3.0}) {
    const double h = 1e-6;
    const Mat fd = (d_sq(t + h, 0.4) - d_sq(std::max(0.0, t - h), 0.4)) / (t > 0 ? 2 * h : h);
    CHECK((fd - d_sq_dt(t, 0.4)).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("R_t generic assembly equals the hand expansion") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  double worst = 0.0;
  for (int s = 0; s < 1000; ++s) {
    const double t = 10 * u(rng), bx = -2 + 2 * u(rng), bv = -2 + 2 * u(rng), sigma = 0.5 + u(rng);
    const double eps = 0.05 + 0.2 * u(rng);
    DriftJacobian j{Mat::Constant(1, 1, bx), Mat::Constant(1, 1, bv)};
    const Mat r = rt_matrix(t, eps, j, sigma);
    const auto e = oracle::rt_expanded(t, eps, bx, bv, sigma);
    worst = std::max({worst, std::abs(r(0, 0) - e.r00), std::abs(r(0, 1) - e.r01),
                      std::abs(r(1, 0) - e.r10), std::abs(r(1, 1) - e.r11)});
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("R_t at t = 0 is the bare velocity dissipation") {
  const double sigma = 0.8, eps = 0.2;
  const Mat r0 = rt_matrix(0.0, eps, {Mat::Constant(1, 1, -1), Mat::Constant(1, 1, -1)}, sigma);
  // Every entry of D² and 2D²J carries a factor α; ∂_t D² at 0 is ε α'(0) E_v.
  CHECK(r0(0, 0) == 0.0);
  CHECK(r0(0, 1) == 0.0);
  CHECK(r0(1, 0) == 0.0);
  CHECK(r0(1, 1) == doctest::Approx(-2 * sigma * sigma + eps / 3).epsilon(1e-15));
}

TEST_CASE("select_eps plug-in and quadratic-form bound") {
  const auto e = select_eps_from_bound(1.0, 1.0);
  CHECK(e.M_coeff == 4.0);
  CHECK(e.eps_norm == doctest::Approx(2.0 / 4.5));
  CHECK(e.M_coeff * e.eps_norm - 2.0 <= -e.eps_norm / 2 + 1e-15);
  for (const auto& m : {ModelSpec::perturbed_harmonic(1.0),
                        ModelSpec::perturbed_harmonic(1.0, {Perturbation::Family::trig, 0.3}),
                        ModelSpec::perturbed_harmonic(0.5, {Perturbation::Family::trig, 0.4, 1, 2}, 0.7, 2)}) {
    const auto sel = select_eps(m);
    const auto rep = sample_rt_bound(m, sel.eps_norm, 100000, 5);
    INFO(m.describe());
    CHECK(rep.violations == 0);
  }
}

TEST_CASE("modified norm: t = 0, constants, and the two routes") {
  const auto& s = setup(48);
  const Vec g = sample_field(s.grid, FieldKind::observable, [](double x, double v) {
    return std::sin(x) * std::exp(-v * v / 8) + 0.3 * x * v;
  }).values;
  const double eps = 0.2;
  const Vec gc = g.array() - mu_mean(s.grid, g, s.mu);
  CHECK(modified_norm(s.grid, g, s.mu, 0.0, eps) == mu_norm_sq_unchecked(s.grid, gc, s.mu));
  CHECK(modified_norm(s.grid, Vec::Constant(s.grid.size(), 3.0), s.mu, 2.0, eps) ==
        doctest::Approx(0.0).epsilon(1e-20));
  for (double t : {0.5, 1.0, 7.0}) {
    const double a = modified_norm(s.grid, g, s.mu, t, eps);
    const double b = modified_norm_quadratic(s.grid, g, s.mu, t, eps);
    CHECK(std::abs(a - b) <= 1e-12 * a);
    CHECK(a >= mu_norm_sq_unchecked(s.grid, gc, s.mu));
  }
}

TEST_CASE("alpha-squared integral") {
  CHECK(alpha_sq_integral(1.0) == doctest::Approx(0.02907).epsilon(1e-3));
  CHECK(alpha_sq_integral(1.0) >= 1.0 / 40);
  for (double t : {1e-4, 1e-3, 0.01, 0.5, 1.0, 3.0, 20.0}) {
    CHECK(alpha_sq_integral(t) == doctest::Approx(oracle::alpha_sq_quadrature(t)).epsilon(1e-9));
  }
  const auto rep = verify_alpha_integral_bound(10000, 100.0);
  CHECK(rep.passes());
  CHECK(rep.min_ratio >= 1.0);
}

TEST_CASE("velocity-only Rayleigh quotient vanishes on x-only functions") {
  const auto& s = setup(48);
  const Vec g = sample_field(s.grid, FieldKind::observable, [](double x, double) { return x; }).values;
  CHECK(velocity_only_rayleigh(s.grid, s.mu, g) < 1e-8);
  CHECK(full_rayleigh(s.grid, s.mu, g) > 0.5);
}

TEST_CASE("1D Gaussian oracle for the weighted Dirichlet form") {
  // Dense 1D version of the same face-weighted form: the spectral gap of the
  // Ornstein-Uhlenbeck operator for N(0, 1) is 1.
  const int n = 400;
  const double L = 8, h = 2 * L / n;
  Vec w(n);
  for (int i = 0; i < n; ++i) {
    const double x = -L + (i + 0.5) * h;
    w(i) = std::exp(-x * x / 2);
  }
  w /= w.sum();
  Mat S = Mat::Zero(n, n);
  for (int i = 0; i + 1 < n; ++i) {
    const double c = 0.5 * (w(i) + w(i + 1)) / (h * h);
    S(i, i) += c;
    S(i + 1, i + 1) += c;
    S(i, i + 1) -= c;
    S(i + 1, i) -= c;
  }
  const Vec isq = w.cwiseSqrt().cwiseInverse();
  const Mat sym = isq.asDiagonal() * S * isq.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Mat> es(sym);
  CHECK(std::abs(es.eigenvalues()(0)) < 1e-10);
  CHECK(es.eigenvalues()(1) == doctest::Approx(1.0).epsilon(5e-3));
}

TEST_CASE("Rayleigh Poincare constant of the Gaussian") {
  const auto r64 = poincare_rayleigh(setup(64).grid, setup(64).mu);
  CHECK(r64.C_rayleigh == doctest::Approx(1.0).epsilon(0.05));
  const auto r96 = poincare_rayleigh(setup(96).grid, setup(96).mu);
  CHECK(std::abs(r96.lambda1 - r64.lambda1) <= 0.02 * r96.lambda1);
  RayleighOptions o;
  o.max_iter = 2;
  CHECK_THROWS_AS(poincare_rayleigh(setup(64).grid, setup(64).mu, o), SolverError);
}

TEST_CASE("operator-norm Poincare constant") {
  CHECK(poincare_prop2(0.0, 1.0, 2.0, 0.0) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(poincare_prop2(1e-12, 1.0, 2.0, 0.0) == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(poincare_prop2(0.5, 1.0, 1.0, 0.5) == doctest::Approx((std::exp(1.0) - 1) / 0.75).epsilon(1e-14));
  CHECK(poincare_prop2(0.5, 1.0, 1.0, 0.5) == doctest::Approx(2.291042).epsilon(1e-6));
  CHECK_THROWS_AS(poincare_prop2(0.5, 1.0, 1.0, 1.0), Inapplicable);
}

TEST_CASE("operator norm of the semigroup") {
  const auto& s = setup(32);
  const double dt = cfl_dt(s.gen);
  const auto tiny = operator_norm_Pt(s.gen, s.mu, 1e-3, dt);
  CHECK(tiny.opnorm > 0.99);
  double prev = 1.0;
  for (double t0 : {1.0, 2.0, 5.0, 10.0}) {
    const auto r = operator_norm_Pt(s.gen, s.mu, t0, dt);
    CHECK(r.opnorm <= prev + 1e-9);
    prev = r.opnorm;
    if (t0 == 5.0) CHECK(r.contraction);
  }
}

TEST_CASE("decay verification on a short equilibrium run") {
  const auto& s = setup(48);
  const double C = poincare_rayleigh(s.grid, s.mu).C_rayleigh;
  const double eps = select_eps(ModelSpec::equilibrium(1.0)).eps_norm;
  const Vec g0 = sample_field(s.grid, FieldKind::observable, [](double, double v) { return v; }).values;
  const auto tr = build_trace(s.gen, s.mu, g0, 6.0, cfl_dt(s.gen), eps, C);
  CHECK(tr.N.front() == tr.norm_sq.front());
  for (std::size_t k = 0; k < tr.N.size(); ++k) CHECK(tr.N[k] >= tr.norm_sq[k]);
  const auto rep = verify_decay(tr, C, eps, 0.05);
  CHECK(rep.passes());
  const auto env = envelope_check(tr, eps, C);
  CHECK(env.passes);
  CHECK(env.c_emp >= env.c);

  // Halving C doubles the certified rate; the report names any failing step.
  const auto strict = verify_decay(tr, C / 2, eps, 0.0);
  if (strict.violations > 0) CHECK(strict.first_violation >= 0);
  CHECK(certified_rate(3.0, eps, C / 2) > certified_rate(3.0, eps, C));
}

TEST_CASE("constant observable trace passes vacuously") {
  const auto& s = setup(32);
  const auto tr = build_trace(s.gen, s.mu, Vec::Constant(s.grid.size(), 4.0), 1.0, cfl_dt(s.gen), 0.1, 1.0);
  for (double n : tr.N) CHECK(std::abs(n) < 1e-20);
  CHECK(verify_decay(tr, 1.0, 0.1, 0.05).passes());
}

TEST_CASE("non-monotone data is a data-quality error") {
  ModifiedNormTrace tr;
  tr.t = {0, 1, 2};
  tr.norm_sq = {1.0, 0.5, 0.7};
  tr.N = tr.norm_sq;
  CHECK_THROWS_AS(envelope_check(tr, 0.1, 1.0), DataQualityError);
}
