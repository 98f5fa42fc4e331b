#include <filesystem>
#include <random>

#include "doctest.h"
#include "kfp/certify.hpp"
#include "kfp/errors.hpp"
#include "oracles.hpp"

using namespace kfp;

TEST_CASE("Lyapunov solution of the damped oscillator") {
  for (double gamma : {0.5, 1.0, 2.0}) {
    const auto lin = certify_linear(gamma, 1);
    const auto ref = oracle::lyapunov_oscillator(gamma);
    CHECK(lin.A(0, 0) == doctest::Approx(ref.a).epsilon(1e-13));
    CHECK(lin.A(0, 1) == doctest::Approx(ref.b).epsilon(1e-13));
    CHECK(lin.A(1, 0) == doctest::Approx(ref.b).epsilon(1e-13));
    CHECK(lin.A(1, 1) == doctest::Approx(ref.c).epsilon(1e-13));
    CHECK(lin.kappa == 0.5);
    CHECK(lin.residual <= 1e-12);
  }
  const auto lin = certify_linear(1.0, 1);
  CHECK(lin.A(0, 0) == doctest::Approx(1.5));
  CHECK(lin.A(1, 1) == doctest::Approx(1.0));
}

TEST_CASE("A_opnorm equals the characteristic-polynomial eigenvalue") {
  const auto lin = certify_linear(1.0, 1);
  const auto [lo, hi] = oracle::eig2_sym(1.5, 0.5, 1.0);
  CHECK(lo > 0.0);
  CHECK(lin.A_opnorm == doctest::Approx(hi).epsilon(1e-14));
  CHECK(lin.A_opnorm == doctest::Approx((5 + std::sqrt(5.0)) / 4).epsilon(1e-14));
}

TEST_CASE("minus identity gives A = Id/2") {
  const Mat a = solve_lyapunov(-Mat::Identity(2, 2));
  CHECK((a - 0.5 * Mat::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("non-Hurwitz matrices are infeasible and the eigenvalue is named") {
  Mat m(2, 2);
  m << 0, 1, -1, 0;  // undamped: eigenvalues ±i
  try {
    solve_lyapunov(m);
    FAIL("expected CertificationInfeasible");
  } catch (const CertificationInfeasible& e) {
    CHECK(std::string(e.what()).find("eigenvalue") != std::string::npos);
  }
}

TEST_CASE("d = 2 certificate has Kronecker structure") {
  for (double gamma : {0.5, 1.0, 2.0}) {
    const auto l1 = certify_linear(gamma, 1);
    const auto l2 = certify_linear(gamma, 2);
    Mat expect = Mat::Zero(4, 4);
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 2; ++c) expect.block(2 * r, 2 * c, 2, 2) = l1.A(r, c) * Mat::Identity(2, 2);
    CHECK((l2.A - expect).cwiseAbs().maxCoeff() < 1e-13);
  }
}

TEST_CASE("linear certificate is exact on random directions") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  for (double gamma : {0.3, 1.0, 3.0}) {
    const auto lin = certify_linear(gamma, 1);
    double worst = -1e300;
    for (int s = 0; s < 10000; ++s) {
      Vec z(2);
      z << n(rng), n(rng);
      z /= z.norm();
      worst = std::max(worst, (lin.M * z).dot(lin.A * z) + lin.kappa);
    }
    CHECK(worst <= 1e-10);
  }
}

TEST_CASE("perturbed certificate rules") {
  const auto lin = certify_linear(1.0, 1);
  SUBCASE("no radius needed when M_rad = 0") {
    PerturbationBounds pb{0.1, 0.1, 0.0, 0.1};
    const auto c = certify_perturbed(lin, pb);
    CHECK(c.R == 0.0);
    CHECK(c.eps_contract == doctest::Approx(0.5 - lin.A_opnorm * 0.1));
  }
  SUBCASE("admissibility threshold") {
    CHECK(0.1 < 0.5 / ((5 + std::sqrt(5.0)) / 4));
    CHECK_NOTHROW(certify_perturbed(lin, {0.1, 0.1, 0.0, 0.1}));
    CHECK_THROWS_AS(certify_perturbed(lin, {0.3, 0.3, 0.0, 0.3}), CertificationInfeasible);
  }
  SUBCASE("radius search reaches the target fraction and is minimal on the grid") {
    PerturbationBounds pb{0.5, 0.05, 2.0, 0.3};
    const auto c = certify_perturbed(lin, pb, 0.5);
    const double floor_rate = 0.5 - lin.A_opnorm * 0.05;
    CHECK(c.eps_contract >= 0.5 * floor_rate);
    CHECK(c.eps_contract < c.kappa);
    const double prev_r = c.R / std::exp2(1.0 / 8);
    CHECK(floor_rate - 2 * lin.A_opnorm * 2.0 * 0.5 / prev_r < 0.5 * floor_rate);
    CHECK_NOTHROW(c.validate());
  }
}

TEST_CASE("bounded route") {
  const auto lin = certify_linear(1.0, 1);
  PerturbationBounds pb{0.3 * std::sqrt(2.0), 0.3 * std::sqrt(2.0), 0.0, 0.3};
  CHECK_THROWS_AS(certify_perturbed(lin, pb), CertificationInfeasible);
  const auto c = certify_bounded(lin, pb);
  CHECK(c.route == "bounded");
  CHECK(c.R > 0.0);
  CHECK(c.eps_contract >= 0.25);
  CHECK(c.eps_contract == doctest::Approx(0.5 - 2 * lin.A_opnorm * 0.3 / c.R));
}

TEST_CASE("falsifier: valid, corrupted and empty") {
  const auto model = ModelSpec::perturbed_harmonic(1.0);
  const auto cert = certify_model(model);
  CHECK(falsify_condition(cert, model, 100000, 42).violations == 0);
  auto bad = cert;
  bad.kappa *= 2;
  bad.eps_contract *= 2;
  CHECK(falsify_condition(bad, model, 1000, 42).violations >= 1);
  const auto empty = falsify_condition(cert, model, 0, 42);
  CHECK(empty.n_pairs == 0);
  CHECK(empty.violations == 0);
}

TEST_CASE("falsifier on perturbed models") {
  const auto trig = ModelSpec::perturbed_harmonic(1.0, {Perturbation::Family::trig, 0.1});
  CHECK(falsify_condition(certify_model(trig), trig, 100000, 3).violations == 0);
  const auto big = ModelSpec::perturbed_harmonic(1.0, {Perturbation::Family::trig, 0.3});
  const auto cb = certify_model(big, CertifyRoute::bounded);
  CHECK(falsify_condition(cb, big, 100000, 3).violations == 0);
  const auto bump = ModelSpec::perturbed_harmonic(1.0, {Perturbation::Family::bump, 0.2, 1, 1, 1.5}, 1.0, 2);
  const auto cbump = certify_model(bump);
  CHECK(cbump.R > 0.0);
  CHECK(cbump.eps_contract < cbump.kappa);
  CHECK(falsify_condition(cbump, bump, 100000, 3).violations == 0);
}

TEST_CASE("falsifier verdict is invariant under rescaling of A") {
  const auto model = ModelSpec::perturbed_harmonic(1.0, {Perturbation::Family::trig, 0.1});
  const auto c = certify_model(model);
  for (double s : {0.01, 3.0, 250.0}) {
    const auto r1 = falsify_condition(c, model, 20000, 8);
    const auto r2 = falsify_condition(c.scaled(s), model, 20000, 8);
    CHECK(r1.violations == r2.violations);
    CHECK(r2.worst_relative_margin == doctest::Approx(s * r1.worst_relative_margin).epsilon(1e-9));
  }
}

TEST_CASE("falsifier result does not depend on the worker count") {
  const auto model = ModelSpec::perturbed_harmonic(1.0, {Perturbation::Family::trig, 0.1}, 1.0, 2);
  const auto c = certify_model(model);
  const auto a = falsify_condition(c, model, 5000, 17, 1);
  const auto b = falsify_condition(c, model, 5000, 17, 7);
  CHECK(a.worst_relative_margin == b.worst_relative_margin);
  CHECK(a.worst_z.stacked() == b.worst_z.stacked());
}

TEST_CASE("dimension mismatch between certificate and model") {
  const auto c = certify_model(ModelSpec::perturbed_harmonic(1.0));
  CHECK_THROWS_AS(falsify_condition(c, ModelSpec::perturbed_harmonic(1.0, {}, 1.0, 2), 10, 0),
                  ContractViolation);
}

TEST_CASE("certificate file round-trip is bit-exact") {
  const auto path = std::filesystem::temp_directory_path() / "kfp_cert_test.txt";
  auto c = certify_model(ModelSpec::perturbed_harmonic(0.7, {Perturbation::Family::trig, 0.05}, 1.0, 2));
  write_certificate(path, c);
  const auto r = read_certificate(path);
  CHECK(r.A == c.A);
  CHECK(r.kappa == c.kappa);
  CHECK(r.R == c.R);
  CHECK(r.eps_contract == c.eps_contract);
  CHECK(r.A_opnorm == c.A_opnorm);
  std::filesystem::remove(path);
}

TEST_CASE("validate rejects broken certificates") {
  auto c = certify_model(ModelSpec::perturbed_harmonic(1.0));
  CHECK_NOTHROW(c.validate());
  auto asym = c;
  asym.A(0, 1) += 1e-6;
  CHECK_THROWS_AS(asym.validate(), ContractViolation);
  auto big_eps = c;
  big_eps.eps_contract = 2 * c.kappa;
  CHECK_THROWS_AS(big_eps.validate(), ContractViolation);
  auto wrong_norm = c;
  wrong_norm.A_opnorm *= 1.001;
  CHECK_THROWS_AS(wrong_norm.validate(), ContractViolation);
}
