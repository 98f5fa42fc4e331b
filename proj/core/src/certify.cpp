#include "kfp/certify.hpp"

#include <cmath>
#include <fmt/format.h>
#include <limits>
#include <random>

#include "kfp/errors.hpp"
#include "kfp/parallel.hpp"
#include "kfp/rng.hpp"
#include "kfp/textio.hpp"

namespace kfp {

namespace {

constexpr int kMinRadiusIndex = -80;
constexpr int kMaxRadiusIndex = 800;

ContractionCertificate from_linear(const LinearCertificate& lin) {
  ContractionCertificate c;
  c.A = lin.A;
  c.kappa = lin.kappa;
  c.A_opnorm = lin.A_opnorm;
  c.R = 0.0;
  c.eps_contract = lin.kappa;
  c.route = "linear";
  return c;
}

/// Smallest grid R with kappa - coeff / R ≥ target, where coeff > 0.
double smallest_radius(double coeff, double target) {
  for (int k = kMinRadiusIndex; k <= kMaxRadiusIndex; ++k) {
    const double r = radius_grid(k);
    if (coeff / r <= target) return r;
  }
  throw CertificationInfeasible("no radius on the search grid reaches the target rate");
}

}  // namespace

void ContractionCertificate::validate() const {
  if (A.rows() != A.cols() || A.rows() == 0 || A.rows() % 2 != 0)
    throw ContractViolation("certificate matrix must be square with even size");
  if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, A.cwiseAbs().maxCoeff()))
    throw ContractViolation("certificate matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> es(A);
  if (!(es.eigenvalues().minCoeff() > 0.0))
    throw ContractViolation("certificate matrix is not positive definite");
  if (!(kappa > 0.0)) throw ContractViolation("kappa must be positive");
  if (!(eps_contract > 0.0) || eps_contract > kappa)
    throw ContractViolation("eps_contract must lie in (0, kappa]");
  if (!(R >= 0.0)) throw ContractViolation("R must be nonnegative");
  if (std::abs(A_opnorm - es.eigenvalues().maxCoeff()) > 1e-12 * std::max(1.0, A_opnorm))
    throw ContractViolation("A_opnorm does not match the largest eigenvalue of A");
}

ContractionCertificate ContractionCertificate::scaled(double c) const {
  if (!(c > 0.0)) throw ContractViolation("certificate scale must be positive");
  ContractionCertificate out = *this;
  out.A *= c;
  out.kappa *= c;
  out.eps_contract *= c;
  out.A_opnorm *= c;
  return out;
}

Mat solve_lyapunov(const Mat& M) {
  if (M.rows() != M.cols() || M.rows() == 0)
    throw ContractViolation("drift matrix must be square");
  Eigen::EigenSolver<Mat> es(M, false);
  const auto ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (!(ev(i).real() < 0.0))
      throw CertificationInfeasible(fmt::format(
          "drift matrix is not Hurwitz: eigenvalue {}{:+}i has nonnegative real part",
          ev(i).real(), ev(i).imag()));
  }
  return solve_lyapunov_equation(M, Mat::Identity(M.rows(), M.cols()));
}

LinearCertificate certify_linear_matrix(const Mat& M) {
  LinearCertificate out;
  out.M = M;
  out.A = solve_lyapunov(M);
  // sym(AM) = -Id/2, so z·AMz = -|z|²/2 exactly.
  out.kappa = 0.5;
  Eigen::SelfAdjointEigenSolver<Mat> es(out.A);
  if (!(es.eigenvalues().minCoeff() > 0.0))
    throw CertificationInfeasible("Lyapunov solution is not positive definite");
  out.A_opnorm = es.eigenvalues().maxCoeff();
  out.residual =
      (out.A * M + M.transpose() * out.A + Mat::Identity(M.rows(), M.cols())).cwiseAbs().maxCoeff();
  return out;
}

LinearCertificate certify_linear(double gamma, int d) {
  if (!(gamma > 0.0)) throw ContractViolation("gamma must be positive");
  if (d < 1) throw ContractViolation("dimension must be >= 1");
  Mat m = Mat::Zero(2 * d, 2 * d);
  m.topRightCorner(d, d).setIdentity();
  m.bottomLeftCorner(d, d) = -Mat::Identity(d, d);
  m.bottomRightCorner(d, d) = -gamma * Mat::Identity(d, d);
  return certify_linear_matrix(m);
}

double radius_grid(int k) { return std::exp2(k / 8.0); }

ContractionCertificate certify_perturbed(const LinearCertificate& linear,
                                         const PerturbationBounds& bounds,
                                         double target_fraction) {
  if (!(target_fraction > 0.0 && target_fraction <= 1.0))
    throw ContractViolation("target fraction must lie in (0, 1]");
  if (bounds.grad_F_sup < bounds.kappa_prime || bounds.M_rad < 0.0)
    throw ContractViolation("perturbation bounds need grad_F_sup >= kappa' and M_rad >= 0");
  const double limit = linear.kappa / linear.A_opnorm;
  if (!(bounds.kappa_prime < limit))
    throw CertificationInfeasible(fmt::format(
        "admissibility requires kappa' < kappa/|A|, got kappa' = {:.6g} >= {:.6g} = {:.6g}/{:.6g}",
        bounds.kappa_prime, limit, linear.kappa, linear.A_opnorm));

  ContractionCertificate c = from_linear(linear);
  c.route = "gradient";
  const double floor_rate = linear.kappa - linear.A_opnorm * bounds.kappa_prime;
  const double coeff = 2.0 * linear.A_opnorm * bounds.M_rad * bounds.grad_F_sup;
  if (coeff == 0.0) {
    c.R = 0.0;
    c.eps_contract = floor_rate;
    return c;
  }
  // eps(R) = floor_rate - coeff/R ≥ fraction·floor_rate.
  c.R = smallest_radius(coeff, (1.0 - target_fraction) * floor_rate);
  c.eps_contract = floor_rate - coeff / c.R;
  return c;
}

ContractionCertificate certify_bounded(const LinearCertificate& linear,
                                       const PerturbationBounds& bounds,
                                       double target_fraction) {
  if (!(target_fraction > 0.0 && target_fraction < 1.0))
    throw ContractViolation("target fraction must lie in (0, 1)");
  if (!(bounds.F_sup >= 0.0) || !std::isfinite(bounds.F_sup))
    throw CertificationInfeasible("bounded route needs a finite sup-norm of F");
  ContractionCertificate c = from_linear(linear);
  c.route = "bounded";
  const double coeff = 2.0 * linear.A_opnorm * bounds.F_sup;
  if (coeff == 0.0) return c;
  c.R = smallest_radius(coeff, (1.0 - target_fraction) * linear.kappa);
  c.eps_contract = linear.kappa - coeff / c.R;
  return c;
}

CertifyRoute parse_certify_route(const std::string& name) {
  if (name == "gradient") return CertifyRoute::gradient;
  if (name == "bounded") return CertifyRoute::bounded;
  throw ContractViolation(fmt::format("unknown certify route '{}' (gradient|bounded)", name));
}

std::string to_string(CertifyRoute route) {
  return route == CertifyRoute::gradient ? "gradient" : "bounded";
}

ContractionCertificate certify_model(const ModelSpec& model, CertifyRoute route,
                                     double target_fraction) {
  model.validate();
  const LinearCertificate lin = certify_linear_matrix(linear_part(model));
  const PerturbationBounds pb = perturbation_bounds(model);
  if (route == CertifyRoute::gradient) return certify_perturbed(lin, pb, target_fraction);
  return certify_bounded(lin, pb, target_fraction);
}

double contraction_margin(const ContractionCertificate& cert, const ModelSpec& model,
                          const PhasePoint& z, const PhasePoint& zp) {
  const Vec dz = z.stacked() - zp.stacked();
  Vec field(dz.size());
  field << z.v - zp.v, eval_drift(model, z) - eval_drift(model, zp);
  return field.dot(cert.A * dz) + cert.eps_contract * dz.squaredNorm();
}

FalsifierReport falsify_condition(const ContractionCertificate& cert, const ModelSpec& model,
                                  long long n_pairs, std::uint64_t seed, int workers) {
  if (cert.dim() != model.d)
    throw ContractViolation(fmt::format("certificate dimension {} does not match model dimension {}",
                                        cert.dim(), model.d));
  if (n_pairs < 0) throw ContractViolation("n_pairs must be nonnegative");

  FalsifierReport report;
  report.n_pairs = n_pairs;
  report.tolerance = 1e-10 * std::max(1.0, cert.A_opnorm);
  report.worst_relative_margin = -std::numeric_limits<double>::infinity();
  if (n_pairs == 0) return report;

  const int d = model.d;
  const double lo = std::max(cert.R, 1e-3);
  const double hi = 100.0 * cert.R + 10.0;
  const double scale = 2.0 + cert.R;

  struct Partial {
    long long violations = 0;
    double worst = -std::numeric_limits<double>::infinity();
    long long worst_index = -1;
    PhasePoint z, zp;
  };
  constexpr int kChunks = 64;
  std::vector<Partial> partial(kChunks);

  parallel_chunks(n_pairs, kChunks, workers, [&](int chunk, long long begin, long long end) {
    Partial& p = partial[chunk];
    Vec z(2 * d), u(2 * d);
    for (long long i = begin; i < end; ++i) {
      CounterRng rng(seed, static_cast<std::uint64_t>(i));
      std::normal_distribution<double> normal;
      for (int k = 0; k < 2 * d; ++k) z(k) = scale * normal(rng);
      double un = 0.0;
      do {
        for (int k = 0; k < 2 * d; ++k) u(k) = normal(rng);
        un = u.norm();
      } while (un == 0.0);
      const double gap = lo * std::pow(hi / lo, rng.uniform());
      const Vec zp = z + (gap / un) * u;
      const PhasePoint a = PhasePoint::from_stacked(z);
      const PhasePoint b = PhasePoint::from_stacked(zp);
      const double rel = contraction_margin(cert, model, a, b) / (gap * gap);
      if (rel > report.tolerance) ++p.violations;
      if (rel > p.worst) {
        p.worst = rel;
        p.worst_index = i;
        p.z = a;
        p.zp = b;
      }
    }
  });

  // Chunks are merged in index order; ties keep the lowest pair index.
  for (const Partial& p : partial) {
    report.violations += p.violations;
    if (p.worst_index >= 0 && p.worst > report.worst_relative_margin) {
      report.worst_relative_margin = p.worst;
      report.worst_z = p.z;
      report.worst_zp = p.zp;
    }
  }
  return report;
}

void write_certificate(const std::filesystem::path& path, const ContractionCertificate& cert) {
  std::vector<double> a;
  a.reserve(static_cast<std::size_t>(cert.A.size()));
  for (Eigen::Index i = 0; i < cert.A.rows(); ++i)
    for (Eigen::Index j = 0; j < cert.A.cols(); ++j) a.push_back(cert.A(i, j));
  write_key_values(path, {
                             {"A", join_doubles(a)},
                             {"kappa", format_double(cert.kappa)},
                             {"R", format_double(cert.R)},
                             {"eps_contract", format_double(cert.eps_contract)},
                             {"A_opnorm", format_double(cert.A_opnorm)},
                             {"route", cert.route},
                         });
}

ContractionCertificate read_certificate(const std::filesystem::path& path) {
  const KeyValues kv = read_key_values(path);
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end())
      throw ContractViolation(fmt::format("certificate '{}' lacks key '{}'", path.string(), key));
    return it->second;
  };
  const std::vector<double> a = parse_doubles(get("A"));
  const auto n = static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<double>(a.size()))));
  if (n * n != static_cast<Eigen::Index>(a.size()) || n % 2 != 0 || n == 0)
    throw ContractViolation("certificate matrix must be square with even size");
  ContractionCertificate c;
  c.A.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) c.A(i, j) = a[static_cast<std::size_t>(i * n + j)];
  c.kappa = parse_double(get("kappa"));
  c.R = parse_double(get("R"));
  c.eps_contract = parse_double(get("eps_contract"));
  c.A_opnorm = parse_double(get("A_opnorm"));
  if (auto it = kv.find("route"); it != kv.end()) c.route = it->second;
  return c;
}

}  // namespace kfp
