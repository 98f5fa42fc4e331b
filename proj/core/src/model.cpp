#include "kfp/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <fmt/format.h>

#include "kfp/errors.hpp"

namespace kfp {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void check_dim(const ModelSpec& model, const PhasePoint& z) {
  if (z.x.size() != model.d || z.v.size() != model.d) {
    throw ContractViolation(fmt::format("phase point has dimension ({}, {}), model expects d = {}",
                                        z.x.size(), z.v.size(), model.d));
  }
}

// ∂U/∂x_i and ∂²U/∂x_i² of the separable potential.
double potential_grad(const Potential& u, double x) {
  double g = u.stiffness * x;
  if (u.family == Potential::Family::tilted_cosine) g -= u.amplitude * u.freq * std::sin(u.freq * x);
  return g;
}

double potential_hess(const Potential& u, double x) {
  double h = u.stiffness;
  if (u.family == Potential::Family::tilted_cosine)
    h -= u.amplitude * u.freq * u.freq * std::cos(u.freq * x);
  return h;
}

double potential_value(const Potential& u, double x) {
  double val = 0.5 * u.stiffness * x * x;
  if (u.family == Potential::Family::tilted_cosine) val += u.amplitude * std::cos(u.freq * x);
  return val;
}

Vec perturbation_value(const Perturbation& p, const PhasePoint& z) {
  const auto d = z.x.size();
  Vec f = Vec::Zero(d);
  switch (p.family) {
    case Perturbation::Family::none:
      break;
    case Perturbation::Family::trig:
      for (Eigen::Index i = 0; i < d; ++i)
        f(i) = p.delta * std::sin(p.freq_x * z.x(i) + p.freq_v * z.v(i));
      break;
    case Perturbation::Family::bump: {
      const double s = (z.x.squaredNorm() + z.v.squaredNorm()) / (p.radius * p.radius);
      if (s < 1.0) f.setConstant(p.delta * (1.0 - s) * (1.0 - s));
      break;
    }
  }
  return f;
}

// Adds ∇_x F, ∇_v F to the given blocks.
void add_perturbation_jacobian(const Perturbation& p, const PhasePoint& z, Mat& dxb, Mat& dvb) {
  const auto d = z.x.size();
  switch (p.family) {
    case Perturbation::Family::none:
      break;
    case Perturbation::Family::trig:
      for (Eigen::Index i = 0; i < d; ++i) {
        const double c = std::cos(p.freq_x * z.x(i) + p.freq_v * z.v(i));
        dxb(i, i) += p.delta * p.freq_x * c;
        dvb(i, i) += p.delta * p.freq_v * c;
      }
      break;
    case Perturbation::Family::bump: {
      const double r2 = p.radius * p.radius;
      const double s = (z.x.squaredNorm() + z.v.squaredNorm()) / r2;
      if (s < 1.0) {
        const double scale = -4.0 * p.delta * (1.0 - s) / r2;
        for (Eigen::Index i = 0; i < d; ++i) {
          dxb.row(i) += scale * z.x.transpose();
          dvb.row(i) += scale * z.v.transpose();
        }
      }
      break;
    }
  }
}

// Per-coordinate 2×2 block [[0, 1], [b_x(c), b_v(c)]] of the full Jacobian as an
// affine function of a scalar c ∈ [-1, 1]; used by the block-structured families.
struct AffineBlock {
  double bx0, bx1;  // b_x(c) = bx0 + bx1 c
  double bv0, bv1;  // b_v(c) = bv0 + bv1 c

  Mat at(double c) const {
    Mat m(2, 2);
    m << 0.0, 1.0, bx0 + bx1 * c, bv0 + bv1 * c;
    return m;
  }
};

std::optional<AffineBlock> affine_block(const ModelSpec& model) {
  return std::visit(
      overloaded{
          [](const Equilibrium& eq) -> std::optional<AffineBlock> {
            const auto& u = eq.potential;
            double curv = 0.0;
            if (u.family == Potential::Family::tilted_cosine) curv = u.amplitude * u.freq * u.freq;
            // b_x = -(k - a ω² cos)
            return AffineBlock{-u.stiffness, curv, -eq.gamma, 0.0};
          },
          [](const PerturbedHarmonic& ph) -> std::optional<AffineBlock> {
            const auto& p = ph.perturbation;
            switch (p.family) {
              case Perturbation::Family::none:
                return AffineBlock{-1.0, 0.0, -ph.gamma, 0.0};
              case Perturbation::Family::trig:
                return AffineBlock{-1.0, p.delta * p.freq_x, -ph.gamma, p.delta * p.freq_v};
              case Perturbation::Family::bump:
                return std::nullopt;
            }
            return std::nullopt;
          },
          [](const CustomDrift&) -> std::optional<AffineBlock> { return std::nullopt; },
      },
      model.drift);
}

constexpr int kBlockSamples = 2001;

}  // namespace

PhasePoint::PhasePoint(Vec x_, Vec v_) : x(std::move(x_)), v(std::move(v_)) {}

PhasePoint::PhasePoint(double x_, double v_) : x(Vec::Constant(1, x_)), v(Vec::Constant(1, v_)) {}

Vec PhasePoint::stacked() const {
  Vec z(x.size() + v.size());
  z << x, v;
  return z;
}

PhasePoint PhasePoint::from_stacked(const Vec& z) {
  if (z.size() % 2 != 0) throw ContractViolation("stacked phase point must have even length");
  const auto d = z.size() / 2;
  return PhasePoint(z.head(d), z.tail(d));
}

Mat DriftJacobian::full() const {
  const auto d = dxb.rows();
  Mat j = Mat::Zero(2 * d, 2 * d);
  j.topRightCorner(d, d).setIdentity();
  j.bottomLeftCorner(d, d) = dxb;
  j.bottomRightCorner(d, d) = dvb;
  return j;
}

Mat DriftJacobian::commutator_block() const { return full().transpose(); }

ModelSpec ModelSpec::equilibrium(double gamma, double sigma, Potential potential, int d) {
  ModelSpec m;
  m.d = d;
  m.sigma = sigma;
  m.drift = Equilibrium{potential, gamma};
  m.validate();
  return m;
}

ModelSpec ModelSpec::perturbed_harmonic(double gamma, Perturbation perturbation, double sigma,
                                        int d) {
  ModelSpec m;
  m.d = d;
  m.sigma = sigma;
  m.drift = PerturbedHarmonic{gamma, perturbation};
  m.validate();
  return m;
}

void ModelSpec::validate() const {
  if (d < 1) throw ContractViolation(fmt::format("dimension must be >= 1, got {}", d));
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    throw ContractViolation(fmt::format("sigma must be positive, got {}", sigma));
  std::visit(overloaded{
                 [](const Equilibrium& eq) {
                   if (!(eq.gamma > 0.0)) throw ContractViolation("gamma must be positive");
                   if (!(eq.potential.stiffness > 0.0))
                     throw ContractViolation("potential stiffness must be positive");
                 },
                 [](const PerturbedHarmonic& ph) {
                   if (!(ph.gamma > 0.0)) throw ContractViolation("gamma must be positive");
                   const auto& p = ph.perturbation;
                   if (p.family == Perturbation::Family::bump && !(p.radius > 0.0))
                     throw ContractViolation("bump radius must be positive");
                   if (!std::isfinite(p.delta)) throw ContractViolation("delta must be finite");
                 },
                 [](const CustomDrift& c) {
                   if (!c.drift) throw ContractViolation("custom drift needs a callable");
                 },
             },
             drift);
}

double ModelSpec::gamma() const {
  return std::visit(overloaded{
                        [](const Equilibrium& eq) { return eq.gamma; },
                        [](const PerturbedHarmonic& ph) { return ph.gamma; },
                        [](const CustomDrift&) -> double {
                          throw UnsupportedOperation("custom drift has no friction parameter");
                        },
                    },
                    drift);
}

std::string ModelSpec::describe() const {
  return std::visit(
      overloaded{
          [&](const Equilibrium& eq) {
            const auto& u = eq.potential;
            if (u.family == Potential::Family::quadratic)
              return fmt::format("equilibrium d={} sigma={} gamma={} U=quadratic(k={})", d, sigma,
                                 eq.gamma, u.stiffness);
            return fmt::format("equilibrium d={} sigma={} gamma={} U=tilted_cosine(k={}, a={}, w={})",
                               d, sigma, eq.gamma, u.stiffness, u.amplitude, u.freq);
          },
          [&](const PerturbedHarmonic& ph) {
            const auto& p = ph.perturbation;
            switch (p.family) {
              case Perturbation::Family::none:
                return fmt::format("perturbed_harmonic d={} sigma={} gamma={} F=none", d, sigma,
                                   ph.gamma);
              case Perturbation::Family::trig:
                return fmt::format("perturbed_harmonic d={} sigma={} gamma={} F=trig(delta={}, freq=({}, {}))",
                                   d, sigma, ph.gamma, p.delta, p.freq_x, p.freq_v);
              case Perturbation::Family::bump:
                return fmt::format("perturbed_harmonic d={} sigma={} gamma={} F=bump(delta={}, radius={})",
                                   d, sigma, ph.gamma, p.delta, p.radius);
            }
            return std::string("perturbed_harmonic");
          },
          [&](const CustomDrift&) { return fmt::format("custom d={} sigma={}", d, sigma); },
      },
      drift);
}

Vec eval_drift(const ModelSpec& model, const PhasePoint& z) {
  check_dim(model, z);
  return std::visit(overloaded{
                        [&](const Equilibrium& eq) {
                          Vec b(model.d);
                          for (int i = 0; i < model.d; ++i)
                            b(i) = -potential_grad(eq.potential, z.x(i)) - eq.gamma * z.v(i);
                          return b;
                        },
                        [&](const PerturbedHarmonic& ph) {
                          Vec b = -z.x - ph.gamma * z.v;
                          b += perturbation_value(ph.perturbation, z);
                          return b;
                        },
                        [&](const CustomDrift& c) {
                          Vec b = c.drift(z);
                          if (b.size() != model.d)
                            throw ContractViolation("custom drift returned wrong dimension");
                          return b;
                        },
                    },
                    model.drift);
}

DriftJacobian eval_jacobian(const ModelSpec& model, const PhasePoint& z) {
  check_dim(model, z);
  const int d = model.d;
  return std::visit(overloaded{
                        [&](const Equilibrium& eq) {
                          DriftJacobian jac{Mat::Zero(d, d), -eq.gamma * Mat::Identity(d, d)};
                          for (int i = 0; i < d; ++i)
                            jac.dxb(i, i) = -potential_hess(eq.potential, z.x(i));
                          return jac;
                        },
                        [&](const PerturbedHarmonic& ph) {
                          DriftJacobian jac{-Mat::Identity(d, d), -ph.gamma * Mat::Identity(d, d)};
                          add_perturbation_jacobian(ph.perturbation, z, jac.dxb, jac.dvb);
                          return jac;
                        },
                        [&](const CustomDrift& c) {
                          if (!c.jacobian)
                            throw UnsupportedOperation("custom drift was given without a Jacobian");
                          return c.jacobian(z);
                        },
                    },
                    model.drift);
}

PerturbationBounds perturbation_bounds(const ModelSpec& model) {
  const double sqrt_d = std::sqrt(static_cast<double>(model.d));
  return std::visit(
      overloaded{
          [&](const Equilibrium& eq) {
            PerturbationBounds pb;
            const auto& u = eq.potential;
            if (u.family == Potential::Family::tilted_cosine) {
              // Remainder relative to -k x - γ v is a ω sin(ω x_i).
              pb.grad_F_sup = std::abs(u.amplitude) * u.freq * u.freq;
              pb.kappa_prime = pb.grad_F_sup;
              pb.F_sup = std::abs(u.amplitude) * u.freq * sqrt_d;
            }
            return pb;
          },
          [&](const PerturbedHarmonic& ph) {
            PerturbationBounds pb;
            const auto& p = ph.perturbation;
            const double delta = std::abs(p.delta);
            switch (p.family) {
              case Perturbation::Family::none:
                break;
              case Perturbation::Family::trig:
                // Rows of ∇F have disjoint supports, so the spectral norm is the max row norm.
                pb.grad_F_sup = delta * std::hypot(p.freq_x, p.freq_v);
                pb.kappa_prime = pb.grad_F_sup;
                pb.F_sup = delta * sqrt_d;
                break;
              case Perturbation::Family::bump:
                // |∇F_i| = 4δ ρ (1 - ρ²) / r with ρ = |z|/r, maximal at ρ = 1/√3; d equal rows.
                pb.grad_F_sup = sqrt_d * 8.0 * delta / (3.0 * std::sqrt(3.0) * p.radius);
                pb.kappa_prime = 0.0;
                pb.M_rad = p.radius;
                pb.F_sup = delta * sqrt_d;
                break;
            }
            return pb;
          },
          [](const CustomDrift&) -> PerturbationBounds {
            throw UnsupportedOperation("perturbation bounds need a built-in drift family");
          },
      },
      model.drift);
}

DriftBounds drift_bounds(const ModelSpec& model) {
  model.validate();
  if (!model.is_builtin())
    throw UnsupportedOperation("drift_bounds needs a built-in drift family");

  DriftBounds out;
  if (auto blk = affine_block(model)) {
    // The full Jacobian is block diagonal with identical affine 2×2 blocks, one
    // per coordinate, so every sup reduces to c ∈ [-1, 1].
    for (double c : {-1.0, 1.0}) {
      const double bx = blk->bx0 + blk->bx1 * c;
      const double bv = blk->bv0 + blk->bv1 * c;
      out.grad_b_sup = std::max(out.grad_b_sup, std::hypot(bx, bv));
      out.dxb_sup = std::max(out.dxb_sup, std::abs(bx));
      out.dvb_sup = std::max(out.dvb_sup, std::abs(bv));
    }
    const bool constant = blk->bx1 == 0.0 && blk->bv1 == 0.0;
    const int n = constant ? 1 : kBlockSamples;
    double k_max = -std::numeric_limits<double>::infinity();
    for (int s = 0; s < n; ++s) {
      const double c = constant ? 0.0 : -1.0 + 2.0 * s / (n - 1);
      k_max = std::max(k_max, lambda_max_sym(blk->at(c)));
    }
    out.K_sampled = k_max;
    if (!constant) {
      // λ_max of a symmetric matrix is 1-Lipschitz in the spectral norm; the
      // Frobenius norm of d(sym B)/dc bounds that derivative.
      const double lip = std::sqrt(0.5 * blk->bx1 * blk->bx1 + blk->bv1 * blk->bv1);
      out.K_margin = lip * (1.0 / (n - 1));
    }
    out.one_sided_K = out.K_sampled + out.K_margin;
    out.K_method = "block-grid";
    return out;
  }

  // Bump perturbation: Weyl's inequality around the linear part.
  const auto& ph = std::get<PerturbedHarmonic>(model.drift);
  const PerturbationBounds pb = perturbation_bounds(model);
  Mat lin(2, 2);
  lin << 0.0, 1.0, -1.0, -ph.gamma;
  out.grad_b_sup = std::hypot(1.0, ph.gamma) + pb.grad_F_sup;
  out.dxb_sup = 1.0 + pb.grad_F_sup;
  out.dvb_sup = ph.gamma + pb.grad_F_sup;
  out.K_sampled = lambda_max_sym(lin);
  out.K_margin = pb.grad_F_sup;
  out.one_sided_K = out.K_sampled + out.K_margin;
  out.K_method = "weyl";
  return out;
}

Mat linear_part(const ModelSpec& model) {
  const int d = model.d;
  const Mat id = Mat::Identity(d, d);
  Mat m = Mat::Zero(2 * d, 2 * d);
  m.topRightCorner(d, d) = id;
  std::visit(overloaded{
                 [&](const Equilibrium& eq) {
                   m.bottomLeftCorner(d, d) = -eq.potential.stiffness * id;
                   m.bottomRightCorner(d, d) = -eq.gamma * id;
                 },
                 [&](const PerturbedHarmonic& ph) {
                   m.bottomLeftCorner(d, d) = -id;
                   m.bottomRightCorner(d, d) = -ph.gamma * id;
                 },
                 [](const CustomDrift&) {
                   throw UnsupportedOperation("custom drift has no declared linear part");
                 },
             },
             model.drift);
  return m;
}

Vec nonlinear_remainder(const ModelSpec& model, const PhasePoint& z) {
  const Mat m = linear_part(model);
  const int d = model.d;
  return eval_drift(model, z) - m.bottomRows(d) * z.stacked();
}

std::optional<Mat> linear_stationary_covariance(const ModelSpec& model) {
  if (!model.is_builtin()) return std::nullopt;
  const Mat m = linear_part(model);
  if (!(spectral_abscissa(m) < 0.0)) return std::nullopt;
  const int d = model.d;
  Mat q = Mat::Zero(2 * d, 2 * d);
  q.bottomRightCorner(d, d) = 2.0 * model.sigma * model.sigma * Mat::Identity(d, d);
  // M Σ + Σ Mᵀ = -Q is the Lyapunov equation for Mᵀ.
  return solve_lyapunov_equation(m.transpose(), q);
}

double gibbs_log_density(const ModelSpec& model, const PhasePoint& z) {
  check_dim(model, z);
  const auto* eq = std::get_if<Equilibrium>(&model.drift);
  if (!eq) throw UnsupportedOperation("the Gibbs density is only explicit for equilibrium drifts");
  double h = 0.5 * z.v.squaredNorm();
  for (int i = 0; i < model.d; ++i) h += potential_value(eq->potential, z.x(i));
  return -eq->gamma / (model.sigma * model.sigma) * h;
}

}  // namespace kfp
