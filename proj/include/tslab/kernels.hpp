#pragma once

#include <cstdint>
#include <string>

#include <Eigen/Core>

#include "tslab/activations.hpp"

namespace tslab {

enum class KernelMethod { Analytic, GaussHermite, MonteCarlo };

/// Evaluation recipe for the interaction function
///   g(r1, r2, u) = E[sigma(r1 x) sigma(r2 y)],  corr(x, y) = u,
/// over standard Gaussians. Analytic closed forms exist for erf and relu
/// only; every kind supports quadrature and Monte Carlo.
struct KernelSpec {
  ActivationKind kind;
  KernelMethod method = KernelMethod::Analytic;
  int nodes = 80;                 // Gauss-Hermite nodes per axis, >= 8
  std::int64_t samples = 100000;  // Monte Carlo samples, >= 1e4
  std::uint64_t seed = 0;

  static KernelSpec analytic(ActivationKind kind);
  static KernelSpec quadrature(ActivationKind kind, int nodes = 80);
  static KernelSpec monte_carlo(ActivationKind kind, std::int64_t samples,
                                std::uint64_t seed);
};

/// Throws std::invalid_argument on unsupported (kind, method) combinations
/// or out-of-range node/sample counts.
void validate(const KernelSpec& spec);

/// g(r1, r2, u). Degenerate norms follow g(r, 0, u) := E[sigma(r x)] sigma(0).
/// Requires r1, r2 >= 0 and |u| <= 1 (up to round-off, which is clamped).
double g(const KernelSpec& spec, double r1, double r2, double u);

/// du g = r1 r2 E[sigma'(r1 x) sigma'(r2 y)] (Gaussian integration by parts).
double dg_du(const KernelSpec& spec, double r1, double r2, double u);

/// dr1 g = E[sigma'(r1 x) sigma(r2 y) x].
double dg_dr1(const KernelSpec& spec, double r1, double r2, double u);

/// d/dr g(r, r, 1) = 2 E[sigma'(r x) sigma(r x) x], the diagonal derivative.
double dg_diag(const KernelSpec& spec, double r);

/// E[sigma(r x)], the one-dimensional mean entering the degenerate rule.
double mean_activation(const KernelSpec& spec, double r);

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

/// Plain Monte-Carlo estimate of g with its standard error; test oracle.
McEstimate mc_oracle(const ActivationKind& kind, double r1, double r2,
                     double u, std::int64_t samples, std::uint64_t seed);

/// Nodes/weights for E[F(t)] over t ~ N(0,1): sum_i w_i F(x_i).
struct QuadratureRule {
  Eigen::VectorXd x;
  Eigen::VectorXd w;
};

/// Probabilists' Gauss-Hermite rule with n nodes (cached, thread-safe).
const QuadratureRule& gauss_hermite(int n);

/// Parses "analytic" | "quadrature[:nodes]" | "mc[:samples]" into a spec.
KernelSpec parse_kernel(const ActivationKind& kind, std::string_view text,
                        std::uint64_t seed = 0);

std::string to_string(KernelMethod method);

}  // namespace tslab
