#pragma once

#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "tslab/kernels.hpp"
#include "tslab/networks.hpp"

namespace tslab {

enum class CriticalPointKind { OneNeuronAverage, CopyAverage, NCopy };

/// A constructed critical point together with its exact loss and the
/// sup-norm of the population-loss gradient at it (certified against the
/// analytic kernel where one exists).
struct CriticalPoint {
  StudentNet student;
  CriticalPointKind label = CriticalPointKind::OneNeuronAverage;
  std::vector<int> partition;  // copy-average group sizes
  std::vector<int> signs;      // +-1 per neuron
  double loss_value = 0.0;
  double grad_norm = 0.0;
};

/// L*_erf(k) = (2/pi) (k arcsin(1/2) - k^2 arcsin(1/(2k))).
double erf_one_neuron_loss(int k);

/// |w*| a* = (k / h(1)) h(1/sqrt(k)) for the relu optimum hyperbola.
double relu_one_neuron_magnitude(int k);

/// L*_relu(k) = k^2 (h(0) - h(1/sqrt(k))^2 / h(1)) + k (h(1) - h(0)).
double relu_one_neuron_loss(int k);

/// Soft-committee variant k/3 - (2/pi) k^2 arcsin(1/(2k)); coincides with
/// erf_one_neuron_loss for unit teachers.
double soft_committee_loss_erf(int k);

/// One-neuron optimum for a unit-orthonormal erf teacher of width k:
/// |w*| = 1/sqrt(2k-1), a* = k, direction (1/sqrt(k)) sum_j v_j.
CriticalPoint one_neuron_erf(int k, const TeacherNet& t);

/// Relu optimum; any point of the equal-loss hyperbola |w| a = magnitude.
/// Default picks the balanced representative |w| = a = sqrt(magnitude).
CriticalPoint one_neuron_relu(int k, const TeacherNet& t,
                              std::optional<double> norm = std::nullopt);

struct NoBracket : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// f(r, u) = G(r) - Gt(u, r) with G = (1/2) d/dr log g(r,r,1) and
/// Gt = d/dr log g(r,1,u); NaN where a log argument is non-positive.
double fixed_point_residual(const KernelSpec& spec, double r, double u);

struct FixedPointRoot {
  double r = 0.0;          // root of f(., u) in (0, 1]
  double a_over_k = 0.0;   // matching outgoing weight ratio g(r,1,u)/g(r,r,1)
  int brackets_found = 0;  // > 1 flags an unexpected extra crossing
};

/// Scans 200 log-spaced points in [1e-4, 1] for a sign change of f(., u),
/// then bisects to |f| <= 1e-10. Throws NoBracket when no crossing exists
/// (expected for u < 0 with softplus-like kinds).
FixedPointRoot solve_fixed_point_norm(const KernelSpec& spec, double u);

/// One-neuron critical point at correlation 1/sqrt(k) via the norm
/// fixed-point equation; erf admits the closed form as an oracle, relu is
/// scale-free and returns the balanced closed-form point.
CriticalPoint one_neuron_fixed_point(const ActivationKind& kind, int k,
                                     const TeacherNet& t,
                                     const KernelSpec& spec);

/// f(r, u) tabulated over grids, NaN-flagged where undefined.
Eigen::MatrixXd f_grid(const KernelSpec& spec, const Eigen::VectorXd& r_grid,
                       const Eigen::VectorXd& u_grid);

/// Copy-average point: neuron i is the one-neuron erf optimum of its
/// teacher group (sizes = partition), scaled by signs[i] on both (w, a).
/// Groups must be disjoint subsets of 0..k-1 with sizes matching partition.
/// A complete cover (sizes summing to k) is a certified critical point;
/// leaving teachers uncovered pulls every neuron toward them with gradient
/// -2 a_i du_g(r_i, 1, 0)/r_i per uncovered direction, reported through
/// grad_norm.
CriticalPoint build_copy_average(const TeacherNet& t,
                                 const std::vector<int>& partition,
                                 const std::vector<int>& signs,
                                 const std::vector<std::vector<int>>& groups);

/// Convenience overload: all-plus signs and consecutive teacher groups.
CriticalPoint build_copy_average(const TeacherNet& t,
                                 const std::vector<int>& partition);

/// Exact loss of a copy-average configuration:
/// sum_i L*_erf(l_i) + (k - sum_i l_i) g_erf(1,1,1).
double ca_loss(const std::vector<int>& partition, int k);

/// The minimum-loss copy-average point (1, ..., 1, k-n+1); requires n < k.
CriticalPoint optimal_ca(int n, int k, const TeacherNet& t);

/// L*_erf(k-n+1), the conjectured optimal loss of the (n, k) problem.
double conjectured_loss(int n, int k);

/// Number of weight-space copy-average points with the given group sizes:
/// multiplicity factor times the product of binomial coefficients.
long long count_ca_points(const std::vector<int>& partition, int k);

/// All distinct partitions (non-increasing l_1 >= ... >= l_n >= 1, sum <= k)
/// of copy-average configurations for n student neurons.
std::vector<std::vector<int>> enumerate_ca_partitions(int n, int k);

}  // namespace tslab
