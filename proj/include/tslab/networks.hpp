#pragma once

#include <cstdint>
#include <stdexcept>

#include <Eigen/Core>

#include "tslab/activations.hpp"

namespace tslab {

/// Target network f*(x) = sum_j b_j sigma(v_j . x) with pairwise-orthogonal
/// incoming vectors stored as the columns of V (d x k), d >= k.
struct TeacherNet {
  Eigen::MatrixXd V;
  Eigen::VectorXd b;
  ActivationKind kind;

  int width() const { return static_cast<int>(V.cols()); }
  int dim() const { return static_cast<int>(V.rows()); }
  bool unit_orthonormal(double tol = 1e-12) const;
};

/// Trainable network f(x) = sum_i a_i sigma(w_i . x); incoming vectors are
/// the columns of W (d x n). The flat parameter vector has the layout
/// (w_1, a_1, ..., w_n, a_n) of length n (d + 1).
struct StudentNet {
  Eigen::MatrixXd W;
  Eigen::VectorXd a;
  ActivationKind kind;

  int width() const { return static_cast<int>(W.cols()); }
  int dim() const { return static_cast<int>(W.rows()); }
};

enum class TeacherFrame { CanonicalBasis, RandomOrthonormal };

/// Orthonormal columns, b = 1. CanonicalBasis takes v_j = e_j; the random
/// frame is a seeded QR of a Gaussian matrix. Throws if d < k or k < 1.
TeacherNet build_unit_orthonormal_teacher(
    int k, int d, TeacherFrame frame, std::uint64_t seed = 0,
    ActivationKind kind = ActivationKind::erf());

/// Image of a student under the teacher's frame: norms r_i = |w_i|,
/// student-teacher correlations u_ij = w_i.v_j / (r_i |v_j|) and
/// student-student correlations rho_ii' = w_i.w_i' / (r_i r_i').
struct OrderParams {
  Eigen::VectorXd r;    // n
  Eigen::MatrixXd U;    // n x k
  Eigen::MatrixXd rho;  // n x n, unit diagonal
};

/// Signals a zero-norm student neuron, for which correlations (and the
/// order-parameter chain rule) are undefined.
struct DegenerateNeuron : std::runtime_error {
  int index;
  explicit DegenerateNeuron(int i)
      : std::runtime_error("degenerate student neuron " + std::to_string(i) +
                           ": zero incoming-vector norm"),
        index(i) {}
};

OrderParams to_order_params(const StudentNet& s, const TeacherNet& t);

/// Signed feasibility residuals; a value <= 0 means the constraint holds.
struct ConstraintReport {
  Eigen::VectorXd u_norm_excess;  // |u_i| - 1
  Eigen::VectorXd r_negative;     // -r_i
  Eigen::MatrixXd pair_excess;    // |rho - u.u'| - sqrt(1-|u|^2) sqrt(1-|u'|^2)

  double max_violation() const;
  bool feasible(double tol = 1e-10) const { return max_violation() <= tol; }
};

ConstraintReport constraint_residuals(const OrderParams& p);

/// Flat parameter vector (w_1, a_1, ..., w_n, a_n).
Eigen::VectorXd pack(const StudentNet& s);
StudentNet unpack(const Eigen::VectorXd& theta, int n, int d,
                  ActivationKind kind);

}  // namespace tslab
