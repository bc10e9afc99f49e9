#pragma once

#include <Eigen/Core>

#include "tslab/kernels.hpp"
#include "tslab/networks.hpp"

namespace tslab {

/// C = E[f*(x)^2] assembled through the kernel, so non-unit teachers work
/// unchanged: sum_jj' b_j b_j' g(|v_j|, |v_j'|, delta_jj').
double teacher_constant(const TeacherNet& t, const KernelSpec& spec);

/// Population loss E[(f - f*)^2] via the order-parameter expansion
///   sum_i a_i^2 g(r_i, r_i, 1) + 2 sum_{i<i'} a_i a_i' g(r_i, r_i', rho_ii')
///   - 2 sum_ij a_i b_j g(r_i, |v_j|, u_ij) + C.
/// Zero-norm neurons contribute through the degenerate kernel rule.
double loss(const StudentNet& s, const TeacherNet& t, const KernelSpec& spec);

/// Analytic gradient with respect to the flat parameter vector
/// (w_1, a_1, ..., w_n, a_n), assembled by the chain rule through
/// (r_i, u_ij, rho_ii'). Throws DegenerateNeuron for zero-norm neurons.
Eigen::VectorXd gradient(const StudentNet& s, const TeacherNet& t,
                         const KernelSpec& spec);

/// Central finite differences of the analytic gradient with step
/// 1e-5 (1 + |theta_i|); symmetrized as (H + H^T)/2 unless disabled.
Eigen::MatrixXd hessian(const StudentNet& s, const TeacherNet& t,
                        const KernelSpec& spec, bool symmetrize = true);

double min_eigenvalue(const Eigen::MatrixXd& h);

}  // namespace tslab
