#include "tslab/population_loss.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

namespace tslab {

namespace {

double clamp_corr(double v) { return std::clamp(v, -1.0, 1.0); }

void check_kinds(const StudentNet& s, const TeacherNet& t,
                 const KernelSpec& spec) {
  if (!(s.kind == t.kind) || !(s.kind == spec.kind))
    throw std::invalid_argument("student, teacher and kernel activation "
                                "kinds must match");
  if (s.dim() != t.dim())
    throw std::invalid_argument("student and teacher input dimensions "
                                "must match");
}

}  // namespace

double teacher_constant(const TeacherNet& t, const KernelSpec& spec) {
  const int k = t.width();
  double c = 0.0;
  for (int j = 0; j < k; ++j) {
    const double vj = t.V.col(j).norm();
    c += t.b(j) * t.b(j) * g(spec, vj, vj, 1.0);
    for (int l = j + 1; l < k; ++l)
      c += 2.0 * t.b(j) * t.b(l) * g(spec, vj, t.V.col(l).norm(), 0.0);
  }
  return c;
}

double loss(const StudentNet& s, const TeacherNet& t, const KernelSpec& spec) {
  check_kinds(s, t, spec);
  const int n = s.width();
  const int k = t.width();
  Eigen::VectorXd r(n);
  for (int i = 0; i < n; ++i) r(i) = s.W.col(i).norm();

  double total = teacher_constant(t, spec);
  for (int i = 0; i < n; ++i)
    total += s.a(i) * s.a(i) * g(spec, r(i), r(i), 1.0);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      // rho is irrelevant under the degenerate rule when a norm vanishes
      const double rho = (r(i) > 0.0 && r(j) > 0.0)
                             ? clamp_corr(s.W.col(i).dot(s.W.col(j)) /
                                          (r(i) * r(j)))
                             : 0.0;
      total += 2.0 * s.a(i) * s.a(j) * g(spec, r(i), r(j), rho);
    }
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < k; ++j) {
      const double vn = t.V.col(j).norm();
      const double u = (r(i) > 0.0 && vn > 0.0)
                           ? clamp_corr(s.W.col(i).dot(t.V.col(j)) /
                                        (r(i) * vn))
                           : 0.0;
      total -= 2.0 * s.a(i) * t.b(j) * g(spec, r(i), vn, u);
    }
  }
  return total;
}

Eigen::VectorXd gradient(const StudentNet& s, const TeacherNet& t,
                         const KernelSpec& spec) {
  check_kinds(s, t, spec);
  const int n = s.width();
  const int k = t.width();
  const int d = s.dim();

  Eigen::VectorXd r(n);
  Eigen::MatrixXd what(d, n);
  for (int i = 0; i < n; ++i) {
    r(i) = s.W.col(i).norm();
    if (r(i) == 0.0) throw DegenerateNeuron(i);
    what.col(i) = s.W.col(i) / r(i);
  }

  Eigen::MatrixXd grad_w = Eigen::MatrixXd::Zero(d, n);
  Eigen::VectorXd grad_a = Eigen::VectorXd::Zero(n);

  // diagonal terms a_i^2 g(r_i, r_i, 1)
  for (int i = 0; i < n; ++i) {
    grad_a(i) += 2.0 * s.a(i) * g(spec, r(i), r(i), 1.0);
    grad_w.col(i) += s.a(i) * s.a(i) * dg_diag(spec, r(i)) * what.col(i);
  }

  // student-student interactions, each unordered pair entering twice
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double rho =
          clamp_corr(what.col(i).dot(what.col(j)));
      const double c = 2.0 * s.a(i) * s.a(j);
      grad_a(i) += 2.0 * s.a(j) * g(spec, r(i), r(j), rho);
      grad_a(j) += 2.0 * s.a(i) * g(spec, r(i), r(j), rho);
      const double du = dg_du(spec, r(i), r(j), rho);
      grad_w.col(i) += c * (dg_dr1(spec, r(i), r(j), rho) * what.col(i) +
                            du * (s.W.col(j) / (r(i) * r(j)) -
                                  rho * what.col(i) / r(i)));
      grad_w.col(j) += c * (dg_dr1(spec, r(j), r(i), rho) * what.col(j) +
                            du * (s.W.col(i) / (r(i) * r(j)) -
                                  rho * what.col(j) / r(j)));
    }
  }

  // student-teacher interactions
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < k; ++j) {
      const double vn = t.V.col(j).norm();
      const double u = clamp_corr(what.col(i).dot(t.V.col(j)) / vn);
      const double c = -2.0 * s.a(i) * t.b(j);
      grad_a(i) -= 2.0 * t.b(j) * g(spec, r(i), vn, u);
      grad_w.col(i) += c * (dg_dr1(spec, r(i), vn, u) * what.col(i) +
                            dg_du(spec, r(i), vn, u) *
                                (t.V.col(j) / (r(i) * vn) -
                                 u * what.col(i) / r(i)));
    }
  }

  Eigen::VectorXd theta(n * (d + 1));
  for (int i = 0; i < n; ++i) {
    theta.segment(i * (d + 1), d) = grad_w.col(i);
    theta(i * (d + 1) + d) = grad_a(i);
  }
  return theta;
}

Eigen::MatrixXd hessian(const StudentNet& s, const TeacherNet& t,
                        const KernelSpec& spec, bool symmetrize) {
  const int n = s.width();
  const int d = s.dim();
  const int p = n * (d + 1);
  const Eigen::VectorXd theta = pack(s);
  Eigen::MatrixXd h(p, p);
  for (int m = 0; m < p; ++m) {
    const double step = 1e-5 * (1.0 + std::abs(theta(m)));
    Eigen::VectorXd tp = theta, tm = theta;
    tp(m) += step;
    tm(m) -= step;
    const Eigen::VectorXd gp = gradient(unpack(tp, n, d, s.kind), t, spec);
    const Eigen::VectorXd gm = gradient(unpack(tm, n, d, s.kind), t, spec);
    h.col(m) = (gp - gm) / (2.0 * step);
  }
  if (symmetrize) h = 0.5 * (h + h.transpose()).eval();
  return h;
}

double min_eigenvalue(const Eigen::MatrixXd& h) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h,
                                                    Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

}  // namespace tslab
