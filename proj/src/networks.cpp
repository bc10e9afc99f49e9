#include "tslab/networks.hpp"

#include <cmath>
#include <random>

#include <Eigen/Dense>

namespace tslab {

bool TeacherNet::unit_orthonormal(double tol) const {
  const Eigen::MatrixXd gram = V.transpose() * V;
  const int k = width();
  if ((gram - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff() > tol)
    return false;
  return (b.array() - 1.0).abs().maxCoeff() <= tol;
}

TeacherNet build_unit_orthonormal_teacher(int k, int d, TeacherFrame frame,
                                          std::uint64_t seed,
                                          ActivationKind kind) {
  if (k < 1) throw std::invalid_argument("teacher width must be >= 1");
  if (d < k)
    throw std::invalid_argument("input dimension must satisfy d >= k");
  TeacherNet t;
  t.kind = kind;
  t.b = Eigen::VectorXd::Ones(k);
  if (frame == TeacherFrame::CanonicalBasis) {
    t.V = Eigen::MatrixXd::Identity(d, k);
    return t;
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd gaussian(d, k);
  for (int j = 0; j < k; ++j)
    for (int i = 0; i < d; ++i) gaussian(i, j) = normal(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, k);
  // fix column signs so the frame is a deterministic function of the seed
  const Eigen::MatrixXd r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  for (int j = 0; j < k; ++j)
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  t.V = q;
  return t;
}

OrderParams to_order_params(const StudentNet& s, const TeacherNet& t) {
  const int n = s.width();
  const int k = t.width();
  OrderParams p;
  p.r.resize(n);
  Eigen::MatrixXd what(s.dim(), n);  // unit incoming vectors
  for (int i = 0; i < n; ++i) {
    p.r(i) = s.W.col(i).norm();
    if (p.r(i) == 0.0) throw DegenerateNeuron(i);
    what.col(i) = s.W.col(i) / p.r(i);
  }
  p.U.resize(n, k);
  for (int j = 0; j < k; ++j) {
    const double vnorm = t.V.col(j).norm();
    p.U.col(j) = what.transpose() * t.V.col(j) / vnorm;
  }
  p.rho = what.transpose() * what;
  p.rho.diagonal().setOnes();
  return p;
}

double ConstraintReport::max_violation() const {
  double worst = u_norm_excess.maxCoeff();
  worst = std::max(worst, r_negative.maxCoeff());
  if (pair_excess.size() > 0) worst = std::max(worst, pair_excess.maxCoeff());
  return worst;
}

ConstraintReport constraint_residuals(const OrderParams& p) {
  const int n = static_cast<int>(p.r.size());
  ConstraintReport rep;
  rep.u_norm_excess.resize(n);
  for (int i = 0; i < n; ++i) rep.u_norm_excess(i) = p.U.row(i).norm() - 1.0;
  rep.r_negative = -p.r;
  rep.pair_excess = Eigen::MatrixXd::Constant(
      n, n, -std::numeric_limits<double>::infinity());
  for (int i = 0; i < n; ++i) {
    const double slack_i =
        std::sqrt(std::max(0.0, 1.0 - p.U.row(i).squaredNorm()));
    for (int j = i + 1; j < n; ++j) {
      const double slack_j =
          std::sqrt(std::max(0.0, 1.0 - p.U.row(j).squaredNorm()));
      const double excess =
          std::abs(p.rho(i, j) - p.U.row(i).dot(p.U.row(j))) -
          slack_i * slack_j;
      rep.pair_excess(i, j) = excess;
      rep.pair_excess(j, i) = excess;
    }
  }
  return rep;
}

Eigen::VectorXd pack(const StudentNet& s) {
  const int n = s.width();
  const int d = s.dim();
  Eigen::VectorXd theta(n * (d + 1));
  for (int i = 0; i < n; ++i) {
    theta.segment(i * (d + 1), d) = s.W.col(i);
    theta(i * (d + 1) + d) = s.a(i);
  }
  return theta;
}

StudentNet unpack(const Eigen::VectorXd& theta, int n, int d,
                  ActivationKind kind) {
  if (theta.size() != static_cast<Eigen::Index>(n) * (d + 1))
    throw std::invalid_argument("parameter vector has wrong length");
  StudentNet s;
  s.kind = kind;
  s.W.resize(d, n);
  s.a.resize(n);
  for (int i = 0; i < n; ++i) {
    s.W.col(i) = theta.segment(i * (d + 1), d);
    s.a(i) = theta(i * (d + 1) + d);
  }
  return s;
}

}  // namespace tslab
