#include "tslab/gradient_flow.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "tslab/critical_points.hpp"
#include "tslab/population_loss.hpp"

namespace tslab {

namespace {

// Dormand-Prince 5(4) tableau
constexpr double a21 = 0.2;
constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0,
                 a53 = 64448.0 / 6561.0, a54 = -212.0 / 729.0;
constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0,
                 a63 = 46732.0 / 5247.0, a64 = 49.0 / 176.0,
                 a65 = -5103.0 / 18656.0;
constexpr double a71 = 35.0 / 384.0, a73 = 500.0 / 1113.0,
                 a74 = 125.0 / 192.0, a75 = -2187.0 / 6784.0,
                 a76 = 11.0 / 84.0;
constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0,
                 e4 = 71.0 / 1920.0, e5 = -17253.0 / 339200.0,
                 e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;

constexpr double kPolishHandoff = 1e-5;  // gradient level the Newton tail handles

struct Matching {
  std::vector<int> teacher_of;  // teacher index matched to each student
  std::vector<double> strength; // |u| of that match
};

// Greedy max-|u| assignment of student neurons to distinct teacher neurons.
Matching greedy_match(const Eigen::MatrixXd& u_abs) {
  const int n = static_cast<int>(u_abs.rows());
  const int k = static_cast<int>(u_abs.cols());
  Matching m;
  m.teacher_of.assign(n, -1);
  m.strength.assign(n, 0.0);
  std::vector<bool> student_done(n, false), teacher_done(k, false);
  for (int pick = 0; pick < n; ++pick) {
    int bi = -1, bj = -1;
    double best = -1.0;
    for (int i = 0; i < n; ++i) {
      if (student_done[i]) continue;
      for (int j = 0; j < k; ++j) {
        if (teacher_done[j]) continue;
        if (u_abs(i, j) > best) {
          best = u_abs(i, j);
          bi = i;
          bj = j;
        }
      }
    }
    m.teacher_of[bi] = bj;
    m.strength[bi] = best;
    student_done[bi] = true;
    teacher_done[bj] = true;
  }
  return m;
}

}  // namespace

StudentNet init_student(int n, int d, const FlowConfig& config,
                        ActivationKind kind) {
  if (n < 1 || d < 1)
    throw std::invalid_argument("student dimensions must be >= 1");
  double w_std = config.init.std;
  double a_std = config.init.std;
  if (config.init.kind == InitScheme::Glorot) {
    w_std = std::sqrt(2.0 / (d + n));
    a_std = std::sqrt(2.0 / (n + 1));
  }
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal;
  StudentNet s;
  s.kind = kind;
  s.W.resize(d, n);
  s.a.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int row = 0; row < d; ++row) s.W(row, i) = w_std * normal(rng);
    s.a(i) = a_std * normal(rng);
  }
  return s;
}

FlowRecord integrate(const StudentNet& s0, const TeacherNet& t,
                     const KernelSpec& spec, const FlowConfig& config) {
  const int n = s0.width();
  const int d = s0.dim();
  const ActivationKind kind = s0.kind;

  FlowRecord rec;
  auto rhs = [&](const Eigen::VectorXd& theta) -> Eigen::VectorXd {
    return -gradient(unpack(theta, n, d, kind), t, spec);
  };
  auto snapshot = [&](double time, const Eigen::VectorXd& theta) {
    Snapshot snap;
    snap.time = time;
    const StudentNet s = unpack(theta, n, d, kind);
    snap.params = to_order_params(s, t);
    snap.loss = loss(s, t, spec);
    rec.snapshots.push_back(std::move(snap));
  };

  Eigen::VectorXd y = pack(s0);
  double time = 0.0;
  long accepted = 0;

  try {
    Eigen::VectorXd k1 = rhs(y);
    if (config.snapshot_stride > 0) snapshot(time, y);
    if (k1.cwiseAbs().maxCoeff() <= config.grad_tol) {
      rec.converged = true;
    } else {
      double h = 1e-4;
      int rejects_in_row = 0;
      while (accepted < config.max_steps) {
        const Eigen::VectorXd k2 = rhs(y + h * (a21 * k1));
        const Eigen::VectorXd k3 = rhs(y + h * (a31 * k1 + a32 * k2));
        const Eigen::VectorXd k4 =
            rhs(y + h * (a41 * k1 + a42 * k2 + a43 * k3));
        const Eigen::VectorXd k5 =
            rhs(y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
        const Eigen::VectorXd k6 = rhs(
            y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
        const Eigen::VectorXd ynew = y + h * (a71 * k1 + a73 * k3 + a74 * k4 +
                                              a75 * k5 + a76 * k6);
        const Eigen::VectorXd k7 = rhs(ynew);  // FSAL
        const Eigen::VectorXd err_vec =
            h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
        const Eigen::ArrayXd scale =
            config.abs_tol +
            config.rel_tol * y.cwiseAbs().cwiseMax(ynew.cwiseAbs()).array();
        const double err =
            std::sqrt((err_vec.array() / scale).square().mean());

        if (err <= 1.0) {
          time += h;
          y = ynew;
          k1 = k7;
          ++accepted;
          rejects_in_row = 0;
          if (config.snapshot_stride > 0 &&
              accepted % config.snapshot_stride == 0)
            snapshot(time, y);
          if (k1.cwiseAbs().maxCoeff() <= config.grad_tol) {
            rec.converged = true;
            break;
          }
          // hand the flat tail to the Newton polish once it can take over
          if (config.newton_polish &&
              k1.cwiseAbs().maxCoeff() <= kPolishHandoff)
            break;
        } else if (++rejects_in_row > 60) {
          rec.diagnostic = "integrator stalled: 60 consecutive rejections";
          break;
        }
        const double factor =
            std::clamp(0.9 * std::pow(std::max(err, 1e-12), -0.2), 0.2, 5.0);
        h *= factor;
        if (h < 1e-14 * std::max(1.0, std::abs(time))) {
          rec.diagnostic = "step-size underflow";
          break;
        }
      }
      if (!rec.converged && rec.diagnostic.empty() &&
          accepted >= config.max_steps)
        rec.diagnostic = "max_steps reached";
    }

    // optional terminal polish: damped Newton on a nearly-flat tail
    if (!rec.converged && config.newton_polish &&
        k1.cwiseAbs().maxCoeff() <= kPolishHandoff) {
      StudentNet s = unpack(y, n, d, kind);
      Eigen::VectorXd grad = gradient(s, t, spec);
      for (int it = 0; it < 50 && grad.cwiseAbs().maxCoeff() > config.grad_tol;
           ++it) {
        const Eigen::MatrixXd hess = hessian(s, t, spec);
        double damping = 0.0;
        bool moved = false;
        for (int attempt = 0; attempt < 8; ++attempt) {
          Eigen::MatrixXd m = hess;
          if (damping > 0.0)
            m += damping * Eigen::MatrixXd::Identity(hess.rows(), hess.cols());
          const Eigen::VectorXd step = m.ldlt().solve(-grad);
          const Eigen::VectorXd cand = pack(s) + step;
          const StudentNet s_cand = unpack(cand, n, d, kind);
          const Eigen::VectorXd g_cand = gradient(s_cand, t, spec);
          if (g_cand.cwiseAbs().maxCoeff() < grad.cwiseAbs().maxCoeff()) {
            s = s_cand;
            grad = g_cand;
            moved = true;
            break;
          }
          damping = damping == 0.0 ? 1e-8 : damping * 100.0;
        }
        if (!moved) break;
      }
      if (grad.cwiseAbs().maxCoeff() <= config.grad_tol) {
        y = pack(s);
        k1 = -grad;
        rec.converged = true;
        rec.polished = true;
        rec.diagnostic.clear();
      } else if (rec.diagnostic.empty()) {
        rec.diagnostic = "newton polish stalled above tolerance";
      }
    }

    rec.final_student = unpack(y, n, d, kind);
    rec.final_grad_norm = k1.cwiseAbs().maxCoeff();
    rec.final_loss = loss(rec.final_student, t, spec);
  } catch (const DegenerateNeuron& err) {
    rec.degenerate = true;
    rec.converged = false;
    rec.diagnostic = err.what();
    rec.final_student = unpack(y, n, d, kind);
    rec.final_loss = loss(rec.final_student, t, spec);
    rec.final_grad_norm = std::numeric_limits<double>::quiet_NaN();
  }
  rec.steps = accepted;
  return rec;
}

FlowLabel classify(const FlowRecord& rec, const TeacherNet& t,
                   const FlowConfig& config) {
  if (!rec.converged)
    throw std::invalid_argument("cannot classify a non-converged record");
  const int n = rec.final_student.width();
  const int k = t.width();
  if (n > k)
    throw std::invalid_argument("classification covers under-parameterized "
                                "students only (n <= k)");
  const Eigen::MatrixXd u_abs =
      to_order_params(rec.final_student, t).U.cwiseAbs();
  const Matching match = greedy_match(u_abs);

  // order students by match strength; the weakest is the average candidate
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return match.strength[a] > match.strength[b];
  });

  bool copies_ok = true;
  std::vector<bool> teacher_copied(k, false);
  for (int idx = 0; idx + 1 < n; ++idx) {
    const int i = order[idx];
    if (match.strength[i] < 1.0 - config.copy_tol) {
      copies_ok = false;
      break;
    }
    teacher_copied[match.teacher_of[i]] = true;
  }

  if (copies_ok && n < k) {
    const int avg = order[n - 1];
    const double target = 1.0 / std::sqrt(static_cast<double>(k - n + 1));
    bool avg_ok = true;
    for (int j = 0; j < k; ++j) {
      const double uij = u_abs(avg, j);
      if (teacher_copied[j]) {
        if (uij > config.off_tol) avg_ok = false;
      } else if (std::abs(uij - target) > config.off_tol) {
        avg_ok = false;
      }
      if (!avg_ok) break;
    }
    if (avg_ok && t.kind.tag == Activation::Erf &&
        std::abs(rec.final_loss - conjectured_loss(n, k)) >
            config.loss_gap_tol)
      avg_ok = false;
    if (avg_ok) return FlowLabel::OptCA;
  }

  bool all_near_copies = true;
  for (int i = 0; i < n; ++i)
    if (match.strength[i] < config.perturbed_copy_min) {
      all_near_copies = false;
      break;
    }
  if (all_near_copies) return FlowLabel::PerturbedNCopy;
  return FlowLabel::Other;
}

std::string to_string(FlowLabel label) {
  switch (label) {
    case FlowLabel::OptCA: return "OptCA";
    case FlowLabel::PerturbedNCopy: return "PerturbedNCopy";
    case FlowLabel::Other: return "Other";
  }
  return "?";
}

FlowLabel parse_flow_label(std::string_view text) {
  if (text == "OptCA") return FlowLabel::OptCA;
  if (text == "PerturbedNCopy") return FlowLabel::PerturbedNCopy;
  if (text == "Other") return FlowLabel::Other;
  throw std::invalid_argument("unknown flow label: " + std::string(text));
}

}  // namespace tslab
