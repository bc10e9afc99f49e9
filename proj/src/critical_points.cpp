#include "tslab/critical_points.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "tslab/population_loss.hpp"

namespace tslab {

namespace {

constexpr double kPi = 3.141592653589793;
constexpr int kScanPoints = 200;
constexpr double kScanMin = 1e-4;
constexpr double kResidualTol = 1e-10;

double relu_h(double u) {
  return (std::sqrt(std::max(0.0, 1.0 - u * u)) +
          (kPi - std::acos(std::clamp(u, -1.0, 1.0))) * u) /
         (2.0 * kPi);
}

void require_unit_orthonormal(const TeacherNet& t, int k, Activation tag) {
  if (t.width() != k)
    throw std::invalid_argument("teacher width does not match k");
  if (t.kind.tag != tag)
    throw std::invalid_argument("teacher activation kind mismatch");
  if (!t.unit_orthonormal(1e-10))
    throw std::invalid_argument("teacher must be unit-orthonormal");
}

Eigen::VectorXd average_direction(const TeacherNet& t,
                                  const std::vector<int>& group) {
  Eigen::VectorXd dir = Eigen::VectorXd::Zero(t.dim());
  for (int j : group) dir += t.V.col(j);
  return dir / std::sqrt(static_cast<double>(group.size()));
}

CriticalPoint certify(StudentNet student, const TeacherNet& t,
                      CriticalPointKind label, std::vector<int> partition,
                      std::vector<int> signs, const KernelSpec& spec) {
  CriticalPoint point;
  point.student = std::move(student);
  point.label = label;
  point.partition = std::move(partition);
  point.signs = std::move(signs);
  point.loss_value = loss(point.student, t, spec);
  point.grad_norm =
      gradient(point.student, t, spec).cwiseAbs().maxCoeff();
  return point;
}

}  // namespace

double erf_one_neuron_loss(int k) {
  if (k < 0) throw std::invalid_argument("k must be non-negative");
  if (k == 0) return 0.0;
  const double kk = static_cast<double>(k);
  return (2.0 / kPi) *
         (kk * std::asin(0.5) - kk * kk * std::asin(0.5 / kk));
}

double relu_one_neuron_magnitude(int k) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  return static_cast<double>(k) * relu_h(1.0 / std::sqrt(double(k))) /
         relu_h(1.0);
}

double relu_one_neuron_loss(int k) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  const double kk = static_cast<double>(k);
  const double hu = relu_h(1.0 / std::sqrt(kk));
  const double h0 = relu_h(0.0);
  const double h1 = relu_h(1.0);
  return kk * kk * (h0 - hu * hu / h1) + kk * (h1 - h0);
}

double soft_committee_loss_erf(int k) {
  const double kk = static_cast<double>(k);
  return kk / 3.0 - (2.0 / kPi) * kk * kk * std::asin(0.5 / kk);
}

CriticalPoint one_neuron_erf(int k, const TeacherNet& t) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  require_unit_orthonormal(t, k, Activation::Erf);
  std::vector<int> group(k);
  for (int j = 0; j < k; ++j) group[j] = j;
  StudentNet s;
  s.kind = t.kind;
  s.W = (average_direction(t, group) / std::sqrt(2.0 * k - 1.0)).eval();
  s.a = Eigen::VectorXd::Constant(1, static_cast<double>(k));
  auto point = certify(std::move(s), t, CriticalPointKind::OneNeuronAverage,
                       {k}, {1}, KernelSpec::analytic(t.kind));
  point.loss_value = erf_one_neuron_loss(k);
  return point;
}

CriticalPoint one_neuron_relu(int k, const TeacherNet& t,
                              std::optional<double> norm) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  require_unit_orthonormal(t, k, Activation::Relu);
  const double magnitude = relu_one_neuron_magnitude(k);
  const double r = norm.value_or(std::sqrt(magnitude));
  if (!(r > 0.0)) throw std::invalid_argument("norm choice must be positive");
  std::vector<int> group(k);
  for (int j = 0; j < k; ++j) group[j] = j;
  StudentNet s;
  s.kind = t.kind;
  s.W = (r * average_direction(t, group)).eval();
  s.a = Eigen::VectorXd::Constant(1, magnitude / r);
  auto point = certify(std::move(s), t, CriticalPointKind::OneNeuronAverage,
                       {k}, {1}, KernelSpec::analytic(t.kind));
  point.loss_value = relu_one_neuron_loss(k);
  return point;
}

double fixed_point_residual(const KernelSpec& spec, double r, double u) {
  const double gd = g(spec, r, r, 1.0);
  const double gs = g(spec, r, 1.0, u);
  if (!(gd > 0.0) || !(gs > 0.0))
    return std::numeric_limits<double>::quiet_NaN();
  return 0.5 * dg_diag(spec, r) / gd - dg_dr1(spec, r, 1.0, u) / gs;
}

FixedPointRoot solve_fixed_point_norm(const KernelSpec& spec, double u) {
  const double log_min = std::log(kScanMin);
  auto grid_r = [&](int i) {
    return std::exp(log_min * (1.0 - static_cast<double>(i) /
                                         (kScanPoints - 1)));
  };
  auto f = [&](double r) { return fixed_point_residual(spec, r, u); };

  double lo = 0.0, hi = 0.0;
  int brackets = 0;
  double prev_r = grid_r(0);
  double prev_f = f(prev_r);
  for (int i = 1; i < kScanPoints; ++i) {
    const double cur_r = grid_r(i);
    const double cur_f = f(cur_r);
    if (std::isfinite(prev_f) && std::isfinite(cur_f) &&
        ((prev_f < 0.0) != (cur_f < 0.0))) {
      if (brackets == 0) {
        lo = prev_r;
        hi = cur_r;
      }
      ++brackets;
    }
    prev_r = cur_r;
    prev_f = cur_f;
  }
  if (brackets == 0)
    throw NoBracket("no bracket: f(r, u) has no sign change on (0, 1] at "
                    "u = " + std::to_string(u));

  // bisect until the bracket pins the root to ~1e-14 relative
  double flo = f(lo);
  double mid = 0.5 * (lo + hi);
  for (int it = 0; it < 200 && hi - lo > 1e-14 * (1.0 + mid); ++it) {
    mid = 0.5 * (lo + hi);
    const double fmid = f(mid);
    if (fmid == 0.0) break;
    if ((flo < 0.0) != (fmid < 0.0)) {
      hi = mid;
    } else {
      lo = mid;
      flo = fmid;
    }
  }
  if (std::abs(f(mid)) > kResidualTol)
    throw std::runtime_error("fixed-point bisection stalled above the "
                             "residual tolerance");
  FixedPointRoot root;
  root.r = mid;
  root.a_over_k = g(spec, mid, 1.0, u) / g(spec, mid, mid, 1.0);
  root.brackets_found = brackets;
  return root;
}

CriticalPoint one_neuron_fixed_point(const ActivationKind& kind, int k,
                                     const TeacherNet& t,
                                     const KernelSpec& spec) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  require_unit_orthonormal(t, k, kind.tag);
  if (kind.tag == Activation::Relu)
    return one_neuron_relu(k, t);  // scale-free norm: the equation is 0 == 0
  if (!(spec.kind == kind))
    throw std::invalid_argument("kernel spec kind mismatch");

  const double u = 1.0 / std::sqrt(static_cast<double>(k));
  const FixedPointRoot root = solve_fixed_point_norm(spec, u);
  std::vector<int> group(k);
  for (int j = 0; j < k; ++j) group[j] = j;
  StudentNet s;
  s.kind = kind;
  s.W = (root.r * average_direction(t, group)).eval();
  s.a = Eigen::VectorXd::Constant(1, root.a_over_k * k);
  const KernelSpec cert_spec =
      kind.tag == Activation::Erf ? KernelSpec::analytic(kind) : spec;
  return certify(std::move(s), t, CriticalPointKind::OneNeuronAverage, {k},
                 {1}, cert_spec);
}

Eigen::MatrixXd f_grid(const KernelSpec& spec, const Eigen::VectorXd& r_grid,
                       const Eigen::VectorXd& u_grid) {
  Eigen::MatrixXd out(r_grid.size(), u_grid.size());
  for (Eigen::Index i = 0; i < r_grid.size(); ++i)
    for (Eigen::Index j = 0; j < u_grid.size(); ++j)
      out(i, j) = fixed_point_residual(spec, r_grid(i), u_grid(j));
  return out;
}

CriticalPoint build_copy_average(const TeacherNet& t,
                                 const std::vector<int>& partition,
                                 const std::vector<int>& signs,
                                 const std::vector<std::vector<int>>& groups) {
  const int k = t.width();
  require_unit_orthonormal(t, k, Activation::Erf);
  const int n = static_cast<int>(partition.size());
  if (static_cast<int>(signs.size()) != n ||
      static_cast<int>(groups.size()) != n)
    throw std::invalid_argument("partition, signs and groups must have "
                                "equal lengths");
  std::vector<bool> used(k, false);
  long total = 0;
  for (int i = 0; i < n; ++i) {
    if (partition[i] < 1)
      throw std::invalid_argument("every group size must be >= 1");
    if (signs[i] != 1 && signs[i] != -1)
      throw std::invalid_argument("signs must be +-1");
    if (static_cast<int>(groups[i].size()) != partition[i])
      throw std::invalid_argument("group size does not match partition");
    for (int j : groups[i]) {
      if (j < 0 || j >= k) throw std::invalid_argument("teacher index out "
                                                       "of range");
      if (used[j]) throw std::invalid_argument("overlapping teacher groups");
      used[j] = true;
    }
    total += partition[i];
  }
  if (total > k)
    throw std::invalid_argument("partition exceeds teacher width");

  StudentNet s;
  s.kind = t.kind;
  s.W.resize(t.dim(), n);
  s.a.resize(n);
  for (int i = 0; i < n; ++i) {
    const double l = static_cast<double>(partition[i]);
    s.W.col(i) = signs[i] * average_direction(t, groups[i]) /
                 std::sqrt(2.0 * l - 1.0);
    s.a(i) = signs[i] * l;
  }
  const bool all_copies = total == k && n == k;
  return certify(std::move(s), t,
                 all_copies ? CriticalPointKind::NCopy
                            : CriticalPointKind::CopyAverage,
                 partition, signs, KernelSpec::analytic(t.kind));
}

CriticalPoint build_copy_average(const TeacherNet& t,
                                 const std::vector<int>& partition) {
  std::vector<int> signs(partition.size(), 1);
  std::vector<std::vector<int>> groups;
  int next = 0;
  for (int l : partition) {
    std::vector<int> group(l);
    for (int j = 0; j < l; ++j) group[j] = next++;
    groups.push_back(std::move(group));
  }
  return build_copy_average(t, partition, signs, groups);
}

double ca_loss(const std::vector<int>& partition, int k) {
  long total = 0;
  double value = 0.0;
  for (int l : partition) {
    if (l < 1) throw std::invalid_argument("every group size must be >= 1");
    total += l;
    value += erf_one_neuron_loss(l);
  }
  if (total > k)
    throw std::invalid_argument("partition exceeds teacher width");
  // uncovered teacher neurons cost g_erf(1,1,1) each
  value += static_cast<double>(k - total) * (2.0 / kPi) * std::asin(0.5);
  return value;
}

CriticalPoint optimal_ca(int n, int k, const TeacherNet& t) {
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  if (n >= k)
    throw std::invalid_argument("optimal_ca requires n < k; wider students "
                                "reach zero loss");
  std::vector<int> partition(n, 1);
  partition[n - 1] = k - n + 1;
  return build_copy_average(t, partition);
}

double conjectured_loss(int n, int k) {
  if (n < 1 || n >= k)
    throw std::invalid_argument("conjectured_loss requires 1 <= n < k");
  return erf_one_neuron_loss(k - n + 1);
}

long long count_ca_points(const std::vector<int>& partition, int k) {
  long total = 0;
  for (int l : partition) {
    if (l < 1) throw std::invalid_argument("every group size must be >= 1");
    total += l;
  }
  if (total > k)
    throw std::invalid_argument("partition exceeds teacher width");

  auto binomial = [](long long m, long long c) {
    long long result = 1;
    for (long long i = 1; i <= c; ++i) result = result * (m - c + i) / i;
    return result;
  };

  // distinguishable student permutations: n! / prod_i (multiplicity of i)!
  const int n = static_cast<int>(partition.size());
  std::vector<int> mult(k + 1, 0);
  for (int l : partition) ++mult[l];
  long long perm = 1;
  for (int i = 2; i <= n; ++i) perm *= i;
  for (int count : mult)
    for (int i = 2; i <= count; ++i) perm /= i;

  long long assignments = 1;
  long long remaining = k;
  for (int l : partition) {
    assignments *= binomial(remaining, l);
    remaining -= l;
  }
  return perm * assignments;
}

std::vector<std::vector<int>> enumerate_ca_partitions(int n, int k) {
  std::vector<std::vector<int>> out;
  std::vector<int> current(n);
  std::function<void(int, int, int)> rec = [&](int pos, int budget, int cap) {
    if (pos == n) {
      out.push_back(current);
      return;
    }
    const int remaining_slots = n - pos - 1;
    for (int l = std::min(cap, budget - remaining_slots); l >= 1; --l) {
      current[pos] = l;
      rec(pos + 1, budget - l, l);
    }
  };
  if (n >= 1 && n <= k) rec(0, k, k);
  return out;
}

}  // namespace tslab
