#include "tslab/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace tslab {

namespace {

constexpr double kPi = 3.141592653589793;
constexpr double kCorrSlack = 1e-12;  // tolerated |u| round-off past 1
constexpr double kArgGuard = 1e-15;   // clamp guard for arcsin/arccos args
constexpr double kTailCut = 13.0;     // phi(13) ~ 8e-38, below double round-off
constexpr double kPanelLen = 2.5;
constexpr int kPanelOrder = 24;

double clamp_unit(double v, double guard = 0.0) {
  const double lim = 1.0 - guard;
  return v > lim ? lim : (v < -lim ? -lim : v);
}

double normal_pdf(double t) {
  return 0.3989422804014327 * std::exp(-0.5 * t * t);
}

// Golub-Welsch: nodes are eigenvalues of the symmetric tridiagonal Jacobi
// matrix, weights are mu0 times the squared first eigenvector components.
QuadratureRule golub_welsch(const Eigen::VectorXd& offdiag, double mu0) {
  const int n = static_cast<int>(offdiag.size()) + 1;
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i + 1 < n; ++i) {
    jacobi(i, i + 1) = offdiag(i);
    jacobi(i + 1, i) = offdiag(i);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
  QuadratureRule rule;
  rule.x = es.eigenvalues();
  rule.w = mu0 * es.eigenvectors().row(0).transpose().array().square();
  return rule;
}

// Gauss-Legendre rule on [-1, 1], shared panel building block.
const QuadratureRule& legendre_rule() {
  static const QuadratureRule rule = [] {
    Eigen::VectorXd off(kPanelOrder - 1);
    for (int k = 1; k < kPanelOrder; ++k)
      off(k - 1) = k / std::sqrt(4.0 * k * k - 1.0);
    return golub_welsch(off, 2.0);
  }();
  return rule;
}

void append_panels(double a, double b, std::vector<double>& xs,
                   std::vector<double>& ws) {
  const auto& gl = legendre_rule();
  const int m = std::max(1, static_cast<int>(std::ceil((b - a) / kPanelLen)));
  for (int p = 0; p < m; ++p) {
    const double lo = a + (b - a) * p / m;
    const double hi = a + (b - a) * (p + 1) / m;
    for (int i = 0; i < gl.x.size(); ++i) {
      const double t = 0.5 * (hi - lo) * gl.x(i) + 0.5 * (hi + lo);
      xs.push_back(t);
      ws.push_back(0.5 * (hi - lo) * gl.w(i) * normal_pdf(t));
    }
  }
}

// Gaussian-weighted rule on [-L, L] for integrands with one interior kink
// (relu and its derivative). Composite Gauss-Legendre panels split at the
// kink keep every panel integrand smooth, restoring spectral accuracy.
QuadratureRule kink_split_rule(double kink) {
  std::vector<double> xs, ws;
  if (std::isfinite(kink) && kink > -kTailCut && kink < kTailCut) {
    append_panels(-kTailCut, kink, xs, ws);
    append_panels(kink, kTailCut, xs, ws);
  } else {
    append_panels(-kTailCut, kTailCut, xs, ws);
  }
  QuadratureRule rule;
  rule.x = Eigen::Map<Eigen::VectorXd>(xs.data(), xs.size());
  rule.w = Eigen::Map<Eigen::VectorXd>(ws.data(), ws.size());
  return rule;
}

// E[F(x)] over x ~ N(0,1). kink_at_zero marks F as non-smooth at 0.
template <class F>
double expect1(bool kink_at_zero, int nodes, F&& f) {
  if (!kink_at_zero) {
    const auto& q = gauss_hermite(nodes);
    double total = 0.0;
    for (int i = 0; i < q.x.size(); ++i) total += q.w(i) * f(q.x(i));
    return total;
  }
  const QuadratureRule q = kink_split_rule(0.0);
  double total = 0.0;
  for (int i = 0; i < q.x.size(); ++i) total += q.w(i) * f(q.x(i));
  return total;
}

// E[F(x, y)] with y = u x + sqrt(1-u^2) z over iid standard Gaussians x, z.
// For kinked integrands F has kinks along x = 0 and y = 0; the latter sits
// at z = -u x / sqrt(1-u^2) for each outer node.
template <class F>
double expect2(bool kinked, int nodes, double u, F&& f) {
  const double up = std::sqrt(std::max(0.0, 1.0 - u * u));
  if (!kinked) {
    const auto& q = gauss_hermite(nodes);
    double total = 0.0;
    for (int i = 0; i < q.x.size(); ++i) {
      const double x = q.x(i);
      double inner = 0.0;
      for (int j = 0; j < q.x.size(); ++j)
        inner += q.w(j) * f(x, u * x + up * q.x(j));
      total += q.w(i) * inner;
    }
    return total;
  }
  const QuadratureRule outer = kink_split_rule(0.0);
  if (up == 0.0) {  // y = +-x: both kinks coincide at the origin
    double total = 0.0;
    for (int i = 0; i < outer.x.size(); ++i)
      total += outer.w(i) * f(outer.x(i), u * outer.x(i));
    return total;
  }
  double total = 0.0;
  for (int i = 0; i < outer.x.size(); ++i) {
    const double x = outer.x(i);
    const QuadratureRule inner = kink_split_rule(-u * x / up);
    double s = 0.0;
    for (int j = 0; j < inner.x.size(); ++j)
      s += inner.w(j) * f(x, u * x + up * inner.x(j));
    total += outer.w(i) * s;
  }
  return total;
}

template <class F>
McEstimate mc_expect2(double u, std::int64_t samples, std::uint64_t seed,
                      F&& f) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  const double up = std::sqrt(std::max(0.0, 1.0 - u * u));
  double sum = 0.0, sumsq = 0.0;
  for (std::int64_t s = 0; s < samples; ++s) {
    const double x = normal(rng);
    const double z = normal(rng);
    const double v = f(x, u * x + up * z);
    sum += v;
    sumsq += v * v;
  }
  const double mean = sum / static_cast<double>(samples);
  const double var =
      std::max(0.0, sumsq / static_cast<double>(samples) - mean * mean);
  McEstimate est;
  est.mean = mean;
  est.std_error = std::sqrt(var / static_cast<double>(samples - 1));
  return est;
}

double relu_h(double u) {
  u = clamp_unit(u, kArgGuard);
  return (std::sqrt(1.0 - u * u) + (kPi - std::acos(u)) * u) / (2.0 * kPi);
}

double relu_h_prime(double u) {
  u = clamp_unit(u, kArgGuard);
  return (kPi - std::acos(u)) / (2.0 * kPi);
}

double erf_arg_scale(double r1, double r2) {
  return r1 * r2 / std::sqrt((1.0 + r1 * r1) * (1.0 + r2 * r2));
}

void check_domain(double r1, double r2, double& u) {
  if (r1 < 0.0 || r2 < 0.0)
    throw std::domain_error("kernel norms must be non-negative");
  if (std::abs(u) > 1.0 + kCorrSlack)
    throw std::domain_error("kernel correlation outside [-1, 1]");
  u = clamp_unit(u);
}

bool analytic_kind(const ActivationKind& kind) {
  return kind.tag == Activation::Erf || kind.tag == Activation::Relu;
}

}  // namespace

const QuadratureRule& gauss_hermite(int n) {
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<QuadratureRule>> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto& slot = cache[n];
  if (!slot) {
    Eigen::VectorXd off(n - 1);
    for (int k = 1; k < n; ++k) off(k - 1) = std::sqrt(static_cast<double>(k));
    slot = std::make_unique<QuadratureRule>(golub_welsch(off, 1.0));
  }
  return *slot;
}

KernelSpec KernelSpec::analytic(ActivationKind kind) {
  KernelSpec spec;
  spec.kind = kind;
  spec.method = KernelMethod::Analytic;
  validate(spec);
  return spec;
}

KernelSpec KernelSpec::quadrature(ActivationKind kind, int nodes) {
  KernelSpec spec;
  spec.kind = kind;
  spec.method = KernelMethod::GaussHermite;
  spec.nodes = nodes;
  validate(spec);
  return spec;
}

KernelSpec KernelSpec::monte_carlo(ActivationKind kind, std::int64_t samples,
                                   std::uint64_t seed) {
  KernelSpec spec;
  spec.kind = kind;
  spec.method = KernelMethod::MonteCarlo;
  spec.samples = samples;
  spec.seed = seed;
  validate(spec);
  return spec;
}

void validate(const KernelSpec& spec) {
  if (spec.kind.tag == Activation::Softplus && !(spec.kind.beta > 0.0))
    throw std::invalid_argument("softplus beta must be positive");
  switch (spec.method) {
    case KernelMethod::Analytic:
      if (!analytic_kind(spec.kind))
        throw std::invalid_argument("analytic kernel exists only for erf "
                                    "and relu");
      break;
    case KernelMethod::GaussHermite:
      if (spec.nodes < 8)
        throw std::invalid_argument("quadrature needs >= 8 nodes per axis");
      break;
    case KernelMethod::MonteCarlo:
      if (spec.samples < 10000)
        throw std::invalid_argument("monte carlo needs >= 1e4 samples");
      break;
  }
}

double g(const KernelSpec& spec, double r1, double r2, double u) {
  validate(spec);
  check_domain(r1, r2, u);
  const ActivationKind& kind = spec.kind;
  if (r1 == 0.0 || r2 == 0.0) {
    const double s0 = eval(kind, 0, 0.0);
    if (r1 == 0.0 && r2 == 0.0) return s0 * s0;
    return s0 * mean_activation(spec, r1 == 0.0 ? r2 : r1);
  }
  // the two slots are exchangeable; a canonical order keeps the sampled
  // backend exactly symmetric
  if (r1 < r2) std::swap(r1, r2);
  switch (spec.method) {
    case KernelMethod::Analytic:
      if (kind.tag == Activation::Erf)
        return (2.0 / kPi) * std::asin(clamp_unit(erf_arg_scale(r1, r2) * u));
      return r1 * r2 * relu_h(u);
    case KernelMethod::GaussHermite:
      return expect2(!kind.smooth(), spec.nodes, u, [&](double x, double y) {
        return eval(kind, 0, r1 * x) * eval(kind, 0, r2 * y);
      });
    case KernelMethod::MonteCarlo:
      return mc_expect2(u, spec.samples, spec.seed, [&](double x, double y) {
               return eval(kind, 0, r1 * x) * eval(kind, 0, r2 * y);
             }).mean;
  }
  throw std::logic_error("unknown kernel method");
}

double dg_du(const KernelSpec& spec, double r1, double r2, double u) {
  validate(spec);
  check_domain(r1, r2, u);
  if (r1 == 0.0 || r2 == 0.0)
    throw std::domain_error("dg_du requires positive norms");
  const ActivationKind& kind = spec.kind;
  switch (spec.method) {
    case KernelMethod::Analytic: {
      if (kind.tag == Activation::Erf) {
        const double s = erf_arg_scale(r1, r2);
        const double a = clamp_unit(s * u, kArgGuard);
        return (2.0 / kPi) * s / std::sqrt(1.0 - a * a);
      }
      return r1 * r2 * relu_h_prime(u);
    }
    case KernelMethod::GaussHermite: {
      const double uc = clamp_unit(u, kCorrSlack);
      return r1 * r2 *
             expect2(!kind.smooth(), spec.nodes, uc, [&](double x, double y) {
               return eval(kind, 1, r1 * x) * eval(kind, 1, r2 * y);
             });
    }
    case KernelMethod::MonteCarlo: {
      const double uc = clamp_unit(u, kCorrSlack);
      return r1 * r2 *
             mc_expect2(uc, spec.samples, spec.seed, [&](double x, double y) {
               return eval(kind, 1, r1 * x) * eval(kind, 1, r2 * y);
             }).mean;
    }
  }
  throw std::logic_error("unknown kernel method");
}

double dg_dr1(const KernelSpec& spec, double r1, double r2, double u) {
  validate(spec);
  check_domain(r1, r2, u);
  if (r1 == 0.0) throw std::domain_error("dg_dr1 requires r1 > 0");
  const ActivationKind& kind = spec.kind;
  if (r2 == 0.0) {
    // d/dr1 of E[sigma(r1 x)] sigma(0)
    const double s0 = eval(kind, 0, 0.0);
    if (s0 == 0.0) return 0.0;
    return s0 * expect1(!kind.smooth(), spec.nodes,
                        [&](double x) { return eval(kind, 1, r1 * x) * x; });
  }
  switch (spec.method) {
    case KernelMethod::Analytic: {
      if (kind.tag == Activation::Erf) {
        const double a = clamp_unit(erf_arg_scale(r1, r2) * u, kArgGuard);
        const double da_dr1 = r2 * u /
                              (std::pow(1.0 + r1 * r1, 1.5) *
                               std::sqrt(1.0 + r2 * r2));
        return (2.0 / kPi) * da_dr1 / std::sqrt(1.0 - a * a);
      }
      return r2 * relu_h(u);
    }
    case KernelMethod::GaussHermite:
      return expect2(!kind.smooth(), spec.nodes, u, [&](double x, double y) {
        return eval(kind, 1, r1 * x) * eval(kind, 0, r2 * y) * x;
      });
    case KernelMethod::MonteCarlo:
      return mc_expect2(u, spec.samples, spec.seed, [&](double x, double y) {
               return eval(kind, 1, r1 * x) * eval(kind, 0, r2 * y) * x;
             }).mean;
  }
  throw std::logic_error("unknown kernel method");
}

double dg_diag(const KernelSpec& spec, double r) {
  validate(spec);
  if (r < 0.0) throw std::domain_error("kernel norms must be non-negative");
  if (r == 0.0) throw std::domain_error("dg_diag requires r > 0");
  const ActivationKind& kind = spec.kind;
  switch (spec.method) {
    case KernelMethod::Analytic:
      if (kind.tag == Activation::Erf)
        return 4.0 * r / (kPi * (1.0 + r * r) * std::sqrt(1.0 + 2.0 * r * r));
      return r;  // d/dr of r^2 h(1) with h(1) = 1/2
    case KernelMethod::GaussHermite:
      return 2.0 * expect1(!kind.smooth(), spec.nodes, [&](double x) {
               return eval(kind, 1, r * x) * eval(kind, 0, r * x) * x;
             });
    case KernelMethod::MonteCarlo: {
      std::mt19937_64 rng(spec.seed);
      std::normal_distribution<double> normal;
      double sum = 0.0;
      for (std::int64_t s = 0; s < spec.samples; ++s) {
        const double x = normal(rng);
        sum += eval(kind, 1, r * x) * eval(kind, 0, r * x) * x;
      }
      return 2.0 * sum / static_cast<double>(spec.samples);
    }
  }
  throw std::logic_error("unknown kernel method");
}

double mean_activation(const KernelSpec& spec, double r) {
  validate(spec);
  if (r < 0.0) throw std::domain_error("kernel norms must be non-negative");
  const ActivationKind& kind = spec.kind;
  if (r == 0.0) return eval(kind, 0, 0.0);
  if (kind.odd()) return 0.0;
  switch (spec.method) {
    case KernelMethod::Analytic:
      return r * 0.3989422804014327;  // relu: r E[x^+] = r / sqrt(2 pi)
    case KernelMethod::GaussHermite:
      return expect1(!kind.smooth(), spec.nodes,
                     [&](double x) { return eval(kind, 0, r * x); });
    case KernelMethod::MonteCarlo: {
      std::mt19937_64 rng(spec.seed);
      std::normal_distribution<double> normal;
      double sum = 0.0;
      for (std::int64_t s = 0; s < spec.samples; ++s)
        sum += eval(kind, 0, r * normal(rng));
      return sum / static_cast<double>(spec.samples);
    }
  }
  throw std::logic_error("unknown kernel method");
}

McEstimate mc_oracle(const ActivationKind& kind, double r1, double r2,
                     double u, std::int64_t samples, std::uint64_t seed) {
  if (samples < 10000)
    throw std::invalid_argument("mc_oracle needs >= 1e4 samples");
  check_domain(r1, r2, u);
  if (r1 < r2) std::swap(r1, r2);
  if (r1 == 0.0 || r2 == 0.0) {
    // degenerate norm rule: sample only the surviving one-dimensional factor
    const double s0 = eval(kind, 0, 0.0);
    const double r = r1 == 0.0 ? r2 : r1;
    if (r == 0.0) return {s0 * s0, 0.0};
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    double sum = 0.0, sumsq = 0.0;
    for (std::int64_t s = 0; s < samples; ++s) {
      const double v = eval(kind, 0, r * normal(rng));
      sum += v;
      sumsq += v * v;
    }
    const double mean = sum / static_cast<double>(samples);
    const double var =
        std::max(0.0, sumsq / static_cast<double>(samples) - mean * mean);
    return {s0 * mean,
            std::abs(s0) * std::sqrt(var / static_cast<double>(samples - 1))};
  }
  return mc_expect2(u, samples, seed, [&](double x, double y) {
    return eval(kind, 0, r1 * x) * eval(kind, 0, r2 * y);
  });
}

KernelSpec parse_kernel(const ActivationKind& kind, std::string_view text,
                        std::uint64_t seed) {
  auto tail = [&](std::size_t prefix) -> std::string {
    return std::string(text.substr(prefix));
  };
  if (text == "analytic") return KernelSpec::analytic(kind);
  if (text == "quadrature") return KernelSpec::quadrature(kind);
  if (text.rfind("quadrature:", 0) == 0)
    return KernelSpec::quadrature(kind, std::stoi(tail(11)));
  if (text == "mc") return KernelSpec::monte_carlo(kind, 1000000, seed);
  if (text.rfind("mc:", 0) == 0)
    return KernelSpec::monte_carlo(kind, std::stoll(tail(3)), seed);
  throw std::invalid_argument("unknown kernel method: " + std::string(text));
}

std::string to_string(KernelMethod method) {
  switch (method) {
    case KernelMethod::Analytic: return "analytic";
    case KernelMethod::GaussHermite: return "quadrature";
    case KernelMethod::MonteCarlo: return "mc";
  }
  return "?";
}

}  // namespace tslab
