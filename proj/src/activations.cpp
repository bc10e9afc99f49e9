#include "tslab/activations.hpp"

#include <cmath>
#include <stdexcept>

namespace tslab {

namespace {

constexpr double kSqrt2OverPi = 0.7978845608028654;   // sqrt(2/pi)
constexpr double kInvSqrt2 = 0.7071067811865476;      // 1/sqrt(2)
constexpr double kInvSqrt2Pi = 0.3989422804014327;    // 1/sqrt(2 pi)

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double erf_eval(int order, double x) {
  if (order == 0) return std::erf(x * kInvSqrt2);
  const double d1 = kSqrt2OverPi * std::exp(-0.5 * x * x);
  switch (order) {
    case 1: return d1;
    case 2: return -x * d1;
    default: return (x * x - 1.0) * d1;
  }
}

double relu_eval(int order, double x) {
  switch (order) {
    case 0: return x > 0.0 ? x : 0.0;
    case 1: return x > 0.0 ? 1.0 : 0.0;  // sigma'(0) := 0
    default:
      if (x == 0.0)
        throw std::domain_error("relu is non-smooth: derivative of order " +
                                std::to_string(order) + " undefined at 0");
      return 0.0;
  }
}

// Logistic-family tanh, sigma(x) = (1-e^-x)/(1+e^-x) = tanh(x/2).
double tanh_eval(int order, double x) {
  const double s = std::tanh(0.5 * x);
  switch (order) {
    case 0: return s;
    case 1: return 0.5 * (1.0 - s * s);
    case 2: return -0.5 * s * (1.0 - s * s);
    default: return 0.25 * (1.0 - s * s) * (3.0 * s * s - 1.0);
  }
}

double sigmoid_eval(int order, double x) {
  const double s = logistic(x);
  const double d1 = s * (1.0 - s);
  switch (order) {
    case 0: return s;
    case 1: return d1;
    case 2: return d1 * (1.0 - 2.0 * s);
    default: return d1 * ((1.0 - 2.0 * s) * (1.0 - 2.0 * s) - 2.0 * d1);
  }
}

double softplus_eval(int order, double beta, double x) {
  if (order == 0) {
    const double bx = beta * x;
    // exp overflow guard: log(1+e^bx) = bx + log(1+e^-bx) ~ bx + e^-bx
    if (bx > 30.0) return x + std::exp(-bx) / beta;
    return std::log1p(std::exp(bx)) / beta;
  }
  const double s = logistic(beta * x);
  switch (order) {
    case 1: return s;
    case 2: return beta * s * (1.0 - s);
    default: return beta * beta * s * (1.0 - s) * (1.0 - 2.0 * s);
  }
}

// gelu(x) = x Phi(x) with Phi the standard normal CDF.
double gelu_eval(int order, double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
  switch (order) {
    case 0: return x * cdf;
    case 1: return cdf + x * pdf;
    case 2: return (2.0 - x * x) * pdf;
    default: return (x * x * x - 4.0 * x) * pdf;
  }
}

}  // namespace

ActivationKind ActivationKind::softplus(double beta) {
  if (!(beta > 0.0))
    throw std::invalid_argument("softplus beta must be positive");
  return {Activation::Softplus, beta};
}

bool operator==(const ActivationKind& a, const ActivationKind& b) {
  if (a.tag != b.tag) return false;
  return a.tag != Activation::Softplus || a.beta == b.beta;
}

double eval(const ActivationKind& kind, int order, double x) {
  if (order < 0 || order > 3)
    throw std::invalid_argument("derivative order must be in 0..3");
  switch (kind.tag) {
    case Activation::Erf: return erf_eval(order, x);
    case Activation::Relu: return relu_eval(order, x);
    case Activation::Tanh: return tanh_eval(order, x);
    case Activation::Sigmoid: return sigmoid_eval(order, x);
    case Activation::Softplus: return softplus_eval(order, kind.beta, x);
    case Activation::Gelu: return gelu_eval(order, x);
  }
  throw std::logic_error("unknown activation tag");
}

double monotonicity_integrand(const ActivationKind& kind, double x) {
  if (kind.tag == Activation::Relu || kind.tag == Activation::Gelu)
    throw std::invalid_argument("monotonicity integrand requires a smooth "
                                "kind with certified sign: erf, tanh, "
                                "sigmoid or softplus");
  return eval(kind, 1, x) - x * eval(kind, 2, x) + eval(kind, 3, x);
}

ActivationKind parse_activation(std::string_view name) {
  if (name == "erf") return ActivationKind::erf();
  if (name == "relu") return ActivationKind::relu();
  if (name == "tanh") return ActivationKind::tanh();
  if (name == "sigmoid") return ActivationKind::sigmoid();
  if (name == "gelu") return ActivationKind::gelu();
  if (name.rfind("softplus", 0) == 0) {
    if (name == "softplus") return ActivationKind::softplus(1.0);
    if (name.size() > 9 && name[8] == ':') {
      const std::string arg(name.substr(9));
      std::size_t pos = 0;
      const double beta = std::stod(arg, &pos);
      if (pos == arg.size()) return ActivationKind::softplus(beta);
    }
  }
  throw std::invalid_argument("unknown activation: " + std::string(name));
}

std::string to_string(const ActivationKind& kind) {
  switch (kind.tag) {
    case Activation::Erf: return "erf";
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Softplus:
      return kind.beta == 1.0 ? "softplus"
                              : "softplus:" + std::to_string(kind.beta);
    case Activation::Gelu: return "gelu";
  }
  return "?";
}

}  // namespace tslab
