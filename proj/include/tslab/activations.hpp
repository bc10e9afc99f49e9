#pragma once

#include <string>
#include <string_view>

namespace tslab {

enum class Activation { Erf, Relu, Tanh, Sigmoid, Softplus, Gelu };

/// Scalar activation function tag. Softplus carries a sharpness parameter
/// beta > 0; every other tag is parameter-free. Relu is the only non-smooth
/// kind: its second and third derivatives exist only away from the origin.
struct ActivationKind {
  Activation tag = Activation::Erf;
  double beta = 1.0;  // softplus only

  bool smooth() const { return tag != Activation::Relu; }
  bool odd() const { return tag == Activation::Erf || tag == Activation::Tanh; }

  static ActivationKind erf() { return {Activation::Erf, 1.0}; }
  static ActivationKind relu() { return {Activation::Relu, 1.0}; }
  static ActivationKind tanh() { return {Activation::Tanh, 1.0}; }
  static ActivationKind sigmoid() { return {Activation::Sigmoid, 1.0}; }
  static ActivationKind softplus(double beta = 1.0);
  static ActivationKind gelu() { return {Activation::Gelu, 1.0}; }
};

bool operator==(const ActivationKind& a, const ActivationKind& b);

/// sigma and its first three derivatives evaluated at x; order in 0..3.
/// Relu uses the subgradient convention sigma'(0) := 0 and rejects
/// order >= 2 exactly at the kink.
double eval(const ActivationKind& kind, int order, double x);

/// sigma'(x) - x sigma''(x) + sigma'''(x). Strict positivity of this
/// integrand (non-negativity with a single zero at the origin for erf)
/// certifies that du g(r,1,u)/u is strictly decreasing in u, the property
/// behind uniqueness of the one-neuron critical correlation. Defined for
/// erf, tanh, sigmoid and softplus; rejects relu and gelu.
double monotonicity_integrand(const ActivationKind& kind, double x);

/// Accepts "erf", "relu", "tanh", "sigmoid", "softplus", "softplus:<beta>",
/// "gelu". Throws std::invalid_argument otherwise.
ActivationKind parse_activation(std::string_view name);

std::string to_string(const ActivationKind& kind);

}  // namespace tslab
