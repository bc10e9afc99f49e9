#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tslab/kernels.hpp"
#include "tslab/networks.hpp"

namespace tslab {

struct InitScheme {
  enum Kind { GaussianStd, Glorot };
  Kind kind = GaussianStd;
  double std = 0.1;  // GaussianStd only
};

struct FlowConfig {
  InitScheme init;
  std::uint64_t seed = 0;
  double grad_tol = 5e-8;   // sup-norm stopping criterion
  double rel_tol = 1e-8;    // integrator error control
  double abs_tol = 1e-10;
  long max_steps = 100000;  // accepted steps
  int snapshot_stride = 0;  // 0 disables trajectory recording
  bool newton_polish = false;

  // converged-point classification thresholds
  double copy_tol = 1e-3;          // |u| >= 1 - copy_tol counts as a copy
  double off_tol = 1e-2;           // average-neuron correlation slack
  double perturbed_copy_min = 0.9; // weakest |u| still counted a near-copy
  double loss_gap_tol = 1e-4;      // loss distance to the copy-average value
};

struct Snapshot {
  double time = 0.0;
  OrderParams params;
  double loss = 0.0;
};

enum class FlowLabel { OptCA, PerturbedNCopy, Other };

struct FlowRecord {
  StudentNet final_student;
  double final_loss = 0.0;
  double final_grad_norm = 0.0;
  bool converged = false;
  long steps = 0;  // accepted integrator steps
  bool degenerate = false;
  bool polished = false;
  std::string diagnostic;
  std::vector<Snapshot> snapshots;
};

/// i.i.d. Gaussian entries, deterministic in (n, d, seed). GaussianStd uses
/// the given deviation for both layers; Glorot uses sqrt(2/(fan_in+fan_out))
/// per layer.
StudentNet init_student(int n, int d, const FlowConfig& config,
                        ActivationKind kind);

/// Integrates d theta/dt = -grad L with an adaptive Dormand-Prince 5(4)
/// pair until the gradient sup-norm falls below grad_tol or max_steps
/// accepted steps elapse. Records order-parameter snapshots every
/// snapshot_stride accepted steps when the stride is positive.
FlowRecord integrate(const StudentNet& s0, const TeacherNet& t,
                     const KernelSpec& spec, const FlowConfig& config);

/// Labels a converged record from the correlation pattern at convergence:
/// OptCA when n-1 neurons copy distinct teacher neurons and the last one
/// averages the remaining k-n+1; PerturbedNCopy when every neuron is a
/// near-copy of a distinct teacher neuron. Throws on non-converged records.
FlowLabel classify(const FlowRecord& rec, const TeacherNet& t,
                   const FlowConfig& config = {});

std::string to_string(FlowLabel label);
FlowLabel parse_flow_label(std::string_view text);

}  // namespace tslab
