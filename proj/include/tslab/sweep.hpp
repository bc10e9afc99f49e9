#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "tslab/gradient_flow.hpp"
#include "tslab/kernels.hpp"

namespace tslab {

/// Experiment grid: one gradient-flow run per (n, k, seed) cell, with the
/// input dimension set per cell by d = k + 1 or a fixed value.
struct SweepConfig {
  ActivationKind activation;
  std::vector<int> n_values;
  std::vector<int> k_values;
  bool d_is_k_plus_1 = true;
  int fixed_d = 0;
  std::vector<std::uint64_t> seeds;
  FlowConfig flow;
  std::string kernel_text = "analytic";
  int workers = 1;
  std::string output_path;  // writes <path>.jsonl and <path>_summary.csv

  int dim_for(int k) const { return d_is_k_plus_1 ? k + 1 : fixed_d; }
};

/// Parses the key = value config format (# comments, a..b ranges and comma
/// lists); unknown keys are rejected.
SweepConfig load_sweep_config(const std::string& path);
SweepConfig parse_sweep_config(std::istream& in);
void validate(const SweepConfig& config);

struct PhaseCell {
  int n = 0, k = 0, d = 0;
  std::uint64_t seed = 0;
  double final_loss = 0.0;
  double theory_loss = 0.0;  // NaN when no closed-form prediction exists
  double gap = 0.0;          // final_loss - theory_loss
  FlowLabel label = FlowLabel::Other;
  long steps = 0;
  bool converged = false;
  double grad_norm = 0.0;
  bool degenerate = false;
  bool polished = false;
};

/// Runs every cell (parallel over `workers`), persists one JSON record per
/// line plus a per-(n,k) CSV summary, and returns the cells in
/// deterministic (n, k, seed) order.
std::vector<PhaseCell> run_phase_sweep(const SweepConfig& config);

/// Re-reads persisted cells from a .jsonl file.
std::vector<PhaseCell> read_phase_cells(const std::string& jsonl_path);

struct OneNeuronRow {
  ActivationKind kind;
  int k = 0;
  double r = 0.0, a = 0.0, u = 0.0, loss = 0.0;
  bool norm_bounded = false;    // r <= 1/sqrt(k)
  bool weight_bounded = false;  // a >= k
  std::string note;             // solver diagnostics, e.g. bracket failures
};

/// Per (kind, k): optimal one-neuron order parameters from the closed form
/// (erf, relu) or the norm fixed point (tanh, sigmoid, softplus).
std::vector<OneNeuronRow> run_one_neuron_table(
    const std::vector<ActivationKind>& kinds, int k_min, int k_max,
    const std::string& kernel_text = "quadrature:80");

struct HessianCell {
  int n = 0, k = 0;
  double min_eig = 0.0;
};

/// Minimum Hessian eigenvalue at the optimal copy-average point for each n,
/// with k chosen as n + offset or ratio * n.
std::vector<HessianCell> run_hessian_scan(const std::vector<int>& n_values,
                                          bool use_ratio, int value);

/// Columnar plot-data writers (schema header line, then rows).
void emit_phase(const std::vector<PhaseCell>& cells, std::ostream& out);
void emit_trajectory(const FlowRecord& rec, std::ostream& out);
void emit_fgrid(const Eigen::VectorXd& r_grid, const Eigen::VectorXd& u_grid,
                const Eigen::MatrixXd& values, std::ostream& out);
void emit_one_neuron(const std::vector<OneNeuronRow>& rows,
                     std::ostream& out);

}  // namespace tslab
