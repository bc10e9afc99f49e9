// Command-line front end: kernel tables, one-neuron solutions, copy-average
// tables, fixed-point grids, single gradient-flow runs, phase sweeps,
// Hessian scans and plot-data emission.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tslab/critical_points.hpp"
#include "tslab/gradient_flow.hpp"
#include "tslab/kernels.hpp"
#include "tslab/networks.hpp"
#include "tslab/population_loss.hpp"
#include "tslab/sweep.hpp"

using nlohmann::json;
using namespace tslab;

namespace {

std::vector<int> parse_range(const std::string& text) {
  std::vector<int> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto dots = item.find("..");
    if (dots == std::string::npos) {
      values.push_back(std::stoi(item));
    } else {
      const int lo = std::stoi(item.substr(0, dots));
      const int hi = std::stoi(item.substr(dots + 2));
      for (int v = lo; v <= hi; ++v) values.push_back(v);
    }
  }
  return values;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  return out;
}

json record_to_json(const FlowRecord& rec, const TeacherNet& teacher,
                    std::uint64_t seed) {
  json j;
  j["n"] = rec.final_student.width();
  j["k"] = teacher.width();
  j["d"] = rec.final_student.dim();
  j["seed"] = seed;
  j["activation"] = to_string(rec.final_student.kind);
  j["final_loss"] = rec.final_loss;
  j["final_grad_norm"] = rec.final_grad_norm;
  j["converged"] = rec.converged;
  j["steps"] = rec.steps;
  j["degenerate"] = rec.degenerate;
  j["polished"] = rec.polished;
  if (!rec.diagnostic.empty()) j["diagnostic"] = rec.diagnostic;
  if (!rec.snapshots.empty()) {
    json snaps = json::array();
    for (const Snapshot& snap : rec.snapshots) {
      json s;
      s["time"] = snap.time;
      s["loss"] = snap.loss;
      s["r"] = std::vector<double>(snap.params.r.data(),
                                   snap.params.r.data() + snap.params.r.size());
      json u_rows = json::array();
      for (Eigen::Index i = 0; i < snap.params.U.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index jj = 0; jj < snap.params.U.cols(); ++jj)
          row.push_back(snap.params.U(i, jj));
        u_rows.push_back(row);
      }
      s["U"] = u_rows;
      snaps.push_back(s);
    }
    j["snapshots"] = snaps;
  }
  return j;
}

FlowRecord record_from_json(const json& j) {
  FlowRecord rec;
  const int n = j.at("n").get<int>();
  const int d = j.at("d").get<int>();
  rec.final_student.kind = parse_activation(j.at("activation").get<std::string>());
  rec.final_student.W = Eigen::MatrixXd::Zero(d, n);
  rec.final_student.a = Eigen::VectorXd::Zero(n);
  rec.final_loss = j.at("final_loss").get<double>();
  rec.converged = j.at("converged").get<bool>();
  rec.steps = j.at("steps").get<long>();
  if (j.contains("snapshots")) {
    for (const json& s : j.at("snapshots")) {
      Snapshot snap;
      snap.time = s.at("time").get<double>();
      snap.loss = s.at("loss").get<double>();
      const auto r = s.at("r").get<std::vector<double>>();
      snap.params.r = Eigen::Map<const Eigen::VectorXd>(r.data(), r.size());
      const json& u = s.at("U");
      const int rows = static_cast<int>(u.size());
      const int cols = rows > 0 ? static_cast<int>(u[0].size()) : 0;
      snap.params.U.resize(rows, cols);
      for (int i = 0; i < rows; ++i)
        for (int c = 0; c < cols; ++c)
          snap.params.U(i, c) = u[i][c].get<double>();
      snap.params.rho = Eigen::MatrixXd::Identity(rows, rows);
      rec.snapshots.push_back(std::move(snap));
    }
  }
  return rec;
}

int cmd_kernel_check(const std::string& activation, int nodes,
                     std::int64_t samples, std::uint64_t seed,
                     const std::string& out_path) {
  const ActivationKind kind = parse_activation(activation);
  const KernelSpec quad = KernelSpec::quadrature(kind, nodes);
  const bool has_analytic =
      kind.tag == Activation::Erf || kind.tag == Activation::Relu;
  const double tol = kind.tag == Activation::Erf ? 1e-10 : 1e-6;

  std::ostringstream table;
  table << "# columns: r1 r2 u reference quadrature mc mc_stderr\n";
  double worst = 0.0;
  bool mc_ok = true;
  const std::vector<double> radii = {0.2, 0.65, 1.1, 1.55, 2.0};
  for (double r1 : radii) {
    for (double r2 : radii) {
      for (double u = -0.95; u <= 0.951; u += 0.19) {
        const double via_quad = g(quad, r1, r2, u);
        const double reference =
            has_analytic ? g(KernelSpec::analytic(kind), r1, r2, u)
                         : via_quad;
        const McEstimate mc = mc_oracle(kind, r1, r2, u, samples, seed);
        if (has_analytic) worst = std::max(worst, std::abs(via_quad - reference));
        if (std::abs(mc.mean - reference) > 4.0 * mc.std_error + 1e-12)
          mc_ok = false;
        table << r1 << ' ' << r2 << ' ' << u << ' ' << reference << ' '
              << via_quad << ' ' << mc.mean << ' ' << mc.std_error << "\n";
      }
    }
  }
  if (!out_path.empty()) open_out(out_path) << table.str();
  std::cout << "kernel " << activation << ": quadrature max |err| = "
            << std::scientific << worst << (has_analytic ? "" : " (self)")
            << ", mc within 4 stderr: " << (mc_ok ? "yes" : "NO") << "\n";
  if (has_analytic && worst > tol) {
    std::cerr << "backend deviation above tolerance " << tol << "\n";
    return 1;
  }
  return mc_ok ? 0 : 1;
}

int cmd_one_neuron(const std::string& activation, const std::string& krange,
                   const std::string& kernel, const std::string& out_path,
                   const std::string& json_path) {
  std::vector<ActivationKind> kinds;
  if (activation == "all") {
    kinds = {ActivationKind::erf(), ActivationKind::relu(),
             ActivationKind::tanh(), ActivationKind::sigmoid(),
             ActivationKind::softplus(1.0)};
  } else {
    kinds = {parse_activation(activation)};
  }
  const std::vector<int> ks = parse_range(krange);
  const auto [kmin, kmax] =
      std::minmax_element(ks.begin(), ks.end());
  const auto rows = run_one_neuron_table(kinds, *kmin, *kmax, kernel);
  std::cout << "# activation k r a u loss r<=1/sqrt(k) a>=k note\n";
  for (const OneNeuronRow& row : rows) {
    std::cout << to_string(row.kind) << ' ' << row.k << ' ' << std::setprecision(10)
              << row.r << ' ' << row.a << ' ' << row.u << ' ' << row.loss
              << ' ' << row.norm_bounded << ' ' << row.weight_bounded << ' '
              << (row.note.empty() ? "-" : row.note) << "\n";
  }
  if (!out_path.empty()) {
    auto out = open_out(out_path);
    emit_one_neuron(rows, out);
  }
  if (!json_path.empty()) {
    json j;
    j["rows"] = json::array();
    for (const OneNeuronRow& row : rows) {
      json r;
      r["activation"] = to_string(row.kind);
      r["k"] = row.k;
      r["r"] = row.r;
      r["a"] = row.a;
      r["u"] = row.u;
      r["loss"] = row.loss;
      r["norm_bounded"] = row.norm_bounded;
      r["weight_bounded"] = row.weight_bounded;
      r["note"] = row.note;
      j["rows"].push_back(r);
    }
    open_out(json_path) << j.dump(2) << "\n";
  }
  return 0;
}

int cmd_ca_table(int n, int k, const std::string& out_path) {
  const TeacherNet teacher =
      build_unit_orthonormal_teacher(k, k + 1, TeacherFrame::CanonicalBasis);
  const auto partitions = enumerate_ca_partitions(n, k);
  std::ostringstream table;
  table << "# columns: partition ca_loss count grad_norm optimal\n";
  double best = std::numeric_limits<double>::infinity();
  for (const auto& partition : partitions)
    best = std::min(best, ca_loss(partition, k));
  for (const auto& partition : partitions) {
    const CriticalPoint point = build_copy_average(teacher, partition);
    std::string name;
    for (std::size_t i = 0; i < partition.size(); ++i)
      name += (i ? "+" : "") + std::to_string(partition[i]);
    const double value = ca_loss(partition, k);
    table << name << ' ' << std::setprecision(12) << value << ' '
          << count_ca_points(partition, k) << ' ' << point.grad_norm << ' '
          << (value == best ? 1 : 0) << "\n";
  }
  std::cout << table.str();
  if (!out_path.empty()) open_out(out_path) << table.str();
  return 0;
}

int cmd_fgrid(const std::string& activation, const std::string& kernel,
              int rpoints, double rmax, int upoints,
              const std::string& out_path, const std::string& json_path) {
  const ActivationKind kind = parse_activation(activation);
  const KernelSpec spec = parse_kernel(kind, kernel);
  Eigen::VectorXd r_grid(rpoints), u_grid(upoints);
  for (int i = 0; i < rpoints; ++i)
    r_grid(i) = rmax * (i + 1) / static_cast<double>(rpoints);
  for (int j = 0; j < upoints; ++j)
    u_grid(j) = (j + 1) / static_cast<double>(upoints + 1);
  const Eigen::MatrixXd values = f_grid(spec, r_grid, u_grid);
  if (!out_path.empty()) {
    auto out = open_out(out_path);
    emit_fgrid(r_grid, u_grid, values, out);
  } else {
    emit_fgrid(r_grid, u_grid, values, std::cout);
  }
  if (!json_path.empty()) {
    json j;
    j["activation"] = to_string(kind);
    j["r_grid"] = std::vector<double>(r_grid.data(), r_grid.data() + rpoints);
    j["u_grid"] = std::vector<double>(u_grid.data(), u_grid.data() + upoints);
    json rows = json::array();
    for (int i = 0; i < rpoints; ++i) {
      json row = json::array();
      for (int jj = 0; jj < upoints; ++jj) row.push_back(values(i, jj));
      rows.push_back(row);
    }
    j["values"] = rows;
    open_out(json_path) << j.dump(2) << "\n";
  }
  return 0;
}

int cmd_flow(const std::string& activation, int n, int k, int d,
             std::uint64_t seed, const std::string& kernel,
             const std::string& init, int snapshot_stride, bool polish,
             const std::string& out_path, const std::string& traj_path) {
  const ActivationKind kind = parse_activation(activation);
  if (d == 0) d = k + 1;
  const TeacherNet teacher =
      build_unit_orthonormal_teacher(k, d, TeacherFrame::CanonicalBasis, 0,
                                     kind);
  FlowConfig config;
  config.seed = seed;
  config.snapshot_stride = snapshot_stride;
  config.newton_polish = polish;
  if (init == "glorot") {
    config.init.kind = InitScheme::Glorot;
  } else if (init.rfind("gaussian", 0) == 0) {
    config.init.kind = InitScheme::GaussianStd;
    if (init.size() > 9 && init[8] == ':')
      config.init.std = std::stod(init.substr(9));
  } else {
    throw std::invalid_argument("unknown init scheme: " + init);
  }
  const KernelSpec spec = parse_kernel(kind, kernel, seed);
  const StudentNet s0 = init_student(n, d, config, kind);
  const FlowRecord rec = integrate(s0, teacher, spec, config);

  std::cout << "n=" << n << " k=" << k << " d=" << d << " seed=" << seed
            << " converged=" << rec.converged << " steps=" << rec.steps
            << " final_loss=" << std::setprecision(10) << rec.final_loss
            << " grad_norm=" << rec.final_grad_norm;
  if (rec.converged)
    std::cout << " label=" << to_string(classify(rec, teacher, config));
  if (!rec.diagnostic.empty()) std::cout << " note=\"" << rec.diagnostic << '"';
  std::cout << "\n";

  if (!out_path.empty())
    open_out(out_path) << record_to_json(rec, teacher, seed).dump(2) << "\n";
  if (!traj_path.empty()) {
    auto out = open_out(traj_path);
    emit_trajectory(rec, out);
  }
  return rec.converged ? 0 : 3;
}

int cmd_phase_sweep(const std::string& config_path, const std::string& out,
                    int workers) {
  SweepConfig config = load_sweep_config(config_path);
  if (!out.empty()) config.output_path = out;
  if (workers > 0) config.workers = workers;
  const auto cells = run_phase_sweep(config);
  int converged = 0;
  for (const PhaseCell& cell : cells) converged += cell.converged;
  std::cout << "wrote " << cells.size() << " cells (" << converged
            << " converged) to " << config.output_path << ".jsonl\n";
  return 0;
}

int cmd_hessian_scan(const std::string& nrange, bool use_ratio, int value,
                     const std::string& out_path) {
  const auto cells = run_hessian_scan(parse_range(nrange), use_ratio, value);
  std::ostringstream table;
  table << "# columns: n k min_eigenvalue\n";
  for (const HessianCell& cell : cells)
    table << cell.n << ' ' << cell.k << ' ' << std::setprecision(12)
          << cell.min_eig << "\n";
  std::cout << table.str();
  if (!out_path.empty()) open_out(out_path) << table.str();
  return 0;
}

int cmd_emit(const std::string& kind, const std::string& in_path,
             const std::string& out_path) {
  auto out = open_out(out_path);
  if (kind == "phase") {
    emit_phase(read_phase_cells(in_path), out);
  } else if (kind == "trajectory") {
    std::ifstream in(in_path);
    if (!in) throw std::runtime_error("cannot open record: " + in_path);
    json j;
    in >> j;
    emit_trajectory(record_from_json(j), out);
  } else if (kind == "fgrid") {
    std::ifstream in(in_path);
    if (!in) throw std::runtime_error("cannot open artifact: " + in_path);
    json j;
    in >> j;
    const auto rv = j.at("r_grid").get<std::vector<double>>();
    const auto uv = j.at("u_grid").get<std::vector<double>>();
    Eigen::VectorXd r_grid = Eigen::Map<const Eigen::VectorXd>(rv.data(), rv.size());
    Eigen::VectorXd u_grid = Eigen::Map<const Eigen::VectorXd>(uv.data(), uv.size());
    Eigen::MatrixXd values(r_grid.size(), u_grid.size());
    const json& rows = j.at("values");
    for (Eigen::Index i = 0; i < values.rows(); ++i)
      for (Eigen::Index c = 0; c < values.cols(); ++c)
        values(i, c) = rows[i][c].get<double>();
    emit_fgrid(r_grid, u_grid, values, out);
  } else if (kind == "one_neuron") {
    std::ifstream in(in_path);
    if (!in) throw std::runtime_error("cannot open artifact: " + in_path);
    json j;
    in >> j;
    std::vector<OneNeuronRow> rows;
    for (const json& r : j.at("rows")) {
      OneNeuronRow row;
      row.kind = parse_activation(r.at("activation").get<std::string>());
      row.k = r.at("k").get<int>();
      row.r = r.at("r").get<double>();
      row.a = r.at("a").get<double>();
      row.u = r.at("u").get<double>();
      row.loss = r.at("loss").get<double>();
      row.norm_bounded = r.at("norm_bounded").get<bool>();
      row.weight_bounded = r.at("weight_bounded").get<bool>();
      row.note = r.at("note").get<std::string>();
      rows.push_back(std::move(row));
    }
    emit_one_neuron(rows, out);
  } else {
    throw std::invalid_argument("unknown emit kind: " + kind +
                                " (expected phase, trajectory, fgrid or "
                                "one_neuron)");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"shallow teacher-student network laboratory"};
  app.require_subcommand(1);

  std::string activation = "erf", kernel = "analytic", out_path, json_path;
  std::string quad_kernel = "quadrature:80";
  std::string config_path, in_path, krange = "2..10", nrange = "2..14";
  std::string init = "gaussian:0.1", emit_kind, traj_path;
  int n = 2, k = 3, d = 0, nodes = 80, workers = 0, stride = 0;
  int rpoints = 60, upoints = 40, offset = 1, ratio = 0;
  double rmax = 1.2;
  std::uint64_t seed = 1;
  std::int64_t samples = 1000000;
  bool polish = false;

  auto* kc = app.add_subcommand("kernel-check",
                                "compare kernel backends on a grid");
  kc->add_option("--activation", activation);
  kc->add_option("--nodes", nodes);
  kc->add_option("--samples", samples);
  kc->add_option("--seed", seed);
  kc->add_option("--out", out_path);

  auto* on = app.add_subcommand("one-neuron",
                                "optimal one-neuron solutions per k");
  on->add_option("--activation", activation, "kind or 'all'");
  on->add_option("--k", krange, "list/range, e.g. 2..10");
  on->add_option("--kernel", quad_kernel);
  on->add_option("--out", out_path);
  on->add_option("--json-out", json_path);

  auto* ca = app.add_subcommand("ca-table",
                                "copy-average partitions, losses and counts");
  ca->add_option("--n", n)->required();
  ca->add_option("--k", k)->required();
  ca->add_option("--out", out_path);

  auto* fg = app.add_subcommand("fgrid",
                                "norm fixed-point residual on an (r, u) grid");
  fg->add_option("--activation", activation);
  fg->add_option("--kernel", quad_kernel);
  fg->add_option("--rpoints", rpoints);
  fg->add_option("--rmax", rmax);
  fg->add_option("--upoints", upoints);
  fg->add_option("--out", out_path);
  fg->add_option("--json-out", json_path);

  auto* fl = app.add_subcommand("flow", "single gradient-flow run");
  fl->add_option("--activation", activation);
  fl->add_option("--n", n)->required();
  fl->add_option("--k", k)->required();
  fl->add_option("--d", d, "default k+1");
  fl->add_option("--seed", seed);
  fl->add_option("--kernel", kernel);
  fl->add_option("--init", init, "gaussian:<std> or glorot");
  fl->add_option("--snapshot-stride", stride);
  fl->add_flag("--polish", polish, "newton polish on a flat tail");
  fl->add_option("--out", out_path, "record JSON");
  fl->add_option("--traj-out", traj_path, "columnar trajectory");

  auto* ps = app.add_subcommand("phase-sweep", "run a configured sweep");
  ps->add_option("--config", config_path)->required();
  ps->add_option("--out", out_path, "override config output path");
  ps->add_option("--workers", workers, "override config worker count");

  auto* hs = app.add_subcommand("hessian-scan",
                                "min Hessian eigenvalue at optimal-CA points");
  hs->add_option("--n", nrange, "list/range of student widths");
  hs->add_option("--offset", offset, "k = n + offset");
  hs->add_option("--ratio", ratio, "k = ratio * n (overrides offset)");
  hs->add_option("--out", out_path);

  auto* em = app.add_subcommand("emit", "convert records to plot columns");
  em->add_option("--kind", emit_kind,
                 "phase | trajectory | fgrid | one_neuron")->required();
  em->add_option("--in", in_path)->required();
  em->add_option("--out", out_path)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (kc->parsed())
      return cmd_kernel_check(activation, nodes, samples, seed, out_path);
    if (on->parsed())
      return cmd_one_neuron(activation, krange, quad_kernel, out_path,
                            json_path);
    if (ca->parsed()) return cmd_ca_table(n, k, out_path);
    if (fg->parsed())
      return cmd_fgrid(activation, quad_kernel, rpoints, rmax, upoints,
                       out_path, json_path);
    if (fl->parsed())
      return cmd_flow(activation, n, k, d, seed, kernel, init, stride,
                      polish, out_path, traj_path);
    if (ps->parsed()) return cmd_phase_sweep(config_path, out_path, workers);
    if (hs->parsed())
      return cmd_hessian_scan(nrange, ratio > 0, ratio > 0 ? ratio : offset,
                              out_path);
    if (em->parsed()) return cmd_emit(emit_kind, in_path, out_path);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
