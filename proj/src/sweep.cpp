#include "tslab/sweep.hpp"

#include <atomic>
#include <cmath>
#include <condition_variable>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "tslab/critical_points.hpp"
#include "tslab/networks.hpp"
#include "tslab/population_loss.hpp"

namespace tslab {

namespace {

using nlohmann::json;

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

// "1,2,5" or "2..6" or a mix of comma-separated entries/ranges
template <class Int>
std::vector<Int> parse_int_list(const std::string& text) {
  std::vector<Int> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto dots = item.find("..");
    if (dots == std::string::npos) {
      values.push_back(static_cast<Int>(std::stoll(item)));
    } else {
      const long long lo = std::stoll(item.substr(0, dots));
      const long long hi = std::stoll(item.substr(dots + 2));
      for (long long v = lo; v <= hi; ++v)
        values.push_back(static_cast<Int>(v));
    }
  }
  return values;
}

json cell_to_json(const PhaseCell& cell, const ActivationKind& kind) {
  json rec;
  rec["n"] = cell.n;
  rec["k"] = cell.k;
  rec["d"] = cell.d;
  rec["seed"] = cell.seed;
  rec["activation"] = to_string(kind);
  rec["final_loss"] = cell.final_loss;
  if (std::isfinite(cell.theory_loss)) {
    rec["theory_loss"] = cell.theory_loss;
    rec["gap"] = cell.gap;
  }
  rec["label"] = to_string(cell.label);
  rec["steps"] = cell.steps;
  rec["converged"] = cell.converged;
  rec["grad_norm"] = cell.grad_norm;
  rec["degenerate"] = cell.degenerate;
  rec["polished"] = cell.polished;
  return rec;
}

}  // namespace

SweepConfig parse_sweep_config(std::istream& in) {
  SweepConfig config;
  config.activation = ActivationKind::erf();
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "activation") {
      config.activation = parse_activation(value);
    } else if (key == "n") {
      config.n_values = parse_int_list<int>(value);
    } else if (key == "k") {
      config.k_values = parse_int_list<int>(value);
    } else if (key == "d") {
      if (value == "k+1") {
        config.d_is_k_plus_1 = true;
      } else {
        config.d_is_k_plus_1 = false;
        config.fixed_d = std::stoi(value);
      }
    } else if (key == "seeds") {
      config.seeds = parse_int_list<std::uint64_t>(value);
    } else if (key == "kernel") {
      config.kernel_text = value;
    } else if (key == "init") {
      if (value == "glorot") {
        config.flow.init.kind = InitScheme::Glorot;
      } else if (value.rfind("gaussian", 0) == 0) {
        config.flow.init.kind = InitScheme::GaussianStd;
        if (value.size() > 9 && value[8] == ':')
          config.flow.init.std = std::stod(value.substr(9));
      } else {
        throw std::invalid_argument("unknown init scheme: " + value);
      }
    } else if (key == "grad_tol") {
      config.flow.grad_tol = std::stod(value);
    } else if (key == "rel_tol") {
      config.flow.rel_tol = std::stod(value);
    } else if (key == "abs_tol") {
      config.flow.abs_tol = std::stod(value);
    } else if (key == "max_steps") {
      config.flow.max_steps = std::stol(value);
    } else if (key == "snapshot_stride") {
      config.flow.snapshot_stride = std::stoi(value);
    } else if (key == "polish") {
      config.flow.newton_polish = value == "on" || value == "true";
    } else if (key == "workers") {
      config.workers = std::stoi(value);
    } else if (key == "out") {
      config.output_path = value;
    } else {
      throw std::invalid_argument("unknown config key: " + key);
    }
  }
  return config;
}

SweepConfig load_sweep_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  return parse_sweep_config(in);
}

void validate(const SweepConfig& config) {
  if (config.n_values.empty() || config.k_values.empty())
    throw std::invalid_argument("n and k value lists must be non-empty");
  if (config.seeds.empty())
    throw std::invalid_argument("seed list must be non-empty");
  if (config.workers < 1)
    throw std::invalid_argument("workers must be >= 1");
  if (config.output_path.empty())
    throw std::invalid_argument("output path must be set");
  for (int k : config.k_values) {
    const int d = config.dim_for(k);
    if (d < k)
      throw std::invalid_argument("d rule violates d >= k for k = " +
                                  std::to_string(k));
  }
  if (!(config.flow.grad_tol > 0.0) || !(config.flow.rel_tol > 0.0) ||
      !(config.flow.abs_tol > 0.0))
    throw std::invalid_argument("tolerances must be positive");
  if (config.flow.max_steps < 1)
    throw std::invalid_argument("max_steps must be >= 1");
}

std::vector<PhaseCell> run_phase_sweep(const SweepConfig& config) {
  validate(config);
  struct Task {
    int n, k, d;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (int n : config.n_values)
    for (int k : config.k_values)
      for (std::uint64_t seed : config.seeds)
        tasks.push_back({n, k, config.dim_for(k), seed});

  const KernelSpec spec =
      parse_kernel(config.activation, config.kernel_text);
  std::vector<PhaseCell> cells(tasks.size());
  std::vector<char> done(tasks.size(), 0);
  std::mutex mutex;
  std::condition_variable cv;
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (;;) {
      const std::size_t idx = next.fetch_add(1);
      if (idx >= tasks.size()) return;
      const Task& task = tasks[idx];
      PhaseCell cell;
      cell.n = task.n;
      cell.k = task.k;
      cell.d = task.d;
      cell.seed = task.seed;
      try {
        const TeacherNet teacher = build_unit_orthonormal_teacher(
            task.k, task.d, TeacherFrame::CanonicalBasis, 0,
            config.activation);
        FlowConfig flow = config.flow;
        flow.seed = task.seed;
        const StudentNet s0 =
            init_student(task.n, task.d, flow, config.activation);
        const FlowRecord rec = integrate(s0, teacher, spec, flow);

        cell.final_loss = rec.final_loss;
        cell.theory_loss =
            (config.activation.tag == Activation::Erf && task.n < task.k)
                ? conjectured_loss(task.n, task.k)
                : std::numeric_limits<double>::quiet_NaN();
        cell.gap = cell.final_loss - cell.theory_loss;
        cell.converged = rec.converged;
        cell.steps = rec.steps;
        cell.grad_norm = rec.final_grad_norm;
        cell.degenerate = rec.degenerate;
        cell.polished = rec.polished;
        cell.label = rec.converged ? classify(rec, teacher, flow)
                                   : FlowLabel::Other;
      } catch (const std::exception&) {
        cell.converged = false;
        cell.degenerate = true;
        cell.label = FlowLabel::Other;
        cell.final_loss = std::numeric_limits<double>::quiet_NaN();
        cell.theory_loss = std::numeric_limits<double>::quiet_NaN();
        cell.gap = std::numeric_limits<double>::quiet_NaN();
        cell.grad_norm = std::numeric_limits<double>::quiet_NaN();
      }
      {
        std::lock_guard<std::mutex> lock(mutex);
        cells[idx] = cell;
        done[idx] = 1;
      }
      cv.notify_all();
    }
  };

  const int thread_count =
      std::min<std::size_t>(config.workers, tasks.size());
  std::vector<std::thread> pool;
  for (int i = 0; i < thread_count; ++i) pool.emplace_back(worker);

  // single appender drains results in deterministic task order, so partial
  // output survives an abort and reruns are byte-identical
  const std::string jsonl_path = config.output_path + ".jsonl";
  std::ofstream out(jsonl_path, std::ios::trunc);
  if (!out) {
    for (auto& th : pool) th.join();
    throw std::runtime_error("cannot open output file: " + jsonl_path);
  }
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    {
      std::unique_lock<std::mutex> lock(mutex);
      cv.wait(lock, [&] { return done[i] == 1; });
    }
    out << cell_to_json(cells[i], config.activation).dump() << "\n";
    out.flush();
  }
  for (auto& th : pool) th.join();

  // per-(n, k) summary
  std::ofstream summary(config.output_path + "_summary.csv", std::ios::trunc);
  summary << "n,k,d,seeds,frac_optca,frac_pnc,frac_other,frac_converged,"
             "mean_gap,mean_steps,workers\n";
  for (int n : config.n_values) {
    for (int k : config.k_values) {
      int count = 0, optca = 0, pnc = 0, other = 0, converged = 0;
      double gap_sum = 0.0, step_sum = 0.0;
      int gap_count = 0;
      for (const PhaseCell& cell : cells) {
        if (cell.n != n || cell.k != k) continue;
        ++count;
        converged += cell.converged;
        step_sum += static_cast<double>(cell.steps);
        if (cell.label == FlowLabel::OptCA) ++optca;
        else if (cell.label == FlowLabel::PerturbedNCopy) ++pnc;
        else ++other;
        if (std::isfinite(cell.gap)) {
          gap_sum += cell.gap;
          ++gap_count;
        }
      }
      summary << n << ',' << k << ',' << config.dim_for(k) << ',' << count
              << ',' << static_cast<double>(optca) / count << ','
              << static_cast<double>(pnc) / count << ','
              << static_cast<double>(other) / count << ','
              << static_cast<double>(converged) / count << ','
              << (gap_count > 0 ? gap_sum / gap_count
                                : std::numeric_limits<double>::quiet_NaN())
              << ',' << step_sum / count << ',' << thread_count << "\n";
    }
  }
  return cells;
}

std::vector<PhaseCell> read_phase_cells(const std::string& jsonl_path) {
  std::ifstream in(jsonl_path);
  if (!in) throw std::runtime_error("cannot open records: " + jsonl_path);
  std::vector<PhaseCell> cells;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const json rec = json::parse(line);
    PhaseCell cell;
    cell.n = rec.at("n").get<int>();
    cell.k = rec.at("k").get<int>();
    cell.d = rec.at("d").get<int>();
    cell.seed = rec.at("seed").get<std::uint64_t>();
    cell.final_loss = rec.at("final_loss").get<double>();
    cell.theory_loss = rec.contains("theory_loss")
                           ? rec.at("theory_loss").get<double>()
                           : std::numeric_limits<double>::quiet_NaN();
    cell.gap = rec.contains("gap")
                   ? rec.at("gap").get<double>()
                   : std::numeric_limits<double>::quiet_NaN();
    cell.label = parse_flow_label(rec.at("label").get<std::string>());
    cell.steps = rec.at("steps").get<long>();
    cell.converged = rec.at("converged").get<bool>();
    cell.grad_norm = rec.at("grad_norm").get<double>();
    cell.degenerate = rec.at("degenerate").get<bool>();
    cell.polished = rec.at("polished").get<bool>();
    cells.push_back(cell);
  }
  return cells;
}

std::vector<OneNeuronRow> run_one_neuron_table(
    const std::vector<ActivationKind>& kinds, int k_min, int k_max,
    const std::string& kernel_text) {
  std::vector<OneNeuronRow> rows;
  for (const ActivationKind& kind : kinds) {
    for (int k = k_min; k <= k_max; ++k) {
      OneNeuronRow row;
      row.kind = kind;
      row.k = k;
      row.u = 1.0 / std::sqrt(static_cast<double>(k));
      try {
        if (kind.tag == Activation::Erf) {
          row.r = 1.0 / std::sqrt(2.0 * k - 1.0);
          row.a = static_cast<double>(k);
          row.loss = erf_one_neuron_loss(k);
        } else if (kind.tag == Activation::Relu) {
          const double magnitude = relu_one_neuron_magnitude(k);
          row.r = std::sqrt(magnitude);  // balanced representative
          row.a = std::sqrt(magnitude);
          row.loss = relu_one_neuron_loss(k);
        } else {
          const KernelSpec spec = parse_kernel(kind, kernel_text);
          const FixedPointRoot root = solve_fixed_point_norm(spec, row.u);
          row.r = root.r;
          row.a = root.a_over_k * k;
          const TeacherNet teacher = build_unit_orthonormal_teacher(
              k, k + 1, TeacherFrame::CanonicalBasis, 0, kind);
          row.loss =
              loss(one_neuron_fixed_point(kind, k, teacher, spec).student,
                   teacher, spec);
          if (root.brackets_found > 1)
            row.note = "multiple brackets (" +
                       std::to_string(root.brackets_found) + ")";
        }
        row.norm_bounded = row.r <= 1.0 / std::sqrt(double(k)) + 1e-12;
        row.weight_bounded = row.a >= static_cast<double>(k) - 1e-9;
      } catch (const NoBracket& err) {
        row.note = err.what();
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::vector<HessianCell> run_hessian_scan(const std::vector<int>& n_values,
                                          bool use_ratio, int value) {
  std::vector<HessianCell> cells;
  for (int n : n_values) {
    HessianCell cell;
    cell.n = n;
    cell.k = use_ratio ? n * value : n + value;
    const int d = cell.k + 1;
    const TeacherNet teacher = build_unit_orthonormal_teacher(
        cell.k, d, TeacherFrame::CanonicalBasis);
    const CriticalPoint point = optimal_ca(n, cell.k, teacher);
    const Eigen::MatrixXd hess = hessian(
        point.student, teacher, KernelSpec::analytic(ActivationKind::erf()));
    cell.min_eig = min_eigenvalue(hess);
    cells.push_back(cell);
  }
  return cells;
}

void emit_phase(const std::vector<PhaseCell>& cells, std::ostream& out) {
  out << "# columns: n k d seed final_loss theory_loss gap label steps "
         "converged\n";
  for (const PhaseCell& cell : cells) {
    out << cell.n << ' ' << cell.k << ' ' << cell.d << ' ' << cell.seed << ' '
        << cell.final_loss << ' ' << cell.theory_loss << ' ' << cell.gap
        << ' ' << to_string(cell.label) << ' ' << cell.steps << ' '
        << (cell.converged ? 1 : 0) << "\n";
  }
}

void emit_trajectory(const FlowRecord& rec, std::ostream& out) {
  const int n = rec.final_student.width();
  if (rec.snapshots.empty())
    throw std::invalid_argument("record has no snapshots; rerun the flow "
                                "with a positive snapshot stride");
  const int k = static_cast<int>(rec.snapshots.front().params.U.cols());
  out << "# columns: time loss";
  for (int i = 0; i < n; ++i) out << " r_" << i;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j) out << " u_" << i << '_' << j;
  out << "\n";
  for (const Snapshot& snap : rec.snapshots) {
    out << snap.time << ' ' << snap.loss;
    for (int i = 0; i < n; ++i) out << ' ' << snap.params.r(i);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < k; ++j) out << ' ' << snap.params.U(i, j);
    out << "\n";
  }
}

void emit_fgrid(const Eigen::VectorXd& r_grid, const Eigen::VectorXd& u_grid,
                const Eigen::MatrixXd& values, std::ostream& out) {
  out << "# rows: r values, columns: u values; entries f(r, u)\n";
  out << "# r:";
  for (Eigen::Index i = 0; i < r_grid.size(); ++i) out << ' ' << r_grid(i);
  out << "\n# u:";
  for (Eigen::Index j = 0; j < u_grid.size(); ++j) out << ' ' << u_grid(j);
  out << "\n";
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j)
      out << (j > 0 ? " " : "") << values(i, j);
    out << "\n";
  }
}

void emit_one_neuron(const std::vector<OneNeuronRow>& rows,
                     std::ostream& out) {
  out << "# columns: activation k r a u loss norm_bounded weight_bounded "
         "note\n";
  for (const OneNeuronRow& row : rows) {
    out << to_string(row.kind) << ' ' << row.k << ' ' << row.r << ' '
        << row.a << ' ' << row.u << ' ' << row.loss << ' '
        << (row.norm_bounded ? 1 : 0) << ' ' << (row.weight_bounded ? 1 : 0)
        << ' ' << (row.note.empty() ? "-" : "\"" + row.note + "\"") << "\n";
  }
}

}  // namespace tslab
