// se3reg command-line front end: pairwise and multiview registration,
// ICP-based alignment, and the synthetic benchmark harness.

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <numbers>
#include <string>
#include <vector>

#include "se3reg/correspondence.hpp"
#include "se3reg/errors.hpp"
#include "se3reg/io.hpp"
#include "se3reg/multiview.hpp"
#include "se3reg/pairwise.hpp"
#include "se3reg/rng.hpp"
#include "se3reg/synthbench.hpp"

namespace fs = std::filesystem;
using namespace se3reg;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;

// JSON config files mirror a subcommand's long flag names ("k-irls",
// "epsilon", ...). Config values are injected as synthetic argv entries for
// any flag the user did not pass, so explicit flags always win; unknown keys
// are rejected.
std::vector<std::string> merge_config_args(const CLI::App& app,
                                           std::vector<std::string> args) {
  if (args.empty()) return args;
  const CLI::App* sub = nullptr;
  for (const auto* candidate : app.get_subcommands([](const CLI::App*) {
         return true;
       })) {
    if (candidate->get_name() == args.front()) {
      sub = candidate;
      break;
    }
  }
  if (sub == nullptr) return args;

  std::string config_path;
  for (std::size_t k = 1; k < args.size(); ++k) {
    if (args[k] == "--config" && k + 1 < args.size()) {
      config_path = args[k + 1];
      break;
    }
    if (args[k].rfind("--config=", 0) == 0) {
      config_path = args[k].substr(9);
      break;
    }
  }
  if (config_path.empty()) return args;

  std::ifstream in(config_path);
  if (!in) throw Error("cannot open config '" + config_path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(config_path + ": not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw Error(config_path + ": config must be an object");

  for (const auto& [key, value] : j.items()) {
    const std::string flag = "--" + key;
    const CLI::Option* opt =
        const_cast<CLI::App*>(sub)->get_option_no_throw(flag);
    if (opt == nullptr) {
      throw Error(config_path + ": unknown config key '" + key + "'");
    }
    bool user_passed = false;
    for (std::size_t k = 1; k < args.size(); ++k) {
      if (args[k] == flag || args[k].rfind(flag + "=", 0) == 0) {
        user_passed = true;
        break;
      }
    }
    if (user_passed) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back(flag);
    } else if (value.is_string()) {
      args.push_back(flag);
      args.push_back(value.get<std::string>());
    } else {
      args.push_back(flag);
      args.push_back(value.dump());
    }
  }
  return args;
}

std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

struct SolverFlags {
  std::string loss = "l12";
  int k_irls = 2;
  double epsilon = 1e-5;
  int max_outer = 100;
  bool extrinsic = false;
  double mu0 = 0.0;      // 0: (diameter)^2
  double divisor = 2.0;
  int period = 4;
  double mu_floor = 0.0;  // 0: (1e-4 * diameter)^2
  bool no_anneal = false;
};

void add_solver_flags(CLI::App* cmd, SolverFlags& f, int default_k_irls,
                      double default_epsilon) {
  f.k_irls = default_k_irls;
  f.epsilon = default_epsilon;
  cmd->add_option("--loss", f.loss, "Robust loss: l12, l1 or gm")
      ->check(CLI::IsMember({"l12", "l1", "gm"}))
      ->capture_default_str();
  cmd->add_option("--k-irls", f.k_irls, "Inner IRLS rounds per iteration")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--epsilon", f.epsilon, "Termination threshold on |v|")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--max-outer", f.max_outer, "Outer iteration cap")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_flag("--extrinsic", f.extrinsic,
                "Extrinsic [w t] updates (line-process emulation)");
  cmd->add_option("--mu0", f.mu0,
                  "Initial Geman-McClure scale (default: diameter^2)");
  cmd->add_option("--divisor", f.divisor, "Annealing divisor")
      ->capture_default_str();
  cmd->add_option("--period", f.period,
                  "Outer iterations between annealing steps")
      ->capture_default_str();
  cmd->add_option("--mu-floor", f.mu_floor,
                  "Annealing floor (default: (1e-4*diameter)^2)");
  cmd->add_flag("--no-anneal", f.no_anneal,
                "Keep the Geman-McClure scale fixed at mu0");
}

SolverConfig make_solver(const SolverFlags& f, double diameter) {
  SolverConfig config;
  const double d = diameter > 0.0 ? diameter : 1.0;
  const double mu0 = f.mu0 > 0.0 ? f.mu0 : d * d;
  config.loss = loss_from_name(f.loss, mu0);
  if (config.loss.kind == Loss::GemanMcClure && !f.no_anneal) {
    const double floor =
        f.mu_floor > 0.0 ? f.mu_floor : (1e-4 * d) * (1e-4 * d);
    config.anneal = AnnealSchedule{mu0, f.divisor, f.period, floor};
  }
  config.k_irls = f.k_irls;
  config.epsilon = f.epsilon;
  config.max_outer = f.max_outer;
  config.parametrization =
      f.extrinsic ? Parametrization::Extrinsic : Parametrization::Intrinsic;
  config.residual_floor = 1e-12 * d;
  return config;
}

double cloud_diameter(const PointCloud& cloud) {
  if (cloud.size() < 2) return 0.0;
  return bench::surface_diameter(cloud);
}

// Writes to the path, or to stdout when the path is empty or "-".
void emit(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::fputs(content.c_str(), stdout);
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << content;
  if (!out) throw Error("write failed for '" + path + "'");
}

int resolve_threads(int flag_threads, bool flag_given) {
  if (flag_given) return std::max(1, flag_threads);
  if (const char* env = std::getenv("SE3REG_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return 1;
}

// ---------------------------------------------------------------------------

int run_register_pair(const std::string& src_path, const std::string& dst_path,
                      const std::string& corrs_path, const SolverFlags& flags) {
  const PointCloud src = io::read_ply(src_path);
  const PointCloud dst = io::read_ply(dst_path);
  const CorrespondenceSet corrs =
      io::read_correspondences(corrs_path, src, dst);
  const double diameter =
      std::max(cloud_diameter(src), cloud_diameter(dst));
  const SolverConfig config = make_solver(flags, diameter);

  const RegistrationResult result = estimate_pairwise(corrs, config);

  const Mat4 m = result.motion.matrix();
  std::string out;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      if (c) out += ' ';
      out += fmt17(m(r, c));
    }
    out += '\n';
  }
  nlohmann::json report;
  report["converged"] = result.converged;
  report["k_outer"] = result.trace.size();
  report["pairs"] = corrs.size();
  if (!result.trace.empty()) {
    report["cost"] = result.trace.back().cost;
    report["update_norm"] = result.trace.back().update_norm;
  }
  out += report.dump();
  out += '\n';
  std::fputs(out.c_str(), stdout);
  return result.converged ? kExitOk : kExitNumeric;
}

int run_register_multiview(const std::string& graph_path,
                           const SolverFlags& flags, const std::string& out,
                           bool full) {
  const ViewGraph graph = io::read_viewgraph(graph_path);
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const auto& e : graph.edges) {
    for (const auto& c : e.corrs.pairs) {
      lo = lo.cwiseMin(c.p).cwiseMin(c.q);
      hi = hi.cwiseMax(c.p).cwiseMax(c.q);
    }
  }
  const double diameter = graph.edges.empty() ? 0.0 : (hi - lo).norm();
  const SolverConfig config = make_solver(flags, diameter);

  const MultiviewResult result = estimate_multiview(graph, config);
  emit(out, io::format_trajectory(result.graph.motions, full));
  return result.converged ? kExitOk : kExitNumeric;
}

int run_icp_multiview(const std::string& dir, const std::string& edges_spec,
                      int rounds, double prune, int max_icp_rounds,
                      const SolverFlags& flags, const std::string& out,
                      bool full) {
  std::vector<std::string> ply_files;
  if (!fs::is_directory(dir)) {
    throw Error("'" + dir + "' is not a directory");
  }
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".ply") {
      ply_files.push_back(entry.path().string());
    }
  }
  std::sort(ply_files.begin(), ply_files.end());
  if (ply_files.empty()) throw Error("no .ply files in '" + dir + "'");

  std::vector<PointCloud> scans;
  double diameter = 0.0;
  for (const auto& path : ply_files) {
    scans.push_back(io::read_ply(path));
    diameter = std::max(diameter, cloud_diameter(scans.back()));
  }
  const int n = static_cast<int>(scans.size());

  std::vector<std::pair<int, int>> edges;
  if (edges_spec == "all") {
    if (n > 12) {
      throw Error(
          "--edges all is limited to 12 scans; pass an explicit edge file");
    }
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) edges.push_back({i, j});
    }
  } else {
    std::ifstream in(edges_spec);
    if (!in) throw Error("cannot open '" + edges_spec + "'");
    int i = 0;
    int j = 0;
    while (in >> i >> j) {
      if (i < 0 || j < 0 || i >= n || j >= n || i >= j) {
        throw IndexOutOfRange(edges_spec + ": edge (" + std::to_string(i) +
                              ", " + std::to_string(j) +
                              ") violates 0 <= i < j < n");
      }
      edges.push_back({i, j});
    }
  }

  IcpConfig cfg;
  cfg.solver = make_solver(flags, diameter);
  cfg.outer_pipeline_rounds = rounds;
  cfg.prune_multiplier = prune;
  cfg.max_icp_rounds = max_icp_rounds;

  const auto motions = multiview_icp(scans, edges, cfg);
  emit(out, io::format_trajectory(motions, full));
  return kExitOk;
}

int run_bench_synthetic(const std::string& model, std::size_t points,
                        double angle_deg, bool exact_angle, double sigma,
                        double outliers, int trials, std::uint64_t seed,
                        int threads, bool no_timing, const SolverFlags& flags,
                        const std::string& csv_path,
                        const std::string& summary_path) {
  bench::BenchOptions opts;
  opts.model = bench::model_from_name(model);
  opts.points = points;
  opts.pair.angle_max = angle_deg * std::numbers::pi / 180.0;
  opts.pair.exact_angle = exact_angle;
  opts.pair.sigma_rel = sigma;
  opts.pair.outlier_fraction = outliers;
  opts.trials = trials;
  opts.seed = seed;
  opts.solver = make_solver(flags, 0.0);  // floor rescaled per trial
  opts.threads = threads;
  opts.timing = !no_timing;

  const auto rows = bench::run_bench(opts);
  std::string csv = bench::csv_header();
  csv += '\n';
  for (const auto& row : rows) {
    csv += bench::csv_row(row);
    csv += '\n';
  }
  emit(csv_path, csv);
  emit(summary_path, bench::summarize(rows).dump(2) + "\n");
  return kExitOk;
}

int run_convergence_compare(const std::string& model, std::size_t points,
                            double angle_deg, double sigma, double outliers,
                            std::uint64_t seed, const std::string& eps_spec,
                            int max_outer, const std::string& out_path,
                            const std::string& trace_path) {
  std::vector<double> eps_list;
  std::stringstream ss(eps_spec);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    try {
      eps_list.push_back(std::stod(tok));
    } catch (...) {
      throw Error("bad epsilon '" + tok + "' in --eps-list");
    }
  }
  if (eps_list.empty()) throw Error("--eps-list is empty");

  const auto cloud =
      bench::make_model(bench::model_from_name(model), points, Rng::mix(seed, 0));
  bench::PairOptions pair_opts;
  pair_opts.angle_max = angle_deg * std::numbers::pi / 180.0;
  pair_opts.exact_angle = true;
  pair_opts.sigma_rel = sigma;
  pair_opts.outlier_fraction = outliers;
  const auto pair = bench::generate_pair(cloud, pair_opts, Rng::mix(seed, 1));

  const auto report = bench::convergence_compare(pair, eps_list, max_outer);

  std::string csv = "method,k_irls,eps,k_outer\n";
  for (const auto& run : report.runs) {
    for (const double eps : eps_list) {
      csv += run.method + ',' + std::to_string(run.k_irls) + ',' +
             fmt17(eps) + ',' + std::to_string(report.k_outer(run, eps)) +
             '\n';
    }
  }
  std::string trace = "method,k_irls,iter,cost,update_norm\n";
  for (const auto& run : report.runs) {
    for (std::size_t k = 0; k < run.costs.size(); ++k) {
      trace += run.method + ',' + std::to_string(run.k_irls) + ',' +
               std::to_string(k + 1) + ',' + fmt17(run.costs[k]) + ',' +
               fmt17(run.update_norms[k]) + '\n';
    }
  }
  emit(out_path, csv);
  if (trace_path.empty()) {
    std::fputs("\n", stdout);
    std::fputs(trace.c_str(), stdout);
  } else {
    emit(trace_path, trace);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust SE(3) registration of 3D point clouds"};
  app.require_subcommand(1);
  std::string config_path;  // consumed by merge_config_args

  // register-pair
  auto* pair_cmd = app.add_subcommand(
      "register-pair", "Robust pairwise registration from correspondences");
  std::string src_path;
  std::string dst_path;
  std::string corrs_path;
  SolverFlags pair_flags;
  pair_cmd->add_option("src", src_path, "Source point cloud (.ply)")
      ->required();
  pair_cmd->add_option("dst", dst_path, "Target point cloud (.ply)")
      ->required();
  pair_cmd->add_option("--corrs", corrs_path,
                       "Correspondence file ('i j' lines or JSON pairs)")
      ->required();
  add_solver_flags(pair_cmd, pair_flags, 2, 1e-5);
  pair_cmd->add_option("--config", config_path,
                       "JSON config mirroring the long flags (flags win)");

  // register-multiview
  auto* mv_cmd = app.add_subcommand(
      "register-multiview", "Joint robust registration over a view graph");
  std::string graph_path;
  std::string mv_out;
  bool mv_full = false;
  SolverFlags mv_flags;
  mv_cmd->add_option("viewgraph", graph_path, "View graph JSON file")
      ->required();
  mv_cmd->add_option("--out", mv_out, "Trajectory output path (default stdout)");
  mv_cmd->add_flag("--full", mv_full, "Write 16 values per motion instead of 12");
  add_solver_flags(mv_cmd, mv_flags, 3, 1e-7);
  mv_cmd->add_option("--config", config_path,
                     "JSON config mirroring the long flags (flags win)");

  // icp-multiview
  auto* icp_cmd = app.add_subcommand(
      "icp-multiview", "Robust multiview ICP over a directory of scans");
  std::string icp_dir;
  std::string edges_spec = "all";
  int icp_rounds = 3;
  double prune = 2.5;
  int max_icp_rounds = 50;
  std::string icp_out;
  bool icp_full = false;
  SolverFlags icp_flags;
  icp_cmd->add_option("dir", icp_dir, "Directory of .ply scans")->required();
  icp_cmd->add_option("--edges", edges_spec,
                      "Edge file ('i j' lines) or 'all' (N <= 12)")
      ->capture_default_str();
  icp_cmd->add_option("--rounds", icp_rounds, "Pipeline rounds")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  icp_cmd->add_option("--prune", prune,
                      "Correspondence pruning multiplier (x median)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  icp_cmd->add_option("--max-icp-rounds", max_icp_rounds,
                      "ICP round cap per edge")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  icp_cmd->add_option("--out", icp_out, "Trajectory output path (default stdout)");
  icp_cmd->add_flag("--full", icp_full,
                    "Write 16 values per motion instead of 12");
  add_solver_flags(icp_cmd, icp_flags, 2, 1e-5);
  icp_cmd->add_option("--config", config_path,
                      "JSON config mirroring the long flags (flags win)");

  // bench-synthetic
  auto* bench_cmd = app.add_subcommand(
      "bench-synthetic", "Synthetic pairwise registration benchmark");
  std::string model = "sphere";
  std::size_t points = 1000;
  double angle_deg = 60.0;
  bool exact_angle = false;
  double sigma = 0.0025;
  double outliers = 0.4;
  int trials = 100;
  std::uint64_t seed = 0;
  int threads = 1;
  bool no_timing = false;
  std::string csv_path;
  std::string summary_path;
  SolverFlags bench_flags;
  bench_cmd->add_option("--model", model, "sphere, cube or blobs")
      ->check(CLI::IsMember({"sphere", "cube", "blobs"}))
      ->capture_default_str();
  bench_cmd->add_option("--points", points, "Model size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  bench_cmd->add_option("--angle", angle_deg, "Max rotation angle (degrees)")
      ->capture_default_str();
  bench_cmd->add_flag("--exact-angle", exact_angle,
                      "Draw exactly --angle instead of uniformly up to it");
  bench_cmd->add_option("--sigma", sigma, "Noise std (diameter units)")
      ->capture_default_str();
  bench_cmd->add_option("--outliers", outliers, "Outlier fraction")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  bench_cmd->add_option("--trials", trials, "Number of trials")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  bench_cmd->add_option("--seed", seed, "Master seed")->capture_default_str();
  auto* threads_opt =
      bench_cmd->add_option("--threads", threads,
                            "Worker threads (default: SE3REG_THREADS or 1)");
  bench_cmd->add_flag("--no-timing", no_timing,
                      "Write 0 in the ms column (byte-stable output)");
  bench_cmd->add_option("--csv", csv_path, "CSV output path (default stdout)");
  bench_cmd->add_option("--summary", summary_path,
                        "Summary JSON path (default stdout)");
  add_solver_flags(bench_cmd, bench_flags, 2, 1e-5);
  bench_cmd->add_option("--config", config_path,
                        "JSON config mirroring the long flags (flags win)");

  // convergence-compare
  auto* conv_cmd = app.add_subcommand(
      "convergence-compare",
      "K_outer of extrinsic and intrinsic IRLS variants on one pair");
  std::string conv_model = "sphere";
  std::size_t conv_points = 1000;
  double conv_angle = 30.0;
  double conv_sigma = 0.0025;
  double conv_outliers = 0.3;
  std::uint64_t conv_seed = 0;
  std::string eps_spec = "1e-1,1e-2,1e-3,1e-4,1e-5,1e-6,1e-7";
  int conv_max_outer = 100;
  std::string conv_out;
  std::string conv_trace;
  conv_cmd->add_option("--model", conv_model, "sphere, cube or blobs")
      ->check(CLI::IsMember({"sphere", "cube", "blobs"}))
      ->capture_default_str();
  conv_cmd->add_option("--points", conv_points, "Model size")
      ->capture_default_str();
  conv_cmd->add_option("--angle", conv_angle, "Rotation angle (degrees, exact)")
      ->capture_default_str();
  conv_cmd->add_option("--sigma", conv_sigma, "Noise std (diameter units)")
      ->capture_default_str();
  conv_cmd->add_option("--outliers", conv_outliers, "Outlier fraction")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  conv_cmd->add_option("--seed", conv_seed, "Seed")->capture_default_str();
  conv_cmd->add_option("--eps-list", eps_spec,
                       "Comma-separated convergence thresholds")
      ->capture_default_str();
  conv_cmd->add_option("--max-outer", conv_max_outer, "Outer iteration cap")
      ->capture_default_str();
  conv_cmd->add_option("--out", conv_out,
                       "K_outer CSV output path (default stdout)");
  conv_cmd->add_option("--trace", conv_trace,
                       "Cost trace CSV path (default: appended to stdout)");
  conv_cmd->add_option("--config", config_path,
                       "JSON config mirroring the long flags (flags win)");

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    args = merge_config_args(app, args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  try {
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    if (pair_cmd->parsed()) {
      return run_register_pair(src_path, dst_path, corrs_path, pair_flags);
    }
    if (mv_cmd->parsed()) {
      return run_register_multiview(graph_path, mv_flags, mv_out, mv_full);
    }
    if (icp_cmd->parsed()) {
      return run_icp_multiview(icp_dir, edges_spec, icp_rounds, prune,
                               max_icp_rounds, icp_flags, icp_out, icp_full);
    }
    if (bench_cmd->parsed()) {
      return run_bench_synthetic(model, points, angle_deg, exact_angle, sigma,
                                 outliers, trials, seed,
                                 resolve_threads(threads, threads_opt->count() > 0),
                                 no_timing, bench_flags, csv_path,
                                 summary_path);
    }
    if (conv_cmd->parsed()) {
      return run_convergence_compare(conv_model, conv_points, conv_angle,
                                     conv_sigma, conv_outliers, conv_seed,
                                     eps_spec, conv_max_outer, conv_out,
                                     conv_trace);
    }
  } catch (const DegenerateGeometry& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DisconnectedGraph& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const EmptyAfterPrune& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}
