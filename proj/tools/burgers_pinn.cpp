// Experiment runner for the Burgers PINN solver.
//
// Subcommands:
//   reproduce        train the full pipeline and write run artifacts
//   bound-study      snapshot errors at decreasing loss checkpoints
//   stability-study  train paired networks under data perturbations
//   verify-forcing   check the manufactured-forcing property
//   eval             evaluate an existing checkpoint
//
// Exit code 0 on success; on error the final output line is a
// machine-parsable tag "error: <message>".

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bpinn/study.hpp"

namespace {

using namespace bpinn;

struct CommonFlags {
  std::string config_path;
  std::string problem;
  std::string out_dir;
  std::int64_t seed = -1;
};

void add_common_flags(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "Config file (flat key = value)");
  cmd->add_option("--problem", f.problem, "Problem name: stationary | nonstationary");
  cmd->add_option("--seed", f.seed, "Random seed (overrides config)");
  cmd->add_option("--out-dir", f.out_dir, "Output directory (overrides config)");
}

RunConfig resolve_config(const CommonFlags& f) {
  RunConfig cfg;
  if (!f.config_path.empty()) cfg = parse_config(read_text_file(f.config_path));
  if (!f.problem.empty()) cfg.problem = f.problem;
  if (f.seed >= 0) cfg.seed = static_cast<std::uint64_t>(f.seed);
  if (!f.out_dir.empty()) cfg.out_dir = f.out_dir;
  if (cfg.problem == "stationary") cfg.n_initial = 0;
  return cfg;
}

int cmd_reproduce(const CommonFlags& flags) {
  RunConfig cfg = resolve_config(flags);
  auto res = run_reproduce(cfg);
  std::cout << "run_dir: " << res.run_dir << "\n";
  if (!res.report.slices.empty()) {
    for (const auto& row : res.report.slices)
      std::printf("t=%g  h1_error=%.6e  residual=%.6e\n", row.t, row.h1_error,
                  row.residual_l2);
  }
  std::printf("h1_error=%.6e  residual=%.6e\n", res.report.h1_error,
              res.report.residual_l2);
  if (cfg.rar_enabled)
    std::printf("rar: rounds_used=%d final_mean_residual=%.6e\n", res.rar.rounds_used,
                res.rar.final_mean_residual);
  return 0;
}

int cmd_bound_study(const CommonFlags& flags, std::vector<double> checkpoints) {
  RunConfig cfg = resolve_config(flags);
  if (checkpoints.empty()) checkpoints = {1e1, 1e0, 1e-1, 1e-2, 1e-3, 1e-4};
  auto res = run_bound_study(cfg, checkpoints);
  namespace fs = std::filesystem;
  const std::string dir = cfg.out_dir + "/" + cfg.problem + "-" + std::to_string(cfg.seed);
  fs::create_directories(dir);
  write_text_file(dir + "/bound_study.csv", bound_study_csv(res));
  for (const auto& row : res.rows)
    std::printf("target=%.3e  achieved=%.3e  l2=%.6e  h1=%.6e  %s\n", row.target_loss,
                row.achieved_loss, row.l2_error, row.h1_error,
                row.reached ? "reached" : "unreached");
  std::printf("fitted log-log slope (h1 vs sqrt(loss)): %.4f\n", res.fitted_slope);
  return 0;
}

int cmd_stability_study(const CommonFlags& flags, std::vector<double> deltas) {
  RunConfig cfg = resolve_config(flags);
  if (deltas.empty()) deltas = {1e-2, 3e-2, 1e-1};
  Perturbation pert;
  pert.forcing_offset = [](const VectorXd& x, double) {
    return std::sin(2.0 * M_PI * x(0));
  };
  auto res = run_stability_study(cfg, deltas, pert);
  namespace fs = std::filesystem;
  const std::string dir = cfg.out_dir + "/" + cfg.problem + "-" + std::to_string(cfg.seed);
  fs::create_directories(dir);
  write_text_file(dir + "/stability_study.csv", stability_csv(res));
  for (const auto& row : res.rows)
    std::printf("delta=%.3e  sup_l2=%.6e  int_h1=%.6e\n", row.delta,
                row.sup_l2_distance, row.integrated_h1_distance);
  std::printf("fitted constant C = sup_l2/delta at largest delta: %.6e\n",
              res.fitted_constant);
  return 0;
}

int cmd_verify_forcing(const std::string& problem) {
  auto res = run_verify_forcing(problem);
  std::printf("max |residual of exact solution| over 10000 points: %.3e\n",
              res.max_abs_residual);
  std::printf("forcing comparison (manufactured vs closed-form variant):\n");
  for (const auto& s : res.samples) {
    std::ostringstream pt;
    pt << '(';
    for (int i = 0; i < s.point.size(); ++i) pt << (i ? ", " : "") << s.point(i);
    pt << ')';
    std::printf("  x=%s t=%.4f  manufactured=%+.6e  variant=%+.6e\n",
                pt.str().c_str(), s.t, s.manufactured, s.reference);
  }
  return 0;
}

int cmd_eval(const CommonFlags& flags, const std::string& ckpt_path) {
  RunConfig cfg = resolve_config(flags);
  MlpParams params = load_checkpoint(read_text_file(ckpt_path));
  ProblemSpec problem = make_problem(cfg);
  QuadratureGrid grid = make_grid(problem.lo, problem.hi, cfg.grid_n_per_axis);
  const std::vector<double> times =
      problem.time_dependent
          ? std::vector<double>{0.0, 0.5 * problem.final_time, problem.final_time}
          : std::vector<double>{};
  ErrorReport rep = error_report(params, problem, grid, times);
  for (const auto& row : rep.slices)
    std::printf("t=%g  h1_error=%.6e  residual=%.6e\n", row.t, row.h1_error,
                row.residual_l2);
  std::printf("l2_error=%.6e  h1_seminorm=%.6e  h1_error=%.6e  residual=%.6e\n",
              rep.l2_error, rep.h1_seminorm_error, rep.h1_error, rep.residual_l2);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"PINN solver for the viscous Burgers equation"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::vector<double> checkpoints, deltas;
  std::string verify_problem = "stationary";
  std::string ckpt_path;

  auto* reproduce = app.add_subcommand("reproduce", "Train and evaluate a benchmark");
  add_common_flags(reproduce, flags);

  auto* bound = app.add_subcommand("bound-study", "Error vs training-loss checkpoints");
  add_common_flags(bound, flags);
  bound->add_option("--checkpoints", checkpoints, "Decreasing loss checkpoints");

  auto* stability = app.add_subcommand("stability-study", "Perturbed-data distance study");
  add_common_flags(stability, flags);
  stability->add_option("--deltas", deltas, "Perturbation magnitudes");

  auto* verify = app.add_subcommand("verify-forcing", "Manufactured-forcing check");
  verify->add_option("--problem", verify_problem, "stationary | nonstationary");

  auto* eval = app.add_subcommand("eval", "Evaluate an existing checkpoint");
  add_common_flags(eval, flags);
  eval->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (reproduce->parsed()) return cmd_reproduce(flags);
    if (bound->parsed()) return cmd_bound_study(flags, checkpoints);
    if (stability->parsed()) return cmd_stability_study(flags, deltas);
    if (verify->parsed()) return cmd_verify_forcing(verify_problem);
    if (eval->parsed()) return cmd_eval(flags, ckpt_path);
  } catch (const std::exception& e) {
    std::cout << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
