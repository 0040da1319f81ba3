#pragma once

// Experiment runner: benchmark reproduction, the error-bound and stability
// studies, forcing verification, and all on-disk artifacts (CSV traces,
// checkpoints, resolved configs).

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "bpinn/common.hpp"
#include "bpinn/config.hpp"
#include "bpinn/metrics.hpp"
#include "bpinn/net.hpp"
#include "bpinn/optim.hpp"
#include "bpinn/pde.hpp"
#include "bpinn/sample.hpp"

namespace bpinn {

inline ProblemSpec make_problem(const RunConfig& c) {
  ProblemSpec p;
  if (c.problem == "stationary") {
    p = stationary_benchmark(c.nu.value_or(M_PI / 4.0));
  } else if (c.problem == "nonstationary") {
    p = nonstationary_benchmark(c.nu.value_or(0.01));
    if (c.final_time) p.final_time = *c.final_time;
  } else {
    throw InvalidInput("unknown problem: " + c.problem);
  }
  if (!c.domain_lo.empty()) {
    if (static_cast<int>(c.domain_lo.size()) != p.spatial_dim ||
        c.domain_hi.size() != c.domain_lo.size())
      throw InvalidInput("domain override dimension mismatch");
    for (int i = 0; i < p.spatial_dim; ++i) {
      p.lo(i) = c.domain_lo[i];
      p.hi(i) = c.domain_hi[i];
      if (!(p.hi(i) > p.lo(i))) throw InvalidInput("degenerate domain box");
    }
  }
  return p;
}

inline MlpParams make_network(const RunConfig& c, const ProblemSpec& p) {
  std::vector<int> sizes;
  if (c.periodic_embedding) {
    sizes.push_back(2 * p.spatial_dim + (p.time_dependent ? 1 : 0));
  } else {
    sizes.push_back(p.input_dim());
  }
  for (int h : c.hidden_sizes) sizes.push_back(h);
  sizes.push_back(1);
  const auto act = activation_from_string(c.activation);
  if (c.periodic_embedding)
    return init_network(sizes, act, c.seed, InputEmbedding::periodic, p.lo, p.hi);
  return init_network(sizes, act, c.seed);
}

inline TrainSchedule make_schedule(const RunConfig& c) {
  TrainSchedule s;
  s.adam_epochs = c.adam_epochs;
  s.lbfgs_iters = c.lbfgs_iters;
  s.adam_lr = c.adam_lr;
  s.lbfgs_memory = c.lbfgs_memory;
  return s;
}

// ---------------------------------------------------------------------------
// CSV writers

inline std::string loss_trace_csv(const std::vector<TraceRow>& trace) {
  std::string out = "phase,iteration,residual_term,boundary_term,initial_term,total\n";
  for (const auto& r : trace) {
    out += r.phase + ',' + std::to_string(r.iteration) + ',' +
           format_g17(r.loss.residual_term) + ',' + format_g17(r.loss.boundary_term) +
           ',' + format_g17(r.loss.initial_term) + ',' + format_g17(r.loss.total) + '\n';
  }
  return out;
}

inline std::string rar_trace_csv(const std::vector<RarTraceRow>& trace) {
  std::string out = "round,interior_size,mean_residual\n";
  for (const auto& r : trace)
    out += std::to_string(r.round) + ',' + std::to_string(r.interior_size) + ',' +
           format_g17(r.mean_residual) + '\n';
  return out;
}

inline std::string time_report_csv(const std::vector<TimeSliceRow>& rows) {
  std::string out = "t,h1_error,residual\n";
  for (const auto& r : rows)
    out += format_g17(r.t) + ',' + format_g17(r.h1_error) + ',' +
           format_g17(r.residual_l2) + '\n';
  return out;
}

inline std::string errors_csv(const ErrorReport& rep) {
  std::string out = "l2_error,h1_seminorm_error,h1_error,residual\n";
  out += format_g17(rep.l2_error) + ',' + format_g17(rep.h1_seminorm_error) + ',' +
         format_g17(rep.h1_error) + ',' + format_g17(rep.residual_l2) + '\n';
  return out;
}

inline std::string field_csv(const std::vector<FieldRow>& rows) {
  std::string out = "x1,x2,u_exact,u_pred,abs_error\n";
  for (const auto& r : rows)
    out += format_g17(r.x1) + ',' + format_g17(r.x2) + ',' + format_g17(r.u_exact) +
           ',' + format_g17(r.u_pred) + ',' + format_g17(r.abs_error) + '\n';
  return out;
}

/// Compact time tag for file names: 0.5 -> "0.5", 1.0 -> "1".
inline std::string time_tag(double t) {
  std::ostringstream ss;
  ss << t;
  return ss.str();
}

// ---------------------------------------------------------------------------
// reproduce

struct ReproduceResult {
  MlpParams params;
  CollocationSet points;
  ErrorReport report;
  RarResult rar;
  std::vector<TraceRow> trace;
  std::string run_dir;
};

/// Full training pipeline (Adam + L-BFGS, then RAR when enabled), followed
/// by error evaluation. When `write_artifacts` is set, writes the run
/// directory layout: loss_trace.csv, errors.csv, field_t<t>.csv,
/// rar_trace.csv, model.ckpt, run_config.resolved.
inline ReproduceResult run_reproduce(const RunConfig& cfg, bool write_artifacts = true) {
  ProblemSpec problem = make_problem(cfg);
  ReproduceResult res;
  res.params = make_network(cfg, problem);
  const int n_init = problem.time_dependent ? cfg.n_initial : 0;
  res.points = sample_set(problem, cfg.n_interior, cfg.n_boundary, n_init, cfg.seed + 1);

  res.trace = train_pipeline(res.params, problem, res.points, make_schedule(cfg));

  if (cfg.rar_enabled) {
    RarConfig rar_cfg;
    rar_cfg.pool_size = cfg.rar_pool_size;
    rar_cfg.mean_residual_threshold = cfg.rar_threshold;
    rar_cfg.add_per_round = cfg.rar_add_per_round;
    rar_cfg.max_rounds = cfg.rar_max_rounds;
    rar_cfg.seed = cfg.seed + 2;
    TrainSchedule round_schedule;
    round_schedule.adam_epochs = cfg.rar_adam_epochs;
    round_schedule.lbfgs_iters = cfg.rar_lbfgs_iters;
    round_schedule.adam_lr = cfg.adam_lr;
    round_schedule.lbfgs_memory = cfg.lbfgs_memory;
    RarTrainer trainer = [&](const MlpParams& p, const CollocationSet& pts) {
      MlpParams q = p;
      auto round_trace = train_pipeline(q, problem, pts, round_schedule);
      for (auto& row : round_trace) {
        row.phase = "rar_" + row.phase;
        res.trace.push_back(row);
      }
      return q;
    };
    res.rar = rar_refine(trainer, res.params, problem, res.points, rar_cfg);
  }

  QuadratureGrid grid = make_grid(problem.lo, problem.hi, cfg.grid_n_per_axis);
  const std::vector<double> slice_times =
      problem.time_dependent ? std::vector<double>{0.0, 0.5 * problem.final_time,
                                                   problem.final_time}
                             : std::vector<double>{};
  res.report = error_report(res.params, problem, grid, slice_times);

  if (write_artifacts) {
    namespace fs = std::filesystem;
    res.run_dir = cfg.out_dir + "/" + cfg.problem + "-" + std::to_string(cfg.seed);
    fs::create_directories(res.run_dir);
    write_text_file(res.run_dir + "/run_config.resolved", serialize_config(cfg));
    write_text_file(res.run_dir + "/loss_trace.csv", loss_trace_csv(res.trace));
    write_text_file(res.run_dir + "/rar_trace.csv", rar_trace_csv(res.rar.trace));
    write_text_file(res.run_dir + "/model.ckpt", save_checkpoint(res.params));
    if (problem.time_dependent) {
      write_text_file(res.run_dir + "/errors.csv", time_report_csv(res.report.slices));
      for (double t : slice_times)
        write_text_file(res.run_dir + "/field_t" + time_tag(t) + ".csv",
                        field_csv(field_dump(res.params, problem, grid, t)));
    } else {
      write_text_file(res.run_dir + "/errors.csv", errors_csv(res.report));
      write_text_file(res.run_dir + "/field_t0.csv",
                      field_csv(field_dump(res.params, problem, grid, 0.0)));
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// bound study

struct BoundStudyRow {
  double target_loss = 0.0;
  double achieved_loss = 0.0;
  double l2_error = 0.0;
  double h1_error = 0.0;
  bool reached = false;
};

struct BoundStudyResult {
  std::vector<BoundStudyRow> rows;
  double fitted_slope = 0.0;  // log(h1_error) vs log(sqrt(loss)), reached rows
};

/// Trains once and snapshots the network each time the total loss first
/// drops below a checkpoint, then evaluates errors per snapshot.
inline BoundStudyResult run_bound_study(const RunConfig& cfg,
                                        const std::vector<double>& loss_checkpoints) {
  if (loss_checkpoints.size() < 1)
    throw InvalidInput("bound study needs at least one checkpoint");
  for (std::size_t i = 1; i < loss_checkpoints.size(); ++i)
    if (!(loss_checkpoints[i] < loss_checkpoints[i - 1]))
      throw InvalidInput("bound-study checkpoints must be strictly decreasing");

  ProblemSpec problem = make_problem(cfg);
  MlpParams params = make_network(cfg, problem);
  const int n_init = problem.time_dependent ? cfg.n_initial : 0;
  CollocationSet points =
      sample_set(problem, cfg.n_interior, cfg.n_boundary, n_init, cfg.seed + 1);

  std::vector<MlpParams> snapshots(loss_checkpoints.size());
  std::vector<double> achieved(loss_checkpoints.size(), 0.0);
  std::vector<bool> reached(loss_checkpoints.size(), false);
  std::size_t next = 0;
  const TrainCallback cb = [&](const std::string&, int, const LossBreakdown& loss,
                               const MlpParams& p) {
    while (next < loss_checkpoints.size() && loss.total < loss_checkpoints[next]) {
      snapshots[next] = p;
      achieved[next] = loss.total;
      reached[next] = true;
      ++next;
    }
  };
  train_pipeline(params, problem, points, make_schedule(cfg), cb);

  QuadratureGrid grid = make_grid(problem.lo, problem.hi, cfg.grid_n_per_axis);
  const double t_eval = problem.time_dependent ? problem.final_time : 0.0;

  BoundStudyResult out;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int nfit = 0;
  for (std::size_t i = 0; i < loss_checkpoints.size(); ++i) {
    BoundStudyRow row;
    row.target_loss = loss_checkpoints[i];
    row.reached = reached[i];
    if (reached[i]) {
      row.achieved_loss = achieved[i];
      row.l2_error = l2_error(snapshots[i], *problem.exact, grid,
                              problem.time_dependent, t_eval);
      row.h1_error = h1_error(snapshots[i], *problem.exact, grid,
                              problem.time_dependent, t_eval).second;
      if (row.achieved_loss > 0 && row.h1_error > 0) {
        const double x = std::log(std::sqrt(row.achieved_loss));
        const double y = std::log(row.h1_error);
        sx += x; sy += y; sxx += x * x; sxy += x * y;
        ++nfit;
      }
    }
    out.rows.push_back(row);
  }
  if (nfit >= 2) out.fitted_slope = (nfit * sxy - sx * sy) / (nfit * sxx - sx * sx);
  return out;
}

inline std::string bound_study_csv(const BoundStudyResult& r) {
  std::string out = "target_loss,achieved_loss,l2_error,h1_error,reached\n";
  for (const auto& row : r.rows)
    out += format_g17(row.target_loss) + ',' + format_g17(row.achieved_loss) + ',' +
           format_g17(row.l2_error) + ',' + format_g17(row.h1_error) + ',' +
           (row.reached ? "1" : "0") + '\n';
  return out;
}

// ---------------------------------------------------------------------------
// stability study

/// Additive data perturbation, scaled by delta per run. Either part may be
/// null (no offset).
struct Perturbation {
  std::function<double(const VectorXd&, double)> forcing_offset;
  std::function<double(const VectorXd&)> initial_offset;
};

struct StabilityRow {
  double delta = 0.0;
  double sup_l2_distance = 0.0;        // sup over time slices of ||u1 - u2||_L2
  double integrated_h1_distance = 0.0; // int_0^T |u1 - u2|_H1^2 dt (trapezoid)
};

struct StabilityStudyResult {
  std::vector<StabilityRow> rows;
  double fitted_constant = 0.0;  // sup_l2 / delta at the largest delta
};

namespace detail {

inline double network_l2_distance(const MlpParams& a, const MlpParams& b,
                                  const QuadratureGrid& grid, bool time_dep, double t) {
  MatrixXd x = grid_inputs(grid, time_dep, t);
  const int d = static_cast<int>(grid.points.rows());
  BatchBundles ba = forward_bundles(a, x, d);
  BatchBundles bb = forward_bundles(b, x, d);
  return std::sqrt(grid.weight * (ba.value - bb.value).squaredNorm());
}

inline double network_h1_semi_distance_sq(const MlpParams& a, const MlpParams& b,
                                          const QuadratureGrid& grid, bool time_dep,
                                          double t) {
  MatrixXd x = grid_inputs(grid, time_dep, t);
  const int d = static_cast<int>(grid.points.rows());
  BatchBundles ba = forward_bundles(a, x, d);
  BatchBundles bb = forward_bundles(b, x, d);
  return grid.weight * (ba.grad - bb.grad).squaredNorm();
}

}  // namespace detail

/// For each delta, trains a base-data network and a perturbed-data network
/// with identical seeds and schedules, and records the distance between the
/// two trained networks over time slices.
inline StabilityStudyResult run_stability_study(const RunConfig& cfg,
                                                const std::vector<double>& deltas,
                                                const Perturbation& pert) {
  ProblemSpec base = make_problem(cfg);
  const int n_init = base.time_dependent ? cfg.n_initial : 0;
  CollocationSet points =
      sample_set(base, cfg.n_interior, cfg.n_boundary, n_init, cfg.seed + 1);
  const TrainSchedule schedule = make_schedule(cfg);

  const auto train_on = [&](const ProblemSpec& problem) {
    MlpParams p = make_network(cfg, problem);
    train_pipeline(p, problem, points, schedule);
    return p;
  };
  MlpParams base_net = train_on(base);

  QuadratureGrid grid = make_grid(base.lo, base.hi, cfg.grid_n_per_axis);
  std::vector<double> slice_times;
  if (base.time_dependent) {
    const int n_slices = 5;
    for (int i = 0; i < n_slices; ++i)
      slice_times.push_back(base.final_time * i / (n_slices - 1));
  } else {
    slice_times.push_back(0.0);
  }

  StabilityStudyResult out;
  for (double delta : deltas) {
    ProblemSpec perturbed = base;
    if (pert.forcing_offset) {
      auto base_forcing = base.forcing;
      auto off = pert.forcing_offset;
      perturbed.forcing = [base_forcing, off, delta](const VectorXd& x, double t) {
        return base_forcing(x, t) + delta * off(x, t);
      };
    }
    if (pert.initial_offset) {
      auto base_initial = base.initial;
      auto off = pert.initial_offset;
      perturbed.initial = [base_initial, off, delta](const VectorXd& x) {
        return base_initial(x) + delta * off(x);
      };
    }
    perturbed.exact.reset();  // the perturbed problem has no closed form
    MlpParams pert_net = delta == 0.0 ? base_net : train_on(perturbed);

    StabilityRow row;
    row.delta = delta;
    std::vector<double> semi_sq;
    for (double t : slice_times) {
      row.sup_l2_distance = std::max(
          row.sup_l2_distance,
          detail::network_l2_distance(base_net, pert_net, grid, base.time_dependent, t));
      semi_sq.push_back(detail::network_h1_semi_distance_sq(
          base_net, pert_net, grid, base.time_dependent, t));
    }
    if (slice_times.size() > 1) {
      for (std::size_t i = 1; i < slice_times.size(); ++i)
        row.integrated_h1_distance += 0.5 * (semi_sq[i - 1] + semi_sq[i]) *
                                      (slice_times[i] - slice_times[i - 1]);
    } else {
      row.integrated_h1_distance = semi_sq[0];
    }
    out.rows.push_back(row);
  }
  if (!out.rows.empty() && out.rows.back().delta > 0)
    out.fitted_constant = out.rows.back().sup_l2_distance / out.rows.back().delta;
  return out;
}

inline std::string stability_csv(const StabilityStudyResult& r) {
  std::string out = "delta,sup_l2_distance,integrated_h1_distance\n";
  for (const auto& row : r.rows)
    out += format_g17(row.delta) + ',' + format_g17(row.sup_l2_distance) + ',' +
           format_g17(row.integrated_h1_distance) + '\n';
  return out;
}

// ---------------------------------------------------------------------------
// verify-forcing

struct ForcingComparison {
  VectorXd point;
  double t = 0.0;
  double manufactured = 0.0;
  double reference = 0.0;
};

struct VerifyForcingResult {
  double max_abs_residual = 0.0;
  std::vector<ForcingComparison> samples;
};

/// Evaluates the residual of the exact solution under the manufactured
/// forcing at random points (should vanish to rounding), and tabulates the
/// manufactured forcing against the alternative closed-form formula.
inline VerifyForcingResult run_verify_forcing(const std::string& problem_name,
                                              int n_points = 10000,
                                              std::uint64_t seed = 12345) {
  ProblemSpec p = problem_name == "stationary" ? stationary_benchmark()
                : problem_name == "nonstationary"
                    ? nonstationary_benchmark()
                    : throw InvalidInput("unknown problem: " + problem_name);
  if (!p.exact) throw UnsupportedProblem("verify-forcing needs an exact solution");

  std::mt19937_64 rng(seed);
  VerifyForcingResult out;
  for (int k = 0; k < n_points; ++k) {
    VectorXd x(p.spatial_dim);
    for (int i = 0; i < p.spatial_dim; ++i)
      x(i) = detail::uniform_open(rng, p.lo(i), p.hi(i));
    const double t = p.time_dependent ? detail::uniform_open(rng, 0.0, p.final_time) : 0.0;
    DerivativeBundle b;
    b.value = p.exact->value(x, t);
    b.grad_x = p.exact->grad(x, t);
    b.laplacian = p.exact->laplacian(x, t);
    if (p.time_dependent) b.du_dt = p.exact->du_dt(x, t);
    const double r = pde_residual(b, p.forcing(x, t), p.nu, p.time_dependent);
    out.max_abs_residual = std::max(out.max_abs_residual, std::abs(r));
    if (k < 5) {
      ForcingComparison c;
      c.point = x;
      c.t = t;
      c.manufactured = p.forcing(x, t);
      c.reference = p.time_dependent ? reference_forcing_nonstationary(x, t, p.nu)
                                     : reference_forcing_stationary(x, p.nu);
      out.samples.push_back(c);
    }
  }
  return out;
}

}  // namespace bpinn
