#pragma once

// Quadrature grids and error norms: L2, H1-seminorm, H1 and residual L2
// norms of the network against closed-form solutions, with time-sliced
// reporting for non-stationary problems.

#include <cmath>
#include <string>
#include <vector>

#include "bpinn/common.hpp"
#include "bpinn/net.hpp"
#include "bpinn/pde.hpp"

namespace bpinn {

/// Midpoint tensor grid over the spatial box; every point carries the same
/// weight |Omega| / N, so the weights sum to |Omega| exactly.
struct QuadratureGrid {
  MatrixXd points;  // d x N, spatial coordinates only
  double weight = 0.0;
  int n_per_axis = 0;
};

inline QuadratureGrid make_grid(const VectorXd& lo, const VectorXd& hi,
                                int n_per_axis = 32) {
  const int d = static_cast<int>(lo.size());
  if (d < 1 || hi.size() != d) throw InvalidInput("bad box for quadrature grid");
  if (n_per_axis < 1) throw InvalidInput("n_per_axis must be positive");
  int n_total = 1;
  for (int i = 0; i < d; ++i) n_total *= n_per_axis;

  QuadratureGrid g;
  g.n_per_axis = n_per_axis;
  g.points.resize(d, n_total);
  double volume = 1.0;
  for (int i = 0; i < d; ++i) volume *= hi(i) - lo(i);
  g.weight = volume / n_total;

  std::vector<int> idx(d, 0);
  for (int k = 0; k < n_total; ++k) {
    for (int i = 0; i < d; ++i)
      g.points(i, k) = lo(i) + (idx[i] + 0.5) * (hi(i) - lo(i)) / n_per_axis;
    for (int i = 0; i < d; ++i) {
      if (++idx[i] < n_per_axis) break;
      idx[i] = 0;
    }
  }
  return g;
}

namespace detail {

/// Grid points extended with a fixed time coordinate when needed.
inline MatrixXd grid_inputs(const QuadratureGrid& g, bool time_dependent, double t) {
  if (!time_dependent) return g.points;
  MatrixXd x(g.points.rows() + 1, g.points.cols());
  x.topRows(g.points.rows()) = g.points;
  x.row(g.points.rows()).setConstant(t);
  return x;
}

}  // namespace detail

/// sqrt( sum_k w * (u_net(p_k) - u_exact(p_k))^2 )
inline double l2_error(const MlpParams& params, const ExactSolution& exact,
                       const QuadratureGrid& grid, bool time_dependent = false,
                       double t = 0.0) {
  const int d = static_cast<int>(grid.points.rows());
  MatrixXd x = detail::grid_inputs(grid, time_dependent, t);
  BatchBundles b = forward_bundles(params, x, d);
  double acc = 0.0;
  for (int k = 0; k < grid.points.cols(); ++k) {
    const double e = b.value(k) - exact.value(grid.points.col(k), t);
    acc += e * e;
  }
  return std::sqrt(grid.weight * acc);
}

/// Returns (h1_seminorm_error, h1_error); the full norm satisfies
/// h1^2 = l2^2 + seminorm^2 by construction.
inline std::pair<double, double> h1_error(const MlpParams& params,
                                          const ExactSolution& exact,
                                          const QuadratureGrid& grid,
                                          bool time_dependent = false,
                                          double t = 0.0) {
  const int d = static_cast<int>(grid.points.rows());
  MatrixXd x = detail::grid_inputs(grid, time_dependent, t);
  BatchBundles b = forward_bundles(params, x, d);
  double acc_l2 = 0.0, acc_semi = 0.0;
  for (int k = 0; k < grid.points.cols(); ++k) {
    const double e = b.value(k) - exact.value(grid.points.col(k), t);
    acc_l2 += e * e;
    const VectorXd ge = b.grad.col(k) - exact.grad(grid.points.col(k), t);
    acc_semi += ge.squaredNorm();
  }
  const double semi = std::sqrt(grid.weight * acc_semi);
  const double full = std::sqrt(grid.weight * (acc_l2 + acc_semi));
  return {semi, full};
}

/// L2(Omega) norm of the strong-form PDE residual on the grid.
inline double residual_norm(const MlpParams& params, const ProblemSpec& problem,
                            const QuadratureGrid& grid, double t = 0.0) {
  const int d = static_cast<int>(grid.points.rows());
  MatrixXd x = detail::grid_inputs(grid, problem.time_dependent, t);
  BatchBundles b = forward_bundles(params, x, d);
  RowVectorXd f(grid.points.cols());
  for (int k = 0; k < grid.points.cols(); ++k)
    f(k) = problem.forcing(grid.points.col(k), t);
  RowVectorXd r = pde_residuals(b, f, problem.nu, problem.time_dependent);
  return std::sqrt(grid.weight * r.squaredNorm());
}

struct TimeSliceRow {
  double t;
  double h1_error;
  double residual_l2;
};

struct ErrorReport {
  double l2_error = 0.0;
  double h1_seminorm_error = 0.0;
  double h1_error = 0.0;
  double residual_l2 = 0.0;
  std::vector<TimeSliceRow> slices;  // time-dependent problems only
};

/// Per-time-slice H1 error and residual norm on the spatial grid.
inline std::vector<TimeSliceRow> time_slice_report(const MlpParams& params,
                                                   const ProblemSpec& problem,
                                                   const std::vector<double>& times,
                                                   const QuadratureGrid& grid) {
  if (!problem.time_dependent)
    throw InvalidInput("time_slice_report needs a time-dependent problem");
  if (!problem.exact) throw UnsupportedProblem("time_slice_report needs an exact solution");
  std::vector<TimeSliceRow> rows;
  rows.reserve(times.size());
  for (double t : times) {
    if (t < 0.0 || t > problem.final_time)
      throw InvalidInput("time slice outside [0, T]");
    auto [semi, full] = h1_error(params, *problem.exact, grid, true, t);
    rows.push_back({t, full, residual_norm(params, problem, grid, t)});
  }
  return rows;
}

struct FieldRow {
  double x1, x2, u_exact, u_pred, abs_error;
};

/// Pointwise field comparison on the grid (for dumps and plots).
inline std::vector<FieldRow> field_dump(const MlpParams& params,
                                        const ProblemSpec& problem,
                                        const QuadratureGrid& grid, double t = 0.0) {
  if (!problem.exact) throw UnsupportedProblem("field_dump needs an exact solution");
  const int d = static_cast<int>(grid.points.rows());
  MatrixXd x = detail::grid_inputs(grid, problem.time_dependent, t);
  BatchBundles b = forward_bundles(params, x, d);
  std::vector<FieldRow> rows;
  rows.reserve(grid.points.cols());
  for (int k = 0; k < grid.points.cols(); ++k) {
    const double ue = problem.exact->value(grid.points.col(k), t);
    const double up = b.value(k);
    rows.push_back({grid.points(0, k), d > 1 ? grid.points(1, k) : 0.0, ue, up,
                    std::abs(ue - up)});
  }
  return rows;
}

/// Full error report for a problem with an exact solution. For
/// time-dependent problems, global norms are reported at the last slice
/// time and per-slice rows are attached.
inline ErrorReport error_report(const MlpParams& params, const ProblemSpec& problem,
                                const QuadratureGrid& grid,
                                const std::vector<double>& times = {}) {
  if (!problem.exact) throw UnsupportedProblem("error report needs an exact solution");
  ErrorReport rep;
  const double t = problem.time_dependent && !times.empty() ? times.back() : 0.0;
  rep.l2_error = l2_error(params, *problem.exact, grid, problem.time_dependent, t);
  auto [semi, full] = h1_error(params, *problem.exact, grid, problem.time_dependent, t);
  rep.h1_seminorm_error = semi;
  rep.h1_error = full;
  rep.residual_l2 = residual_norm(params, problem, grid, t);
  if (problem.time_dependent && !times.empty())
    rep.slices = time_slice_report(params, problem, times, grid);
  return rep;
}

}  // namespace bpinn
