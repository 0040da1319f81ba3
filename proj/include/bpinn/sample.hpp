#pragma once

// Collocation point generation and the residual-based adaptive refinement
// (RAR) loop.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include "bpinn/common.hpp"
#include "bpinn/net.hpp"
#include "bpinn/pde.hpp"

namespace bpinn {

struct RarConfig {
  int pool_size = 100000;
  double mean_residual_threshold = 5e-3;
  int add_per_round = 100;
  int max_rounds = 20;
  std::uint64_t seed = 0;
};

struct RarTraceRow {
  int round;
  int interior_size;
  double mean_residual;
};

struct RarResult {
  int rounds_used = 0;
  double final_mean_residual = 0.0;
  std::vector<RarTraceRow> trace;
};

namespace detail {

inline double uniform_open(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  double v = dist(rng);
  while (v <= lo || v >= hi) v = dist(rng);
  return v;
}

/// Interior points: uniform over the open box, times in (0, T).
inline MatrixXd sample_interior(const ProblemSpec& p, int n, std::mt19937_64& rng) {
  const int idim = p.input_dim();
  MatrixXd out(idim, n);
  for (int k = 0; k < n; ++k) {
    for (int i = 0; i < p.spatial_dim; ++i)
      out(i, k) = uniform_open(rng, p.lo(i), p.hi(i));
    if (p.time_dependent) out(idim - 1, k) = uniform_open(rng, 0.0, p.final_time);
  }
  return out;
}

}  // namespace detail

/// Uniform i.i.d. collocation sets from a seeded generator. Boundary points
/// are uniform over faces (area-weighted); for periodic problems they come
/// as matched low/high face pairs (n_boundary must be even).
inline CollocationSet sample_set(const ProblemSpec& problem, int n_interior,
                                 int n_boundary, int n_initial, std::uint64_t seed) {
  if (n_interior <= 0) throw InvalidInput("n_interior must be positive");
  if (n_boundary < 0 || n_initial < 0) throw InvalidInput("negative point count");
  if (!problem.time_dependent && n_initial != 0)
    throw InvalidInput("initial points requested for a stationary problem");
  const bool periodic = problem.bc_kind == BcKind::periodic;
  if (periodic && n_boundary % 2 != 0)
    throw InvalidInput("periodic boundary sampling needs an even count");

  std::mt19937_64 rng(seed);
  const int d = problem.spatial_dim;
  const int idim = problem.input_dim();

  CollocationSet set;
  set.interior = detail::sample_interior(problem, n_interior, rng);

  // Face weights: area of the face orthogonal to each axis.
  std::vector<double> face_area(d);
  for (int a = 0; a < d; ++a) {
    double area = 1.0;
    for (int i = 0; i < d; ++i)
      if (i != a) area *= problem.hi(i) - problem.lo(i);
    face_area[a] = area;
  }
  std::discrete_distribution<int> face_axis(face_area.begin(), face_area.end());

  const int n_draws = periodic ? n_boundary / 2 : n_boundary;
  set.boundary.resize(idim, n_boundary);
  for (int k = 0; k < n_draws; ++k) {
    const int axis = face_axis(rng);
    VectorXd pt(idim);
    for (int i = 0; i < d; ++i)
      pt(i) = (i == axis) ? problem.lo(i)
                          : detail::uniform_open(rng, problem.lo(i), problem.hi(i));
    if (problem.time_dependent)
      pt(idim - 1) = detail::uniform_open(rng, 0.0, problem.final_time);
    if (periodic) {
      set.boundary.col(2 * k) = pt;
      pt(axis) = problem.hi(axis);
      set.boundary.col(2 * k + 1) = pt;
    } else {
      // Low or high face with equal probability.
      if (rng() & 1u) pt(axis) = problem.hi(axis);
      set.boundary.col(k) = pt;
    }
  }

  set.initial.resize(idim, n_initial);
  for (int k = 0; k < n_initial; ++k) {
    for (int i = 0; i < d; ++i)
      set.initial(i, k) = detail::uniform_open(rng, problem.lo(i), problem.hi(i));
    set.initial(idim - 1, k) = 0.0;
  }
  return set;
}

/// Mean absolute strong-form residual over a pool of interior points.
/// Evaluated in fixed chunks with a fixed summation order.
inline double mean_residual(const MlpParams& params, const ProblemSpec& problem,
                            const MatrixXd& pool) {
  const int n = static_cast<int>(pool.cols());
  if (n == 0) throw InvalidInput("empty residual pool");
  const int d = problem.spatial_dim;
  const int idim = problem.input_dim();
  const int chunk = 16384;
  double acc = 0.0;
  for (int start = 0; start < n; start += chunk) {
    const int len = std::min(chunk, n - start);
    const MatrixXd block = pool.middleCols(start, len);
    BatchBundles b = forward_bundles(params, block, d);
    RowVectorXd f(len);
    for (int k = 0; k < len; ++k)
      f(k) = problem.forcing(block.col(k).head(d),
                             problem.time_dependent ? block(idim - 1, k) : 0.0);
    RowVectorXd r = pde_residuals(b, f, problem.nu, problem.time_dependent);
    for (int k = 0; k < len; ++k) acc += std::abs(r(k));
  }
  return acc / n;
}

/// Per-point absolute residuals over a pool (helper for RAR selection).
inline RowVectorXd abs_residuals(const MlpParams& params, const ProblemSpec& problem,
                                 const MatrixXd& pool) {
  const int n = static_cast<int>(pool.cols());
  const int d = problem.spatial_dim;
  const int idim = problem.input_dim();
  const int chunk = 16384;
  RowVectorXd out(n);
  for (int start = 0; start < n; start += chunk) {
    const int len = std::min(chunk, n - start);
    const MatrixXd block = pool.middleCols(start, len);
    BatchBundles b = forward_bundles(params, block, d);
    RowVectorXd f(len);
    for (int k = 0; k < len; ++k)
      f(k) = problem.forcing(block.col(k).head(d),
                             problem.time_dependent ? block(idim - 1, k) : 0.0);
    out.segment(start, len) =
        pde_residuals(b, f, problem.nu, problem.time_dependent).cwiseAbs();
  }
  return out;
}

/// Indices of the k largest values, ties broken by index (deterministic).
inline std::vector<int> top_k_indices(const RowVectorXd& vals, int k) {
  std::vector<int> idx(vals.size());
  std::iota(idx.begin(), idx.end(), 0);
  k = std::min<int>(k, static_cast<int>(idx.size()));
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](int a, int b) {
    if (vals(a) != vals(b)) return vals(a) > vals(b);
    return a < b;
  });
  idx.resize(k);
  return idx;
}

/// Retrains the network on a collocation set and returns updated parameters.
using RarTrainer = std::function<MlpParams(const MlpParams&, const CollocationSet&)>;

/// RAR loop: draw a fresh interior pool each round; stop when the mean
/// absolute residual drops below the threshold, otherwise append the
/// highest-residual pool points to the interior set and retrain. Exhausting
/// max_rounds is reported through the final mean, not an error.
inline RarResult rar_refine(const RarTrainer& trainer, MlpParams& params,
                            const ProblemSpec& problem, CollocationSet& points,
                            const RarConfig& cfg) {
  if (cfg.pool_size < cfg.add_per_round || cfg.add_per_round < 1)
    throw InvalidInput("pool_size >= add_per_round >= 1 required");
  if (!(cfg.mean_residual_threshold > 0))
    throw InvalidInput("mean residual threshold must be positive");

  std::mt19937_64 rng(cfg.seed);
  RarResult result;
  for (int round = 0;; ++round) {
    MatrixXd pool = detail::sample_interior(problem, cfg.pool_size, rng);
    RowVectorXd res = abs_residuals(params, problem, pool);
    const double mean = res.sum() / cfg.pool_size;
    result.trace.push_back({round, static_cast<int>(points.interior.cols()), mean});
    result.final_mean_residual = mean;
    result.rounds_used = round;
    if (mean < cfg.mean_residual_threshold || round >= cfg.max_rounds) break;

    const std::vector<int> pick = top_k_indices(res, cfg.add_per_round);
    MatrixXd grown(points.interior.rows(), points.interior.cols() + pick.size());
    grown.leftCols(points.interior.cols()) = points.interior;
    for (std::size_t i = 0; i < pick.size(); ++i)
      grown.col(points.interior.cols() + i) = pool.col(pick[i]);
    points.interior = std::move(grown);
    params = trainer(params, points);
  }
  return result;
}

}  // namespace bpinn
