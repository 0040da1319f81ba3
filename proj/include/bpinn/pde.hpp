#pragma once

// Viscous Burgers residual operators, boundary/initial mismatch terms,
// composite loss assembly, and the two benchmark problems with
// manufactured forcings.

#include <cmath>
#include <functional>
#include <optional>

#include "bpinn/common.hpp"
#include "bpinn/net.hpp"

namespace bpinn {

enum class BcKind { dirichlet_zero, dirichlet_exact, periodic };

/// Closed-form solution with enough derivatives to manufacture a forcing
/// and to evaluate Sobolev-norm errors. For stationary problems the time
/// argument is ignored and du_dt may be null.
struct ExactSolution {
  std::function<double(const VectorXd&, double)> value;
  std::function<VectorXd(const VectorXd&, double)> grad;
  std::function<double(const VectorXd&, double)> laplacian;
  std::function<double(const VectorXd&, double)> du_dt;
};

struct ProblemSpec {
  int spatial_dim = 2;
  bool time_dependent = false;
  VectorXd lo, hi;         // axis-aligned box
  double final_time = 1.0; // used only when time_dependent
  double nu = 1.0;
  std::function<double(const VectorXd&, double)> forcing;
  BcKind bc_kind = BcKind::dirichlet_zero;
  std::function<double(const VectorXd&)> initial;  // time_dependent only
  std::optional<ExactSolution> exact;

  int input_dim() const { return spatial_dim + (time_dependent ? 1 : 0); }
};

struct LossBreakdown {
  double residual_term = 0.0;
  double boundary_term = 0.0;
  double initial_term = 0.0;
  double total = 0.0;
};

// ---------------------------------------------------------------------------
// Residual operators

/// Strong-form Burgers residual: u_t - nu*lap(u) + u*sum_i u_xi - f
/// (the u_t term is omitted for stationary problems).
inline double pde_residual(const DerivativeBundle& b, double f_val, double nu,
                           bool time_dependent) {
  if (time_dependent && !b.du_dt.has_value())
    throw InvalidInput("time-dependent residual needs du_dt in the bundle");
  double r = -nu * b.laplacian + b.value * b.grad_x.sum() - f_val;
  if (time_dependent) r += *b.du_dt;
  return r;
}

/// Batched residuals over bundle columns.
inline RowVectorXd pde_residuals(const BatchBundles& b, const RowVectorXd& f,
                                 double nu, bool time_dependent) {
  if (time_dependent && b.du_dt.size() != b.value.size())
    throw InvalidInput("time-dependent residual needs du_dt in the bundles");
  RowVectorXd r = -nu * b.laplacian + b.value.cwiseProduct(b.grad.colwise().sum()) - f;
  if (time_dependent) r += b.du_dt;
  return r;
}

/// Forcing that makes `exact` an exact solution of the PDE:
/// f := u_t - nu*lap(u) + u*sum_i u_xi evaluated on the closed form.
inline double manufactured_forcing(const ExactSolution& exact, double nu,
                                   bool time_dependent, const VectorXd& x,
                                   double t) {
  if (!exact.value || !exact.grad || !exact.laplacian)
    throw UnsupportedProblem("manufactured forcing needs a closed-form solution");
  const double u = exact.value(x, t);
  const VectorXd g = exact.grad(x, t);
  double f = -nu * exact.laplacian(x, t) + u * g.sum();
  if (time_dependent) {
    if (!exact.du_dt)
      throw UnsupportedProblem("manufactured forcing needs du_dt for time-dependent problems");
    f += exact.du_dt(x, t);
  }
  return f;
}

// ---------------------------------------------------------------------------
// Benchmarks

/// Stationary benchmark: Omega=[0,1]^2, u = sin(2*pi*x1)*sin(2*pi*x2),
/// homogeneous Dirichlet data, forcing manufactured from the exact solution.
inline ProblemSpec stationary_benchmark(double nu = M_PI / 4.0) {
  ProblemSpec p;
  p.spatial_dim = 2;
  p.time_dependent = false;
  p.lo = VectorXd::Zero(2);
  p.hi = VectorXd::Ones(2);
  p.nu = nu;
  p.bc_kind = BcKind::dirichlet_zero;

  const double w = 2.0 * M_PI;
  ExactSolution e;
  e.value = [w](const VectorXd& x, double) {
    return std::sin(w * x(0)) * std::sin(w * x(1));
  };
  e.grad = [w](const VectorXd& x, double) {
    VectorXd g(2);
    g(0) = w * std::cos(w * x(0)) * std::sin(w * x(1));
    g(1) = w * std::sin(w * x(0)) * std::cos(w * x(1));
    return g;
  };
  e.laplacian = [w](const VectorXd& x, double) {
    return -2.0 * w * w * std::sin(w * x(0)) * std::sin(w * x(1));
  };
  p.exact = e;
  p.forcing = [e, nu](const VectorXd& x, double t) {
    return manufactured_forcing(e, nu, false, x, t);
  };
  return p;
}

/// Non-stationary benchmark: Omega=[0,1]^2, T=1, periodic BC,
/// u = exp(-4*pi^2*nu*t) * sin(2*pi*(x1-t)) * sin(2*pi*(x2-t)).
inline ProblemSpec nonstationary_benchmark(double nu = 0.01) {
  ProblemSpec p;
  p.spatial_dim = 2;
  p.time_dependent = true;
  p.lo = VectorXd::Zero(2);
  p.hi = VectorXd::Ones(2);
  p.final_time = 1.0;
  p.nu = nu;
  p.bc_kind = BcKind::periodic;

  const double w = 2.0 * M_PI;
  const double decay = 4.0 * M_PI * M_PI * nu;
  ExactSolution e;
  e.value = [w, decay](const VectorXd& x, double t) {
    return std::exp(-decay * t) * std::sin(w * (x(0) - t)) * std::sin(w * (x(1) - t));
  };
  e.grad = [w, decay](const VectorXd& x, double t) {
    const double a = std::exp(-decay * t);
    VectorXd g(2);
    g(0) = a * w * std::cos(w * (x(0) - t)) * std::sin(w * (x(1) - t));
    g(1) = a * w * std::sin(w * (x(0) - t)) * std::cos(w * (x(1) - t));
    return g;
  };
  e.laplacian = [w, decay](const VectorXd& x, double t) {
    return -2.0 * w * w * std::exp(-decay * t) * std::sin(w * (x(0) - t)) *
           std::sin(w * (x(1) - t));
  };
  e.du_dt = [w, decay](const VectorXd& x, double t) {
    const double a = std::exp(-decay * t);
    const double s1 = std::sin(w * (x(0) - t)), s2 = std::sin(w * (x(1) - t));
    const double c1 = std::cos(w * (x(0) - t)), c2 = std::cos(w * (x(1) - t));
    return -decay * a * s1 * s2 - a * w * (c1 * s2 + s1 * c2);
  };
  p.exact = e;
  p.forcing = [e, nu](const VectorXd& x, double t) {
    return manufactured_forcing(e, nu, true, x, t);
  };
  p.initial = [w](const VectorXd& x) {
    return std::sin(w * x(0)) * std::sin(w * x(1));
  };
  return p;
}

// Alternative closed-form forcings used only for cross-checking by the
// verify-forcing subcommand. They do NOT annihilate the residual of the
// benchmark exact solutions; the benchmarks use the manufactured forcing.
inline double reference_forcing_stationary(const VectorXd& x, double nu) {
  const double w = 2.0 * M_PI;
  const double s1 = std::sin(w * x(0)), s2 = std::sin(w * x(1));
  const double c1 = std::cos(w * x(0)), c2 = std::cos(w * x(1));
  return -2.0 * M_PI * s1 * s2 * (c1 * s2 + c2 * s1 + 4.0 * M_PI * nu);
}

inline double reference_forcing_nonstationary(const VectorXd& x, double t, double nu) {
  const double w = 2.0 * M_PI;
  const double a = std::exp(-4.0 * M_PI * M_PI * nu * t);
  const double s1 = std::sin(w * (x(0) - t)), s2 = std::sin(w * (x(1) - t));
  const double c1 = std::cos(w * (x(0) - t)), c2 = std::cos(w * (x(1) - t));
  return -2.0 * M_PI * a * (c1 + c2) * (1.0 - a * (s1 + s2));
}

// ---------------------------------------------------------------------------
// Collocation data and composite loss

/// Interior/boundary/initial sample points, one column per point. Columns
/// carry the full network input (spatial coordinates, then time when
/// time-dependent). Periodic boundary points come as adjacent low/high
/// face pairs (columns 2k, 2k+1).
struct CollocationSet {
  MatrixXd interior;
  MatrixXd boundary;
  MatrixXd initial;
};

/// Precomputed per-point targets for a collocation set; forcing values and
/// boundary/initial targets do not change during training.
struct TrainingData {
  MatrixXd x_all;  // interior | boundary | initial, one batch
  int n_interior = 0, n_boundary = 0, n_initial = 0;
  RowVectorXd f_interior;
  RowVectorXd bc_target;   // empty for periodic
  RowVectorXd init_target;
  bool periodic = false;
  bool time_dependent = false;
  double nu = 0.0;
  int spatial_dim = 0;
};

inline TrainingData make_training_data(const ProblemSpec& problem,
                                       const CollocationSet& points) {
  const int m = static_cast<int>(points.interior.cols());
  const int nb = static_cast<int>(points.boundary.cols());
  const int ni = static_cast<int>(points.initial.cols());
  if (m == 0) throw InvalidInput("empty interior collocation set");
  if (!problem.time_dependent && ni > 0)
    throw InvalidInput("initial points supplied for a stationary problem");
  const int idim = problem.input_dim();
  const int d = problem.spatial_dim;

  TrainingData td;
  td.n_interior = m;
  td.n_boundary = nb;
  td.n_initial = ni;
  td.periodic = problem.bc_kind == BcKind::periodic;
  td.time_dependent = problem.time_dependent;
  td.nu = problem.nu;
  td.spatial_dim = d;
  if (td.periodic && nb % 2 != 0)
    throw InvalidInput("periodic boundary set must contain matched pairs");

  td.x_all.resize(idim, m + nb + ni);
  td.x_all.leftCols(m) = points.interior;
  if (nb > 0) td.x_all.middleCols(m, nb) = points.boundary;
  if (ni > 0) td.x_all.rightCols(ni) = points.initial;

  const auto point_time = [&](const MatrixXd& cols, int k) {
    return problem.time_dependent ? cols(idim - 1, k) : 0.0;
  };
  td.f_interior.resize(m);
  for (int k = 0; k < m; ++k)
    td.f_interior(k) = problem.forcing(points.interior.col(k).head(d),
                                       point_time(points.interior, k));
  if (!td.periodic && nb > 0) {
    td.bc_target = RowVectorXd::Zero(nb);
    if (problem.bc_kind == BcKind::dirichlet_exact) {
      if (!problem.exact)
        throw UnsupportedProblem("dirichlet_exact boundary data needs an exact solution");
      for (int k = 0; k < nb; ++k)
        td.bc_target(k) = problem.exact->value(points.boundary.col(k).head(d),
                                               point_time(points.boundary, k));
    }
  }
  if (ni > 0) {
    if (!problem.initial)
      throw UnsupportedProblem("initial points supplied but no initial condition");
    td.init_target.resize(ni);
    for (int k = 0; k < ni; ++k)
      td.init_target(k) = problem.initial(points.initial.col(k).head(d));
  }
  return td;
}

/// Evaluates the three mean-square loss terms from precomputed bundles.
/// When `cot` is non-null, also fills per-point cotangents for reverse mode.
/// Summation order is fixed, so identical inputs give identical totals.
inline LossBreakdown eval_loss_terms(const BatchBundles& b, const TrainingData& td,
                                     BatchCotangents* cot) {
  const int m = td.n_interior, nb = td.n_boundary, ni = td.n_initial;
  LossBreakdown out;

  RowVectorXd res = pde_residuals(b, /*f=*/RowVectorXd::Zero(b.value.size()),
                                  td.nu, td.time_dependent);
  // Only interior columns carry a forcing; the rest of `res` is unused.
  double acc = 0.0;
  for (int k = 0; k < m; ++k) {
    const double r = res(k) - td.f_interior(k);
    if (!std::isfinite(r))
      throw NumericalFailure("non-finite residual at interior point " + std::to_string(k));
    acc += r * r;
    if (cot) {
      const double c = 2.0 * r / m;
      cot->value(k) += c * b.grad.col(k).sum();
      cot->grad.col(k).array() += c * b.value(k);
      cot->laplacian(k) += -c * td.nu;
      if (td.time_dependent) cot->du_dt(k) += c;
    }
  }
  out.residual_term = acc / m;

  if (nb > 0) {
    acc = 0.0;
    if (td.periodic) {
      const int npairs = nb / 2;
      for (int k = 0; k < npairs; ++k) {
        const int a = m + 2 * k, bb = m + 2 * k + 1;
        const double r = b.value(a) - b.value(bb);
        acc += r * r;
        if (cot) {
          const double c = 2.0 * r / npairs;
          cot->value(a) += c;
          cot->value(bb) -= c;
        }
      }
      out.boundary_term = acc / npairs;
    } else {
      for (int k = 0; k < nb; ++k) {
        const double r = b.value(m + k) - td.bc_target(k);
        acc += r * r;
        if (cot) cot->value(m + k) += 2.0 * r / nb;
      }
      out.boundary_term = acc / nb;
    }
  }

  if (ni > 0) {
    acc = 0.0;
    for (int k = 0; k < ni; ++k) {
      const double r = b.value(m + nb + k) - td.init_target(k);
      acc += r * r;
      if (cot) cot->value(m + nb + k) += 2.0 * r / ni;
    }
    out.initial_term = acc / ni;
  }

  out.total = out.residual_term + out.boundary_term + out.initial_term;
  return out;
}

namespace detail {

/// Column-chunked loss (and optionally gradient) evaluation. Chunking keeps
/// the per-layer work matrices inside the cache, which matters: the batched
/// engine is memory-bound at full batch size. The chunk size is fixed and
/// the three point segments are chunked independently (so periodic boundary
/// pairs never straddle a chunk), keeping summation order deterministic.
inline constexpr int kLossChunk = 512;

inline LossBreakdown chunked_loss(const MlpParams& params, const TrainingData& td,
                                  ParamGradient* grad_out) {
  const int m = td.n_interior, nb = td.n_boundary, ni = td.n_initial;
  const int d = td.spatial_dim;
  LossBreakdown out;
  if (grad_out) *grad_out = zero_gradient(params);

  const auto accumulate = [&](const MatrixXd& block, Tape* tape) {
    return forward_bundles(params, block, d, tape);
  };
  const auto backward_add = [&](const Tape& tape, const BatchCotangents& cot) {
    ParamGradient g = backward_bundles(params, tape, cot);
    for (std::size_t l = 0; l < g.weights.size(); ++l) {
      grad_out->weights[l] += g.weights[l];
      grad_out->biases[l] += g.biases[l];
    }
  };
  const auto zero_cot = [&](BatchCotangents& cot, int len) {
    cot.value = RowVectorXd::Zero(len);
    cot.grad = MatrixXd::Zero(d, len);
    cot.laplacian = RowVectorXd::Zero(len);
    cot.du_dt = RowVectorXd::Zero(len);
  };

  double acc = 0.0;
  for (int start = 0; start < m; start += kLossChunk) {
    const int len = std::min(kLossChunk, m - start);
    const MatrixXd block = td.x_all.middleCols(start, len);
    Tape tape;
    BatchBundles b = accumulate(block, grad_out ? &tape : nullptr);
    RowVectorXd res =
        pde_residuals(b, td.f_interior.segment(start, len), td.nu, td.time_dependent);
    BatchCotangents cot;
    if (grad_out) zero_cot(cot, len);
    for (int k = 0; k < len; ++k) {
      const double r = res(k);
      if (!std::isfinite(r))
        throw NumericalFailure("non-finite residual at interior point " +
                               std::to_string(start + k));
      acc += r * r;
      if (grad_out) {
        const double c = 2.0 * r / m;
        cot.value(k) += c * b.grad.col(k).sum();
        cot.grad.col(k).array() += c * b.value(k);
        cot.laplacian(k) += -c * td.nu;
        if (td.time_dependent) cot.du_dt(k) += c;
      }
    }
    if (grad_out) backward_add(tape, cot);
  }
  out.residual_term = acc / m;

  if (nb > 0) {
    acc = 0.0;
    const int npairs = td.periodic ? nb / 2 : 0;
    for (int start = 0; start < nb; start += kLossChunk) {
      const int len = std::min(kLossChunk, nb - start);
      const MatrixXd block = td.x_all.middleCols(m + start, len);
      Tape tape;
      BatchBundles b = accumulate(block, grad_out ? &tape : nullptr);
      BatchCotangents cot;
      if (grad_out) zero_cot(cot, len);
      if (td.periodic) {
        for (int k = 0; k + 1 < len; k += 2) {
          const double r = b.value(k) - b.value(k + 1);
          acc += r * r;
          if (grad_out) {
            const double c = 2.0 * r / npairs;
            cot.value(k) += c;
            cot.value(k + 1) -= c;
          }
        }
      } else {
        for (int k = 0; k < len; ++k) {
          const double r = b.value(k) - td.bc_target(start + k);
          acc += r * r;
          if (grad_out) cot.value(k) += 2.0 * r / nb;
        }
      }
      if (grad_out) backward_add(tape, cot);
    }
    out.boundary_term = acc / (td.periodic ? npairs : nb);
  }

  if (ni > 0) {
    acc = 0.0;
    for (int start = 0; start < ni; start += kLossChunk) {
      const int len = std::min(kLossChunk, ni - start);
      const MatrixXd block = td.x_all.middleCols(m + nb + start, len);
      Tape tape;
      BatchBundles b = accumulate(block, grad_out ? &tape : nullptr);
      BatchCotangents cot;
      if (grad_out) zero_cot(cot, len);
      for (int k = 0; k < len; ++k) {
        const double r = b.value(k) - td.init_target(start + k);
        acc += r * r;
        if (grad_out) cot.value(k) += 2.0 * r / ni;
      }
      if (grad_out) backward_add(tape, cot);
    }
    out.initial_term = acc / ni;
  }

  out.total = out.residual_term + out.boundary_term + out.initial_term;
  return out;
}

}  // namespace detail

inline LossBreakdown composite_loss(const MlpParams& params, const ProblemSpec& problem,
                                    const CollocationSet& points) {
  TrainingData td = make_training_data(problem, points);
  return detail::chunked_loss(params, td, nullptr);
}

/// Composite loss and its parameter gradient in one chunked reverse pass.
inline std::pair<LossBreakdown, ParamGradient> composite_loss_gradient(
    const MlpParams& params, const TrainingData& td) {
  ParamGradient grad;
  LossBreakdown loss = detail::chunked_loss(params, td, &grad);
  return {loss, grad};
}

}  // namespace bpinn
