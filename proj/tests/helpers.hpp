#pragma once

// Shared test utilities: finite-difference oracles and comparison helpers.
// The oracles depend only on forward evaluation, never on the derivative
// engine they are used to check.

#include <cmath>
#include <functional>

#include "bpinn/net.hpp"

namespace testutil {

using bpinn::MatrixXd;
using bpinn::MlpParams;
using bpinn::VectorXd;

/// Central finite differences of forward(): gradient and time derivative
/// with step `h1`, pure second derivatives (for the Laplacian) with `h2`.
struct FdBundle {
  double value;
  VectorXd grad_x;
  double laplacian;
  double du_dt;
};

inline FdBundle fd_bundle(const MlpParams& p, const VectorXd& x, int spatial_dim,
                          bool time_dependent, double h1 = 1e-4, double h2 = 1e-3) {
  FdBundle out;
  out.value = bpinn::forward(p, x);
  out.grad_x.resize(spatial_dim);
  out.laplacian = 0.0;
  out.du_dt = 0.0;
  for (int i = 0; i < spatial_dim; ++i) {
    VectorXd xp = x, xm = x;
    xp(i) += h1;
    xm(i) -= h1;
    out.grad_x(i) = (bpinn::forward(p, xp) - bpinn::forward(p, xm)) / (2.0 * h1);
    VectorXd xp2 = x, xm2 = x;
    xp2(i) += h2;
    xm2(i) -= h2;
    out.laplacian += (bpinn::forward(p, xp2) - 2.0 * out.value + bpinn::forward(p, xm2)) /
                     (h2 * h2);
  }
  if (time_dependent) {
    const int ti = static_cast<int>(x.size()) - 1;
    VectorXd xp = x, xm = x;
    xp(ti) += h1;
    xm(ti) -= h1;
    out.du_dt = (bpinn::forward(p, xp) - bpinn::forward(p, xm)) / (2.0 * h1);
  }
  return out;
}

/// Central finite differences of a scalar loss in parameter space.
inline VectorXd fd_param_gradient(const std::function<double(const VectorXd&)>& loss,
                                  const VectorXd& theta, double h = 1e-5) {
  VectorXd g(theta.size());
  for (int i = 0; i < theta.size(); ++i) {
    VectorXd tp = theta, tm = theta;
    tp(i) += h;
    tm(i) -= h;
    g(i) = (loss(tp) - loss(tm)) / (2.0 * h);
  }
  return g;
}

/// Max relative error with a floor tied to the reference scale, so entries
/// near zero do not blow up the ratio.
inline double max_rel_err(const VectorXd& got, const VectorXd& want) {
  const double scale = std::max(want.cwiseAbs().maxCoeff(), 1e-12);
  double worst = 0.0;
  for (int i = 0; i < got.size(); ++i) {
    const double denom = std::max(std::abs(want(i)), 1e-3 * scale);
    worst = std::max(worst, std::abs(got(i) - want(i)) / denom);
  }
  return worst;
}

inline double rel_err(double got, double want, double floor = 1e-9) {
  return std::abs(got - want) / std::max(std::abs(want), floor);
}

}  // namespace testutil
