#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "bpinn/pde.hpp"
#include "bpinn/net.hpp"
#include "bpinn/sample.hpp"
#include "helpers.hpp"

using namespace bpinn;

namespace {

// 6th-order central stencils, accurate enough to check manufactured
// forcings to 1e-8 without using any closed-form derivative.
double fd6_d1(const std::function<double(double)>& f, double x, double h = 1e-2) {
  return (-f(x - 3 * h) + 9 * f(x - 2 * h) - 45 * f(x - h) + 45 * f(x + h) -
          9 * f(x + 2 * h) + f(x + 3 * h)) /
         (60.0 * h);
}

double fd6_d2(const std::function<double(double)>& f, double x, double h = 1e-2) {
  return (2 * f(x - 3 * h) - 27 * f(x - 2 * h) + 270 * f(x - h) - 490 * f(x) +
          270 * f(x + h) - 27 * f(x + 2 * h) + 2 * f(x + 3 * h)) /
         (180.0 * h * h);
}

double fd_forcing(const ExactSolution& e, double nu, bool time_dep,
                  const VectorXd& x, double t) {
  const int d = static_cast<int>(x.size());
  double lap = 0.0, advect = 0.0;
  const double u = e.value(x, t);
  for (int i = 0; i < d; ++i) {
    auto slice = [&](double xi) {
      VectorXd y = x;
      y(i) = xi;
      return e.value(y, t);
    };
    lap += fd6_d2(slice, x(i));
    advect += fd6_d1(slice, x(i));
  }
  double f = -nu * lap + u * advect;
  // Time oscillation is roughly twice the spatial scale; shrink the step.
  if (time_dep) f += fd6_d1([&](double s) { return e.value(x, s); }, t, 3e-3);
  return f;
}

MlpParams constant_network(double c) {
  MlpParams p = init_network({2, 4, 1}, ActivationKind::tanh, 0);
  for (auto& w : p.weights) w.setZero();
  p.biases.back()(0) = c;
  return p;
}

}  // namespace

TEST_CASE("pde_residual: trivial bundles") {
  DerivativeBundle zero;
  zero.grad_x = VectorXd::Zero(2);
  CHECK(pde_residual(zero, 0.0, 0.5, false) == 0.0);

  DerivativeBundle constant;
  constant.value = 3.7;
  constant.grad_x = VectorXd::Zero(2);
  CHECK(pde_residual(constant, 0.0, 0.5, false) == 0.0);

  CHECK_THROWS_AS(pde_residual(constant, 0.0, 0.5, true), InvalidInput);
}

TEST_CASE("stationary benchmark: exact solution and forcing values") {
  ProblemSpec p = stationary_benchmark();
  CHECK(p.nu == Catch::Approx(M_PI / 4.0));
  VectorXd peak(2);
  peak << 0.25, 0.25;
  CHECK(p.exact->value(peak, 0.0) == Catch::Approx(1.0).epsilon(1e-14));
  VectorXd edge(2);
  edge << 0.0, 0.37;
  CHECK(std::abs(p.exact->value(edge, 0.0)) < 1e-14);
  // At the peak: u=1, grad u = 0, lap u = -8 pi^2, so f = -nu*lap = 2 pi^3.
  CHECK(p.forcing(peak, 0.0) == Catch::Approx(2.0 * std::pow(M_PI, 3)).epsilon(1e-13));
  VectorXd origin = VectorXd::Zero(2);
  CHECK(std::abs(p.forcing(origin, 0.0)) < 1e-12);
}

TEST_CASE("stationary benchmark: exact analytic bundle has zero residual") {
  ProblemSpec p = stationary_benchmark();
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int k = 0; k < 1000; ++k) {
    VectorXd x(2);
    x << U(rng), U(rng);
    DerivativeBundle b;
    b.value = p.exact->value(x, 0);
    b.grad_x = p.exact->grad(x, 0);
    b.laplacian = p.exact->laplacian(x, 0);
    CHECK(std::abs(pde_residual(b, p.forcing(x, 0), p.nu, false)) < 1e-12);
  }
}

TEST_CASE("manufactured forcing agrees with a finite-difference oracle") {
  ProblemSpec st = stationary_benchmark();
  ProblemSpec nst = nonstationary_benchmark();
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> U(0.05, 0.95);
  for (int k = 0; k < 50; ++k) {
    VectorXd x(2);
    x << U(rng), U(rng);
    const double t = U(rng);
    CHECK(std::abs(st.forcing(x, 0) - fd_forcing(*st.exact, st.nu, false, x, 0)) < 1e-8);
    CHECK(std::abs(nst.forcing(x, t) - fd_forcing(*nst.exact, nst.nu, true, x, t)) < 1e-8);
  }
  VectorXd pt(2);
  pt << 0.25, 0.25;
  CHECK(std::abs(nst.forcing(pt, 0.0) - fd_forcing(*nst.exact, nst.nu, true, pt, 0.0)) < 1e-8);
}

TEST_CASE("manufactured forcing requires a closed form") {
  ExactSolution none;
  CHECK_THROWS_AS(manufactured_forcing(none, 1.0, false, VectorXd::Zero(2), 0.0),
                  UnsupportedProblem);
}

TEST_CASE("nonstationary benchmark: initial condition, periodicity, residual") {
  ProblemSpec p = nonstationary_benchmark();
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    VectorXd x(2);
    x << U(rng), U(rng);
    CHECK(p.exact->value(x, 0.0) == Catch::Approx(p.initial(x)).margin(1e-14));
    VectorXd xs = x;
    xs(0) += 1.0;
    const double t = U(rng);
    CHECK(p.exact->value(x, t) == Catch::Approx(p.exact->value(xs, t)).margin(1e-12));
  }
  for (int k = 0; k < 1000; ++k) {
    VectorXd x(2);
    x << U(rng), U(rng);
    const double t = U(rng);
    DerivativeBundle b;
    b.value = p.exact->value(x, t);
    b.grad_x = p.exact->grad(x, t);
    b.laplacian = p.exact->laplacian(x, t);
    b.du_dt = p.exact->du_dt(x, t);
    CHECK(std::abs(pde_residual(b, p.forcing(x, t), p.nu, true)) < 1e-8);
  }
}

TEST_CASE("composite loss: zero network on the stationary benchmark") {
  ProblemSpec problem = stationary_benchmark();
  MlpParams zero = constant_network(0.0);

  CollocationSet pts;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(0.01, 0.99);
  pts.interior.resize(2, 64);
  for (int k = 0; k < 64; ++k) pts.interior.col(k) << U(rng), U(rng);
  pts.boundary.resize(2, 16);
  for (int k = 0; k < 16; ++k) pts.boundary.col(k) << 0.0, U(rng);
  pts.initial.resize(2, 0);

  LossBreakdown loss = composite_loss(zero, problem, pts);
  CHECK(loss.boundary_term == 0.0);
  CHECK(loss.initial_term == 0.0);
  double mean_f2 = 0.0;
  for (int k = 0; k < 64; ++k) {
    const double f = problem.forcing(pts.interior.col(k), 0.0);
    mean_f2 += f * f;
  }
  mean_f2 /= 64;
  CHECK(loss.residual_term == Catch::Approx(mean_f2).epsilon(1e-12));
  CHECK(loss.total == loss.residual_term + loss.boundary_term + loss.initial_term);
}

TEST_CASE("composite loss: degenerate periodic pairs contribute zero") {
  ProblemSpec problem = nonstationary_benchmark();
  MlpParams net = init_network({3, 8, 1}, ActivationKind::tanh, 5);

  CollocationSet pts;
  pts.interior.resize(3, 8);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> U(0.1, 0.9);
  for (int k = 0; k < 8; ++k) pts.interior.col(k) << U(rng), U(rng), U(rng);
  // Degenerate pair: both halves at the same point.
  pts.boundary.resize(3, 2);
  pts.boundary.col(0) << 0.0, 0.5, 0.3;
  pts.boundary.col(1) << 0.0, 0.5, 0.3;
  pts.initial.resize(3, 1);
  pts.initial.col(0) << 0.4, 0.6, 0.0;

  LossBreakdown loss = composite_loss(net, problem, pts);
  CHECK(loss.boundary_term == 0.0);
}

TEST_CASE("composite loss matches an independent per-point accumulation") {
  ProblemSpec problem = nonstationary_benchmark();
  MlpParams net = init_network({3, 16, 16, 1}, ActivationKind::tanh, 21);

  CollocationSet pts = sample_set(problem, 64, 16, 8, 99);
  LossBreakdown loss = composite_loss(net, problem, pts);

  // Independent route: per-point derivatives() and plain accumulation.
  double res = 0.0;
  for (int k = 0; k < pts.interior.cols(); ++k) {
    VectorXd x = pts.interior.col(k);
    DerivativeBundle b = derivatives(net, x, true);
    const double r =
        pde_residual(b, problem.forcing(x.head(2), x(2)), problem.nu, true);
    res += r * r;
  }
  res /= pts.interior.cols();
  double bnd = 0.0;
  const int npairs = static_cast<int>(pts.boundary.cols()) / 2;
  for (int k = 0; k < npairs; ++k) {
    const double diff = forward(net, pts.boundary.col(2 * k)) -
                        forward(net, pts.boundary.col(2 * k + 1));
    bnd += diff * diff;
  }
  bnd /= npairs;
  double init = 0.0;
  for (int k = 0; k < pts.initial.cols(); ++k) {
    const double diff =
        forward(net, pts.initial.col(k)) - problem.initial(pts.initial.col(k).head(2));
    init += diff * diff;
  }
  init /= pts.initial.cols();

  CHECK(loss.residual_term == Catch::Approx(res).epsilon(1e-12));
  CHECK(loss.boundary_term == Catch::Approx(bnd).epsilon(1e-12));
  CHECK(loss.initial_term == Catch::Approx(init).epsilon(1e-12));
  CHECK(loss.residual_term >= 0.0);
  CHECK(loss.boundary_term >= 0.0);
  CHECK(loss.initial_term >= 0.0);
}

TEST_CASE("composite loss is invariant under point duplication") {
  ProblemSpec problem = nonstationary_benchmark();
  MlpParams net = init_network({3, 8, 8, 1}, ActivationKind::sigmoid, 2);
  CollocationSet pts = sample_set(problem, 64, 16, 8, 99);
  LossBreakdown a = composite_loss(net, problem, pts);

  CollocationSet doubled;
  doubled.interior.resize(3, 2 * pts.interior.cols());
  doubled.interior << pts.interior, pts.interior;
  doubled.boundary.resize(3, 2 * pts.boundary.cols());
  doubled.boundary << pts.boundary, pts.boundary;
  doubled.initial.resize(3, 2 * pts.initial.cols());
  doubled.initial << pts.initial, pts.initial;
  LossBreakdown b = composite_loss(net, problem, doubled);

  CHECK(b.residual_term == Catch::Approx(a.residual_term).epsilon(1e-12));
  CHECK(b.boundary_term == Catch::Approx(a.boundary_term).epsilon(1e-12));
  CHECK(b.initial_term == Catch::Approx(a.initial_term).epsilon(1e-12));
}

TEST_CASE("time-dependent residual of a time-constant network is stationary") {
  // Zero out the time column of the first layer: the network ignores t.
  MlpParams net = init_network({3, 16, 1}, ActivationKind::tanh, 8);
  net.weights[0].col(2).setZero();
  MlpParams spatial = init_network({2, 16, 1}, ActivationKind::tanh, 8);
  spatial.weights[0] = net.weights[0].leftCols(2);
  spatial.weights[1] = net.weights[1];
  spatial.biases = net.biases;

  const double nu = 0.3;
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int k = 0; k < 20; ++k) {
    VectorXd xt(3);
    xt << U(rng), U(rng), U(rng);
    DerivativeBundle bt = derivatives(net, xt, true);
    DerivativeBundle bs = derivatives(spatial, xt.head(2));
    const double f = 0.37;
    CHECK(pde_residual(bt, f, nu, true) ==
          Catch::Approx(pde_residual(bs, f, nu, false)).epsilon(1e-12));
  }
}

TEST_CASE("composite loss rejects empty interior sets") {
  ProblemSpec problem = stationary_benchmark();
  MlpParams net = constant_network(1.0);
  CollocationSet pts;
  pts.interior.resize(2, 0);
  pts.boundary.resize(2, 4);
  pts.boundary.setZero();
  pts.initial.resize(2, 0);
  CHECK_THROWS_AS(composite_loss(net, problem, pts), InvalidInput);
}

TEST_CASE("reference forcing variants differ from the manufactured forcing") {
  VectorXd peak(2);
  peak << 0.25, 0.25;
  const double nu = M_PI / 4.0;
  // At the stationary peak the closed-form variant is sign-opposed.
  CHECK(reference_forcing_stationary(peak, nu) ==
        Catch::Approx(-2.0 * std::pow(M_PI, 3)).epsilon(1e-12));
  ProblemSpec st = stationary_benchmark();
  CHECK(st.forcing(peak, 0.0) == Catch::Approx(2.0 * std::pow(M_PI, 3)).epsilon(1e-12));
}
