#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "bpinn/metrics.hpp"
#include "helpers.hpp"

using namespace bpinn;

namespace {

MlpParams constant_network(int input_dim, double c) {
  MlpParams p = init_network({input_dim, 4, 1}, ActivationKind::tanh, 0);
  for (auto& w : p.weights) w.setZero();
  for (auto& b : p.biases) b.setZero();
  p.biases.back()(0) = c;
  return p;
}

/// Wraps a network (on spatial inputs) as an ExactSolution for norm tests.
ExactSolution as_exact(const MlpParams& net) {
  ExactSolution e;
  e.value = [net](const VectorXd& x, double) { return forward(net, x); };
  e.grad = [net](const VectorXd& x, double) { return derivatives(net, x).grad_x; };
  return e;
}

}  // namespace

TEST_CASE("make_grid: midpoint tensor grid invariants") {
  VectorXd lo = VectorXd::Zero(2), hi = VectorXd::Ones(2);
  QuadratureGrid g = make_grid(lo, hi, 32);
  REQUIRE(g.points.cols() == 1024);
  CHECK(g.weight * g.points.cols() == Catch::Approx(1.0).epsilon(1e-15));
  CHECK(g.points.minCoeff() == Catch::Approx(0.5 / 32).epsilon(1e-14));
  CHECK(g.points.maxCoeff() == Catch::Approx(31.5 / 32).epsilon(1e-14));
  CHECK_THROWS_AS(make_grid(lo, VectorXd::Ones(3), 4), InvalidInput);
  CHECK_THROWS_AS(make_grid(lo, hi, 0), InvalidInput);

  VectorXd lo2(2), hi2(2);
  lo2 << -1.0, 0.0;
  hi2 << 2.0, 0.5;
  QuadratureGrid g2 = make_grid(lo2, hi2, 8);
  CHECK(g2.weight * g2.points.cols() == Catch::Approx(1.5).epsilon(1e-14));
}

TEST_CASE("l2/h1 of the zero network against the stationary exact solution") {
  // Closed-form references: ||u||_L2 = 1/2, |u|_H1 = pi*sqrt(2).
  ProblemSpec p = stationary_benchmark();
  MlpParams zero = constant_network(2, 0.0);
  QuadratureGrid g = make_grid(p.lo, p.hi, 32);

  CHECK(testutil::rel_err(l2_error(zero, *p.exact, g), 0.5) < 1e-3);
  auto [semi, full] = h1_error(zero, *p.exact, g);
  CHECK(std::abs(semi - M_PI * std::sqrt(2.0)) < 1e-2);
  CHECK(full * full == Catch::Approx(0.25 + semi * semi).epsilon(1e-12));
}

TEST_CASE("l2_error of a constant against the zero function is |c|") {
  ExactSolution zero_fn;
  zero_fn.value = [](const VectorXd&, double) { return 0.0; };
  zero_fn.grad = [](const VectorXd&, double) { return VectorXd::Zero(2); };
  QuadratureGrid g = make_grid(VectorXd::Zero(2), VectorXd::Ones(2), 16);
  MlpParams c = constant_network(2, -0.7);
  CHECK(l2_error(c, zero_fn, g) == Catch::Approx(0.7).epsilon(1e-12));
  auto [semi, full] = h1_error(c, zero_fn, g);
  CHECK(semi == Catch::Approx(0.0).margin(1e-14));
  CHECK(full == Catch::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("error norms satisfy the norm axioms on random networks") {
  QuadratureGrid g = make_grid(VectorXd::Zero(2), VectorXd::Ones(2), 16);
  MlpParams a = init_network({2, 8, 1}, ActivationKind::tanh, 1);
  MlpParams b = init_network({2, 8, 1}, ActivationKind::tanh, 2);
  MlpParams c = init_network({2, 8, 1}, ActivationKind::sigmoid, 3);

  // Identity: distance to itself is zero.
  CHECK(l2_error(a, as_exact(a), g) == Catch::Approx(0.0).margin(1e-14));
  // Symmetry.
  CHECK(l2_error(a, as_exact(b), g) ==
        Catch::Approx(l2_error(b, as_exact(a), g)).epsilon(1e-12));
  // Triangle inequality for L2 and full H1.
  const double ab = l2_error(a, as_exact(b), g);
  const double bc = l2_error(b, as_exact(c), g);
  const double ac = l2_error(a, as_exact(c), g);
  CHECK(ac <= ab + bc + 1e-14);
  const double hab = h1_error(a, as_exact(b), g).second;
  const double hbc = h1_error(b, as_exact(c), g).second;
  const double hac = h1_error(a, as_exact(c), g).second;
  CHECK(hac <= hab + hbc + 1e-14);
}

TEST_CASE("midpoint quadrature converges at second order") {
  // Non-periodic smooth target u = x1^3 + x2^3 with the closed-form integral
  // int (x1^3 + x2^3)^2 = 2/7 + 1/8; the squared L2 error of the zero network
  // should converge at O(h^2), i.e. shrink ~4x per resolution doubling.
  ExactSolution cubic;
  cubic.value = [](const VectorXd& x, double) {
    return x(0) * x(0) * x(0) + x(1) * x(1) * x(1);
  };
  cubic.grad = [](const VectorXd& x, double) {
    VectorXd g(2);
    g << 3 * x(0) * x(0), 3 * x(1) * x(1);
    return g;
  };
  MlpParams zero = constant_network(2, 0.0);
  auto l2_sq = [&](int n) {
    QuadratureGrid g = make_grid(VectorXd::Zero(2), VectorXd::Ones(2), n);
    const double e = l2_error(zero, cubic, g);
    return e * e;
  };
  const double exact = 2.0 / 7.0 + 1.0 / 8.0;
  const double e8 = std::abs(l2_sq(8) - exact);
  const double e16 = std::abs(l2_sq(16) - exact);
  const double e32 = std::abs(l2_sq(32) - exact);
  CHECK(e8 / e16 == Catch::Approx(4.0).margin(1.0));
  CHECK(e16 / e32 == Catch::Approx(4.0).margin(1.0));
}

TEST_CASE("residual_norm of the zero network is the L2 norm of the forcing") {
  ProblemSpec p = stationary_benchmark();
  MlpParams zero = constant_network(2, 0.0);
  QuadratureGrid g = make_grid(p.lo, p.hi, 16);
  double acc = 0.0;
  for (int k = 0; k < g.points.cols(); ++k) {
    const double f = p.forcing(g.points.col(k), 0.0);
    acc += f * f;
  }
  CHECK(residual_norm(zero, p, g) ==
        Catch::Approx(std::sqrt(g.weight * acc)).epsilon(1e-12));
}

TEST_CASE("time_slice_report: slice structure and decayed closed form") {
  ProblemSpec p = nonstationary_benchmark();
  MlpParams zero = constant_network(3, 0.0);
  QuadratureGrid g = make_grid(p.lo, p.hi, 48);

  auto rows = time_slice_report(zero, p, {0.0, 0.5, 1.0}, g);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].t == 0.0);
  CHECK(rows[1].t == 0.5);
  CHECK(rows[2].t == 1.0);

  // Against the zero network, ||u(.,t)||_H1 = e^{-4 pi^2 nu t} sqrt(1/4 + 2 pi^2).
  const double base = std::sqrt(0.25 + 2.0 * M_PI * M_PI);
  for (const auto& row : rows) {
    const double want = std::exp(-4.0 * M_PI * M_PI * p.nu * row.t) * base;
    CHECK(testutil::rel_err(row.h1_error, want) < 1e-2);
    CHECK(row.residual_l2 > 0.0);
  }
  // Errors decay in time for the zero network (the target decays).
  CHECK(rows[1].h1_error < rows[0].h1_error);
  CHECK(rows[2].h1_error < rows[1].h1_error);

  // Duplicate times give duplicate rows; out-of-range times throw.
  auto dup = time_slice_report(zero, p, {0.5, 0.5}, g);
  CHECK(dup[0].h1_error == dup[1].h1_error);
  CHECK_THROWS_AS(time_slice_report(zero, p, {1.5}, g), InvalidInput);
  CHECK_THROWS_AS(time_slice_report(zero, p, {-0.1}, g), InvalidInput);
  ProblemSpec st = stationary_benchmark();
  CHECK_THROWS_AS(time_slice_report(zero, st, {0.0}, g), InvalidInput);
}

TEST_CASE("error_report: stationary and time-dependent assembly") {
  ProblemSpec st = stationary_benchmark();
  MlpParams zero2 = constant_network(2, 0.0);
  QuadratureGrid g = make_grid(st.lo, st.hi, 32);
  ErrorReport rep = error_report(zero2, st, g);
  CHECK(rep.slices.empty());
  CHECK(rep.h1_error * rep.h1_error ==
        Catch::Approx(rep.l2_error * rep.l2_error +
                      rep.h1_seminorm_error * rep.h1_seminorm_error)
            .epsilon(1e-12));

  ProblemSpec nst = nonstationary_benchmark();
  MlpParams zero3 = constant_network(3, 0.0);
  ErrorReport rep_t = error_report(zero3, nst, g, {0.0, 0.5, 1.0});
  REQUIRE(rep_t.slices.size() == 3);
  // Global norms are reported at the last slice time.
  CHECK(rep_t.h1_error == Catch::Approx(rep_t.slices.back().h1_error).epsilon(1e-12));
}

TEST_CASE("field_dump rows match pointwise evaluation") {
  ProblemSpec p = stationary_benchmark();
  MlpParams net = init_network({2, 8, 1}, ActivationKind::tanh, 6);
  QuadratureGrid g = make_grid(p.lo, p.hi, 4);
  auto rows = field_dump(net, p, g);
  REQUIRE(rows.size() == 16);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    VectorXd x(2);
    x << rows[k].x1, rows[k].x2;
    CHECK(rows[k].u_pred == Catch::Approx(forward(net, x)).epsilon(1e-14));
    CHECK(rows[k].u_exact == Catch::Approx(p.exact->value(x, 0.0)).epsilon(1e-14));
    CHECK(rows[k].abs_error ==
          Catch::Approx(std::abs(rows[k].u_exact - rows[k].u_pred)).margin(1e-15));
  }
}
