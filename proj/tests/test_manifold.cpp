#include <doctest.h>

#include <cmath>
#include <random>

#include "implicit_motion/dynamics.hpp"
#include "implicit_motion/manifold.hpp"
#include "oracles.hpp"

using namespace implicit_motion;

namespace {

ImplicitManifold build(const oracle::PolySystem& sys, double half_width = 10.0) {
  const auto names = position_varlist(sys.m, sys.s);
  const int k = sys.m + sys.s;
  return ImplicitManifold(VectorExpr::parse(sys.sources(names), names), sys.m,
                          Box(Eigen::VectorXd::Constant(k, -half_width), Eigen::VectorXd::Constant(k, half_width)));
}

ImplicitManifold build(std::vector<std::string> g, int m, int s) {
  const auto names = position_varlist(m, s);
  const int k = m + s;
  return ImplicitManifold(VectorExpr::parse(g, names), m,
                          Box(Eigen::VectorXd::Constant(k, -10), Eigen::VectorXd::Constant(k, 10)));
}

// Sample points of M near the origin via the chart.
std::vector<Eigen::VectorXd> chart_points(const ImplicitManifold& M, int count, double radius, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-radius, radius);
  std::vector<Eigen::VectorXd> out;
  while (static_cast<int>(out.size()) < count) {
    Eigen::VectorXd x(M.m());
    for (int i = 0; i < M.m(); ++i) x[i] = u(rng);
    try {
      const Eigen::VectorXd y = chart_solve_y(M, x, Eigen::VectorXd::Zero(M.s()));
      Eigen::VectorXd p(M.dim());
      p << x, y;
      out.push_back(p);
    } catch (const Error&) {
    }
  }
  return out;
}

}  // namespace

TEST_CASE("lemma: B^{-1} C = X X^T + I is symmetric positive definite") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    const int m = 1 + trial % 3;
    const int s = 1 + (trial / 3) % 3;
    const oracle::PolySystem sys = oracle::random_system(rng, m, s);
    const ImplicitManifold M = build(sys);
    for (const Eigen::VectorXd& p : chart_points(M, 20, 0.5, rng)) {
      const JacobianSplit J = jacobians(M, p);
      const Eigen::MatrixXd L = lemma_matrix(J);
      const Eigen::MatrixXd G = sys.jacobian(p);
      const Eigen::MatrixXd X = G.rightCols(s).partialPivLu().solve(G.leftCols(m));
      const Eigen::MatrixXd expected = X * X.transpose() + Eigen::MatrixXd::Identity(s, s);
      const double scale = 1.0 + expected.cwiseAbs().maxCoeff();
      CHECK((L - expected).cwiseAbs().maxCoeff() <= 1e-10 * scale);
      CHECK((L - L.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * scale);
      const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (L + L.transpose()));
      CHECK(eig.eigenvalues().minCoeff() >= 1.0 - 1e-10);
    }
  }
}

TEST_CASE("tangent and normal projections") {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 20; ++trial) {
    const int m = 1 + trial % 2;
    const int s = 1 + (trial / 2) % 2;
    const oracle::PolySystem sys = oracle::random_system(rng, m, s);
    const ImplicitManifold M = build(sys);
    for (const Eigen::VectorXd& p : chart_points(M, 10, 0.5, rng)) {
      Eigen::VectorXd w(M.dim());
      for (int i = 0; i < w.size(); ++i) w[i] = n01(rng);
      const Eigen::VectorXd t = tangent_project(M, p, w);
      const Eigen::VectorXd nn = normal_project(M, p, w);
      const Eigen::MatrixXd G = sys.jacobian(p);
      CHECK((t + nn - w).norm() <= 1e-12 * w.norm());
      CHECK((G * t).norm() <= 1e-11 * w.norm() * (1 + G.norm()));
      CHECK(std::abs(t.dot(nn)) <= 1e-11 * w.squaredNorm());
      CHECK((tangent_project(M, p, t) - t).norm() <= 1e-12 * w.norm());
      // normal component lies in the row space of G
      const Eigen::VectorXd coeff = G.transpose().completeOrthogonalDecomposition().solve(nn);
      CHECK((G.transpose() * coeff - nn).norm() <= 1e-11 * w.norm());
    }
  }
}

TEST_CASE("projection onto M satisfies the optimality conditions") {
  const oracle::PolySystem sys = oracle::space_curve();
  const ImplicitManifold M = build(sys);
  std::mt19937_64 rng(29);
  for (const Eigen::VectorXd& q : chart_points(M, 30, 1.0, rng)) {
    std::normal_distribution<double> n01(0.0, 0.05);
    Eigen::VectorXd p = q;
    for (int i = 0; i < p.size(); ++i) p[i] += n01(rng);
    ProjectionOptions opts;
    opts.always_iterate = true;
    const Projection pr = project_to_manifold(M, p, q, opts);
    CHECK(sys.value(pr.point).cwiseAbs().maxCoeff() <= 1e-12);
    // p - q orthogonal to the tangent space at q
    const Eigen::VectorXd d = p - pr.point;
    const Eigen::MatrixXd G = sys.jacobian(pr.point);
    const Eigen::VectorXd tangent_part = d - G.transpose() * (G * G.transpose()).ldlt().solve(G * d);
    CHECK(tangent_part.norm() <= 1e-10);
    CHECK(d.norm() <= (p - q).norm() + 1e-12);
    // idempotent
    const Projection again = project_to_manifold(M, pr.point, pr.point, opts);
    CHECK((again.point - pr.point).norm() <= 1e-13);
  }
}

TEST_CASE("chart solve and tangent lift") {
  const ImplicitManifold M = build({"x1^2/2 - y1 - 2"}, 1, 1);
  const Eigen::VectorXd y = chart_solve_y(M, Eigen::VectorXd::Constant(1, 2.0), Eigen::VectorXd::Constant(1, 5.0));
  CHECK(y[0] == doctest::Approx(0.0).epsilon(1e-14));
  Eigen::Vector2d xi(2.0, 0.0);
  const Eigen::VectorXd v = tangent_lift(M, xi, Eigen::VectorXd::Constant(1, 0.5));
  CHECK(v[0] == doctest::Approx(1.0));
  validate_state(M, PhaseState{xi, Eigen::Vector2d(0.5, 1.0)}, 1e-12);
  CHECK_THROWS_AS(validate_state(M, PhaseState{xi, Eigen::Vector2d(0.5, 0.0)}, 1e-12), Error);
  CHECK_THROWS_AS(validate_state(M, PhaseState{Eigen::Vector2d(2.0, 0.1), Eigen::Vector2d(0, 0)}, 1e-12), Error);
}

TEST_CASE("random states lie on M with tangent velocities") {
  const oracle::PolySystem sys = oracle::space_curve();
  const ImplicitManifold M = build(sys);
  std::mt19937_64 rng(31);
  const auto states = random_states(M, Eigen::Vector3d(0.5, 0.5, 0.4), 50, 0.3, 2.0, rng);
  CHECK(states.size() == 50);
  for (const PhaseState& st : states) {
    CHECK(sys.value(st.xi).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK((sys.jacobian(st.xi) * st.eta).cwiseAbs().maxCoeff() <= 1e-10 * (1 + st.eta.norm()));
  }
}

TEST_CASE("singular d2g and sign flips are reported") {
  // d2g = 3 y^2 + 0 vanishes at y = 0
  const ImplicitManifold cusp = build({"y1^3 - x1"}, 1, 1);
  try {
    (void)jacobians(cusp, Eigen::Vector2d(0.0, 0.0));
    FAIL("singular B accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SingularB);
  }
  // d2g = 2 y changes sign across y = 0
  const ImplicitManifold circle = build({"x1^2 + y1^2 - 1"}, 1, 1);
  CHECK(check_b(circle, Eigen::MatrixXd::Constant(1, 1, 1.2)) == 1);
  CHECK(circle.pinned_sign() == 1);
  const ImplicitManifold copy = circle;
  try {
    (void)jacobians(copy, Eigen::Vector2d(0.0, -1.0));
    FAIL("sign flip accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SignFlip);
  }
}
