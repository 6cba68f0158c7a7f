#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "implicit_motion/degree.hpp"
#include "implicit_motion/problem.hpp"
#include "oracles.hpp"

using namespace implicit_motion;

namespace {

SquareMap plane_map(const std::string& f1, const std::string& f2) {
  return square_map(VectorExpr::parse({f1, f2}, {"x", "y"}));
}

Box square(double a, double b, double c, double d) { return Box(Eigen::Vector2d(a, c), Eigen::Vector2d(b, d)); }

int oracle_winding(const SquareMap& F, const Box& b) {
  return oracle::quadrant_winding([&](const Eigen::Vector2d& p) { return Eigen::Vector2d(F.value(p)); },
                                  b.lower[0], b.upper[0], b.lower[1], b.upper[1], 4000);
}

std::string random_cubic(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> c(-1.0, 1.0);
  const char* monos[] = {"1", "x", "y", "x^2", "x*y", "y^2", "x^3", "x^2*y", "x*y^2", "y^3"};
  std::string out;
  for (const char* m : monos) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%s(%.4f)*%s", out.empty() ? "" : " + ", c(rng), m);
    out += buf;
  }
  return out;
}

}  // namespace

TEST_CASE("Gauss-Legendre rules are exact to degree 2n - 1") {
  for (int n : {4, 8, 32}) {
    const Quadrature q = gauss_legendre(n);
    for (int k = 0; k <= 2 * n - 1; ++k) {
      double sum = 0.0;
      for (int i = 0; i < n; ++i) sum += q.weights[i] * std::pow(q.nodes[i], k);
      const double exact = k % 2 ? 0.0 : 2.0 / (k + 1);
      CHECK(sum == doctest::Approx(exact).epsilon(1e-13).scale(1.0));
    }
  }
}

TEST_CASE("mean field of x + sin(t) y is x") {
  const ForceField h(VectorExpr::parse({"x1 + sin(t)*y1"}, canonical_varlist(1, 1)), 1, 1, ForceKind::Periodic,
                     Tangency::XOnly, 2 * M_PI);
  const MeanField w(h);
  std::mt19937_64 rng(53);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 50; ++i) {
    const Eigen::Vector2d p(u(rng), u(rng));
    CHECK(std::abs(w(p)[0] - p[0]) <= 1e-12 * std::max(1.0, std::abs(p[0])));
    const MapValue mv = w.with_jacobian(p);
    CHECK(mv.jacobian(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(mv.jacobian(0, 1)) <= 1e-12);
  }
}

TEST_CASE("planar degrees of model maps") {
  // z^2: one degenerate zero of local index 2
  const DegreeReport sq = degree_sign_sum(plane_map("x^2 - y^2", "2*x*y"), square(-1, 1, -1, 1));
  CHECK(sq.degree == 2);
  CHECK(sq.method == DegreeMethod::Both);
  REQUIRE(sq.zeros.size() == 1);
  CHECK(sq.zeros[0].degenerate);
  CHECK(sq.zeros[0].index == 2);
  // z^2 - 1/4: two regular zeros
  const DegreeReport sq2 = degree_sign_sum(plane_map("x^2 - y^2 - 0.25", "2*x*y"), square(-1, 1, -1, 1));
  CHECK(sq2.degree == 2);
  CHECK(sq2.zeros.size() == 2);
  CHECK(sq2.method == DegreeMethod::SignSum);
  // conj(z)
  const SquareMap conj = plane_map("x", "-y");
  CHECK(degree_sign_sum(conj, square(-1, 1, -1, 1)).degree == -1);
  CHECK(degree_winding2d(conj, square(-1, 1, -1, 1)) == -1);
  // no zero inside
  CHECK(degree_sign_sum(conj, square(0.5, 1, -1, 1)).degree == 0);
}

TEST_CASE("sign sum, winding and the quadrant oracle agree on random cubic maps") {
  std::mt19937_64 rng(59);
  int compared = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const SquareMap F = plane_map(random_cubic(rng), random_cubic(rng));
    const Box b = square(-1, 1, -1, 1);
    int ss = 0;
    int wd = 0;
    try {
      ss = degree_sign_sum(F, b).degree;
      wd = degree_winding2d(F, b);
    } catch (const Error& e) {
      CHECK((e.kind() == ErrorKind::NotAdmissible || e.kind() == ErrorKind::DegenerateZero));
      continue;
    }
    CHECK(ss == wd);
    CHECK(wd == oracle_winding(F, b));
    ++compared;
  }
  CHECK(compared >= 30);
}

TEST_CASE("degree is additive over a partition of the box") {
  const SquareMap F = plane_map("x^3 - 3*x*y^2 - 0.1", "3*x^2*y - y^3 + 0.05");
  const Box whole = square(-1, 1, -1, 1);
  const int total = degree_sign_sum(F, whole).degree;
  CHECK(total == 3);
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> cut(-0.9, 0.9);
  int used = 0;
  for (int i = 0; i < 20; ++i) {
    const double a = cut(rng);
    const double b = cut(rng);
    const Box parts[4] = {square(-1, a, -1, b), square(a, 1, -1, b), square(-1, a, b, 1), square(a, 1, b, 1)};
    int sum = 0;
    try {
      for (const Box& p : parts) sum += degree_sign_sum(F, p).degree;
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::NotAdmissible);
      continue;
    }
    CHECK(sum == total);
    ++used;
  }
  CHECK(used >= 15);
}

TEST_CASE("inadmissible boxes and degenerate zeros in higher dimension") {
  try {
    (void)degree_sign_sum(plane_map("x", "y"), square(0, 1, -1, 1));
    FAIL("zero on the boundary accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NotAdmissible);
  }
  CHECK_THROWS_AS((void)degree_winding2d(plane_map("x", "y"), square(0, 1, -1, 1)), Error);
  const SquareMap cube = square_map(VectorExpr::parse({"x^2", "y", "z"}, {"x", "y", "z"}));
  try {
    (void)degree_sign_sum(cube, Box(Eigen::Vector3d::Constant(-1), Eigen::Vector3d::Constant(1)));
    FAIL("degenerate 3-D zero accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegenerateZero);
  }
}

TEST_CASE("gravity example: the zero solves 4x^4 - 4x^2 - 1 = 0") {
  const Problem p = parse_problem(find_builtin("gravita")->text);
  const ImplicitManifold M = p.manifold();
  const DegreeReport r = tangent_field_degree(M, first_block_of(*p.force_field()), *p.degree.box);
  REQUIRE(r.zeros.size() == 1);
  const double x = oracle::bisect([](double v) { return 4 * std::pow(v, 4) - 4 * v * v - 1; }, -3.0, -0.001);
  CHECK(std::abs(r.zeros[0].point[0] - x) <= 1e-9);
  CHECK(r.degree == 1);
  CHECK(r.s_sign == 1);
  std::ostringstream os;
  write_report(os, r);
  CHECK(os.str().find("degree: 1\n") == 0);
}
