#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "implicit_motion/dynamics.hpp"
#include "implicit_motion/problem.hpp"
#include "oracles.hpp"

using namespace implicit_motion;

namespace {

ImplicitManifold build(const std::vector<std::string>& g, int m, int s, double half_width = 10.0) {
  const auto names = position_varlist(m, s);
  const int k = m + s;
  return ImplicitManifold(VectorExpr::parse(g, names), m,
                          Box(Eigen::VectorXd::Constant(k, -half_width), Eigen::VectorXd::Constant(k, half_width)));
}

ForceField field(const std::vector<std::string>& src, int m, int s, Tangency tangency, double period = 0.0) {
  return ForceField(VectorExpr::parse(src, canonical_varlist(m, s)), m, s,
                    period > 0 ? ForceKind::Periodic : ForceKind::Autonomous, tangency, period);
}

}  // namespace

TEST_CASE("reactive force equals the minimum-norm solution of g' r = sigma") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 24; ++trial) {
    const int m = 1 + trial % 3;
    const int s = 1 + (trial / 3) % 3;
    const oracle::PolySystem sys = oracle::random_system(rng, m, s);
    const auto names = position_varlist(m, s);
    const ImplicitManifold M = build(sys.sources(names), m, s);
    const auto states = random_states(M, Eigen::VectorXd::Zero(m + s), 20, 0.4, 2.0, rng);
    for (const PhaseState& st : states) {
      const Eigen::VectorXd r = reactive_force(M, st);
      const Eigen::VectorXd ref = oracle::min_norm_reaction(sys.jacobian(st.xi), sys.sigma(st.xi, st.eta));
      CHECK((r - ref).norm() <= 1e-9 * (1e-300 + ref.norm()) + 1e-14);
    }
  }
}

TEST_CASE("reactive force on the parabola has the closed form") {
  const ImplicitManifold M = build({"x1^2/2 - y1 - 2"}, 1, 1);
  for (double x : {-2.0, -0.5, 0.0, 1.0, 1.7}) {
    for (double u : {-1.3, 0.4, 1.0}) {
      const PhaseState st{Eigen::Vector2d(x, x * x / 2 - 2), Eigen::Vector2d(u, x * u)};
      const Eigen::VectorXd r = reactive_force(M, st);
      const double d = 1 + x * x;
      CHECK(r[0] == doctest::Approx(-x * u * u / d).epsilon(1e-14));
      CHECK(r[1] == doctest::Approx(u * u / d).epsilon(1e-14));
    }
  }
}

TEST_CASE("DAE lift agrees with the projected ODE") {
  // x'' = x - 2y on the space curve; on M the lift equals r + P lift.
  const ImplicitManifold M = build({"y2^3 + y2 - x1", "y2 - y1 + x1^2"}, 1, 2, 3.0);
  const ForceField E = field({"x1 - 2*y1"}, 1, 2, Tangency::XOnly);
  const Acceleration dae = forced_motion(M, E, std::nullopt, 0.0);
  const Acceleration ode = constrained_motion(M, tangent_part(M, dae));
  std::mt19937_64 rng(43);
  const auto states = random_states(M, Eigen::Vector3d::Zero(), 20, 0.3, 1.0, rng);
  for (const PhaseState& st : states) {
    CHECK((dae(0.0, st.xi, st.eta) - ode(0.0, st.xi, st.eta)).norm() <= 1e-12);
  }
  IntegrateOptions io;
  io.h = 1e-3;
  const Trajectory a = integrate(M, dae, states[0], 0.0, 2.0, io);
  const Trajectory b = integrate(M, ode, states[0], 0.0, 2.0, io);
  REQUIRE(a.states.size() == b.states.size());
  double gap = 0.0;
  for (std::size_t i = 0; i < a.states.size(); ++i) {
    gap = std::max(gap, (a.states[i].xi - b.states[i].xi).cwiseAbs().maxCoeff());
  }
  CHECK(gap <= 1e-6);
  CHECK(a.stats.max_g_drift <= 1e-8);
}

TEST_CASE("energy is conserved for a conservative tangent force") {
  const ImplicitManifold M = build({"x1^2/2 - y1 - 2"}, 1, 1);
  const ForceField f = field({"-(y1 + 1)*x1/(x1^2 + 1)", "-(y1 + 1)*x1^2/(x1^2 + 1)"}, 1, 1,
                             Tangency::DeclaredTangent);
  IntegrateOptions io;
  io.h = 1e-3;
  io.potential = parse("(x1^2 + y1^2)/2", position_varlist(1, 1));
  const PhaseState st{Eigen::Vector2d(1.5, 1.125 - 2), Eigen::Vector2d(0.2, 0.3)};
  const Trajectory tr = integrate(M, constrained_motion(M, f), st, 0.0, 10.0, io);
  REQUIRE(!tr.stats.energy.empty());
  double drift = 0.0;
  for (double e : tr.stats.energy) drift = std::max(drift, std::abs(e - tr.stats.energy.front()));
  CHECK(drift <= 1e-9);
  CHECK(tr.stats.max_g_drift <= 1e-12);

  io.method = Method::Rk45Proj;
  const Trajectory adaptive = integrate(M, constrained_motion(M, f), st, 0.0, 10.0, io);
  drift = 0.0;
  for (double e : adaptive.stats.energy) drift = std::max(drift, std::abs(e - adaptive.stats.energy.front()));
  CHECK(drift <= 1e-7);
}

TEST_CASE("rk4 with projection converges at fourth order on a free circle") {
  const ImplicitManifold M = build({"x1^2 + y1^2 - 1"}, 1, 1, 2.0);
  const PhaseState st{Eigen::Vector2d(0.0, 1.0), Eigen::Vector2d(-1.0, 0.0)};
  const ForceField none = ForceField::zero(1, 1, Tangency::DeclaredTangent);
  auto error_at = [&](double h) {
    IntegrateOptions io;
    io.h = h;
    const Trajectory tr = integrate(M, constrained_motion(M, none), st, 0.0, 0.6, io);
    const double th = M_PI / 2 + 0.6;
    return (tr.back().xi - Eigen::Vector2d(std::cos(th), std::sin(th))).norm();
  };
  const double e1 = error_at(0.04);
  const double e2 = error_at(0.02);
  CHECK(e1 < 1e-6);
  CHECK(e1 / e2 > 10.0);
}

TEST_CASE("declared-tangent forces are checked") {
  const ImplicitManifold M = build({"x1^2/2 - y1 - 2"}, 1, 1);
  std::mt19937_64 rng(47);
  const auto states = random_states(M, Eigen::Vector2d(0, -2), 10, 1.0, 1.0, rng);
  const ForceField bad = field({"1", "0"}, 1, 1, Tangency::DeclaredTangent);
  try {
    (void)check_tangency(M, bad, states);
    FAIL("non-tangent force accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::TangencyViolation);
  }
  const ForceField good = field({"1/(1 + x1^2)", "x1/(1 + x1^2)"}, 1, 1, Tangency::DeclaredTangent);
  CHECK(check_tangency(M, good, states) <= 1e-14);
  const ForceField periodic = field({"cos(t)/(1 + x1^2)", "cos(t)*x1/(1 + x1^2)"}, 1, 1,
                                    Tangency::DeclaredTangent, 2 * M_PI);
  CHECK(check_periodicity(periodic, states, rng) <= 1e-12);
  const ForceField wrong = field({"cos(2*t)", "0"}, 1, 1, Tangency::DeclaredTangent, 2.0);
  CHECK_THROWS_AS((void)check_periodicity(wrong, states, rng), Error);
}

TEST_CASE("trajectory CSV header") {
  const ImplicitManifold M = build({"x1^2/2 - y1 - 2"}, 1, 1);
  const PhaseState st{Eigen::Vector2d(0.0, -2.0), Eigen::Vector2d(0.0, 0.0)};
  IntegrateOptions io;
  io.h = 0.1;
  const Trajectory tr = integrate(M, constrained_motion(M, ForceField::zero(1, 1, Tangency::DeclaredTangent)), st,
                                  0.0, 0.3, io);
  std::ostringstream os;
  write_csv(os, M, tr);
  CHECK(os.str().rfind("t,x1,y1,u1,v1,g_res_max\n", 0) == 0);
  CHECK(tr.states.size() == 4);
}

TEST_CASE("gravity example: the shipped force is the tangent projection of (0, -mg)") {
  const Problem p = parse_problem(find_builtin("gravita")->text);
  const ImplicitManifold M = p.manifold();
  const ForceField f = *p.force_field();
  std::mt19937_64 rng(67);
  const auto states = random_states(M, p.anchor(M), 50, 0.5, 1.0, rng);
  CHECK(check_tangency(M, f, states) <= 1e-12);
  for (const PhaseState& st : states) {
    const Eigen::VectorXd expected = tangent_project(M, st.xi, Eigen::Vector2d(0.0, -9.81));
    CHECK((f(0.0, st.xi, st.eta) - expected).norm() <= 1e-12 * (1 + expected.norm()));
  }
}
