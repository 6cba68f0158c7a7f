#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "implicit_motion/continuation.hpp"
#include "implicit_motion/degree.hpp"
#include "implicit_motion/dynamics.hpp"
#include "implicit_motion/expr.hpp"
#include "implicit_motion/manifold.hpp"

namespace implicit_motion {

// Plain-text problem description. Sections and keys:
//   name, description                        (before any section)
//   [constants]     NAME = constant expression, in order
//   [manifold]      m, s, g1..gs, box, on_tol
//   [force]         kind = tangent | x_only, f1.., potential
//   [perturbation]  kind, period, h1..
//   [degree]        map = F | Phi, box, grid, random_starts
//   [continuation]  steps_per_period, ds, ds_max, max_points, tol, origin
//   [integrate]     t0, t1, h, method = rk4 | rk45, x0, u0, y_seed, lambda
//   [expect]        free-form expected results (degree, s_sign, zeros, ...)
// Expressions use t, x1..xm, y1..ys, u1..um, v1..vs and the constants.
struct Problem {
  std::string name;
  std::string description;
  ConstantTable constants;

  int m = 0;
  int s = 0;
  std::vector<std::string> g;
  Box box;
  double on_tol = 1e-10;

  struct Force {
    Tangency tangency = Tangency::DeclaredTangent;
    std::vector<std::string> components;
    std::optional<std::string> potential;
  };
  std::optional<Force> force;

  struct Perturbation {
    Tangency tangency = Tangency::DeclaredTangent;
    double period = 0.0;
    std::vector<std::string> components;
  };
  std::optional<Perturbation> perturbation;

  struct DegreeSection {
    std::optional<std::string> map;  // "F" or "Phi"
    std::optional<Box> box;
    int grid = 16;
    int random_starts = 64;
  } degree;

  struct ContinuationSection {
    int steps_per_period = 512;
    double ds = 1e-2;
    double ds_max = 0.1;
    int max_points = 200;
    double tol = 1e-8;
    std::optional<Eigen::VectorXd> origin;
  } continuation;

  struct IntegrateSection {
    double t0 = 0.0;
    double t1 = 5.0;
    double h = 1e-3;
    Method method = Method::Rk4Proj;
    std::optional<Eigen::VectorXd> x0;
    std::optional<Eigen::VectorXd> u0;
    std::optional<Eigen::VectorXd> y_seed;
    double lambda = 0.0;
  } integrate;

  std::map<std::string, std::string> expect;

  ImplicitManifold manifold() const;
  std::optional<ForceField> force_field() const;
  std::optional<ForceField> perturbation_field() const;
  std::optional<Expr> potential() const;

  // A point of M: the integrate state when given, otherwise the box centre
  // projected onto M.
  Eigen::VectorXd anchor(const ImplicitManifold& M) const;
  // On-manifold state from chart data (x0, u0), y solved near the anchor.
  PhaseState chart_state(const ImplicitManifold& M, const Eigen::VectorXd& x0, const Eigen::VectorXd& u0) const;
  // Initial state of the [integrate] section.
  PhaseState initial_state(const ImplicitManifold& M) const;
};

Problem parse_problem(std::string_view text);
Problem load_problem(const std::string& path);

// Comma-separated constant expressions.
Eigen::VectorXd parse_vector(std::string_view text, const ConstantTable& constants = {});
// "[a, b] x [c, d] x ..." with inf / -inf allowed as bounds.
Box parse_box(std::string_view text, const ConstantTable& constants = {});

struct BuiltinProblem {
  const char* name;
  const char* text;
};

const std::vector<BuiltinProblem>& builtin_problems();
const BuiltinProblem* find_builtin(std::string_view name);

}  // namespace implicit_motion
