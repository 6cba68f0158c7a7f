#pragma once

#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "implicit_motion/dynamics.hpp"
#include "implicit_motion/manifold.hpp"

namespace implicit_motion {

// Periodically forced motion on M:
//   xi''_tangential = f(xi, xi') + lambda h(t, xi, xi')   (f present)
//   xi''_tangential = lambda h(t, xi, xi')                 (f absent)
// For x-only fields the same equations are read as the semi-explicit DAE
// x'' = f + lambda h, g(x, y) = 0.
struct PeriodicProblem {
  PeriodicProblem(ImplicitManifold manifold, std::optional<ForceField> f, ForceField h, PhaseState chart_seed);

  ImplicitManifold manifold;
  std::optional<ForceField> f;
  ForceField h;
  double period;
  PhaseState chart_seed;
  int steps_per_period = 512;

  int m() const { return manifold.m(); }
  Acceleration acceleration(double lambda) const;
};

struct BranchPoint {
  double lambda = 0.0;
  Eigen::VectorXd chart_ic;  // (x0, u0)
  double residual = 0.0;     // |(x(T) - x0, u(T) - u0)|
  double amplitude = 0.0;    // max_t |xi(t) - mean xi|
  double end_g = 0.0;        // |g(xi(T))|_inf
  double full_defect = 0.0;  // |(xi(T), eta(T)) - (xi0, eta0)|_inf
  Eigen::VectorXd y0;
  std::optional<Trajectory> orbit;
};

enum class Termination { Budget, BoxExit, StepUnderflow, FoldCountLimit };
std::string_view to_string(Termination t);

struct BranchCurve {
  std::vector<BranchPoint> points;
  Eigen::VectorXd origin;  // zero of the augmented map, in R^{m+s}
  Termination termination = Termination::Budget;
  bool degenerate = false;  // d residual / d lambda vanished at the origin; traced along lambda
  int folds = 0;
  int reflections = 0;
};

struct ShootOptions {
  double tol = 1e-8;
  int max_newton = 25;
  double fd_step = 1e-6;
  // Shooting Jacobian treated as singular when sigma_min falls below this
  // times max(1, sigma_max).
  double singular_ratio = 1e-5;
};

struct ContinuationOptions {
  ShootOptions shoot;
  double ds = 1e-2;
  double ds_min = 1e-10;
  double ds_max = 0.1;
  int max_points = 200;
  int fold_limit = 10;
  bool keep_orbits = false;
};

// Single shot over one period from chart data (x0, u0); y0 solves
// g(x0, y0) = 0 near `y_seed` and v0 = -B^{-1} A u0.
Eigen::VectorXd shoot_residual(const PeriodicProblem& P, double lambda, const Eigen::VectorXd& chart_ic);
Eigen::VectorXd shoot_residual(const PeriodicProblem& P, double lambda, const Eigen::VectorXd& chart_ic,
                               const Eigen::VectorXd& y_seed);

// Shoots once and fills every field of a branch point.
BranchPoint evaluate_point(const PeriodicProblem& P, double lambda, const Eigen::VectorXd& chart_ic,
                           const Eigen::VectorXd& y_seed, bool keep_orbit = false);

// Newton in chart data at fixed lambda with a finite-difference Jacobian.
BranchPoint newton_correct(const PeriodicProblem& P, double lambda, const Eigen::VectorXd& guess,
                           const ShootOptions& opts = {});

// Pseudo-arclength continuation in (lambda, x0, u0) from (0, origin, 0).
BranchCurve trace_branch(const PeriodicProblem& P, const Eigen::VectorXd& origin,
                         const ContinuationOptions& opts = {});

// Independent traces from several origins, at most `jobs` at a time.
std::vector<BranchCurve> trace_branches(const PeriodicProblem& P, const std::vector<Eigen::VectorXd>& origins,
                                        const ContinuationOptions& opts, int jobs);

// lambda,x0_1..x0_m,u0_1..u0_m,residual,amplitude
void write_branch_csv(std::ostream& os, const BranchCurve& curve, int m);

}  // namespace implicit_motion
