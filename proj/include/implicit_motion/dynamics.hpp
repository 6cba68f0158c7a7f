#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "implicit_motion/expr.hpp"
#include "implicit_motion/manifold.hpp"

namespace implicit_motion {

enum class ForceKind { Autonomous, Periodic };
enum class Tangency { DeclaredTangent, XOnly };

// Variable names every force expression is written over:
// t, x1..xm, y1..ys, u1..um, v1..vs.
std::vector<std::string> canonical_varlist(int m, int s);
// x1..xm, y1..ys
std::vector<std::string> position_varlist(int m, int s);

// A force given by expressions over the canonical variables. Tangent
// fields have m + s components, x-only (DAE) fields have m.
class ForceField {
 public:
  ForceField(VectorExpr expr, int m, int s, ForceKind kind, Tangency tangency, double period = 0.0);

  static ForceField zero(int m, int s, Tangency tangency);

  int m() const { return m_; }
  int s() const { return s_; }
  ForceKind kind() const { return kind_; }
  Tangency tangency() const { return tangency_; }
  double period() const { return period_; }
  const VectorExpr& expr() const { return expr_; }
  int n_out() const { return expr_.n_out(); }

  Eigen::VectorXd operator()(double t, const Eigen::VectorXd& xi, const Eigen::VectorXd& eta) const;

  // Value at (t, xi, eta = 0) and its Jacobian with respect to xi.
  void position_jacobian(double t, const Eigen::VectorXd& xi, Eigen::VectorXd& value, Eigen::MatrixXd& jac) const;

 private:
  VectorExpr expr_;
  int m_;
  int s_;
  ForceKind kind_;
  Tangency tangency_;
  double period_;
};

// Ambient acceleration xi'' as a function of (t, xi, eta).
using Acceleration = std::function<Eigen::VectorXd(double, const Eigen::VectorXd&, const Eigen::VectorXd&)>;

// sigma_i = -eta^T Hess(g_i) eta
Eigen::VectorXd curvature_term(const ConstraintGeometry& geo, const Eigen::VectorXd& eta);

// r = (A^T B^{-T} C^{-1} sigma, C^{-1} sigma): the unique solution of
// A u + B v = sigma lying in the row space of [A B].
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> explicit_reaction(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& A,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& B,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& C,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& sigma) {
  const auto m = A.cols();
  const auto s = A.rows();
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> v = C.partialPivLu().solve(sigma);
  // A^T B^{-T} v = A^T (B^{-1})^T v = A^T w with B^T w = v
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> w = B.transpose().partialPivLu().solve(v);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> r(m + s);
  r.head(m) = A.transpose() * w;
  r.tail(s) = v;
  return r;
}

// Reactive force of the constraint at a tangent state.
Eigen::VectorXd reactive_force(const ImplicitManifold& M, const PhaseState& state);
Eigen::VectorXd reactive_force(const ImplicitManifold& M, const ConstraintGeometry& geo, const Eigen::VectorXd& eta);

// (eta, r(xi, eta) + phi(t, xi, eta)) after checking that phi is tangent.
std::pair<Eigen::VectorXd, Eigen::VectorXd> second_order_field(const ImplicitManifold& M, const ForceField& phi,
                                                               double t, const PhaseState& state);

// xi'' = r(xi, eta) + force(t, xi, eta) for a tangent force.
Acceleration constrained_motion(const ImplicitManifold& M, Acceleration force);
Acceleration constrained_motion(const ImplicitManifold& M, const ForceField& phi);

// Lift of a semi-explicit DAE x'' = E, g(x, y) = 0 to the full acceleration
// (E, -B^{-1}(A E + g''(eta, eta))).
class DaeLift {
 public:
  DaeLift(const ImplicitManifold& M, ForceField E);
  Eigen::VectorXd operator()(double t, const Eigen::VectorXd& xi, const Eigen::VectorXd& eta) const;

 private:
  ImplicitManifold M_;
  ForceField E_;
};

DaeLift dae_lift(const ImplicitManifold& M, const ForceField& E);

// Ambient acceleration of f + lambda h (either may be absent): the
// constrained motion for tangent fields, the DAE lift for x-only fields.
Acceleration forced_motion(const ImplicitManifold& M, const std::optional<ForceField>& f,
                           const std::optional<ForceField>& h, double lambda);

// P_xi applied to an ambient field: the tangent force of the projected ODE.
Acceleration tangent_part(const ImplicitManifold& M, Acceleration field);

// Spot checks over the given on-manifold states; throw TangencyViolation /
// InvalidArgument on failure and return the largest defect seen.
double check_tangency(const ImplicitManifold& M, const ForceField& f, const std::vector<PhaseState>& states,
                      double tol = 1e-8);
double check_periodicity(const ForceField& h, const std::vector<PhaseState>& states, std::mt19937_64& rng,
                         double tol = 1e-9);

enum class Method { Rk4Proj, Rk45Proj };

struct IntegrateOptions {
  double h = 1e-3;
  Method method = Method::Rk4Proj;
  bool project = true;
  int record_every = 1;
  // rk45 only
  double rtol = 1e-10;
  double atol = 1e-12;
  double h_min = 1e-12;
  // Potential V(x, y) over position_varlist; enables the energy log.
  std::optional<Expr> potential;
};

struct TrajectoryStats {
  double max_g_drift = 0.0;
  double max_tangency_drift = 0.0;
  std::vector<double> energy;
  int steps = 0;
};

struct Trajectory {
  std::vector<double> t;
  std::vector<PhaseState> states;
  TrajectoryStats stats;

  const PhaseState& back() const { return states.back(); }
};

Trajectory integrate(const ImplicitManifold& M, const Acceleration& accel, const PhaseState& state0, double t0,
                     double t1, const IntegrateOptions& opts = {});

// CSV with header t,x1..xm,y1..ys,u1..um,v1..vs,g_res_max.
void write_csv(std::ostream& os, const ImplicitManifold& M, const Trajectory& traj);

}  // namespace implicit_motion
