#pragma once

#include <atomic>
#include <memory>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "implicit_motion/expr.hpp"

namespace implicit_motion {

// Axis-aligned closed box in R^n.
struct Box {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  Box() = default;
  Box(Eigen::VectorXd lo, Eigen::VectorXd hi);

  int dim() const { return static_cast<int>(lower.size()); }
  bool contains(const Eigen::VectorXd& p, double margin = 0.0) const;
  Eigen::VectorXd center() const { return 0.5 * (lower + upper); }
  Eigen::VectorXd widths() const { return upper - lower; }
  double diameter() const { return widths().norm(); }
  bool bounded() const { return lower.allFinite() && upper.allFinite(); }
};

// Value, Jacobian g'(xi) (s x k) and one Hessian per component of g at xi.
struct ConstraintGeometry {
  Eigen::VectorXd value;
  Eigen::MatrixXd jacobian;
  std::vector<Eigen::MatrixXd> hessians;
};

// M = g^{-1}(0) in R^m x R^s, coordinates ordered (x_1..x_m, y_1..y_s) and
// d2g = dg/dy required invertible. The sign of det d2g is pinned by the first
// evaluation; copies of a manifold share the pin.
class ImplicitManifold {
 public:
  ImplicitManifold(VectorExpr g, int m, Box box, double on_tol = 1e-10);

  int m() const { return m_; }
  int s() const { return s_; }
  int dim() const { return m_ + s_; }
  const VectorExpr& g() const { return g_; }
  const Box& box() const { return box_; }
  double on_tol() const { return on_tol_; }

  Eigen::VectorXd residual(const Eigen::VectorXd& xi) const { return g_(xi); }
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& xi) const;
  ConstraintGeometry geometry(const Eigen::VectorXd& xi) const;
  bool contains(const Eigen::VectorXd& xi, double tol) const;

  // Records `sign` (+1/-1) as the session sign of det d2g, or throws
  // SignFlip if a different sign was pinned before.
  void pin_sign(int sign) const;
  // 0 until the first pin.
  int pinned_sign() const { return sign_->load(std::memory_order_acquire); }

 private:
  VectorExpr g_;
  int m_;
  int s_;
  Box box_;
  double on_tol_;
  std::shared_ptr<std::atomic<int>> sign_;
};

struct JacobianSplit {
  Eigen::MatrixXd A;  // s x m, dg/dx
  Eigen::MatrixXd B;  // s x s, dg/dy
  Eigen::MatrixXd C;  // s x s, A A^T B^{-T} + B
};

// Tangent vector eta at the point xi of M.
struct PhaseState {
  Eigen::VectorXd xi;
  Eigen::VectorXd eta;
};

inline constexpr double kMaxConditionB = 1e12;
inline constexpr double kLemmaTolerance = 1e-8;

// Checks d2g for singularity (condition estimate above kMaxConditionB) and
// pins its determinant sign; returns the sign.
int check_b(const ImplicitManifold& M, const Eigen::MatrixXd& B);

JacobianSplit split(const ImplicitManifold& M, const Eigen::MatrixXd& jacobian);
JacobianSplit jacobians(const ImplicitManifold& M, const Eigen::VectorXd& xi);

// B^{-1} C, which equals X X^T + I with X = B^{-1} A.
Eigen::MatrixXd lemma_matrix(const JacobianSplit& J);

// Orthogonal projections onto T_xi M = ker g'(xi) and its complement.
Eigen::VectorXd tangent_project(const ImplicitManifold& M, const Eigen::VectorXd& xi,
                                const Eigen::VectorXd& w);
Eigen::VectorXd normal_project(const ImplicitManifold& M, const Eigen::VectorXd& xi,
                               const Eigen::VectorXd& w);

struct ProjectionOptions {
  int max_iter = 50;
  // Iterate to full precision even when the input already satisfies on_tol.
  bool always_iterate = false;
};

struct Projection {
  Eigen::VectorXd point;
  int iterations = 0;
};

// Closest point of M to p (q - p normal to T_q M), found by Newton on the
// Lagrange system started from p; falls back to starting at `seed`.
Projection project_to_manifold(const ImplicitManifold& M, const Eigen::VectorXd& p,
                               const Eigen::VectorXd& seed, const ProjectionOptions& opts = {});

// Solves g(x, y) = 0 for y by safeguarded Newton from y_seed.
Eigen::VectorXd chart_solve_y(const ImplicitManifold& M, const Eigen::VectorXd& x,
                              const Eigen::VectorXd& y_seed, int max_iter = 50);

// y-velocity making (u, v) tangent at xi: v = -B^{-1} A u.
Eigen::VectorXd tangent_lift(const ImplicitManifold& M, const Eigen::VectorXd& xi,
                             const Eigen::VectorXd& u);

// Throws InvalidArgument unless |g(xi)| <= tol and |g'(xi) eta| <= tol.
void validate_state(const ImplicitManifold& M, const PhaseState& state, double tol);

// Random states near `seed`: points within `radius` projected onto M with
// tangent velocities of norm up to `speed`.
std::vector<PhaseState> random_states(const ImplicitManifold& M, const Eigen::VectorXd& seed,
                                      int count, double radius, double speed, std::mt19937_64& rng);

}  // namespace implicit_motion
