#include "implicit_motion/manifold.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace implicit_motion {

namespace {

std::vector<int> iota_indices(int n) {
  std::vector<int> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), 0);
  return v;
}

double inf_norm(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace

Box::Box(Eigen::VectorXd lo, Eigen::VectorXd hi) : lower(std::move(lo)), upper(std::move(hi)) {
  if (lower.size() != upper.size()) throw Error(ErrorKind::InvalidArgument, "box bounds differ in length");
  for (int i = 0; i < lower.size(); ++i) {
    if (!(lower[i] <= upper[i])) throw Error(ErrorKind::InvalidArgument, "box lower bound exceeds upper bound");
  }
}

bool Box::contains(const Eigen::VectorXd& p, double margin) const {
  for (int i = 0; i < p.size(); ++i) {
    if (p[i] < lower[i] - margin || p[i] > upper[i] + margin) return false;
  }
  return true;
}

ImplicitManifold::ImplicitManifold(VectorExpr g, int m, Box box, double on_tol)
    : g_(std::move(g)),
      m_(m),
      s_(g_.n_out()),
      box_(std::move(box)),
      on_tol_(on_tol),
      sign_(std::make_shared<std::atomic<int>>(0)) {
  if (m_ < 1 || s_ < 1) throw Error(ErrorKind::InvalidArgument, "manifold needs m >= 1 and s >= 1");
  if (g_.n_in() != m_ + s_) {
    throw Error(ErrorKind::InvalidArgument,
                "g has " + std::to_string(g_.n_in()) + " inputs, expected m + s = " + std::to_string(m_ + s_));
  }
  if (m_ + s_ > kMaxJetDirections) throw Error(ErrorKind::InvalidArgument, "ambient dimension too large");
  if (box_.dim() != m_ + s_) throw Error(ErrorKind::InvalidArgument, "box dimension differs from m + s");
  if (!(on_tol_ > 0.0)) throw Error(ErrorKind::InvalidArgument, "on_tol must be positive");
}

Eigen::MatrixXd ImplicitManifold::jacobian(const Eigen::VectorXd& xi) const {
  const std::vector<int> all = iota_indices(dim());
  Eigen::VectorXd value;
  Eigen::MatrixXd jac;
  g_.jacobian(xi, all, value, jac);
  return jac;
}

ConstraintGeometry ImplicitManifold::geometry(const Eigen::VectorXd& xi) const {
  ConstraintGeometry out;
  out.value.resize(s_);
  out.jacobian.resize(s_, dim());
  out.hessians.reserve(static_cast<std::size_t>(s_));
  for (int i = 0; i < s_; ++i) {
    SecondOrder d = eval2(g_[i], xi);
    out.value[i] = d.value;
    out.jacobian.row(i) = d.gradient.transpose();
    out.hessians.push_back(std::move(d.hessian));
  }
  return out;
}

bool ImplicitManifold::contains(const Eigen::VectorXd& xi, double tol) const {
  return inf_norm(residual(xi)) <= tol;
}

void ImplicitManifold::pin_sign(int sign) const {
  int expected = 0;
  if (sign_->compare_exchange_strong(expected, sign, std::memory_order_acq_rel)) return;
  if (expected != sign) {
    throw Error(ErrorKind::SignFlip, "sign of det d2g changed from " + std::to_string(expected) + " to " +
                                         std::to_string(sign) + "; the working box is not a single chart domain");
  }
}

int check_b(const ImplicitManifold& M, const Eigen::MatrixXd& B) {
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(B);
  const auto& sv = svd.singularValues();
  const double smax = sv[0];
  const double smin = sv[sv.size() - 1];
  if (!(smin > 0.0) || !(smax / smin < kMaxConditionB)) {
    throw Error(ErrorKind::SingularB, "d2g is singular or ill-conditioned");
  }
  const int sign = B.determinant() > 0.0 ? 1 : -1;
  M.pin_sign(sign);
  return sign;
}

JacobianSplit split(const ImplicitManifold& M, const Eigen::MatrixXd& jacobian) {
  JacobianSplit J;
  J.A = jacobian.leftCols(M.m());
  J.B = jacobian.rightCols(M.s());
  check_b(M, J.B);
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(J.B);
  // B^{-T} = (B^{-1})^T
  const Eigen::MatrixXd b_inv = lu.inverse();
  J.C = J.A * J.A.transpose() * b_inv.transpose() + J.B;

  const Eigen::MatrixXd L = lu.solve(J.C);
  const double scale = 1.0 + L.cwiseAbs().maxCoeff();
  if ((L - L.transpose()).cwiseAbs().maxCoeff() > kLemmaTolerance * scale) {
    throw Error(ErrorKind::LemmaViolation, "B^{-1} C is not symmetric");
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (L + L.transpose()), Eigen::EigenvaluesOnly);
  if (!(eig.eigenvalues().minCoeff() > 0.0)) {
    throw Error(ErrorKind::LemmaViolation, "B^{-1} C is not positive definite");
  }
  return J;
}

JacobianSplit jacobians(const ImplicitManifold& M, const Eigen::VectorXd& xi) {
  return split(M, M.jacobian(xi));
}

Eigen::MatrixXd lemma_matrix(const JacobianSplit& J) { return J.B.partialPivLu().solve(J.C); }

namespace {

// Orthogonal projection of w onto the row space of G.
Eigen::VectorXd row_space_component(const Eigen::MatrixXd& G, const Eigen::VectorXd& w) {
  const Eigen::MatrixXd gram = G * G.transpose();
  return G.transpose() * gram.ldlt().solve(G * w);
}

}  // namespace

Eigen::VectorXd tangent_project(const ImplicitManifold& M, const Eigen::VectorXd& xi, const Eigen::VectorXd& w) {
  const Eigen::MatrixXd G = M.jacobian(xi);
  check_b(M, G.rightCols(M.s()));
  return w - row_space_component(G, w);
}

Eigen::VectorXd normal_project(const ImplicitManifold& M, const Eigen::VectorXd& xi, const Eigen::VectorXd& w) {
  const Eigen::MatrixXd G = M.jacobian(xi);
  check_b(M, G.rightCols(M.s()));
  return row_space_component(G, w);
}

namespace {

// Newton on the Lagrange system  q - p - G(q)^T mu = 0,  g(q) = 0.
bool kkt_newton(const ImplicitManifold& M, const Eigen::VectorXd& p, Eigen::VectorXd q, int max_iter,
                bool always_iterate, Projection& out) {
  const int k = M.dim();
  const int s = M.s();
  ConstraintGeometry geo = M.geometry(q);
  const double g0 = inf_norm(geo.value);
  Eigen::VectorXd mu = (geo.jacobian * geo.jacobian.transpose()).ldlt().solve(geo.jacobian * (q - p));

  for (int it = 0; it < max_iter; ++it) {
    if (it == 0 && !always_iterate && q == p && inf_norm(geo.value) <= M.on_tol()) {
      out.point = q;
      out.iterations = 0;
      return true;
    }
    check_b(M, geo.jacobian.rightCols(s));
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(k + s, k + s);
    Eigen::MatrixXd H = Eigen::MatrixXd::Identity(k, k);
    for (int i = 0; i < s; ++i) H -= mu[i] * geo.hessians[static_cast<std::size_t>(i)];
    K.topLeftCorner(k, k) = H;
    K.topRightCorner(k, s) = -geo.jacobian.transpose();
    K.bottomLeftCorner(s, k) = geo.jacobian;
    Eigen::VectorXd rhs(k + s);
    rhs.head(k) = -(q - p - geo.jacobian.transpose() * mu);
    rhs.tail(s) = -geo.value;
    const Eigen::VectorXd step = K.fullPivLu().solve(rhs);
    if (!step.allFinite()) return false;
    q += step.head(k);
    mu += step.tail(s);
    geo = M.geometry(q);
    const double gn = inf_norm(geo.value);
    if (!std::isfinite(gn) || gn > 1e3 * std::max(g0, 1.0)) return false;
    if (step.head(k).norm() <= 1e-14 * (1.0 + q.norm()) && gn <= M.on_tol()) {
      out.point = q;
      out.iterations = it + 1;
      return true;
    }
  }
  if (inf_norm(geo.value) <= M.on_tol()) {
    // Converged to rounding level without meeting the step criterion.
    out.point = q;
    out.iterations = max_iter;
    return true;
  }
  return false;
}

}  // namespace

Projection project_to_manifold(const ImplicitManifold& M, const Eigen::VectorXd& p, const Eigen::VectorXd& seed,
                               const ProjectionOptions& opts) {
  Projection out;
  try {
    if (kkt_newton(M, p, p, opts.max_iter, opts.always_iterate, out)) return out;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Domain && e.kind() != ErrorKind::SingularB) throw;
  }
  if (seed.size() == p.size() && seed != p) {
    if (kkt_newton(M, p, seed, opts.max_iter, true, out)) return out;
  }
  throw Error(ErrorKind::NoConvergence, "projection onto the manifold did not converge");
}

Eigen::VectorXd chart_solve_y(const ImplicitManifold& M, const Eigen::VectorXd& x, const Eigen::VectorXd& y_seed,
                              int max_iter) {
  const int m = M.m();
  const int s = M.s();
  if (x.size() != m || y_seed.size() != s) throw Error(ErrorKind::InvalidArgument, "chart solve dimensions");
  Eigen::VectorXd xi(m + s);
  xi << x, y_seed;
  Eigen::VectorXd gval = M.residual(xi);
  double gn = gval.norm();
  // Steps are capped relative to the current y so a nearly flat chart
  // cannot throw the iterate onto another sheet.
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::MatrixXd G = M.jacobian(xi);
    const Eigen::MatrixXd B = G.rightCols(s);
    check_b(M, B);
    Eigen::VectorXd dy = -B.partialPivLu().solve(gval);
    const double cap = 1.0 + xi.tail(s).norm();
    if (dy.norm() > cap) dy *= cap / dy.norm();

    double t = 1.0;
    Eigen::VectorXd trial = xi;
    double trial_norm = 0.0;
    for (int half = 0; half < 30; ++half, t *= 0.5) {
      trial.tail(s) = xi.tail(s) + t * dy;
      try {
        trial_norm = M.residual(trial).norm();
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::Domain) throw;
        continue;
      }
      if (trial_norm < gn || trial_norm == 0.0 || gn <= 1e-3 * M.on_tol()) break;
    }
    const double step_norm = t * dy.norm();
    xi = trial;
    gval = M.residual(xi);
    gn = gval.norm();
    if (gval.cwiseAbs().maxCoeff() <= M.on_tol() && step_norm <= 1e-12 * (1.0 + xi.tail(s).norm())) {
      return xi.tail(s);
    }
  }
  if (gval.cwiseAbs().maxCoeff() <= M.on_tol()) return xi.tail(s);
  throw Error(ErrorKind::NoConvergence, "chart solve for y did not converge");
}

Eigen::VectorXd tangent_lift(const ImplicitManifold& M, const Eigen::VectorXd& xi, const Eigen::VectorXd& u) {
  const JacobianSplit J = jacobians(M, xi);
  return -J.B.partialPivLu().solve(J.A * u);
}

void validate_state(const ImplicitManifold& M, const PhaseState& state, double tol) {
  if (state.xi.size() != M.dim() || state.eta.size() != M.dim()) {
    throw Error(ErrorKind::InvalidArgument, "state dimension differs from m + s");
  }
  const double gres = inf_norm(M.residual(state.xi));
  if (gres > tol) {
    throw Error(ErrorKind::InvalidArgument, "state is off the manifold (|g| = " + std::to_string(gres) + ")");
  }
  const double tres = inf_norm(M.jacobian(state.xi) * state.eta);
  if (tres > tol) {
    throw Error(ErrorKind::TangencyViolation, "velocity is not tangent (|g' eta| = " + std::to_string(tres) + ")");
  }
}

std::vector<PhaseState> random_states(const ImplicitManifold& M, const Eigen::VectorXd& seed, int count,
                                      double radius, double speed, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::vector<PhaseState> out;
  out.reserve(static_cast<std::size_t>(count));
  int attempts = 0;
  while (static_cast<int>(out.size()) < count) {
    if (++attempts > 50 * count + 100) throw Error(ErrorKind::NoConvergence, "could not sample manifold states");
    Eigen::VectorXd p = seed;
    for (int i = 0; i < p.size(); ++i) p[i] += radius * unit(rng);
    PhaseState st;
    try {
      st.xi = project_to_manifold(M, p, seed, {50, true}).point;
      Eigen::VectorXd w(M.dim());
      for (int i = 0; i < w.size(); ++i) w[i] = unit(rng);
      w = tangent_project(M, st.xi, w);
      const double n = w.norm();
      st.eta = n > 0.0 ? Eigen::VectorXd(w * (speed * std::abs(unit(rng)) / n)) : w;
    } catch (const Error&) {
      continue;
    }
    out.push_back(std::move(st));
  }
  return out;
}

}  // namespace implicit_motion
