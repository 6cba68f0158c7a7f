#include "implicit_motion/continuation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <ostream>
#include <thread>

namespace implicit_motion {

PeriodicProblem::PeriodicProblem(ImplicitManifold M, std::optional<ForceField> f_, ForceField h_, PhaseState seed)
    : manifold(std::move(M)), f(std::move(f_)), h(std::move(h_)), period(h.period()), chart_seed(std::move(seed)) {
  if (h.kind() != ForceKind::Periodic) throw Error(ErrorKind::InvalidArgument, "perturbation must be periodic");
  if (f && f->tangency() != h.tangency()) {
    throw Error(ErrorKind::InvalidArgument, "force and perturbation must both be tangent or both x-only");
  }
  if (h.m() != manifold.m() || h.s() != manifold.s() || (f && (f->m() != manifold.m() || f->s() != manifold.s()))) {
    throw Error(ErrorKind::InvalidArgument, "field dimensions differ from the manifold");
  }
  if (chart_seed.xi.size() != manifold.dim()) throw Error(ErrorKind::InvalidArgument, "chart seed dimension");
}

Acceleration PeriodicProblem::acceleration(double lambda) const {
  return forced_motion(manifold, f, std::optional<ForceField>(h), lambda);
}

std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::Budget: return "budget";
    case Termination::BoxExit: return "box_exit";
    case Termination::StepUnderflow: return "step_underflow";
    case Termination::FoldCountLimit: return "fold_count_limit";
  }
  return "?";
}

BranchPoint evaluate_point(const PeriodicProblem& P, double lambda, const Eigen::VectorXd& chart_ic,
                           const Eigen::VectorXd& y_seed, bool keep_orbit) {
  const ImplicitManifold& M = P.manifold;
  const int m = M.m();
  const int s = M.s();
  if (chart_ic.size() != 2 * m) throw Error(ErrorKind::InvalidArgument, "chart data must be (x0, u0)");
  const Eigen::VectorXd x0 = chart_ic.head(m);
  const Eigen::VectorXd u0 = chart_ic.tail(m);

  BranchPoint pt;
  pt.lambda = lambda;
  pt.chart_ic = chart_ic;
  pt.y0 = chart_solve_y(M, x0, y_seed);
  PhaseState st0;
  st0.xi.resize(m + s);
  st0.xi << x0, pt.y0;
  st0.eta.resize(m + s);
  st0.eta << u0, tangent_lift(M, st0.xi, u0);

  IntegrateOptions io;
  io.h = P.period / P.steps_per_period;
  io.method = Method::Rk4Proj;
  io.project = true;
  Trajectory traj = integrate(M, P.acceleration(lambda), st0, 0.0, P.period, io);
  const PhaseState& end = traj.back();

  Eigen::VectorXd R(2 * m);
  R << end.xi.head(m) - x0, end.eta.head(m) - u0;
  pt.residual = R.norm();
  pt.end_g = M.residual(end.xi).cwiseAbs().maxCoeff();
  pt.full_defect = std::max((end.xi - st0.xi).cwiseAbs().maxCoeff(), (end.eta - st0.eta).cwiseAbs().maxCoeff());

  // uniform samples over one period; the endpoint duplicates the start
  const std::size_t n = traj.states.size() - 1;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(m + s);
  for (std::size_t i = 0; i < n; ++i) mean += traj.states[i].xi;
  mean /= static_cast<double>(n);
  for (const PhaseState& q : traj.states) pt.amplitude = std::max(pt.amplitude, (q.xi - mean).norm());
  if (keep_orbit) pt.orbit = std::move(traj);
  return pt;
}

namespace {

Eigen::VectorXd residual_vector(const PeriodicProblem& P, double lambda, const Eigen::VectorXd& chart_ic,
                                const Eigen::VectorXd& y_seed) {
  const ImplicitManifold& M = P.manifold;
  const int m = M.m();
  const int s = M.s();
  const Eigen::VectorXd x0 = chart_ic.head(m);
  const Eigen::VectorXd u0 = chart_ic.tail(m);
  PhaseState st0;
  st0.xi.resize(m + s);
  st0.xi << x0, chart_solve_y(M, x0, y_seed);
  st0.eta.resize(m + s);
  st0.eta << u0, tangent_lift(M, st0.xi, u0);
  IntegrateOptions io;
  io.h = P.period / P.steps_per_period;
  io.record_every = P.steps_per_period + 1;
  const Trajectory traj = integrate(M, P.acceleration(lambda), st0, 0.0, P.period, io);
  const PhaseState& end = traj.back();
  Eigen::VectorXd R(2 * m);
  R << end.xi.head(m) - x0, end.eta.head(m) - u0;
  return R;
}

Eigen::VectorXd seed_y(const PeriodicProblem& P) { return P.chart_seed.xi.tail(P.manifold.s()); }

// Forward differences of the residual in z = (lambda, x0, u0), columns from
// `first` on.
Eigen::MatrixXd fd_jacobian(const PeriodicProblem& P, const Eigen::VectorXd& z, const Eigen::VectorXd& R0,
                            const Eigen::VectorXd& y_seed, double step, int first) {
  const int n = static_cast<int>(z.size());
  Eigen::MatrixXd J(R0.size(), n - first);
  for (int j = first; j < n; ++j) {
    Eigen::VectorXd zp = z;
    const double d = step * std::max(1.0, std::abs(z[j]));
    zp[j] += d;
    J.col(j - first) = (residual_vector(P, zp[0], zp.tail(n - 1), y_seed) - R0) / d;
  }
  return J;
}

bool recoverable(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::NoConvergence:
    case ErrorKind::IntegrationFailure:
    case ErrorKind::StepUnderflow:
    case ErrorKind::SingularB:
    case ErrorKind::Domain:
      return true;
    default:
      return false;
  }
}

}  // namespace

Eigen::VectorXd shoot_residual(const PeriodicProblem& P, double lambda, const Eigen::VectorXd& chart_ic,
                               const Eigen::VectorXd& y_seed) {
  if (chart_ic.size() != 2 * P.m()) throw Error(ErrorKind::InvalidArgument, "chart data must be (x0, u0)");
  return residual_vector(P, lambda, chart_ic, y_seed);
}

Eigen::VectorXd shoot_residual(const PeriodicProblem& P, double lambda, const Eigen::VectorXd& chart_ic) {
  return shoot_residual(P, lambda, chart_ic, seed_y(P));
}

BranchPoint newton_correct(const PeriodicProblem& P, double lambda, const Eigen::VectorXd& guess,
                           const ShootOptions& opts) {
  const int m = P.m();
  Eigen::VectorXd ic = guess;
  Eigen::VectorXd y_seed = seed_y(P);
  Eigen::VectorXd R = shoot_residual(P, lambda, ic, y_seed);
  for (int it = 0; it <= opts.max_newton; ++it) {
    if (R.norm() <= opts.tol) return evaluate_point(P, lambda, ic, y_seed);
    if (it == opts.max_newton) break;
    Eigen::VectorXd z(1 + 2 * m);
    z << lambda, ic;
    const Eigen::MatrixXd J = fd_jacobian(P, z, R, y_seed, opts.fd_step, 1);
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(J, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    // J = Phi - I for the monodromy Phi, so unit scale is the natural floor.
    if (!(sv[sv.size() - 1] > opts.singular_ratio * std::max(1.0, sv[0]))) {
      throw Error(ErrorKind::SingularShootJacobian,
                  "shooting Jacobian is singular (sigma_min/sigma_max = " +
                      std::to_string(sv[sv.size() - 1] / sv[0]) + "); near a fold or resonance");
    }
    const Eigen::VectorXd step = svd.solve(-R);
    double t = 1.0;
    for (; t >= 1.0 / 64; t *= 0.5) {
      const Eigen::VectorXd trial = ic + t * step;
      try {
        const Eigen::VectorXd Rt = shoot_residual(P, lambda, trial, y_seed);
        if (Rt.norm() < R.norm() || t == 1.0 / 64) {
          ic = trial;
          R = Rt;
          break;
        }
      } catch (const Error& e) {
        if (!recoverable(e)) throw;
      }
    }
  }
  throw Error(ErrorKind::NoConvergence, "shooting Newton did not converge in " + std::to_string(opts.max_newton) +
                                            " iterations (residual " + std::to_string(R.norm()) + ")");
}

namespace {

struct Corrected {
  Eigen::VectorXd z;
  Eigen::MatrixXd J;  // residual Jacobian at z, all columns
  BranchPoint point;
  int iterations = 0;
};

// Newton on (R(z) = 0, tangent . (z - predictor) = 0).
std::optional<Corrected> correct(const PeriodicProblem& P, const Eigen::VectorXd& predictor,
                                 const Eigen::VectorXd& tangent, const Eigen::VectorXd& y_seed,
                                 const ContinuationOptions& opts) {
  const int n = static_cast<int>(predictor.size());
  Eigen::VectorXd z = predictor;
  try {
    for (int it = 0; it < opts.shoot.max_newton; ++it) {
      const Eigen::VectorXd R = residual_vector(P, z[0], z.tail(n - 1), y_seed);
      if (!R.allFinite()) return std::nullopt;
      const Eigen::MatrixXd J = fd_jacobian(P, z, R, y_seed, opts.shoot.fd_step, 0);
      if (R.norm() <= opts.shoot.tol) {
        Corrected c{z, J, evaluate_point(P, z[0], z.tail(n - 1), y_seed, opts.keep_orbits), it};
        return c;
      }
      Eigen::MatrixXd K(n, n);
      K << J, tangent.transpose();
      Eigen::VectorXd rhs(n);
      rhs << -R, -tangent.dot(z - predictor);
      const Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
      if (!lu.isInvertible()) return std::nullopt;
      const Eigen::VectorXd dz = lu.solve(rhs);
      if (!dz.allFinite()) return std::nullopt;
      z += dz;
    }
  } catch (const Error& e) {
    if (!recoverable(e)) throw;
  }
  return std::nullopt;
}

// Unit null vector of the residual Jacobian, oriented along `reference`.
Eigen::VectorXd null_direction(const Eigen::MatrixXd& J, const Eigen::VectorXd& reference) {
  const int n = static_cast<int>(J.cols());
  Eigen::MatrixXd K(n, n);
  K << J, reference.transpose();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  rhs[n - 1] = 1.0;
  Eigen::VectorXd t = K.fullPivLu().solve(rhs);
  return t / t.norm();
}

}  // namespace

BranchCurve trace_branch(const PeriodicProblem& P, const Eigen::VectorXd& origin, const ContinuationOptions& opts) {
  const ImplicitManifold& M = P.manifold;
  const int m = M.m();
  const int s = M.s();
  if (origin.size() != m + s) throw Error(ErrorKind::InvalidArgument, "origin must be a point of R^{m+s}");
  BranchCurve curve;
  curve.origin = origin;

  Eigen::VectorXd ic0 = Eigen::VectorXd::Zero(2 * m);
  ic0.head(m) = origin.head(m);
  Eigen::VectorXd y_seed = origin.tail(s);
  BranchPoint first = evaluate_point(P, 0.0, ic0, y_seed, opts.keep_orbits);
  if (first.residual > opts.shoot.tol) {
    throw Error(ErrorKind::InvalidArgument,
                "origin is not an equilibrium at lambda = 0 (residual " + std::to_string(first.residual) + ")");
  }
  y_seed = first.y0;
  curve.points.push_back(first);

  const int n = 1 + 2 * m;
  Eigen::VectorXd z(n);
  z << 0.0, ic0;
  const Eigen::VectorXd R0 = residual_vector(P, 0.0, ic0, y_seed);
  Eigen::MatrixXd J = fd_jacobian(P, z, R0, y_seed, opts.shoot.fd_step, 0);
  Eigen::VectorXd tangent = Eigen::VectorXd::Unit(n, 0);
  if (J.col(0).norm() <= 1e-9 * std::max(1.0, J.norm())) {
    // lambda does not enter the residual at the origin: the equilibrium
    // persists for every lambda and the branch is the vertical family
    curve.degenerate = true;
  } else {
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(J, Eigen::ComputeFullV);
    tangent = svd.matrixV().col(n - 1);
    if (tangent[0] < 0.0) tangent = -tangent;
  }

  double ds = opts.ds;
  while (static_cast<int>(curve.points.size()) < opts.max_points) {
    const Eigen::VectorXd predictor = z + ds * tangent;
    std::optional<Corrected> c = correct(P, predictor, tangent, y_seed, opts);
    const bool invariants_ok = c && c->point.end_g <= 10.0 * M.on_tol() && c->point.full_defect <= 1e-7;
    if (!invariants_ok) {
      ds *= 0.5;
      if (ds < opts.ds_min) {
        curve.termination = Termination::StepUnderflow;
        return curve;
      }
      continue;
    }
    if (c->z[0] < 0.0) {
      // the parameter lives on a half-line: turn back at lambda = 0
      tangent = -tangent;
      ++curve.reflections;
      if (++curve.folds > opts.fold_limit) {
        curve.termination = Termination::FoldCountLimit;
        return curve;
      }
      continue;
    }
    Eigen::VectorXd xi0(m + s);
    xi0 << c->z.segment(1, m), c->point.y0;
    if (!M.box().contains(xi0)) {
      curve.termination = Termination::BoxExit;
      return curve;
    }
    const Eigen::VectorXd next_tangent = null_direction(c->J, tangent);
    if (next_tangent[0] * tangent[0] < 0.0 && ++curve.folds > opts.fold_limit) {
      curve.points.push_back(std::move(c->point));
      curve.termination = Termination::FoldCountLimit;
      return curve;
    }
    tangent = next_tangent;
    z = c->z;
    y_seed = c->point.y0;
    curve.points.push_back(std::move(c->point));
    if (c->iterations <= 2) {
      ds = std::min(1.5 * ds, opts.ds_max);
    } else if (c->iterations > 5) {
      ds *= 0.7;
    }
  }
  curve.termination = Termination::Budget;
  return curve;
}

std::vector<BranchCurve> trace_branches(const PeriodicProblem& P, const std::vector<Eigen::VectorXd>& origins,
                                        const ContinuationOptions& opts, int jobs) {
  std::vector<BranchCurve> out(origins.size());
  std::vector<std::exception_ptr> errors(origins.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < origins.size(); i = next++) {
      try {
        out[i] = trace_branch(P, origins[i], opts);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int workers = std::clamp(jobs, 1, std::max(1, static_cast<int>(origins.size())));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < workers; ++j) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

void write_branch_csv(std::ostream& os, const BranchCurve& curve, int m) {
  os << "lambda";
  for (int i = 1; i <= m; ++i) os << ",x0_" << i;
  for (int i = 1; i <= m; ++i) os << ",u0_" << i;
  os << ",residual,amplitude\n";
  const auto old_precision = os.precision(17);
  for (const BranchPoint& p : curve.points) {
    os << p.lambda;
    for (int i = 0; i < p.chart_ic.size(); ++i) os << ',' << p.chart_ic[i];
    os << ',' << p.residual << ',' << p.amplitude << '\n';
  }
  os.precision(old_precision);
}

}  // namespace implicit_motion
