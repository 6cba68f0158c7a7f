#include "implicit_motion/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace implicit_motion {

std::vector<std::string> canonical_varlist(int m, int s) {
  std::vector<std::string> v{"t"};
  for (int i = 1; i <= m; ++i) v.push_back("x" + std::to_string(i));
  for (int i = 1; i <= s; ++i) v.push_back("y" + std::to_string(i));
  for (int i = 1; i <= m; ++i) v.push_back("u" + std::to_string(i));
  for (int i = 1; i <= s; ++i) v.push_back("v" + std::to_string(i));
  return v;
}

std::vector<std::string> position_varlist(int m, int s) {
  std::vector<std::string> v;
  for (int i = 1; i <= m; ++i) v.push_back("x" + std::to_string(i));
  for (int i = 1; i <= s; ++i) v.push_back("y" + std::to_string(i));
  return v;
}

ForceField::ForceField(VectorExpr expr, int m, int s, ForceKind kind, Tangency tangency, double period)
    : expr_(std::move(expr)), m_(m), s_(s), kind_(kind), tangency_(tangency), period_(period) {
  const int k = m + s;
  if (expr_.n_in() != 1 + 2 * k) {
    throw Error(ErrorKind::InvalidArgument, "force expressions must be over t, x, y, u, v");
  }
  const int want = tangency == Tangency::DeclaredTangent ? k : m;
  if (expr_.n_out() != want) {
    throw Error(ErrorKind::InvalidArgument, "force has " + std::to_string(expr_.n_out()) + " components, expected " +
                                                std::to_string(want));
  }
  if (kind == ForceKind::Periodic && !(period > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "periodic force needs a positive period");
  }
}

ForceField ForceField::zero(int m, int s, Tangency tangency) {
  const int n = tangency == Tangency::DeclaredTangent ? m + s : m;
  return ForceField(VectorExpr::parse(std::vector<std::string>(static_cast<std::size_t>(n), "0"),
                                      canonical_varlist(m, s)),
                    m, s, ForceKind::Autonomous, tangency);
}

Eigen::VectorXd ForceField::operator()(double t, const Eigen::VectorXd& xi, const Eigen::VectorXd& eta) const {
  const int k = m_ + s_;
  Eigen::VectorXd args(1 + 2 * k);
  args << t, xi, eta;
  return expr_(args);
}

void ForceField::position_jacobian(double t, const Eigen::VectorXd& xi, Eigen::VectorXd& value,
                                   Eigen::MatrixXd& jac) const {
  const int k = m_ + s_;
  Eigen::VectorXd args = Eigen::VectorXd::Zero(1 + 2 * k);
  args[0] = t;
  args.segment(1, k) = xi;
  std::vector<int> active(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) active[i] = 1 + i;
  expr_.jacobian(args, active, value, jac);
}

Eigen::VectorXd curvature_term(const ConstraintGeometry& geo, const Eigen::VectorXd& eta) {
  Eigen::VectorXd sigma(geo.value.size());
  for (int i = 0; i < sigma.size(); ++i) sigma[i] = -eta.dot(geo.hessians[static_cast<std::size_t>(i)] * eta);
  return sigma;
}

Eigen::VectorXd reactive_force(const ImplicitManifold& M, const ConstraintGeometry& geo, const Eigen::VectorXd& eta) {
  const JacobianSplit J = split(M, geo.jacobian);
  return explicit_reaction<double>(J.A, J.B, J.C, curvature_term(geo, eta));
}

Eigen::VectorXd reactive_force(const ImplicitManifold& M, const PhaseState& state) {
  return reactive_force(M, M.geometry(state.xi), state.eta);
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> second_order_field(const ImplicitManifold& M, const ForceField& phi,
                                                               double t, const PhaseState& state) {
  if (phi.tangency() != Tangency::DeclaredTangent) {
    throw Error(ErrorKind::InvalidArgument, "second order field needs a tangent force; lift x-only forces first");
  }
  const ConstraintGeometry geo = M.geometry(state.xi);
  const Eigen::VectorXd f = phi(t, state.xi, state.eta);
  const double defect = (geo.jacobian * f).cwiseAbs().maxCoeff();
  if (defect > 1e-8 * (1.0 + f.norm())) {
    throw Error(ErrorKind::TangencyViolation, "force is not tangent (|g' phi| = " + std::to_string(defect) + ")");
  }
  return {state.eta, reactive_force(M, geo, state.eta) + f};
}

Acceleration constrained_motion(const ImplicitManifold& M, Acceleration force) {
  return [M, force = std::move(force)](double t, const Eigen::VectorXd& xi, const Eigen::VectorXd& eta) {
    return Eigen::VectorXd(reactive_force(M, M.geometry(xi), eta) + force(t, xi, eta));
  };
}

Acceleration constrained_motion(const ImplicitManifold& M, const ForceField& phi) {
  if (phi.tangency() != Tangency::DeclaredTangent) {
    throw Error(ErrorKind::InvalidArgument, "constrained motion needs a tangent force");
  }
  return constrained_motion(M, Acceleration(phi));
}

DaeLift::DaeLift(const ImplicitManifold& M, ForceField E) : M_(M), E_(std::move(E)) {
  if (E_.tangency() != Tangency::XOnly) throw Error(ErrorKind::InvalidArgument, "DAE lift expects an x-only field");
}

Eigen::VectorXd DaeLift::operator()(double t, const Eigen::VectorXd& xi, const Eigen::VectorXd& eta) const {
  const ConstraintGeometry geo = M_.geometry(xi);
  const int m = M_.m();
  const int s = M_.s();
  const Eigen::MatrixXd A = geo.jacobian.leftCols(m);
  const Eigen::MatrixXd B = geo.jacobian.rightCols(s);
  check_b(M_, B);
  const Eigen::VectorXd e = E_(t, xi, eta);
  // g''(eta, eta) enters with a plus sign here: it is -sigma.
  const Eigen::VectorXd second = -curvature_term(geo, eta);
  Eigen::VectorXd out(m + s);
  out.head(m) = e;
  out.tail(s) = -B.partialPivLu().solve(A * e + second);
  return out;
}

DaeLift dae_lift(const ImplicitManifold& M, const ForceField& E) { return DaeLift(M, E); }

Acceleration forced_motion(const ImplicitManifold& M, const std::optional<ForceField>& f,
                           const std::optional<ForceField>& h, double lambda) {
  if (f && h && f->tangency() != h->tangency()) {
    throw Error(ErrorKind::InvalidArgument, "force and perturbation must both be tangent or both x-only");
  }
  const bool x_only = (f && f->tangency() == Tangency::XOnly) || (h && h->tangency() == Tangency::XOnly);
  auto sum = [f, h, lambda](double t, const Eigen::VectorXd& xi, const Eigen::VectorXd& eta, int n) {
    Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
    if (f) a += (*f)(t, xi, eta);
    if (h && lambda != 0.0) a += lambda * (*h)(t, xi, eta);
    return a;
  };
  if (!x_only) {
    const int k = M.dim();
    return constrained_motion(M, [sum, k](double t, const Eigen::VectorXd& xi, const Eigen::VectorXd& eta) {
      return sum(t, xi, eta, k);
    });
  }
  return [M, sum](double t, const Eigen::VectorXd& xi, const Eigen::VectorXd& eta) {
    const ConstraintGeometry geo = M.geometry(xi);
    const int m = M.m();
    const int s = M.s();
    const Eigen::MatrixXd B = geo.jacobian.rightCols(s);
    check_b(M, B);
    const Eigen::VectorXd e = sum(t, xi, eta, m);
    Eigen::VectorXd out(m + s);
    out.head(m) = e;
    out.tail(s) = -B.partialPivLu().solve(geo.jacobian.leftCols(m) * e - curvature_term(geo, eta));
    return out;
  };
}

Acceleration tangent_part(const ImplicitManifold& M, Acceleration field) {
  return [M, field = std::move(field)](double t, const Eigen::VectorXd& xi, const Eigen::VectorXd& eta) {
    return tangent_project(M, xi, field(t, xi, eta));
  };
}

double check_tangency(const ImplicitManifold& M, const ForceField& f, const std::vector<PhaseState>& states,
                      double tol) {
  if (f.tangency() != Tangency::DeclaredTangent) return 0.0;
  double worst = 0.0;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> tdist(0.0, f.kind() == ForceKind::Periodic ? f.period() : 1.0);
  for (const PhaseState& st : states) {
    const Eigen::VectorXd v = f(tdist(rng), st.xi, st.eta);
    const double d = (M.jacobian(st.xi) * v).cwiseAbs().maxCoeff();
    worst = std::max(worst, d);
    if (d > tol * (1.0 + v.norm())) {
      throw Error(ErrorKind::TangencyViolation,
                  "declared-tangent force fails g' f = 0 (defect " + std::to_string(d) + ")");
    }
  }
  return worst;
}

double check_periodicity(const ForceField& h, const std::vector<PhaseState>& states, std::mt19937_64& rng,
                         double tol) {
  if (h.kind() != ForceKind::Periodic) return 0.0;
  std::uniform_real_distribution<double> tdist(-h.period(), 2.0 * h.period());
  double worst = 0.0;
  for (const PhaseState& st : states) {
    const double t = tdist(rng);
    const Eigen::VectorXd a = h(t, st.xi, st.eta);
    const Eigen::VectorXd b = h(t + h.period(), st.xi, st.eta);
    const double d = (a - b).cwiseAbs().maxCoeff();
    worst = std::max(worst, d);
    if (d > tol * (1.0 + a.norm())) {
      throw Error(ErrorKind::InvalidArgument, "force is not periodic with the declared period");
    }
  }
  return worst;
}

namespace {

struct Deriv {
  Eigen::VectorXd dxi;
  Eigen::VectorXd deta;
};

Deriv rhs(const Acceleration& accel, double t, const Eigen::VectorXd& xi, const Eigen::VectorXd& eta) {
  return {eta, accel(t, xi, eta)};
}

class Recorder {
 public:
  Recorder(const ImplicitManifold& M, const IntegrateOptions& opts, Trajectory& traj)
      : M_(M), opts_(opts), traj_(traj) {}

  void record(double t, const PhaseState& st, bool force) {
    const Eigen::MatrixXd G = M_.jacobian(st.xi);
    const double gd = M_.residual(st.xi).cwiseAbs().maxCoeff();
    const double td = (G * st.eta).cwiseAbs().maxCoeff();
    traj_.stats.max_g_drift = std::max(traj_.stats.max_g_drift, gd);
    traj_.stats.max_tangency_drift = std::max(traj_.stats.max_tangency_drift, td);
    if (!force && (count_++ % std::max(1, opts_.record_every)) != 0) return;
    traj_.t.push_back(t);
    traj_.states.push_back(st);
    if (opts_.potential) {
      const double v = evaluate(*opts_.potential, st.xi);
      traj_.stats.energy.push_back(0.5 * st.eta.squaredNorm() + v);
    }
  }

 private:
  const ImplicitManifold& M_;
  const IntegrateOptions& opts_;
  Trajectory& traj_;
  long count_ = 0;
};

void stabilize(const ImplicitManifold& M, PhaseState& st, const Eigen::VectorXd& previous_xi) {
  st.xi = project_to_manifold(M, st.xi, previous_xi, {50, true}).point;
  st.eta = tangent_project(M, st.xi, st.eta);
}

void check_finite(const PhaseState& st, double t) {
  if (!st.xi.allFinite() || !st.eta.allFinite()) {
    throw Error(ErrorKind::IntegrationFailure, "state became non-finite at t = " + std::to_string(t));
  }
}

PhaseState rk4_step(const Acceleration& accel, double t, const PhaseState& st, double h) {
  const Deriv k1 = rhs(accel, t, st.xi, st.eta);
  const Deriv k2 = rhs(accel, t + 0.5 * h, st.xi + 0.5 * h * k1.dxi, st.eta + 0.5 * h * k1.deta);
  const Deriv k3 = rhs(accel, t + 0.5 * h, st.xi + 0.5 * h * k2.dxi, st.eta + 0.5 * h * k2.deta);
  const Deriv k4 = rhs(accel, t + h, st.xi + h * k3.dxi, st.eta + h * k3.deta);
  PhaseState out;
  out.xi = st.xi + (h / 6.0) * (k1.dxi + 2.0 * k2.dxi + 2.0 * k3.dxi + k4.dxi);
  out.eta = st.eta + (h / 6.0) * (k1.deta + 2.0 * k2.deta + 2.0 * k3.deta + k4.deta);
  return out;
}

// Dormand-Prince 5(4) coefficients.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

struct Rk45Result {
  PhaseState next;
  double error_norm;
};

Rk45Result rk45_step(const Acceleration& accel, double t, const PhaseState& st, double h, double rtol, double atol) {
  const int k = static_cast<int>(st.xi.size());
  Eigen::VectorXd y(2 * k);
  y << st.xi, st.eta;
  auto f = [&](double tt, const Eigen::VectorXd& z) {
    Eigen::VectorXd d(2 * k);
    d << z.tail(k), accel(tt, z.head(k), z.tail(k));
    return d;
  };
  const Eigen::VectorXd k1 = f(t, y);
  const Eigen::VectorXd k2 = f(t + c2 * h, y + h * a21 * k1);
  const Eigen::VectorXd k3 = f(t + c3 * h, y + h * (a31 * k1 + a32 * k2));
  const Eigen::VectorXd k4 = f(t + c4 * h, y + h * (a41 * k1 + a42 * k2 + a43 * k3));
  const Eigen::VectorXd k5 = f(t + c5 * h, y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
  const Eigen::VectorXd k6 = f(t + h, y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
  const Eigen::VectorXd y5 = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
  const Eigen::VectorXd k7 = f(t + h, y5);
  const Eigen::VectorXd err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
  const Eigen::VectorXd scale = (atol + rtol * y.cwiseAbs().cwiseMax(y5.cwiseAbs()).array()).matrix();
  const double en = std::sqrt((err.array() / scale.array()).square().mean());
  return {{y5.head(k), y5.tail(k)}, en};
}

}  // namespace

Trajectory integrate(const ImplicitManifold& M, const Acceleration& accel, const PhaseState& state0, double t0,
                     double t1, const IntegrateOptions& opts) {
  if (!(t1 > t0)) throw Error(ErrorKind::InvalidArgument, "integration interval must have t1 > t0");
  if (!(opts.h > 0.0)) throw Error(ErrorKind::InvalidArgument, "step must be positive");
  Trajectory traj;
  Recorder rec(M, opts, traj);
  PhaseState st = state0;
  rec.record(t0, st, true);

  if (opts.method == Method::Rk4Proj) {
    const long n = std::max(1L, static_cast<long>(std::ceil((t1 - t0) / opts.h - 1e-9)));
    const double h = (t1 - t0) / static_cast<double>(n);
    for (long i = 0; i < n; ++i) {
      const double t = t0 + static_cast<double>(i) * h;
      PhaseState next = rk4_step(accel, t, st, h);
      check_finite(next, t + h);
      if (opts.project) stabilize(M, next, st.xi);
      st = std::move(next);
      ++traj.stats.steps;
      rec.record(i + 1 == n ? t1 : t0 + static_cast<double>(i + 1) * h, st, i + 1 == n);
    }
    return traj;
  }

  double t = t0;
  double h = std::min(opts.h, t1 - t0);
  while (t < t1) {
    if (t + h > t1) h = t1 - t;
    const Rk45Result step = rk45_step(accel, t, st, h, opts.rtol, opts.atol);
    if (!std::isfinite(step.error_norm)) {
      h *= 0.25;
    } else if (step.error_norm <= 1.0) {
      PhaseState next = step.next;
      check_finite(next, t + h);
      if (opts.project) stabilize(M, next, st.xi);
      st = std::move(next);
      t = (t1 - (t + h) < 1e-14 * std::max(1.0, std::abs(t1))) ? t1 : t + h;
      ++traj.stats.steps;
      rec.record(t, st, t == t1);
      const double grow = step.error_norm > 0.0 ? 0.9 * std::pow(step.error_norm, -0.2) : 5.0;
      h *= std::clamp(grow, 0.2, 5.0);
    } else {
      h *= std::clamp(0.9 * std::pow(step.error_norm, -0.25), 0.1, 0.9);
    }
    if (h < opts.h_min) throw Error(ErrorKind::StepUnderflow, "adaptive step fell below h_min at t = " + std::to_string(t));
  }
  return traj;
}

void write_csv(std::ostream& os, const ImplicitManifold& M, const Trajectory& traj) {
  const int m = M.m();
  const int s = M.s();
  os << "t";
  for (int i = 1; i <= m; ++i) os << ",x" << i;
  for (int i = 1; i <= s; ++i) os << ",y" << i;
  for (int i = 1; i <= m; ++i) os << ",u" << i;
  for (int i = 1; i <= s; ++i) os << ",v" << i;
  os << ",g_res_max\n";
  const auto old_precision = os.precision(17);
  for (std::size_t j = 0; j < traj.t.size(); ++j) {
    const PhaseState& st = traj.states[j];
    os << traj.t[j];
    for (int i = 0; i < st.xi.size(); ++i) os << ',' << st.xi[i];
    for (int i = 0; i < st.eta.size(); ++i) os << ',' << st.eta[i];
    os << ',' << M.residual(st.xi).cwiseAbs().maxCoeff() << '\n';
  }
  os.precision(old_precision);
}

}  // namespace implicit_motion
