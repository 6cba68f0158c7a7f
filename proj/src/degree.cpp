#include "implicit_motion/degree.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

namespace implicit_motion {

SquareMap square_map(const VectorExpr& F) {
  if (F.n_in() != F.n_out()) throw Error(ErrorKind::InvalidArgument, "map is not square");
  const int k = F.n_in();
  std::vector<int> active(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) active[i] = i;
  return SquareMap(k, [F, active](const Eigen::VectorXd& p) {
    MapValue out;
    F.jacobian(p, active, out.value, out.jacobian);
    return out;
  });
}

Quadrature gauss_legendre(int n) {
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "quadrature needs at least one node");
  Quadrature q{Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0;
      double p1 = x;
      for (int j = 2; j <= n; ++j) {
        const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0;
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) <= 1e-16) break;
    }
    // recompute derivative at the converged node
    double p0 = 1.0;
    double p1 = x;
    for (int j = 2; j <= n; ++j) {
      const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
      p0 = p1;
      p1 = p2;
    }
    dp = n == 1 ? 1.0 : n * (x * p1 - p0) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    q.nodes[i] = -x;
    q.nodes[n - 1 - i] = x;
    q.weights[i] = w;
    q.weights[n - 1 - i] = w;
  }
  return q;
}

MeanField::MeanField(ForceField h, int initial_nodes, int max_nodes) : h_(std::move(h)) {
  if (h_.kind() != ForceKind::Periodic) throw Error(ErrorKind::InvalidArgument, "mean field needs a periodic force");
  for (int n = initial_nodes; n <= max_nodes; n *= 2) levels_.push_back(gauss_legendre(n));
  if (levels_.size() < 2) throw Error(ErrorKind::InvalidArgument, "quadrature needs room to double");
}

MapValue MeanField::integrate(const Eigen::VectorXd& xi, bool jacobian) const {
  const double T = h_.period();
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(xi.size());
  auto average = [&](const Quadrature& q) {
    MapValue acc;
    acc.value = Eigen::VectorXd::Zero(h_.n_out());
    if (jacobian) acc.jacobian = Eigen::MatrixXd::Zero(h_.n_out(), xi.size());
    for (int i = 0; i < q.nodes.size(); ++i) {
      const double t = 0.5 * T * (q.nodes[i] + 1.0);
      const double w = 0.5 * q.weights[i];
      if (jacobian) {
        Eigen::VectorXd v;
        Eigen::MatrixXd J;
        h_.position_jacobian(t, xi, v, J);
        acc.value += w * v;
        acc.jacobian += w * J;
      } else {
        acc.value += w * h_(t, xi, zero);
      }
    }
    return acc;
  };
  MapValue prev = average(levels_[0]);
  for (std::size_t l = 1; l < levels_.size(); ++l) {
    MapValue cur = average(levels_[l]);
    const double scale = std::max(1.0, cur.value.cwiseAbs().maxCoeff());
    if ((cur.value - prev.value).cwiseAbs().maxCoeff() <= 1e-12 * scale) return cur;
    prev = std::move(cur);
  }
  throw Error(ErrorKind::QuadratureNotConverged, "mean-value quadrature did not converge");
}

Eigen::VectorXd MeanField::operator()(const Eigen::VectorXd& xi) const { return integrate(xi, false).value; }
MapValue MeanField::with_jacobian(const Eigen::VectorXd& xi) const { return integrate(xi, true); }

MeanField mean_field(const ImplicitManifold& M, const ForceField& h) {
  if (h.m() != M.m() || h.s() != M.s()) throw Error(ErrorKind::InvalidArgument, "field and manifold dimensions differ");
  return MeanField(h);
}

AugmentedMap::AugmentedMap(const ImplicitManifold& M, FirstBlock first_block, AugmentedKind kind)
    : M_(M), first_(std::move(first_block)), kind_(kind) {}

SquareMap AugmentedMap::as_map() const {
  const ImplicitManifold M = M_;
  const FirstBlock first = first_;
  return SquareMap(M.dim(), [M, first](const Eigen::VectorXd& xi) {
    const int m = M.m();
    const int s = M.s();
    const MapValue f = first(xi);
    if (f.value.size() < m) throw Error(ErrorKind::InvalidArgument, "first block has fewer than m components");
    MapValue out;
    out.value.resize(m + s);
    out.jacobian.resize(m + s, m + s);
    out.value.head(m) = f.value.head(m);
    out.jacobian.topRows(m) = f.jacobian.topRows(m);
    Eigen::VectorXd gval;
    Eigen::MatrixXd gjac;
    std::vector<int> active(static_cast<std::size_t>(m + s));
    for (int i = 0; i < m + s; ++i) active[i] = i;
    M.g().jacobian(xi, active, gval, gjac);
    out.value.tail(s) = gval;
    out.jacobian.bottomRows(s) = gjac;
    return out;
  });
}

AugmentedMap::FirstBlock first_block_of(const ForceField& f) {
  return [f](const Eigen::VectorXd& xi) {
    MapValue out;
    f.position_jacobian(0.0, xi, out.value, out.jacobian);
    return out;
  };
}

AugmentedMap::FirstBlock first_block_of(const MeanField& w) {
  return [w](const Eigen::VectorXd& xi) { return w.with_jacobian(xi); };
}

std::string_view to_string(DegreeMethod m) {
  switch (m) {
    case DegreeMethod::SignSum: return "sign_sum";
    case DegreeMethod::Winding2d: return "winding2d";
    case DegreeMethod::Both: return "both";
  }
  return "?";
}

namespace {

std::optional<MapValue> safe_eval(const SquareMap& F, const Eigen::VectorXd& p) {
  try {
    MapValue v = F(p);
    if (!v.value.allFinite() || !v.jacobian.allFinite()) return std::nullopt;
    return v;
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Domain || e.kind() == ErrorKind::NonSmoothPoint) return std::nullopt;
    throw;
  }
}

std::optional<Eigen::VectorXd> damped_newton(const SquareMap& F, Eigen::VectorXd x, const Box& box,
                                             const ZeroSearchOptions& opts) {
  const Eigen::VectorXd margin = 0.25 * box.widths();
  auto inside = [&](const Eigen::VectorXd& p) {
    for (int i = 0; i < p.size(); ++i) {
      if (p[i] < box.lower[i] - margin[i] || p[i] > box.upper[i] + margin[i]) return false;
    }
    return true;
  };
  std::optional<MapValue> fx = safe_eval(F, x);
  if (!fx) return std::nullopt;
  for (int it = 0; it < opts.max_newton; ++it) {
    const double fn = fx->value.norm();
    if (fn == 0.0) break;
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(fx->jacobian);
    if (!lu.isInvertible()) return std::nullopt;
    const Eigen::VectorXd dx = lu.solve(-fx->value);
    if (!dx.allFinite()) return std::nullopt;
    bool accepted = false;
    double t = 1.0;
    Eigen::VectorXd trial;
    std::optional<MapValue> ft;
    for (; t >= 1e-8; t *= 0.5) {
      trial = x + t * dx;
      if (!inside(trial)) continue;
      ft = safe_eval(F, trial);
      if (!ft) continue;
      const double tn = ft->value.norm();
      if (tn < (1.0 - 1e-4 * t) * fn || tn <= opts.newton_tol) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    x = trial;
    fx = std::move(ft);
    if (t * dx.norm() <= opts.newton_tol * (1.0 + x.norm())) break;
  }
  if (fx->value.norm() <= opts.accept_tol) return x;
  return std::nullopt;
}

double distance_to_boundary(const Box& box, const Eigen::VectorXd& p) {
  double d = std::numeric_limits<double>::infinity();
  for (int i = 0; i < p.size(); ++i) d = std::min({d, p[i] - box.lower[i], box.upper[i] - p[i]});
  return d;
}

}  // namespace

ZeroSet find_zeros(const SquareMap& F, const Box& box, const ZeroSearchOptions& opts) {
  const int k = F.dim();
  if (box.dim() != k) throw Error(ErrorKind::InvalidArgument, "box dimension differs from map dimension");
  if (!box.bounded()) throw Error(ErrorKind::InvalidArgument, "zero search needs a bounded box");

  std::vector<Eigen::VectorXd> starts;
  long total = 1;
  for (int i = 0; i < k; ++i) total *= opts.grid;
  starts.reserve(static_cast<std::size_t>(total + opts.random_starts));
  const Eigen::VectorXd w = box.widths();
  for (long idx = 0; idx < total; ++idx) {
    Eigen::VectorXd p(k);
    long r = idx;
    for (int i = 0; i < k; ++i) {
      const long c = r % opts.grid;
      r /= opts.grid;
      p[i] = box.lower[i] + (static_cast<double>(c) + 0.5) * w[i] / opts.grid;
    }
    starts.push_back(std::move(p));
  }
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int j = 0; j < opts.random_starts; ++j) {
    Eigen::VectorXd p(k);
    for (int i = 0; i < k; ++i) p[i] = box.lower[i] + unit(rng) * w[i];
    starts.push_back(std::move(p));
  }

  std::vector<std::optional<Eigen::VectorXd>> found(starts.size());
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < starts.size(); i += stride) found[i] = damped_newton(F, starts[i], box, opts);
  };
  const int jobs = std::max(1, opts.jobs);
  if (jobs == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(work, static_cast<std::size_t>(j), static_cast<std::size_t>(jobs));
    for (auto& t : pool) t.join();
  }

  // cluster in start order so the result does not depend on scheduling
  std::vector<Eigen::VectorXd> reps;
  std::vector<double> rep_norm;
  for (const auto& f : found) {
    if (!f) continue;
    const double n = F.value(*f).norm();
    bool merged = false;
    for (std::size_t c = 0; c < reps.size(); ++c) {
      if ((reps[c] - *f).norm() <= opts.cluster_radius) {
        if (n < rep_norm[c]) {
          reps[c] = *f;
          rep_norm[c] = n;
        }
        merged = true;
        break;
      }
    }
    if (!merged) {
      reps.push_back(*f);
      rep_norm.push_back(n);
    }
  }

  ZeroSet out;
  const double edge = 1e-6 * box.diameter();
  std::mt19937_64 confirm_rng(opts.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (const Eigen::VectorXd& z : reps) {
    const double d = distance_to_boundary(box, z);
    if (d < -edge) continue;
    if (d <= edge) {
      out.boundary.push_back(z);
      continue;
    }
    Eigen::VectorXd dir(k);
    for (int i = 0; i < k; ++i) dir[i] = gauss(confirm_rng);
    const Eigen::VectorXd start = z + (1e-4 * box.diameter() / dir.norm()) * dir;
    const auto back = damped_newton(F, start, box, opts);
    out.interior.push_back(z);
    out.confirmed.push_back(back && (*back - z).norm() <= std::max(opts.cluster_radius, 1e-6 * (1.0 + z.norm())));
  }
  return out;
}

ZeroInfo describe_zero(const SquareMap& F, const Eigen::VectorXd& zero, double jacobian_scale) {
  const MapValue v = F(zero);
  const int k = F.dim();
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(v.jacobian);
  const auto& sv = svd.singularValues();
  ZeroInfo z;
  z.point = zero;
  z.residual = v.value.norm();
  z.det = v.jacobian.determinant();
  z.cond = sv[k - 1] > 0.0 ? sv[0] / sv[k - 1] : std::numeric_limits<double>::infinity();
  z.degenerate = !(sv[k - 1] >= 1e-8 * std::max(sv[0], jacobian_scale)) || sv[0] == 0.0;
  z.index = z.degenerate ? 0 : (z.det > 0.0 ? 1 : -1);
  return z;
}

double jacobian_scale(const SquareMap& F, const Box& box) {
  const int k = box.dim();
  double scale = 0.0;
  auto visit = [&](const Eigen::VectorXd& p) {
    try {
      scale = std::max(scale, F(p).jacobian.operatorNorm());
    } catch (const Error&) {
    }
  };
  visit(box.center());
  for (long mask = 0; mask < (1L << k); ++mask) {
    Eigen::VectorXd p(k);
    for (int i = 0; i < k; ++i) p[i] = (mask >> i) & 1 ? box.upper[i] : box.lower[i];
    visit(p);
  }
  return scale;
}

int index_at(const SquareMap& F, const Eigen::VectorXd& zero) {
  const ZeroInfo z = describe_zero(F, zero);
  if (z.degenerate) throw Error(ErrorKind::DegenerateZero, "zero is degenerate; sign det DF is not an index");
  return z.index;
}

namespace {

double face_min(const SquareMap& F, const Box& box, int n) {
  const int k = box.dim();
  double best = std::numeric_limits<double>::infinity();
  long per_face = 1;
  for (int i = 0; i < k - 1; ++i) per_face *= (n + 1);
  for (int axis = 0; axis < k; ++axis) {
    for (int side = 0; side < 2; ++side) {
      for (long idx = 0; idx < per_face; ++idx) {
        Eigen::VectorXd p(k);
        long r = idx;
        for (int i = 0; i < k; ++i) {
          if (i == axis) {
            p[i] = side == 0 ? box.lower[i] : box.upper[i];
            continue;
          }
          const long c = r % (n + 1);
          r /= (n + 1);
          p[i] = box.lower[i] + (box.upper[i] - box.lower[i]) * static_cast<double>(c) / n;
        }
        best = std::min(best, F.value(p).norm());
      }
    }
  }
  return best;
}

long face_samples(int k, int n) {
  long per_face = 1;
  for (int i = 0; i < k - 1; ++i) per_face *= (n + 1);
  return 2L * k * per_face;
}

// Signed angle from a to b in (-pi, pi].
double turn(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return std::atan2(a.x() * b.y() - a.y() * b.x(), a.dot(b));
}

}  // namespace

double boundary_min_norm(const SquareMap& F, const Box& box, int samples, long budget) {
  const int k = box.dim();
  int n = std::max(2, samples);
  double best = face_min(F, box, n);
  long used = face_samples(k, n);
  for (;;) {
    const int next = 2 * n;
    const long cost = face_samples(k, next);
    if (used + cost > budget) break;
    const double refined = std::min(best, face_min(F, box, next));
    used += cost;
    n = next;
    const bool stable = std::abs(refined - best) <= 1e-2 * best;
    best = refined;
    if (stable) break;
  }
  return best;
}

int degree_winding2d(const SquareMap& F, const Box& box) {
  if (F.dim() != 2 || box.dim() != 2) throw Error(ErrorKind::InvalidArgument, "winding degree needs a planar map");
  const Eigen::Vector2d corners[4] = {
      {box.lower[0], box.lower[1]},
      {box.upper[0], box.lower[1]},
      {box.upper[0], box.upper[1]},
      {box.lower[0], box.upper[1]},
  };
  const double min_len = 1e-12 * box.diameter();
  double scale = 0.0;
  auto value = [&](const Eigen::Vector2d& p) {
    const Eigen::VectorXd v = F.value(p);
    scale = std::max(scale, v.norm());
    return Eigen::Vector2d(v[0], v[1]);
  };
  double total = 0.0;
  double min_norm = std::numeric_limits<double>::infinity();

  // Bisects [a, b] until each increment of arg F is below pi/4.
  std::function<void(const Eigen::Vector2d&, const Eigen::Vector2d&, const Eigen::Vector2d&, const Eigen::Vector2d&)>
      edge = [&](const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& fa,
                 const Eigen::Vector2d& fb) {
        min_norm = std::min({min_norm, fa.norm(), fb.norm()});
        if (fa.norm() == 0.0 || fb.norm() == 0.0) {
          throw Error(ErrorKind::NotAdmissible, "map vanishes on the box boundary");
        }
        const double d = turn(fa, fb);
        if (std::abs(d) < std::numbers::pi / 4) {
          total += d;
          return;
        }
        if ((b - a).norm() < min_len) {
          throw Error(ErrorKind::NotAdmissible, "argument of the map is unresolved on the boundary");
        }
        const Eigen::Vector2d mid = 0.5 * (a + b);
        const Eigen::Vector2d fm = value(mid);
        edge(a, mid, fa, fm);
        edge(mid, b, fm, fb);
      };

  constexpr int kInitial = 64;
  for (int c = 0; c < 4; ++c) {
    const Eigen::Vector2d& a = corners[c];
    const Eigen::Vector2d& b = corners[(c + 1) % 4];
    Eigen::Vector2d prev_p = a;
    Eigen::Vector2d prev_f = value(a);
    for (int i = 1; i <= kInitial; ++i) {
      const Eigen::Vector2d p = a + (b - a) * (static_cast<double>(i) / kInitial);
      const Eigen::Vector2d fp = value(p);
      edge(prev_p, p, prev_f, fp);
      prev_p = p;
      prev_f = fp;
    }
  }
  if (min_norm <= 1e-12 * std::max(1.0, scale)) {
    throw Error(ErrorKind::NotAdmissible, "map is numerically zero on the box boundary");
  }
  const double turns = total / (2.0 * std::numbers::pi);
  const double rounded = std::round(turns);
  if (std::abs(turns - rounded) > 1e-6) throw Error(ErrorKind::NotAdmissible, "winding number is not an integer");
  return static_cast<int>(rounded);
}

DegreeReport degree_sign_sum(const SquareMap& F, const Box& box, const DegreeOptions& opts) {
  DegreeReport report;
  report.boundary_min_norm = boundary_min_norm(F, box, opts.boundary_samples, opts.boundary_budget);
  const ZeroSet zs = find_zeros(F, box, opts.search);
  report.boundary_zeros = zs.boundary;
  if (!(report.boundary_min_norm > opts.admissibility_threshold)) {
    std::ostringstream msg;
    msg << "min |F| on the boundary is " << report.boundary_min_norm << " (threshold "
        << opts.admissibility_threshold << ")";
    throw Error(ErrorKind::NotAdmissible, msg.str());
  }
  if (!zs.boundary.empty()) {
    throw Error(ErrorKind::NotAdmissible, std::to_string(zs.boundary.size()) + " zero(s) on the box boundary");
  }

  const int k = F.dim();
  int sum = 0;
  bool used_winding = false;
  const double jscale = zs.interior.empty() ? 0.0 : jacobian_scale(F, box);
  for (std::size_t i = 0; i < zs.interior.size(); ++i) {
    ZeroInfo z = describe_zero(F, zs.interior[i], jscale);
    z.confirmed = zs.confirmed[i];
    if (z.degenerate) {
      if (k != 2) throw Error(ErrorKind::DegenerateZero, "degenerate zero in dimension > 2; no index assigned");
      // index by excision: winding number on a small box around the zero
      double r = 1e-2 * box.diameter();
      r = std::min(r, 0.5 * distance_to_boundary(box, z.point));
      for (std::size_t j = 0; j < zs.interior.size(); ++j) {
        if (j != i) r = std::min(r, 0.3 * (zs.interior[j] - z.point).cwiseAbs().maxCoeff());
      }
      const Eigen::VectorXd half = Eigen::VectorXd::Constant(2, r);
      try {
        z.index = degree_winding2d(F, Box(z.point - half, z.point + half));
      } catch (const Error& e) {
        throw Error(ErrorKind::DegenerateZero, std::string("local winding failed: ") + e.what());
      }
      used_winding = true;
    }
    sum += z.index;
    report.zeros.push_back(std::move(z));
  }
  report.degree = sum;
  report.field_degree = sum;
  report.method = used_winding ? DegreeMethod::Both : DegreeMethod::SignSum;
  report.admissible = true;
  std::ostringstream note;
  note << "zeros enumerated by multistart Newton (" << opts.search.grid << "^" << k << " grid + "
       << opts.search.random_starts << " random starts); a zero with no basin among the starts would be missed";
  if (k == 2) note << "; cross-check with the winding number";
  report.note = note.str();
  return report;
}

DegreeReport tangent_field_degree(const ImplicitManifold& M, const AugmentedMap::FirstBlock& first_block,
                                  const Box& box, AugmentedKind kind, const DegreeOptions& opts) {
  const AugmentedMap aug(M, first_block, kind);
  DegreeReport report = degree_sign_sum(aug.as_map(), box, opts);
  int sign = 0;
  auto sign_at = [&](const Eigen::VectorXd& p) {
    const Eigen::MatrixXd G = M.jacobian(p);
    const int sg = check_b(M, G.rightCols(M.s()));
    if (sign != 0 && sg != sign) throw Error(ErrorKind::SignFlip, "sign of det d2g differs between zeros");
    sign = sg;
  };
  for (const ZeroInfo& z : report.zeros) sign_at(z.point);
  if (sign == 0) sign_at(box.center());
  report.s_sign = sign;
  report.field_degree = sign * report.degree;
  return report;
}

void write_report(std::ostream& os, const DegreeReport& r) {
  const auto old_precision = os.precision(17);
  os << "degree: " << r.degree << '\n';
  os << "s_sign: " << r.s_sign << '\n';
  os << "field_degree: " << r.field_degree << '\n';
  os << "admissible: " << (r.admissible ? "true" : "false") << '\n';
  os << "method: " << to_string(r.method) << '\n';
  os << "boundary_min_norm: " << r.boundary_min_norm << '\n';
  os << "zeros: " << r.zeros.size() << '\n';
  for (std::size_t i = 0; i < r.zeros.size(); ++i) {
    const ZeroInfo& z = r.zeros[i];
    os << "zero_" << i << ": point=(";
    for (int j = 0; j < z.point.size(); ++j) os << (j ? "," : "") << z.point[j];
    os << ") index=" << z.index << " detDF=" << z.det << " cond=" << z.cond
       << " confirmed=" << (z.confirmed ? "true" : "false") << '\n';
  }
  os << "boundary_zeros: " << r.boundary_zeros.size() << '\n';
  os << "note: " << r.note << '\n';
  os.precision(old_precision);
}

void write_zero_csv(std::ostream& os, const DegreeReport& r, int m, int s) {
  for (int i = 1; i <= m; ++i) os << 'x' << i << ',';
  for (int i = 1; i <= s; ++i) os << 'y' << i << ',';
  os << "index,detDF,cond\n";
  const auto old_precision = os.precision(17);
  for (const ZeroInfo& z : r.zeros) {
    for (int j = 0; j < z.point.size(); ++j) os << z.point[j] << ',';
    os << z.index << ',' << z.det << ',' << z.cond << '\n';
  }
  os.precision(old_precision);
}

}  // namespace implicit_motion
