#pragma once

// Reference computations used by the tests. Nothing here calls into the
// expression engine or the manifold code, so agreement with the library is
// evidence rather than tautology.

#include <charconv>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

// Sparse multivariate polynomial with exact derivatives.
struct Monomial {
  double coef = 0.0;
  std::vector<int> powers;
};

struct Poly {
  int nvars = 0;
  std::vector<Monomial> terms;

  double value(const Eigen::VectorXd& p) const {
    double out = 0.0;
    for (const Monomial& t : terms) {
      double v = t.coef;
      for (int i = 0; i < nvars; ++i) v *= std::pow(p[i], t.powers[i]);
      out += v;
    }
    return out;
  }

  Eigen::VectorXd gradient(const Eigen::VectorXd& p) const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(nvars);
    for (const Monomial& t : terms) {
      for (int k = 0; k < nvars; ++k) {
        if (t.powers[k] == 0) continue;
        double v = t.coef * t.powers[k];
        for (int i = 0; i < nvars; ++i) v *= std::pow(p[i], t.powers[i] - (i == k ? 1 : 0));
        g[k] += v;
      }
    }
    return g;
  }

  Eigen::MatrixXd hessian(const Eigen::VectorXd& p) const {
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(nvars, nvars);
    for (const Monomial& t : terms) {
      for (int a = 0; a < nvars; ++a) {
        for (int b = 0; b < nvars; ++b) {
          std::vector<int> e = t.powers;
          double c = t.coef * e[a];
          e[a] -= 1;
          c *= e[b];
          e[b] -= 1;
          if (c == 0.0) continue;
          double v = c;
          for (int i = 0; i < nvars; ++i) v *= std::pow(p[i], e[i]);
          H(a, b) += v;
        }
      }
    }
    return H;
  }

  std::string to_expr(const std::vector<std::string>& names) const {
    std::string out;
    for (const Monomial& t : terms) {
      char buf[64];
      auto res = std::to_chars(buf, buf + sizeof buf, t.coef);
      std::string c(buf, res.ptr);
      std::string term = t.coef < 0 ? "(" + c + ")" : c;
      for (int i = 0; i < nvars; ++i) {
        if (t.powers[i] == 0) continue;
        term += "*" + names[i];
        if (t.powers[i] > 1) term += "^" + std::to_string(t.powers[i]);
      }
      out += out.empty() ? term : " + " + term;
    }
    return out.empty() ? "0" : out;
  }
};

inline Monomial mono(double c, std::vector<int> powers) { return Monomial{c, std::move(powers)}; }

// A system g: R^{m+s} -> R^s given by polynomials.
struct PolySystem {
  int m = 0;
  int s = 0;
  std::vector<Poly> g;

  std::vector<std::string> sources(const std::vector<std::string>& names) const {
    std::vector<std::string> out;
    for (const Poly& p : g) out.push_back(p.to_expr(names));
    return out;
  }
  Eigen::VectorXd value(const Eigen::VectorXd& p) const {
    Eigen::VectorXd v(s);
    for (int i = 0; i < s; ++i) v[i] = g[i].value(p);
    return v;
  }
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& p) const {
    Eigen::MatrixXd J(s, m + s);
    for (int i = 0; i < s; ++i) J.row(i) = g[i].gradient(p).transpose();
    return J;
  }
  // sigma_i = -eta^T Hess(g_i) eta
  Eigen::VectorXd sigma(const Eigen::VectorXd& p, const Eigen::VectorXd& eta) const {
    Eigen::VectorXd v(s);
    for (int i = 0; i < s; ++i) v[i] = -eta.dot(g[i].hessian(p) * eta);
    return v;
  }
};

// x^2/2 - y - 2
inline PolySystem parabola() {
  return {1, 1, {Poly{2, {mono(0.5, {2, 0}), mono(-1, {0, 1}), mono(-2, {0, 0})}}}};
}

// z - x^2 - y^2 over (x, y, z)
inline PolySystem paraboloid() {
  return {2, 1, {Poly{3, {mono(1, {0, 0, 1}), mono(-1, {2, 0, 0}), mono(-1, {0, 2, 0})}}}};
}

// (z^3 + z - x, z - y + x^2) over (x, y, z)
inline PolySystem space_curve() {
  return {1, 2,
          {Poly{3, {mono(1, {0, 0, 3}), mono(1, {0, 0, 1}), mono(-1, {1, 0, 0})}},
           Poly{3, {mono(1, {0, 0, 1}), mono(-1, {0, 1, 0}), mono(1, {2, 0, 0})}}}};
}

// g_i = y_i + small random polynomial of degree <= 3, so d2g stays close to
// the identity near the origin.
inline PolySystem random_system(std::mt19937_64& rng, int m, int s) {
  std::uniform_real_distribution<double> coef(-0.3, 0.3);
  std::uniform_int_distribution<int> deg(0, 3);
  std::uniform_int_distribution<int> var(0, m + s - 1);
  PolySystem sys{m, s, {}};
  for (int i = 0; i < s; ++i) {
    Poly p{m + s, {}};
    std::vector<int> lead(static_cast<std::size_t>(m + s), 0);
    lead[static_cast<std::size_t>(m + i)] = 1;
    p.terms.push_back(mono(1.0, lead));
    for (int k = 0; k < 5; ++k) {
      std::vector<int> pw(static_cast<std::size_t>(m + s), 0);
      const int d = 1 + deg(rng) % 3;
      for (int j = 0; j < d; ++j) ++pw[static_cast<std::size_t>(var(rng))];
      p.terms.push_back(mono(coef(rng), pw));
    }
    sys.g.push_back(p);
  }
  return sys;
}

// Minimum-norm solution of G r = sigma.
inline Eigen::VectorXd min_norm_reaction(const Eigen::MatrixXd& G, const Eigen::VectorXd& sigma) {
  return G.completeOrthogonalDecomposition().solve(sigma);
}

inline double bisect(const std::function<double(double)>& f, double a, double b) {
  double fa = f(a);
  for (int i = 0; i < 200 && b - a > 0.0; ++i) {
    const double c = 0.5 * (a + b);
    if (c == a || c == b) break;
    const double fc = f(c);
    if ((fc < 0) == (fa < 0)) {
      a = c;
      fa = fc;
    } else {
      b = c;
    }
  }
  return 0.5 * (a + b);
}

// Central-difference gradient and Hessian of a scalar function.
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& p,
                                   double h = 1e-6) {
  Eigen::VectorXd g(p.size());
  for (int i = 0; i < p.size(); ++i) {
    Eigen::VectorXd a = p, b = p;
    a[i] += h;
    b[i] -= h;
    g[i] = (f(a) - f(b)) / (2 * h);
  }
  return g;
}

inline Eigen::MatrixXd fd_hessian(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& p,
                                  double h = 1e-4) {
  const int n = static_cast<int>(p.size());
  Eigen::MatrixXd H(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      Eigen::VectorXd pp = p, pm = p, mp = p, mm = p;
      pp[i] += h; pp[j] += h;
      pm[i] += h; pm[j] -= h;
      mp[i] -= h; mp[j] += h;
      mm[i] -= h; mm[j] -= h;
      H(i, j) = (f(pp) - f(pm) - f(mp) + f(mm)) / (4 * h * h);
    }
  }
  return H;
}

// Winding number of a planar curve given by samples of F along the boundary,
// counting quadrant crossings; an independent route to the planar degree.
inline int quadrant_winding(const std::function<Eigen::Vector2d(const Eigen::Vector2d&)>& F, double x0, double x1,
                            double y0, double y1, int per_edge) {
  auto quadrant = [](const Eigen::Vector2d& v) {
    if (v.x() > 0 && v.y() >= 0) return 0;
    if (v.x() <= 0 && v.y() > 0) return 1;
    if (v.x() < 0 && v.y() <= 0) return 2;
    return 3;
  };
  std::vector<Eigen::Vector2d> pts;
  const Eigen::Vector2d c[4] = {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
  for (int e = 0; e < 4; ++e) {
    for (int i = 0; i < per_edge; ++i) {
      pts.push_back(c[e] + (c[(e + 1) % 4] - c[e]) * (static_cast<double>(i) / per_edge));
    }
  }
  int quarter_turns = 0;
  int q = quadrant(F(pts[0]));
  for (std::size_t i = 1; i <= pts.size(); ++i) {
    const int qn = quadrant(F(pts[i % pts.size()]));
    const int d = (qn - q + 4) % 4;
    if (d == 1) ++quarter_turns;
    if (d == 3) --quarter_turns;
    q = qn;
  }
  return quarter_turns / 4;
}

}  // namespace oracle
