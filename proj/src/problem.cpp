#include "implicit_motion/problem.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace implicit_motion {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

Error input_error(int line, const std::string& what) {
  return Error(ErrorKind::InvalidArgument, "line " + std::to_string(line) + ": " + what);
}

// Splits at commas outside parentheses.
std::vector<std::string_view> split_top(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  int depth = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '(' || s[i] == '[') ++depth;
    if (s[i] == ')' || s[i] == ']') --depth;
    if (s[i] == sep && depth == 0) {
      out.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  }
  out.push_back(trim(s.substr(start)));
  return out;
}

double constant_value(std::string_view text, const ConstantTable& constants) {
  const std::string_view t = trim(text);
  if (t == "inf" || t == "+inf") return std::numeric_limits<double>::infinity();
  if (t == "-inf") return -std::numeric_limits<double>::infinity();
  const Expr e = parse(t, {}, constants);
  return evaluate(e, Eigen::VectorXd());
}

int to_int(std::string_view v, int line) {
  try {
    std::size_t used = 0;
    const std::string s(trim(v));
    const int out = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing");
    return out;
  } catch (const std::exception&) {
    throw input_error(line, "expected an integer, got '" + std::string(v) + "'");
  }
}

Tangency to_tangency(std::string_view v, int line) {
  if (v == "tangent") return Tangency::DeclaredTangent;
  if (v == "x_only") return Tangency::XOnly;
  throw input_error(line, "kind must be tangent or x_only");
}

// Collects name1, name2, ... into a dense list.
void put_indexed(std::map<int, std::string>& dst, std::string_view key, std::string_view prefix, std::string_view value,
                 int line) {
  const int idx = to_int(key.substr(prefix.size()), line);
  if (idx < 1) throw input_error(line, "component indices start at 1");
  if (!dst.emplace(idx, std::string(value)).second) throw input_error(line, "duplicate key " + std::string(key));
}

std::vector<std::string> dense(const std::map<int, std::string>& src, std::string_view what) {
  std::vector<std::string> out;
  int expected = 1;
  for (const auto& [i, v] : src) {
    if (i != expected) throw Error(ErrorKind::InvalidArgument, std::string(what) + std::to_string(expected) + " is missing");
    out.push_back(v);
    ++expected;
  }
  return out;
}

bool has_prefix_index(std::string_view key, std::string_view prefix) {
  if (key.size() <= prefix.size() || key.substr(0, prefix.size()) != prefix) return false;
  return std::all_of(key.begin() + static_cast<long>(prefix.size()), key.end(),
                     [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; });
}

}  // namespace

Eigen::VectorXd parse_vector(std::string_view text, const ConstantTable& constants) {
  const auto parts = split_top(text, ',');
  Eigen::VectorXd out(static_cast<long>(parts.size()));
  for (std::size_t i = 0; i < parts.size(); ++i) out[static_cast<long>(i)] = constant_value(parts[i], constants);
  return out;
}

Box parse_box(std::string_view text, const ConstantTable& constants) {
  std::vector<double> lo;
  std::vector<double> hi;
  std::string_view rest = trim(text);
  while (!rest.empty()) {
    if (rest.front() != '[') throw Error(ErrorKind::Syntax, "box intervals look like [a, b] x [c, d]");
    const std::size_t close = rest.find(']');
    if (close == std::string_view::npos) throw Error(ErrorKind::Syntax, "unterminated box interval");
    const auto ends = split_top(rest.substr(1, close - 1), ',');
    if (ends.size() != 2) throw Error(ErrorKind::Syntax, "box interval needs two bounds");
    lo.push_back(constant_value(ends[0], constants));
    hi.push_back(constant_value(ends[1], constants));
    if (!(lo.back() < hi.back())) throw Error(ErrorKind::InvalidArgument, "box interval must have lower < upper");
    rest = trim(rest.substr(close + 1));
    if (rest.empty()) break;
    if (rest.front() != 'x') throw Error(ErrorKind::Syntax, "box intervals are joined by 'x'");
    rest = trim(rest.substr(1));
  }
  if (lo.empty()) throw Error(ErrorKind::Syntax, "empty box");
  return Box(Eigen::Map<Eigen::VectorXd>(lo.data(), static_cast<long>(lo.size())),
             Eigen::Map<Eigen::VectorXd>(hi.data(), static_cast<long>(hi.size())));
}

Problem parse_problem(std::string_view text) {
  Problem p;
  std::string section;
  std::set<std::string> seen_sections;
  std::map<int, std::string> g_parts;
  std::map<int, std::string> f_parts;
  std::map<int, std::string> h_parts;
  std::optional<std::string> manifold_box;
  std::optional<Tangency> h_kind;
  std::optional<std::string> period_text;
  std::vector<std::pair<int, std::pair<std::string, std::string>>> deferred;  // keys needing constants
  bool have_m = false;
  bool have_s = false;

  std::istringstream in{std::string(text)};
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string_view l = raw;
    if (const auto hash = l.find('#'); hash != std::string_view::npos) l = l.substr(0, hash);
    l = trim(l);
    if (l.empty()) continue;
    if (l.front() == '[') {
      if (l.back() != ']') throw input_error(line, "malformed section header");
      section = std::string(trim(l.substr(1, l.size() - 2)));
      static const std::set<std::string> known = {"constants", "manifold",  "force",     "perturbation",
                                                  "degree",    "continuation", "integrate", "expect"};
      if (!known.count(section)) throw input_error(line, "unknown section [" + section + "]");
      if (!seen_sections.insert(section).second) throw input_error(line, "repeated section [" + section + "]");
      if (section == "force") p.force.emplace();
      if (section == "perturbation") p.perturbation.emplace();
      continue;
    }
    const auto eq = l.find('=');
    if (eq == std::string_view::npos) throw input_error(line, "expected key = value");
    const std::string key(trim(l.substr(0, eq)));
    const std::string value(trim(l.substr(eq + 1)));
    if (key.empty()) throw input_error(line, "empty key");

    if (section.empty()) {
      if (key == "name") p.name = value;
      else if (key == "description") p.description = value;
      else throw input_error(line, "unknown top-level key " + key);
    } else if (section == "constants") {
      if (p.constants.count(key)) throw input_error(line, "constant " + key + " defined twice");
      p.constants[key] = constant_value(value, p.constants);
    } else if (section == "manifold") {
      if (key == "m") { p.m = to_int(value, line); have_m = true; }
      else if (key == "s") { p.s = to_int(value, line); have_s = true; }
      else if (has_prefix_index(key, "g")) put_indexed(g_parts, key, "g", value, line);
      else if (key == "box") manifold_box = value;
      else if (key == "on_tol") p.on_tol = constant_value(value, p.constants);
      else throw input_error(line, "unknown key " + key + " in [manifold]");
    } else if (section == "force") {
      if (key == "kind") p.force->tangency = to_tangency(value, line);
      else if (has_prefix_index(key, "f")) put_indexed(f_parts, key, "f", value, line);
      else if (key == "potential") p.force->potential = value;
      else throw input_error(line, "unknown key " + key + " in [force]");
    } else if (section == "perturbation") {
      if (key == "kind") h_kind = to_tangency(value, line);
      else if (key == "period") period_text = value;
      else if (has_prefix_index(key, "h")) put_indexed(h_parts, key, "h", value, line);
      else throw input_error(line, "unknown key " + key + " in [perturbation]");
    } else if (section == "degree" || section == "continuation" || section == "integrate") {
      deferred.push_back({line, {section + "." + key, value}});
    } else if (section == "expect") {
      p.expect[key] = value;
    }
  }

  if (!have_m || !have_s) throw Error(ErrorKind::InvalidArgument, "[manifold] needs m and s");
  if (p.m < 1 || p.s < 1) throw Error(ErrorKind::InvalidArgument, "m and s must be at least 1");
  p.g = dense(g_parts, "g");
  if (static_cast<int>(p.g.size()) != p.s) {
    throw Error(ErrorKind::InvalidArgument, "s = " + std::to_string(p.s) + " but " + std::to_string(p.g.size()) +
                                                " constraint expression(s) g1.. given");
  }
  const int k = p.m + p.s;
  if (manifold_box) {
    p.box = parse_box(*manifold_box, p.constants);
  } else {
    const double inf = std::numeric_limits<double>::infinity();
    p.box = Box(Eigen::VectorXd::Constant(k, -inf), Eigen::VectorXd::Constant(k, inf));
  }
  if (p.box.dim() != k) throw Error(ErrorKind::InvalidArgument, "manifold box must have m + s intervals");

  if (p.force) {
    p.force->components = dense(f_parts, "f");
    const int want = p.force->tangency == Tangency::DeclaredTangent ? k : p.m;
    if (static_cast<int>(p.force->components.size()) != want) {
      throw Error(ErrorKind::InvalidArgument, "[force] needs " + std::to_string(want) + " components");
    }
  }
  if (p.perturbation) {
    p.perturbation->tangency = h_kind ? *h_kind : (p.force ? p.force->tangency : Tangency::DeclaredTangent);
    if (p.force && p.force->tangency != p.perturbation->tangency) {
      throw Error(ErrorKind::InvalidArgument, "force and perturbation kinds differ");
    }
    if (!period_text) throw Error(ErrorKind::InvalidArgument, "[perturbation] needs a period");
    p.perturbation->period = constant_value(*period_text, p.constants);
    if (!(p.perturbation->period > 0.0)) throw Error(ErrorKind::InvalidArgument, "period must be positive");
    p.perturbation->components = dense(h_parts, "h");
    const int want = p.perturbation->tangency == Tangency::DeclaredTangent ? k : p.m;
    if (static_cast<int>(p.perturbation->components.size()) != want) {
      throw Error(ErrorKind::InvalidArgument, "[perturbation] needs " + std::to_string(want) + " components");
    }
  }

  for (const auto& [ln, kv] : deferred) {
    const auto& [key, value] = kv;
    auto vec = [&](int n) {
      Eigen::VectorXd v = parse_vector(value, p.constants);
      if (v.size() != n) throw input_error(ln, key + " needs " + std::to_string(n) + " entries");
      return v;
    };
    auto num = [&] { return constant_value(value, p.constants); };
    if (key == "degree.map") {
      if (value != "F" && value != "Phi") throw input_error(ln, "map must be F or Phi");
      p.degree.map = value;
    } else if (key == "degree.box") {
      p.degree.box = parse_box(value, p.constants);
      if (p.degree.box->dim() != k) throw input_error(ln, "degree box must have m + s intervals");
    } else if (key == "degree.grid") {
      p.degree.grid = to_int(value, ln);
    } else if (key == "degree.random_starts") {
      p.degree.random_starts = to_int(value, ln);
    } else if (key == "continuation.steps_per_period") {
      p.continuation.steps_per_period = to_int(value, ln);
    } else if (key == "continuation.ds") {
      p.continuation.ds = num();
    } else if (key == "continuation.ds_max") {
      p.continuation.ds_max = num();
    } else if (key == "continuation.max_points") {
      p.continuation.max_points = to_int(value, ln);
    } else if (key == "continuation.tol") {
      p.continuation.tol = num();
    } else if (key == "continuation.origin") {
      p.continuation.origin = vec(k);
    } else if (key == "integrate.t0") {
      p.integrate.t0 = num();
    } else if (key == "integrate.t1") {
      p.integrate.t1 = num();
    } else if (key == "integrate.h") {
      p.integrate.h = num();
    } else if (key == "integrate.method") {
      if (value == "rk4") p.integrate.method = Method::Rk4Proj;
      else if (value == "rk45") p.integrate.method = Method::Rk45Proj;
      else throw input_error(ln, "method must be rk4 or rk45");
    } else if (key == "integrate.x0") {
      p.integrate.x0 = vec(p.m);
    } else if (key == "integrate.u0") {
      p.integrate.u0 = vec(p.m);
    } else if (key == "integrate.y_seed") {
      p.integrate.y_seed = vec(p.s);
    } else if (key == "integrate.lambda") {
      p.integrate.lambda = num();
    } else {
      throw input_error(ln, "unknown key " + key.substr(key.find('.') + 1) + " in [" + key.substr(0, key.find('.')) +
                                "]");
    }
  }

  // Parse every expression once so errors surface at load time.
  (void)p.manifold();
  (void)p.force_field();
  (void)p.perturbation_field();
  (void)p.potential();
  return p;
}

Problem load_problem(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::InvalidArgument, "cannot open problem file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_problem(ss.str());
}

ImplicitManifold Problem::manifold() const {
  return ImplicitManifold(VectorExpr::parse(g, position_varlist(m, s), constants), m, box, on_tol);
}

std::optional<ForceField> Problem::force_field() const {
  if (!force) return std::nullopt;
  return ForceField(VectorExpr::parse(force->components, canonical_varlist(m, s), constants), m, s,
                    ForceKind::Autonomous, force->tangency);
}

std::optional<ForceField> Problem::perturbation_field() const {
  if (!perturbation) return std::nullopt;
  return ForceField(VectorExpr::parse(perturbation->components, canonical_varlist(m, s), constants), m, s,
                    ForceKind::Periodic, perturbation->tangency, perturbation->period);
}

std::optional<Expr> Problem::potential() const {
  if (!force || !force->potential) return std::nullopt;
  return parse(*force->potential, position_varlist(m, s), constants);
}

Eigen::VectorXd Problem::anchor(const ImplicitManifold& M) const {
  if (integrate.x0) {
    const Eigen::VectorXd y_seed = integrate.y_seed ? *integrate.y_seed : Eigen::VectorXd::Zero(s);
    Eigen::VectorXd xi(m + s);
    xi << *integrate.x0, chart_solve_y(M, *integrate.x0, y_seed);
    return xi;
  }
  Eigen::VectorXd c(m + s);
  for (int i = 0; i < m + s; ++i) {
    const double lo = box.lower[i];
    const double hi = box.upper[i];
    c[i] = std::isfinite(lo) && std::isfinite(hi) ? 0.5 * (lo + hi) : (std::isfinite(lo) ? lo : (std::isfinite(hi) ? hi : 0.0));
  }
  return project_to_manifold(M, c, c, {100, true}).point;
}

PhaseState Problem::chart_state(const ImplicitManifold& M, const Eigen::VectorXd& x0, const Eigen::VectorXd& u0) const {
  if (x0.size() != m || u0.size() != m) throw Error(ErrorKind::InvalidArgument, "chart data needs m entries each");
  const Eigen::VectorXd y_seed = integrate.y_seed ? *integrate.y_seed : Eigen::VectorXd(anchor(M).tail(s));
  PhaseState st;
  st.xi.resize(m + s);
  st.xi << x0, chart_solve_y(M, x0, y_seed);
  st.eta.resize(m + s);
  st.eta << u0, tangent_lift(M, st.xi, u0);
  return st;
}

PhaseState Problem::initial_state(const ImplicitManifold& M) const {
  if (!integrate.x0) throw Error(ErrorKind::InvalidArgument, "[integrate] needs x0");
  return chart_state(M, *integrate.x0, integrate.u0 ? *integrate.u0 : Eigen::VectorXd::Zero(m));
}

const BuiltinProblem* find_builtin(std::string_view name) {
  for (const BuiltinProblem& b : builtin_problems()) {
    if (name == b.name) return &b;
  }
  return nullptr;
}

}  // namespace implicit_motion
