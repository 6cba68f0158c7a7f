#include "implicit_motion/cli.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "implicit_motion/continuation.hpp"
#include "implicit_motion/degree.hpp"
#include "implicit_motion/dynamics.hpp"
#include "implicit_motion/problem.hpp"

namespace implicit_motion {

namespace {

using json = nlohmann::ordered_json;

json to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json to_json(const Box& b) {
  json a = json::array();
  for (int i = 0; i < b.dim(); ++i) a.push_back(json::array({b.lower[i], b.upper[i]}));
  return a;
}

void print_report(std::ostream& out, const json& j) {
  for (const auto& [key, value] : j.items()) {
    out << key << ": " << (value.is_string() ? value.get<std::string>() : value.dump()) << '\n';
  }
}

bool input_kind(ErrorKind k) {
  return k == ErrorKind::Syntax || k == ErrorKind::UnknownVariable || k == ErrorKind::Arity ||
         k == ErrorKind::InvalidArgument;
}

// Raised for problems with the command line or problem file.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

Problem load(const std::string& arg) {
  if (std::filesystem::is_regular_file(arg)) return load_problem(arg);
  if (const BuiltinProblem* b = find_builtin(arg)) return parse_problem(b->text);
  throw UsageError("no problem file or built-in problem named '" + arg + "'");
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Common {
  std::string problem;
  bool json = false;
  int jobs = 1;
};

// ---- check ---------------------------------------------------------------

json cmd_check(const Problem& p, int samples) {
  const ImplicitManifold M = p.manifold();
  const Eigen::VectorXd anchor = p.anchor(M);
  (void)jacobians(M, anchor);  // pins the sign of det d2g

  std::mt19937_64 rng(20240611);
  const std::vector<PhaseState> states = random_states(M, anchor, samples, 0.5, 1.0, rng);
  double min_eig = std::numeric_limits<double>::infinity();
  for (const PhaseState& st : states) {
    const Eigen::MatrixXd L = lemma_matrix(jacobians(M, st.xi));
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (L + L.transpose()));
    min_eig = std::min(min_eig, es.eigenvalues().minCoeff());
  }
  json r;
  r["status"] = "pass";
  r["name"] = p.name;
  r["m"] = p.m;
  r["s"] = p.s;
  r["s_sign"] = M.pinned_sign();
  r["samples"] = samples;
  r["lemma_min_eigenvalue"] = min_eig;
  if (const auto f = p.force_field()) {
    r["force_kind"] = f->tangency() == Tangency::DeclaredTangent ? "tangent" : "x_only";
    if (f->tangency() == Tangency::DeclaredTangent) r["force_tangency_defect"] = check_tangency(M, *f, states);
  }
  if (const auto h = p.perturbation_field()) {
    if (h->tangency() == Tangency::DeclaredTangent) r["perturbation_tangency_defect"] = check_tangency(M, *h, states);
    r["periodicity_defect"] = check_periodicity(*h, states, rng);
  }
  return r;
}

// ---- degree --------------------------------------------------------------

struct DegreeFlags {
  std::string map;
  std::string box;
  int grid = 0;
  bool winding = false;
  std::string zeros_csv;
};

struct DegreeSetup {
  AugmentedMap::FirstBlock first;
  AugmentedKind kind;
  std::string map;
  Box box;
};

DegreeSetup degree_setup(const Problem& p, const std::string& map_flag, const std::string& box_flag) {
  DegreeSetup d;
  d.map = !map_flag.empty() ? map_flag : (p.degree.map ? *p.degree.map : (p.force ? "F" : "Phi"));
  if (d.map == "F") {
    const auto f = p.force_field();
    if (!f) throw UsageError("map F needs a [force] section");
    d.first = first_block_of(*f);
    d.kind = AugmentedKind::FOfF;
  } else if (d.map == "Phi") {
    const auto h = p.perturbation_field();
    if (!h) throw UsageError("map Phi needs a [perturbation] section");
    d.first = first_block_of(MeanField(*h));
    d.kind = AugmentedKind::PhiOfWh;
  } else {
    throw UsageError("--map must be F or Phi");
  }
  d.box = !box_flag.empty() ? parse_box(box_flag, p.constants) : (p.degree.box ? *p.degree.box : p.box);
  if (d.box.dim() != p.m + p.s) throw UsageError("degree box must have m + s intervals");
  if (!d.box.bounded()) throw UsageError("degree needs a bounded box; set [degree] box or --box");
  return d;
}

DegreeOptions degree_options(const Problem& p, int grid, int jobs) {
  DegreeOptions o;
  o.search.grid = grid > 0 ? grid : p.degree.grid;
  o.search.random_starts = p.degree.random_starts;
  o.search.jobs = jobs;
  return o;
}

json degree_json(const DegreeReport& rep) {
  json r;
  r["degree"] = rep.degree;
  r["s_sign"] = rep.s_sign;
  r["field_degree"] = rep.field_degree;
  r["admissible"] = rep.admissible;
  r["method"] = std::string(to_string(rep.method));
  r["boundary_min_norm"] = rep.boundary_min_norm;
  json zs = json::array();
  for (const ZeroInfo& z : rep.zeros) {
    zs.push_back({{"point", to_json(z.point)},
                  {"index", z.index},
                  {"det", z.det},
                  {"cond", z.cond},
                  {"residual", z.residual},
                  {"confirmed", z.confirmed}});
  }
  r["zeros"] = zs;
  r["note"] = rep.note;
  return r;
}

std::pair<json, int> cmd_degree(const Problem& p, const DegreeFlags& fl, int jobs) {
  const auto t0 = std::chrono::steady_clock::now();
  const ImplicitManifold M = p.manifold();
  const DegreeSetup d = degree_setup(p, fl.map, fl.box);
  const DegreeReport rep = tangent_field_degree(M, d.first, d.box, d.kind, degree_options(p, fl.grid, jobs));
  json r;
  r["name"] = p.name;
  r["map"] = d.map;
  r["box"] = to_json(d.box);
  r.update(degree_json(rep));
  int code = kExitOk;
  if (fl.winding) {
    if (d.box.dim() == 2) {
      const int w = degree_winding2d(AugmentedMap(M, d.first, d.kind).as_map(), d.box);
      r["winding_degree"] = w;
      r["winding_agrees"] = (w == rep.degree);
      if (w != rep.degree) code = kExitNumerical;
    } else {
      r["winding_degree"] = "n/a (winding number needs m + s = 2)";
    }
  }
  if (!fl.zeros_csv.empty()) {
    std::ofstream os(fl.zeros_csv);
    if (!os) throw UsageError("cannot write " + fl.zeros_csv);
    write_zero_csv(os, rep, p.m, p.s);
  }
  r["elapsed_seconds"] = seconds_since(t0);
  return {r, code};
}

// ---- simulate ------------------------------------------------------------

struct SimulateFlags {
  std::optional<double> t1;
  std::optional<double> h;
  std::string method;
  std::optional<double> lambda;
  bool twin = false;
  bool no_project = false;
  int record_every = 1;
  std::string out;
};

double sup_gap(const Trajectory& a, const Trajectory& b) {
  double gap = 0.0;
  const std::size_t n = std::min(a.states.size(), b.states.size());
  for (std::size_t i = 0; i < n; ++i) {
    gap = std::max({gap, (a.states[i].xi - b.states[i].xi).cwiseAbs().maxCoeff(),
                    (a.states[i].eta - b.states[i].eta).cwiseAbs().maxCoeff()});
  }
  return gap;
}

std::pair<json, Trajectory> cmd_simulate(const Problem& p, const SimulateFlags& fl) {
  const ImplicitManifold M = p.manifold();
  const PhaseState st0 = p.initial_state(M);
  const double lambda = fl.lambda ? *fl.lambda : p.integrate.lambda;
  const Acceleration accel = forced_motion(M, p.force_field(), p.perturbation_field(), lambda);

  IntegrateOptions io;
  io.h = fl.h ? *fl.h : p.integrate.h;
  io.method = p.integrate.method;
  if (fl.method == "rk4") io.method = Method::Rk4Proj;
  else if (fl.method == "rk45") io.method = Method::Rk45Proj;
  else if (!fl.method.empty()) throw UsageError("--method must be rk4 or rk45");
  io.project = !fl.no_project;
  io.record_every = fl.twin ? 1 : fl.record_every;
  io.potential = p.potential();
  const double t0 = p.integrate.t0;
  const double t1 = fl.t1 ? *fl.t1 : p.integrate.t1;

  const auto clock = std::chrono::steady_clock::now();
  Trajectory traj = integrate(M, accel, st0, t0, t1, io);
  json r;
  r["name"] = p.name;
  r["lambda"] = lambda;
  r["method"] = io.method == Method::Rk4Proj ? "rk4" : "rk45";
  r["steps"] = traj.stats.steps;
  r["t_end"] = traj.t.back();
  r["xi_end"] = to_json(traj.back().xi);
  r["eta_end"] = to_json(traj.back().eta);
  r["max_g_drift"] = traj.stats.max_g_drift;
  r["max_tangency_drift"] = traj.stats.max_tangency_drift;
  if (!traj.stats.energy.empty()) {
    double drift = 0.0;
    for (double e : traj.stats.energy) drift = std::max(drift, std::abs(e - traj.stats.energy.front()));
    r["energy_drift"] = drift;
  }
  if (fl.twin) {
    const bool x_only = (p.force && p.force->tangency == Tangency::XOnly) ||
                        (p.perturbation && p.perturbation->tangency == Tangency::XOnly);
    if (!x_only) throw UsageError("--twin compares a DAE with its projected ODE; the problem has no x_only field");
    if (io.method != Method::Rk4Proj) throw UsageError("--twin needs the fixed-step rk4 method");
    const Acceleration projected = constrained_motion(M, tangent_part(M, accel));
    const Trajectory ode = integrate(M, projected, st0, t0, t1, io);
    r["twin_gap"] = sup_gap(traj, ode);
    r["twin_max_g_drift"] = ode.stats.max_g_drift;
  }
  r["elapsed_seconds"] = seconds_since(clock);
  return {r, std::move(traj)};
}

// ---- reactive ------------------------------------------------------------

json cmd_reactive(const Problem& p, const std::string& x_flag, const std::string& u_flag, const std::string& y_flag) {
  const ImplicitManifold M = p.manifold();
  Problem q = p;
  if (!y_flag.empty()) q.integrate.y_seed = parse_vector(y_flag, p.constants);
  const Eigen::VectorXd x =
      !x_flag.empty() ? parse_vector(x_flag, p.constants) : (p.integrate.x0 ? *p.integrate.x0 : Eigen::VectorXd());
  const Eigen::VectorXd u = !u_flag.empty() ? parse_vector(u_flag, p.constants)
                                            : (p.integrate.u0 ? *p.integrate.u0 : Eigen::VectorXd::Zero(p.m));
  if (x.size() != p.m || u.size() != p.m) throw UsageError("--x and --u need m entries each");
  const PhaseState st = q.chart_state(M, x, u);
  json r;
  r["name"] = p.name;
  r["xi"] = to_json(st.xi);
  r["eta"] = to_json(st.eta);
  r["r"] = to_json(reactive_force(M, st));
  return r;
}

// ---- trace ---------------------------------------------------------------

struct TraceFlags {
  std::string origin;
  int max_points = 0;
  double ds = 0.0;
  int steps = 0;
  bool force = false;
  std::string out;
};

std::pair<json, std::vector<BranchCurve>> cmd_trace(const Problem& p, const TraceFlags& fl, int jobs,
                                                    std::ostream& err) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto h = p.perturbation_field();
  if (!h) throw UsageError("trace needs a [perturbation] section");
  const ImplicitManifold M = p.manifold();
  const PhaseState seed{p.anchor(M), Eigen::VectorXd::Zero(M.dim())};
  PeriodicProblem P(M, p.force_field(), *h, seed);
  P.steps_per_period = fl.steps > 0 ? fl.steps : p.continuation.steps_per_period;

  json r;
  r["name"] = p.name;
  std::optional<DegreeReport> rep;
  try {
    const DegreeSetup d = degree_setup(p, p.force ? "F" : "Phi", "");
    rep = tangent_field_degree(M, d.first, d.box, d.kind, degree_options(p, 0, jobs));
    r["map"] = d.map;
    r["degree"] = rep->degree;
  } catch (const Error& e) {
    r["degree"] = std::string("unavailable: ") + e.what();
  }
  if (!rep || rep->degree == 0) {
    err << "warning: the degree on the working box is zero or unavailable; no branch is guaranteed\n";
    if (!fl.force) throw Error(ErrorKind::NotAdmissible, "refusing to trace without a nonzero degree (pass --force)");
  }

  std::vector<Eigen::VectorXd> origins;
  if (!fl.origin.empty() && fl.origin != "auto") {
    origins.push_back(parse_vector(fl.origin, p.constants));
  } else if (fl.origin.empty() && p.continuation.origin) {
    origins.push_back(*p.continuation.origin);
  } else {
    if (!rep) throw UsageError("--origin auto needs the zero set; pass an explicit origin");
    for (const ZeroInfo& z : rep->zeros) origins.push_back(z.point);
  }
  for (const auto& o : origins) {
    if (o.size() != M.dim()) throw UsageError("origin must have m + s entries");
  }

  ContinuationOptions co;
  co.shoot.tol = p.continuation.tol;
  co.ds = fl.ds > 0.0 ? fl.ds : p.continuation.ds;
  co.ds_max = std::max(co.ds, p.continuation.ds_max);
  co.max_points = fl.max_points > 0 ? fl.max_points : p.continuation.max_points;
  std::vector<BranchCurve> curves = trace_branches(P, origins, co, jobs);

  json branches = json::array();
  for (const BranchCurve& c : curves) {
    double lmax = 0.0;
    double rmax = 0.0;
    for (const BranchPoint& q : c.points) {
      lmax = std::max(lmax, q.lambda);
      rmax = std::max(rmax, q.residual);
    }
    branches.push_back({{"origin", to_json(c.origin)},
                        {"points", c.points.size()},
                        {"termination", std::string(to_string(c.termination))},
                        {"degenerate", c.degenerate},
                        {"folds", c.folds},
                        {"lambda_max", lmax},
                        {"max_residual", rmax}});
    if (c.degenerate) err << "warning: d residual / d lambda vanishes at the origin; degenerate continuation\n";
  }
  r["branches"] = branches;
  r["elapsed_seconds"] = seconds_since(t0);
  return {r, std::move(curves)};
}

// ---- example -------------------------------------------------------------

std::vector<Eigen::VectorXd> parse_points(const std::string& text, const ConstantTable& constants) {
  std::vector<Eigen::VectorXd> out;
  std::size_t pos = 0;
  while ((pos = text.find('(', pos)) != std::string::npos) {
    int depth = 0;
    std::size_t end = pos;
    for (; end < text.size(); ++end) {
      if (text[end] == '(') ++depth;
      if (text[end] == ')' && --depth == 0) break;
    }
    if (end == text.size()) throw UsageError("unbalanced point list in [expect]");
    out.push_back(parse_vector(text.substr(pos + 1, end - pos - 1), constants));
    pos = end + 1;
  }
  return out;
}

std::pair<json, int> cmd_verify(const Problem& p, int jobs) {
  json checks = json::array();
  bool all = true;
  auto record = [&](const std::string& what, bool ok, const std::string& detail) {
    checks.push_back({{"check", what}, {"pass", ok}, {"detail", detail}});
    all = all && ok;
  };
  std::optional<DegreeReport> rep;
  auto degree = [&]() -> const DegreeReport& {
    if (!rep) {
      const DegreeSetup d = degree_setup(p, "", "");
      rep = tangent_field_degree(p.manifold(), d.first, d.box, d.kind, degree_options(p, 0, jobs));
    }
    return *rep;
  };
  for (const auto& [key, value] : p.expect) {
    try {
      if (key == "degree") {
        const int want = static_cast<int>(parse_vector(value, p.constants)[0]);
        const int got = degree().degree;
        record(key, got == want, "expected " + std::to_string(want) + ", got " + std::to_string(got));
      } else if (key == "s_sign") {
        const int want = static_cast<int>(parse_vector(value, p.constants)[0]);
        const int got = cmd_check(p, 50)["s_sign"].get<int>();
        record(key, got == want, "expected " + std::to_string(want) + ", got " + std::to_string(got));
      } else if (key == "zeros") {
        const auto want = parse_points(value, p.constants);
        const auto& zs = degree().zeros;
        bool ok = want.size() == zs.size();
        for (const auto& w : want) {
          ok = ok && std::any_of(zs.begin(), zs.end(), [&](const ZeroInfo& z) {
                 return z.point.size() == w.size() && (z.point - w).cwiseAbs().maxCoeff() <= 1e-8;
               });
        }
        record(key, ok, std::to_string(zs.size()) + " zero(s) found, " + std::to_string(want.size()) + " expected");
      } else if (key == "zeros_x") {
        const double want = parse_vector(value, p.constants)[0];
        const auto& zs = degree().zeros;
        const bool ok = std::any_of(zs.begin(), zs.end(),
                                    [&](const ZeroInfo& z) { return std::abs(z.point[0] - want) <= 1e-8; });
        record(key, ok, "abscissa " + std::to_string(want));
      } else if (key == "reactive_at_x1_u1") {
        const Eigen::VectorXd want = parse_vector(value, p.constants);
        const json r = cmd_reactive(p, "1", "1", "");
        Eigen::VectorXd got(static_cast<long>(r["r"].size()));
        for (long i = 0; i < got.size(); ++i) got[i] = r["r"][static_cast<std::size_t>(i)].get<double>();
        const bool ok = got.size() == want.size() && (got - want).cwiseAbs().maxCoeff() <= 1e-12;
        record(key, ok, "r = " + r["r"].dump());
      } else {
        checks.push_back({{"check", key}, {"pass", nullptr}, {"detail", "not a verifiable key"}});
      }
    } catch (const Error& e) {
      record(key, false, e.what());
    }
  }
  json r;
  r["name"] = p.name;
  r["verified"] = all;
  r["checks"] = checks;
  return {r, all ? kExitOk : kExitNumerical};
}

void print_verify(std::ostream& out, const json& r) {
  for (const auto& c : r["checks"]) {
    const std::string status = c["pass"].is_null() ? "SKIP" : (c["pass"].get<bool>() ? "PASS" : "FAIL");
    out << status << ' ' << c["check"].get<std::string>() << ": " << c["detail"].get<std::string>() << '\n';
  }
  out << "verified: " << (r["verified"].get<bool>() ? "true" : "false") << '\n';
}

std::ostream& open_out(const std::string& path, std::ofstream& file, std::ostream& fallback) {
  if (path.empty()) return fallback;
  file.open(path);
  if (!file) throw UsageError("cannot write " + path);
  return file;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Motion on implicitly defined manifolds: degree, simulation and periodic branches",
               "implicit-motion"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_flag("--json", common.json, "Print the report as one JSON document");
  app.add_option("--jobs", common.jobs, "Worker threads for zero searches and branch traces")->check(CLI::PositiveNumber);

  auto add_problem = [&](CLI::App* sub) {
    sub->add_option("problem", common.problem, "Problem file or built-in problem name")->required();
  };

  CLI::App* check = app.add_subcommand("check", "Validate a problem file and run spot checks");
  add_problem(check);
  int samples = 200;
  check->add_option("--samples", samples, "Random states for the spot checks")->check(CLI::PositiveNumber);

  CLI::App* degree = app.add_subcommand("degree", "Degree of the augmented map on a box");
  add_problem(degree);
  DegreeFlags dfl;
  degree->add_option("--map", dfl.map, "F (unperturbed force) or Phi (mean-value field)");
  degree->add_option("--box", dfl.box, "Box override, e.g. \"[-3, 3] x [-3, 3]\"");
  degree->add_option("--grid", dfl.grid, "Multistart grid cells per axis");
  degree->add_flag("--winding", dfl.winding, "Cross-check with the winding number (planar maps)");
  degree->add_option("--zeros-csv", dfl.zeros_csv, "Write the zero table to this file");

  CLI::App* simulate = app.add_subcommand("simulate", "Integrate the motion from the [integrate] state");
  add_problem(simulate);
  SimulateFlags sfl;
  simulate->add_option("--t1", sfl.t1, "Final time");
  simulate->add_option("--step", sfl.h, "Step size (initial step for rk45)");
  simulate->add_option("--method", sfl.method, "rk4 or rk45");
  simulate->add_option("--lambda", sfl.lambda, "Perturbation parameter");
  simulate->add_flag("--twin", sfl.twin, "Also integrate the projected ODE and report the gap");
  simulate->add_flag("--no-project", sfl.no_project, "Disable post-step projection");
  simulate->add_option("--record-every", sfl.record_every, "Keep every n-th step in the CSV");
  simulate->add_option("--out", sfl.out, "Trajectory CSV path (default: standard output)");

  CLI::App* reactive = app.add_subcommand("reactive", "Reactive force at a chart state");
  add_problem(reactive);
  std::string rx, ru, ry;
  reactive->add_option("--x", rx, "x coordinates, comma separated");
  reactive->add_option("--u", ru, "x velocities, comma separated");
  reactive->add_option("--y-seed", ry, "Starting guess for y");

  CLI::App* trace = app.add_subcommand("trace", "Trace branches of periodic solutions");
  add_problem(trace);
  TraceFlags tfl;
  trace->add_option("--origin", tfl.origin, "auto, or a zero of the augmented map as comma separated coordinates");
  trace->add_option("--max-points", tfl.max_points, "Accepted points per branch");
  trace->add_option("--ds", tfl.ds, "Initial arclength step");
  trace->add_option("--steps", tfl.steps, "RK4 steps per period");
  trace->add_flag("--force", tfl.force, "Trace even when the degree gives no guarantee");
  trace->add_option("--out", tfl.out, "Branch CSV path (default: standard output)");

  CLI::App* example = app.add_subcommand("example", "Print or verify a built-in problem");
  std::string example_name;
  bool verify = false;
  bool list = false;
  example->add_option("name", example_name, "Built-in problem name");
  example->add_flag("--verify", verify, "Check the problem against its expected results");
  example->add_flag("--list", list, "List the built-in problems");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }

  auto emit = [&](const json& r) {
    if (common.json) {
      out << r.dump(2) << '\n';
    } else {
      print_report(out, r);
    }
  };

  try {
    if (check->parsed()) {
      const Problem p = load(common.problem);
      try {
        emit(cmd_check(p, samples));
      } catch (const Error& e) {
        json r{{"status", "fail"}, {"error", e.what()}};
        emit(r);
        return kExitInput;
      }
      return kExitOk;
    }
    if (degree->parsed()) {
      const auto [r, code] = cmd_degree(load(common.problem), dfl, common.jobs);
      emit(r);
      return code;
    }
    if (simulate->parsed()) {
      const Problem p = load(common.problem);
      auto [r, traj] = cmd_simulate(p, sfl);
      const ImplicitManifold M = p.manifold();
      if (!sfl.out.empty()) {
        std::ofstream file;
        write_csv(open_out(sfl.out, file, out), M, traj);
        emit(r);
      } else if (common.json) {
        emit(r);
      } else {
        write_csv(out, M, traj);
        print_report(err, r);
      }
      return kExitOk;
    }
    if (reactive->parsed()) {
      emit(cmd_reactive(load(common.problem), rx, ru, ry));
      return kExitOk;
    }
    if (trace->parsed()) {
      const Problem p = load(common.problem);
      auto [r, curves] = cmd_trace(p, tfl, common.jobs, err);
      auto write_all = [&](std::ostream& os) {
        for (std::size_t i = 0; i < curves.size(); ++i) {
          if (curves.size() > 1) os << (i ? "\n" : "") << "# origin " << to_json(curves[i].origin).dump() << '\n';
          write_branch_csv(os, curves[i], p.m);
        }
      };
      if (!tfl.out.empty()) {
        std::ofstream file;
        write_all(open_out(tfl.out, file, out));
        emit(r);
      } else if (common.json) {
        emit(r);
      } else {
        write_all(out);
        print_report(err, r);
      }
      return kExitOk;
    }
    if (example->parsed()) {
      if (list) {
        for (const BuiltinProblem& b : builtin_problems()) out << b.name << '\n';
        return kExitOk;
      }
      if (example_name.empty()) throw UsageError("example needs a name (see --list)");
      const BuiltinProblem* b = find_builtin(example_name);
      if (!b) throw UsageError("unknown example '" + example_name + "'");
      if (!verify) {
        if (common.json) {
          emit(json{{"name", b->name}, {"text", b->text}});
        } else {
          out << b->text;
        }
        return kExitOk;
      }
      const auto [r, code] = cmd_verify(parse_problem(b->text), common.jobs);
      if (common.json) {
        emit(r);
      } else {
        print_verify(out, r);
      }
      return code;
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return input_kind(e.kind()) ? kExitInput : kExitNumerical;
  }
  return kExitInput;
}

}  // namespace implicit_motion
