#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "implicit_motion/cli.hpp"
#include "implicit_motion/problem.hpp"

using namespace implicit_motion;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::filesystem::path write_temp(const std::string& name, const std::string& text) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream(path) << text;
  return path;
}

}  // namespace

TEST_CASE("problem files: constraint count must match s") {
  const auto path = write_temp("im_bad_s.prob", "name = bad\n[manifold]\nm = 1\ns = 2\ng1 = x1 - y1\n");
  const Run r = run({"check", path.string()});
  CHECK(r.code == kExitInput);
  CHECK(r.err.find("s = 2 but 1 constraint expression(s)") != std::string::npos);
  try {
    (void)parse_problem("[manifold]\nm = 1\ns = 1\ng1 = x1\nbogus = 3\n");
    FAIL("unknown key accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidArgument);
  }
}

TEST_CASE("box and vector parsing") {
  const Box b = parse_box("[-1, 2] x [-inf, pi]");
  CHECK(b.lower[0] == -1.0);
  CHECK(b.upper[0] == 2.0);
  CHECK(std::isinf(b.lower[1]));
  CHECK(b.upper[1] == doctest::Approx(M_PI));
  const Eigen::VectorXd v = parse_vector("sqrt(2), -1", {});
  CHECK(v.size() == 2);
  CHECK(v[0] == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("unknown example exits with an input error") {
  const Run r = run({"example", "no-such-thing"});
  CHECK(r.code == kExitInput);
  CHECK(run({}).code == kExitInput);
}

TEST_CASE("every built-in problem parses and passes check") {
  for (const BuiltinProblem& b : builtin_problems()) {
    CAPTURE(b.name);
    const Run r = run({"check", b.name, "--samples", "20"});
    CHECK(r.code == kExitOk);
  }
}

TEST_CASE("reactive force on the parabola through the front end") {
  const Run r = run({"reactive", "parabola1", "--x", "1", "--u", "1", "--json"});
  REQUIRE(r.code == kExitOk);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["r"][0].get<double>() == doctest::Approx(-0.5).epsilon(1e-14));
  CHECK(j["r"][1].get<double>() == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("check reports the pinned sign") {
  const Run r = run({"--json", "check", "parabolamolla"});
  REQUIRE(r.code == kExitOk);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["s_sign"].get<int>() == -1);
}

TEST_CASE("degree subcommand") {
  const Run r = run({"degree", "parabolamolla", "--json"});
  REQUIRE(r.code == kExitOk);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["degree"].get<int>() == 1);
  CHECK(j["field_degree"].get<int>() == -1);
}

TEST_CASE("trace writes CSV starting at lambda = 0") {
  const Run r = run({"trace", "parabolamolla", "--max-points", "3", "--steps", "64"});
  REQUIRE(r.code == kExitOk);
  std::istringstream in(r.out);
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  CHECK(header == "lambda,x0_1,u0_1,residual,amplitude");
  CHECK(first.rfind("0,", 0) == 0);
}

TEST_CASE("simulate reports drift") {
  const Run r = run({"simulate", "parabola2", "--t1", "1", "--twin", "--json", "--lambda", "0.5"});
  REQUIRE(r.code == kExitOk);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["max_g_drift"].get<double>() <= 1e-8);
  CHECK(j["twin_gap"].get<double>() <= 1e-6);
}

TEST_CASE("documentation files exist") {
  const std::filesystem::path root(IMPLICIT_MOTION_SOURCE_DIR);
  CHECK(std::filesystem::exists(root / "README.md"));
  CHECK(std::filesystem::exists(root / "docs" / "grammar.md"));
  CHECK(std::filesystem::exists(root / "docs" / "reactive_force_discrepancies.md"));
}
