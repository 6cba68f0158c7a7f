#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "implicit_motion/dynamics.hpp"
#include "implicit_motion/manifold.hpp"

namespace implicit_motion {

struct MapValue {
  Eigen::VectorXd value;
  Eigen::MatrixXd jacobian;
};

// A map R^k -> R^k together with its Jacobian.
class SquareMap {
 public:
  using Fn = std::function<MapValue(const Eigen::VectorXd&)>;

  SquareMap(int dim, Fn fn) : dim_(dim), fn_(std::move(fn)) {}

  int dim() const { return dim_; }
  MapValue operator()(const Eigen::VectorXd& p) const { return fn_(p); }
  Eigen::VectorXd value(const Eigen::VectorXd& p) const { return fn_(p).value; }

 private:
  int dim_;
  Fn fn_;
};

SquareMap square_map(const VectorExpr& F);

// Gauss-Legendre nodes and weights on [-1, 1].
struct Quadrature {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};
Quadrature gauss_legendre(int n);

// w_h(xi) = (1/T) int_0^T h(t, xi, 0) dt, by Gauss-Legendre quadrature with
// the node count doubled from `initial_nodes` until successive values agree
// to 1e-12 relative.
class MeanField {
 public:
  MeanField(ForceField h, int initial_nodes = 32, int max_nodes = 2048);

  Eigen::VectorXd operator()(const Eigen::VectorXd& xi) const;
  MapValue with_jacobian(const Eigen::VectorXd& xi) const;
  const ForceField& field() const { return h_; }

 private:
  MapValue integrate(const Eigen::VectorXd& xi, bool jacobian) const;

  ForceField h_;
  std::vector<Quadrature> levels_;
};

MeanField mean_field(const ImplicitManifold& M, const ForceField& h);

enum class AugmentedKind { FOfF, PhiOfWh };

// (first m components of a field, g): R^{m+s} -> R^{m+s}. The first block
// may be any extension of the tangent field off M.
class AugmentedMap {
 public:
  using FirstBlock = std::function<MapValue(const Eigen::VectorXd&)>;

  AugmentedMap(const ImplicitManifold& M, FirstBlock first_block, AugmentedKind kind);

  AugmentedKind kind() const { return kind_; }
  const ImplicitManifold& manifold() const { return M_; }
  SquareMap as_map() const;

 private:
  ImplicitManifold M_;
  FirstBlock first_;
  AugmentedKind kind_;
};

// First block Pr1 f(xi, 0) of a force field (t = 0).
AugmentedMap::FirstBlock first_block_of(const ForceField& f);
AugmentedMap::FirstBlock first_block_of(const MeanField& w);

enum class DegreeMethod { SignSum, Winding2d, Both };
std::string_view to_string(DegreeMethod m);

struct ZeroInfo {
  Eigen::VectorXd point;
  int index = 0;  // 0 when degenerate and unresolved
  double det = 0.0;
  double cond = 0.0;
  double residual = 0.0;
  bool degenerate = false;
  bool confirmed = false;  // Newton from a perturbed start returns to it
};

struct DegreeReport {
  std::vector<ZeroInfo> zeros;
  std::vector<Eigen::VectorXd> boundary_zeros;
  int degree = 0;        // Brouwer degree of the square map on the box
  int s_sign = 1;        // sign of det d2g (1 for plain maps)
  int field_degree = 0;  // s_sign * degree
  double boundary_min_norm = 0.0;
  DegreeMethod method = DegreeMethod::SignSum;
  bool admissible = false;
  std::string note;
};

struct ZeroSearchOptions {
  int grid = 16;
  double newton_tol = 1e-12;
  double accept_tol = 1e-10;
  double cluster_radius = 1e-7;
  int max_newton = 100;
  int random_starts = 64;
  std::uint64_t seed = 20240611;
  int jobs = 1;
};

struct DegreeOptions {
  ZeroSearchOptions search;
  double admissibility_threshold = 1e-8;
  int boundary_samples = 16;
  long boundary_budget = 400000;
};

struct ZeroSet {
  std::vector<Eigen::VectorXd> interior;
  std::vector<Eigen::VectorXd> boundary;
  std::vector<bool> confirmed;
};

ZeroSet find_zeros(const SquareMap& F, const Box& box, const ZeroSearchOptions& opts = {});

// sign det DF at a nondegenerate zero; throws DegenerateZero otherwise.
int index_at(const SquareMap& F, const Eigen::VectorXd& zero);
// Zero data including determinant, condition and degeneracy flag.
// A zero is degenerate when the smallest singular value of DF there is
// below 1e-8 times max(largest singular value, jacobian_scale). Pass the
// typical size of DF over the region as `jacobian_scale` so that zeros where
// DF vanishes entirely (z^2 at 0) are caught.
ZeroInfo describe_zero(const SquareMap& F, const Eigen::VectorXd& zero, double jacobian_scale = 0.0);
// Largest 2-norm of DF over the corners and centre of the box.
double jacobian_scale(const SquareMap& F, const Box& box);

// Minimum of |F| over boundary samples, refined by doubling the density.
double boundary_min_norm(const SquareMap& F, const Box& box, int samples, long budget);

DegreeReport degree_sign_sum(const SquareMap& F, const Box& box, const DegreeOptions& opts = {});
int degree_winding2d(const SquareMap& F, const Box& box);

DegreeReport tangent_field_degree(const ImplicitManifold& M, const AugmentedMap::FirstBlock& first_block,
                                  const Box& box, AugmentedKind kind = AugmentedKind::FOfF,
                                  const DegreeOptions& opts = {});

// "key: value" lines.
void write_report(std::ostream& os, const DegreeReport& r);
// x1..,y1..,index,detDF,cond
void write_zero_csv(std::ostream& os, const DegreeReport& r, int m, int s);

}  // namespace implicit_motion
