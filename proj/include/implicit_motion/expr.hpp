#pragma once

#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "implicit_motion/error.hpp"
#include "implicit_motion/jet.hpp"

namespace implicit_motion {

enum class Op {
  Constant,
  Variable,
  Neg,
  Sin,
  Cos,
  Tan,
  Exp,
  Log,
  Sqrt,
  Abs,
  Add,
  Sub,
  Mul,
  Div,
  Pow,
};

struct ExprNode {
  Op op = Op::Constant;
  double value = 0.0;  // Constant
  int var = -1;        // Variable: index into the varlist
  int lhs = -1;        // unary operand / left operand
  int rhs = -1;        // right operand
};

// Immutable expression tree over an ordered list of variable names. Nodes
// are stored flat with children referenced by index; copies share storage.
class Expr {
 public:
  Expr() = default;
  Expr(std::vector<ExprNode> nodes, int root, std::vector<std::string> varlist);

  const std::vector<std::string>& varlist() const { return *varlist_; }
  std::span<const ExprNode> nodes() const { return *nodes_; }
  int root() const { return root_; }
  bool empty() const { return !nodes_ || nodes_->empty(); }

  // Structural equality of the trees (node kinds, constants bit-for-bit,
  // variable names).
  friend bool operator==(const Expr& a, const Expr& b);

 private:
  std::shared_ptr<const std::vector<ExprNode>> nodes_;
  std::shared_ptr<const std::vector<std::string>> varlist_;
  int root_ = -1;
};

// Named constants usable in expressions besides the variables; `pi` is
// always available unless shadowed by a variable.
using ConstantTable = std::map<std::string, double, std::less<>>;

Expr parse(std::string_view source, const std::vector<std::string>& varlist,
           const ConstantTable& constants = {});

// Canonical text: binary operations fully parenthesized, constants printed
// with round-trip precision. parse(print(e)) == e.
std::string print(const Expr& e);

// --- evaluation -----------------------------------------------------------

namespace detail {

inline double apply_unary(Op op, double a) {
  switch (op) {
    case Op::Neg: return -a;
    case Op::Sin: return std::sin(a);
    case Op::Cos: return std::cos(a);
    case Op::Tan: return std::tan(a);
    case Op::Exp: return std::exp(a);
    case Op::Log:
      if (!(a > 0.0)) throw Error(ErrorKind::Domain, "log of nonpositive value");
      return std::log(a);
    case Op::Sqrt:
      if (a < 0.0) throw Error(ErrorKind::Domain, "sqrt of negative value");
      return std::sqrt(a);
    case Op::Abs: return std::abs(a);
    default: break;
  }
  throw Error(ErrorKind::InvalidArgument, "not a unary operator");
}

inline bool is_integer(double c) { return std::floor(c) == c && std::abs(c) < 1e15; }

inline double apply_pow(double a, double b) {
  if (a < 0.0 && !is_integer(b)) throw Error(ErrorKind::Domain, "negative base with non-integer exponent");
  if (a == 0.0 && b < 0.0) throw Error(ErrorKind::Domain, "zero raised to a negative power");
  return std::pow(a, b);
}

inline double apply_binary(Op op, double a, double b) {
  switch (op) {
    case Op::Add: return a + b;
    case Op::Sub: return a - b;
    case Op::Mul: return a * b;
    case Op::Div:
      if (b == 0.0) throw Error(ErrorKind::Domain, "division by zero");
      return a / b;
    case Op::Pow: return apply_pow(a, b);
    default: break;
  }
  throw Error(ErrorKind::InvalidArgument, "not a binary operator");
}

template <typename Scalar>
Jet2<Scalar> apply_unary(Op op, const Jet2<Scalar>& a) {
  const Scalar x = a.value();
  switch (op) {
    case Op::Neg: return -a;
    case Op::Sin: return a.compose(std::sin(x), std::cos(x), -std::sin(x));
    case Op::Cos: return a.compose(std::cos(x), -std::sin(x), -std::cos(x));
    case Op::Tan: {
      const Scalar t = std::tan(x);
      const Scalar sec2 = Scalar(1) + t * t;
      return a.compose(t, sec2, Scalar(2) * t * sec2);
    }
    case Op::Exp: {
      const Scalar e = std::exp(x);
      return a.compose(e, e, e);
    }
    case Op::Log:
      if (!(x > Scalar(0))) throw Error(ErrorKind::Domain, "log of nonpositive value");
      return a.compose(std::log(x), Scalar(1) / x, Scalar(-1) / (x * x));
    case Op::Sqrt: {
      if (x < Scalar(0)) throw Error(ErrorKind::Domain, "sqrt of negative value");
      if (x == Scalar(0)) throw Error(ErrorKind::Domain, "sqrt is not differentiable at 0");
      const Scalar r = std::sqrt(x);
      return a.compose(r, Scalar(0.5) / r, Scalar(-0.25) / (r * x));
    }
    case Op::Abs:
      if (x == Scalar(0)) throw Error(ErrorKind::NonSmoothPoint, "abs at 0");
      return x > Scalar(0) ? a : -a;
    default: break;
  }
  throw Error(ErrorKind::InvalidArgument, "not a unary operator");
}

template <typename Scalar>
Jet2<Scalar> apply_binary(Op op, const Jet2<Scalar>& a, const Jet2<Scalar>& b) {
  switch (op) {
    case Op::Add: return a + b;
    case Op::Sub: return a - b;
    case Op::Mul: return a * b;
    case Op::Div: return a / b;
    case Op::Pow: {
      const Scalar x = a.value();
      const bool constant_exponent = b.gradient().isZero() && b.packed_hessian().isZero();
      if (constant_exponent) {
        const Scalar c = b.value();
        if (c == Scalar(0)) return Jet2<Scalar>(Scalar(1), a.directions());
        if (x < Scalar(0) && !is_integer(c)) {
          throw Error(ErrorKind::Domain, "negative base with non-integer exponent");
        }
        if (x == Scalar(0) && !(is_integer(c) && c >= Scalar(0)) && c < Scalar(2)) {
          throw Error(ErrorKind::Domain, "power not twice differentiable at 0");
        }
        const Scalar d0 = std::pow(x, c);
        const Scalar d1 = c == Scalar(1) ? Scalar(1) : c * std::pow(x, c - Scalar(1));
        const Scalar d2 = (c == Scalar(1) || c == Scalar(2))
                              ? c * (c - Scalar(1))
                              : c * (c - Scalar(1)) * std::pow(x, c - Scalar(2));
        return a.compose(d0, d1, d2);
      }
      if (!(x > Scalar(0))) throw Error(ErrorKind::Domain, "variable exponent needs a positive base");
      const Jet2<Scalar> log_a = a.compose(std::log(x), Scalar(1) / x, Scalar(-1) / (x * x));
      const Jet2<Scalar> prod = b * log_a;
      const Scalar e = std::exp(prod.value());
      return prod.compose(e, e, e);
    }
    default: break;
  }
  throw Error(ErrorKind::InvalidArgument, "not a binary operator");
}

inline double make_constant(double value, const double&) { return value; }
template <typename Scalar>
Jet2<Scalar> make_constant(double value, const Jet2<Scalar>& like) {
  return Jet2<Scalar>(Scalar(value), like.directions());
}

template <typename T>
T evaluate_node(std::span<const ExprNode> nodes, int index, std::span<const T> args) {
  const ExprNode& n = nodes[index];
  switch (n.op) {
    case Op::Constant: return make_constant(n.value, args.empty() ? T{} : args[0]);
    case Op::Variable: return args[n.var];
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div:
    case Op::Pow:
      return apply_binary(n.op, evaluate_node(nodes, n.lhs, args), evaluate_node(nodes, n.rhs, args));
    default:
      return apply_unary(n.op, evaluate_node(nodes, n.lhs, args));
  }
}

}  // namespace detail

// Evaluates `e` with `args[i]` bound to varlist()[i]. T is double or a
// Jet2; for jets every argument must carry the same number of directions.
template <typename T>
T evaluate(const Expr& e, std::span<const T> args) {
  if (args.size() != e.varlist().size()) {
    throw Error(ErrorKind::InvalidArgument, "argument count does not match varlist");
  }
  return detail::evaluate_node(e.nodes(), e.root(), args);
}

inline double evaluate(const Expr& e, const Eigen::VectorXd& point) {
  return evaluate<double>(e, std::span<const double>(point.data(), static_cast<std::size_t>(point.size())));
}

struct SecondOrder {
  double value = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
};

// Value, gradient and Hessian with respect to every variable.
SecondOrder eval2(const Expr& e, const Eigen::VectorXd& point);

// Same, differentiating only with respect to the variables listed in
// `active` (indices into the varlist); the rest are held constant.
SecondOrder eval2(const Expr& e, const Eigen::VectorXd& point, std::span<const int> active);

// Components sharing one varlist; a map R^n_in -> R^n_out.
class VectorExpr {
 public:
  VectorExpr() = default;
  explicit VectorExpr(std::vector<Expr> components);

  static VectorExpr parse(const std::vector<std::string>& sources,
                          const std::vector<std::string>& varlist,
                          const ConstantTable& constants = {});

  int n_in() const { return static_cast<int>(varlist_.size()); }
  int n_out() const { return static_cast<int>(components_.size()); }
  const std::vector<std::string>& varlist() const { return varlist_; }
  const std::vector<Expr>& components() const { return components_; }
  const Expr& operator[](int i) const { return components_[static_cast<std::size_t>(i)]; }

  Eigen::VectorXd operator()(const Eigen::VectorXd& point) const;

  // Value and Jacobian (n_out x |active|) with respect to `active`.
  void jacobian(const Eigen::VectorXd& point, std::span<const int> active,
                Eigen::VectorXd& value, Eigen::MatrixXd& jac) const;

 private:
  std::vector<Expr> components_;
  std::vector<std::string> varlist_;
};

}  // namespace implicit_motion
