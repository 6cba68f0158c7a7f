#include "implicit_motion/expr.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <utility>

namespace implicit_motion {

Expr::Expr(std::vector<ExprNode> nodes, int root, std::vector<std::string> varlist)
    : nodes_(std::make_shared<const std::vector<ExprNode>>(std::move(nodes))),
      varlist_(std::make_shared<const std::vector<std::string>>(std::move(varlist))),
      root_(root) {}

namespace {

bool same_subtree(const Expr& a, int ia, const Expr& b, int ib) {
  const ExprNode& x = a.nodes()[ia];
  const ExprNode& y = b.nodes()[ib];
  if (x.op != y.op) return false;
  switch (x.op) {
    case Op::Constant:
      return std::bit_cast<std::uint64_t>(x.value) == std::bit_cast<std::uint64_t>(y.value);
    case Op::Variable:
      return a.varlist()[x.var] == b.varlist()[y.var];
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div:
    case Op::Pow:
      return same_subtree(a, x.lhs, b, y.lhs) && same_subtree(a, x.rhs, b, y.rhs);
    default:
      return same_subtree(a, x.lhs, b, y.lhs);
  }
}

struct FunctionName {
  std::string_view name;
  Op op;
};

constexpr std::array<FunctionName, 7> kFunctions = {{
    {"sin", Op::Sin},
    {"cos", Op::Cos},
    {"tan", Op::Tan},
    {"exp", Op::Exp},
    {"log", Op::Log},
    {"sqrt", Op::Sqrt},
    {"abs", Op::Abs},
}};

// Recursive descent over
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := ('-' | '+') unary | power
//   power   := primary ('^' unary)?
//   primary := number | name | name '(' args ')' | '(' expr ')'
class Parser {
 public:
  Parser(std::string_view src, const std::vector<std::string>& varlist,
         const ConstantTable& constants)
      : src_(src), varlist_(varlist), constants_(constants) {}

  Expr run() {
    const int root = expr();
    skip_space();
    if (pos_ != src_.size()) fail("unexpected character '" + std::string(1, src_[pos_]) + "'");
    return Expr(std::move(nodes_), root, varlist_);
  }

 private:
  static constexpr int kMaxDepth = 200;

  [[noreturn]] void fail(const std::string& what) const { fail_at(pos_, what); }
  [[noreturn]] void fail_at(std::size_t at, const std::string& what) const {
    throw Error(ErrorKind::Syntax, what + " at offset " + std::to_string(at), at);
  }

  void skip_space() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }
  bool accept(char c) {
    skip_space();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }

  int push(ExprNode n) {
    nodes_.push_back(n);
    return static_cast<int>(nodes_.size()) - 1;
  }
  int unary_node(Op op, int a) { return push({op, 0.0, -1, a, -1}); }
  int binary_node(Op op, int a, int b) { return push({op, 0.0, -1, a, b}); }

  struct DepthGuard {
    explicit DepthGuard(Parser& p) : p(p) {
      if (++p.depth_ > kMaxDepth) p.fail("expression nested too deeply");
    }
    ~DepthGuard() { --p.depth_; }
    Parser& p;
  };

  int expr() {
    DepthGuard guard(*this);
    int lhs = term();
    for (;;) {
      if (accept('+')) {
        lhs = binary_node(Op::Add, lhs, term());
      } else if (accept('-')) {
        lhs = binary_node(Op::Sub, lhs, term());
      } else {
        return lhs;
      }
    }
  }

  int term() {
    int lhs = unary();
    for (;;) {
      if (accept('*')) {
        lhs = binary_node(Op::Mul, lhs, unary());
      } else if (accept('/')) {
        lhs = binary_node(Op::Div, lhs, unary());
      } else {
        return lhs;
      }
    }
  }

  int unary() {
    DepthGuard guard(*this);
    if (accept('-')) {
      const int operand = unary();
      // A negated literal is itself a literal, so negative constants print
      // and re-parse to the same node.
      if (nodes_[operand].op == Op::Constant) {
        nodes_[operand].value = -nodes_[operand].value;
        return operand;
      }
      return unary_node(Op::Neg, operand);
    }
    if (accept('+')) return unary();
    return power();
  }

  int power() {
    const int base = primary();
    if (accept('^')) return binary_node(Op::Pow, base, unary());
    return base;
  }

  int primary() {
    skip_space();
    if (pos_ >= src_.size()) fail("unexpected end of input");
    const char c = src_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return name();
    if (accept('(')) {
      const int inner = expr();
      expect(')');
      return inner;
    }
    fail(std::string("unexpected character '") + c + "'");
  }

  int number() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    if (pos_ < src_.size() && src_[pos_] == '.') {
      ++pos_;
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      std::size_t p = pos_ + 1;
      if (p < src_.size() && (src_[p] == '+' || src_[p] == '-')) ++p;
      if (p < src_.size() && std::isdigit(static_cast<unsigned char>(src_[p]))) {
        pos_ = p;
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
      }
    }
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(src_.data() + start, src_.data() + pos_, value);
    if (ec != std::errc() || ptr != src_.data() + pos_) fail_at(start, "malformed number");
    return push({Op::Constant, value, -1, -1, -1});
  }

  int name() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() &&
           (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
      ++pos_;
    }
    const std::string_view id = src_.substr(start, pos_ - start);

    for (std::size_t i = 0; i < varlist_.size(); ++i) {
      if (varlist_[i] == id) return push({Op::Variable, 0.0, static_cast<int>(i), -1, -1});
    }
    for (const auto& f : kFunctions) {
      if (f.name != id) continue;
      skip_space();
      if (!accept('(')) fail_at(start, "function '" + std::string(id) + "' needs an argument list");
      skip_space();
      if (pos_ < src_.size() && src_[pos_] == ')') {
        throw Error(ErrorKind::Arity, "function '" + std::string(id) + "' takes 1 argument, got 0", start);
      }
      const int arg = expr();
      if (accept(',')) {
        throw Error(ErrorKind::Arity, "function '" + std::string(id) + "' takes 1 argument", start);
      }
      expect(')');
      return unary_node(f.op, arg);
    }
    if (const auto it = constants_.find(id); it != constants_.end()) {
      return push({Op::Constant, it->second, -1, -1, -1});
    }
    if (id == "pi") return push({Op::Constant, std::numbers::pi, -1, -1, -1});
    throw Error(ErrorKind::UnknownVariable, "unknown identifier '" + std::string(id) + "'", start);
  }

  std::string_view src_;
  const std::vector<std::string>& varlist_;
  const ConstantTable& constants_;
  std::vector<ExprNode> nodes_;
  std::size_t pos_ = 0;
  int depth_ = 0;
};

std::string format_constant(double v) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  (void)ec;
  return std::string(buf.data(), ptr);
}

std::string_view op_symbol(Op op) {
  switch (op) {
    case Op::Add: return " + ";
    case Op::Sub: return " - ";
    case Op::Mul: return " * ";
    case Op::Div: return " / ";
    case Op::Pow: return "^";
    default: break;
  }
  for (const auto& f : kFunctions) {
    if (f.op == op) return f.name;
  }
  return "?";
}

void print_node(const Expr& e, int index, std::string& out) {
  const ExprNode& n = e.nodes()[index];
  switch (n.op) {
    case Op::Constant:
      if (std::signbit(n.value)) {
        out += '(' + format_constant(n.value) + ')';
      } else {
        out += format_constant(n.value);
      }
      return;
    case Op::Variable:
      out += e.varlist()[n.var];
      return;
    case Op::Neg:
      out += "(-";
      print_node(e, n.lhs, out);
      out += ')';
      return;
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div:
    case Op::Pow:
      out += '(';
      print_node(e, n.lhs, out);
      out += op_symbol(n.op);
      print_node(e, n.rhs, out);
      out += ')';
      return;
    default:
      out += op_symbol(n.op);
      out += '(';
      print_node(e, n.lhs, out);
      out += ')';
      return;
  }
}

}  // namespace

bool operator==(const Expr& a, const Expr& b) {
  if (a.empty() || b.empty()) return a.empty() == b.empty();
  return same_subtree(a, a.root(), b, b.root());
}

Expr parse(std::string_view source, const std::vector<std::string>& varlist,
           const ConstantTable& constants) {
  return Parser(source, varlist, constants).run();
}

std::string print(const Expr& e) {
  std::string out;
  if (!e.empty()) print_node(e, e.root(), out);
  return out;
}

SecondOrder eval2(const Expr& e, const Eigen::VectorXd& point, std::span<const int> active) {
  const int n = static_cast<int>(e.varlist().size());
  if (point.size() != n) throw Error(ErrorKind::InvalidArgument, "point length does not match varlist");
  const int k = static_cast<int>(active.size());
  if (k > kMaxJetDirections) throw Error(ErrorKind::InvalidArgument, "too many differentiation directions");

  std::array<Jet2<double>, 2 * kMaxJetDirections + 1> inline_args;
  std::vector<Jet2<double>> heap_args;
  std::span<Jet2<double>> args;
  if (n <= static_cast<int>(inline_args.size())) {
    args = std::span<Jet2<double>>(inline_args.data(), static_cast<std::size_t>(n));
  } else {
    heap_args.resize(static_cast<std::size_t>(n));
    args = heap_args;
  }
  for (int i = 0; i < n; ++i) args[i] = Jet2<double>(point[i], k);
  for (int d = 0; d < k; ++d) args[active[d]] = Jet2<double>::variable(point[active[d]], k, d);

  const Jet2<double> r = evaluate<Jet2<double>>(e, std::span<const Jet2<double>>(args.data(), args.size()));
  SecondOrder out;
  out.value = r.value();
  out.gradient = r.gradient();
  out.hessian = r.hessian();
  return out;
}

SecondOrder eval2(const Expr& e, const Eigen::VectorXd& point) {
  std::array<int, kMaxJetDirections> all{};
  const int n = static_cast<int>(e.varlist().size());
  if (n > kMaxJetDirections) throw Error(ErrorKind::InvalidArgument, "too many variables for eval2");
  for (int i = 0; i < n; ++i) all[i] = i;
  return eval2(e, point, std::span<const int>(all.data(), static_cast<std::size_t>(n)));
}

VectorExpr::VectorExpr(std::vector<Expr> components) : components_(std::move(components)) {
  if (!components_.empty()) varlist_ = components_.front().varlist();
  for (const Expr& c : components_) {
    if (c.varlist() != varlist_) {
      throw Error(ErrorKind::InvalidArgument, "vector components must share one varlist");
    }
  }
}

VectorExpr VectorExpr::parse(const std::vector<std::string>& sources,
                             const std::vector<std::string>& varlist,
                             const ConstantTable& constants) {
  std::vector<Expr> parts;
  parts.reserve(sources.size());
  for (const auto& s : sources) parts.push_back(implicit_motion::parse(s, varlist, constants));
  VectorExpr v(std::move(parts));
  v.varlist_ = varlist;
  return v;
}

Eigen::VectorXd VectorExpr::operator()(const Eigen::VectorXd& point) const {
  Eigen::VectorXd out(n_out());
  for (int i = 0; i < n_out(); ++i) out[i] = evaluate(components_[static_cast<std::size_t>(i)], point);
  return out;
}

void VectorExpr::jacobian(const Eigen::VectorXd& point, std::span<const int> active,
                          Eigen::VectorXd& value, Eigen::MatrixXd& jac) const {
  const int n = n_in();
  const int k = static_cast<int>(active.size());
  if (point.size() != n) throw Error(ErrorKind::InvalidArgument, "point length does not match varlist");
  std::vector<Jet2<double>> args(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) args[i] = Jet2<double>(point[i], k);
  for (int d = 0; d < k; ++d) args[active[d]] = Jet2<double>::variable(point[active[d]], k, d);
  value.resize(n_out());
  jac.resize(n_out(), k);
  for (int i = 0; i < n_out(); ++i) {
    const Jet2<double> r = evaluate<Jet2<double>>(components_[static_cast<std::size_t>(i)], args);
    value[i] = r.value();
    jac.row(i) = r.gradient().transpose();
  }
}

}  // namespace implicit_motion
