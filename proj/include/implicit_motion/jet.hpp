#pragma once

#include <cassert>
#include <cmath>

#include <Eigen/Dense>

#include "implicit_motion/error.hpp"

namespace implicit_motion {

// Upper bound on the number of differentiation directions of a Jet2. The
// Taylor coefficients live inline (no heap traffic in evaluation loops).
inline constexpr int kMaxJetDirections = 10;
inline constexpr int kMaxJetPacked = kMaxJetDirections * (kMaxJetDirections + 1) / 2;

// Truncated second-order Taylor expansion in k directions: value, gradient and
// the upper triangle of the Hessian packed row-major. Storing one triangle
// makes the expanded Hessian symmetric by construction.
template <typename Scalar>
class Jet2 {
 public:
  using Gradient = Eigen::Matrix<Scalar, Eigen::Dynamic, 1, 0, kMaxJetDirections, 1>;
  using Packed = Eigen::Matrix<Scalar, Eigen::Dynamic, 1, 0, kMaxJetPacked, 1>;
  using Hessian = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  Jet2() : Jet2(Scalar(0), 0) {}

  // Constant in `directions` directions.
  Jet2(Scalar value, int directions)
      : value_(value),
        grad_(Gradient::Zero(directions)),
        hess_(Packed::Zero(packed_size(directions))) {
    assert(directions >= 0 && directions <= kMaxJetDirections);
  }

  // The independent variable along direction `index`.
  static Jet2 variable(Scalar value, int directions, int index) {
    Jet2 jet(value, directions);
    jet.grad_[index] = Scalar(1);
    return jet;
  }

  static constexpr int packed_size(int k) { return k * (k + 1) / 2; }
  static constexpr int packed_index(int k, int i, int j) {
    return i * k - i * (i - 1) / 2 + (j - i);
  }

  int directions() const { return static_cast<int>(grad_.size()); }
  Scalar value() const { return value_; }
  const Gradient& gradient() const { return grad_; }
  const Packed& packed_hessian() const { return hess_; }

  Hessian hessian() const {
    const int k = directions();
    Hessian h(k, k);
    for (int i = 0; i < k; ++i) {
      for (int j = i; j < k; ++j) {
        h(i, j) = hess_[packed_index(k, i, j)];
        h(j, i) = h(i, j);
      }
    }
    return h;
  }

  // Chain rule for a scalar function with derivatives (d0, d1, d2) at value().
  Jet2 compose(Scalar d0, Scalar d1, Scalar d2) const {
    const int k = directions();
    Jet2 out(d0, k);
    out.grad_ = d1 * grad_;
    for (int i = 0, p = 0; i < k; ++i) {
      for (int j = i; j < k; ++j, ++p) {
        out.hess_[p] = d1 * hess_[p] + d2 * grad_[i] * grad_[j];
      }
    }
    return out;
  }

  Jet2& operator+=(const Jet2& o) {
    value_ += o.value_;
    grad_ += o.grad_;
    hess_ += o.hess_;
    return *this;
  }
  Jet2& operator-=(const Jet2& o) {
    value_ -= o.value_;
    grad_ -= o.grad_;
    hess_ -= o.hess_;
    return *this;
  }

  friend Jet2 operator+(Jet2 a, const Jet2& b) { return a += b; }
  friend Jet2 operator-(Jet2 a, const Jet2& b) { return a -= b; }
  friend Jet2 operator-(const Jet2& a) {
    Jet2 out(-a.value_, a.directions());
    out.grad_ = -a.grad_;
    out.hess_ = -a.hess_;
    return out;
  }

  friend Jet2 operator*(const Jet2& a, const Jet2& b) {
    const int k = a.directions();
    Jet2 out(a.value_ * b.value_, k);
    out.grad_ = a.value_ * b.grad_ + b.value_ * a.grad_;
    for (int i = 0, p = 0; i < k; ++i) {
      for (int j = i; j < k; ++j, ++p) {
        out.hess_[p] = a.value_ * b.hess_[p] + b.value_ * a.hess_[p] +
                       a.grad_[i] * b.grad_[j] + a.grad_[j] * b.grad_[i];
      }
    }
    return out;
  }

  friend Jet2 operator/(const Jet2& a, const Jet2& b) {
    if (b.value_ == Scalar(0)) throw Error(ErrorKind::Domain, "division by zero");
    const Scalar inv = Scalar(1) / b.value_;
    return a * b.compose(inv, -inv * inv, Scalar(2) * inv * inv * inv);
  }

 private:
  Scalar value_;
  Gradient grad_;
  Packed hess_;
};

}  // namespace implicit_motion
