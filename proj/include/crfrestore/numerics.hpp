#pragma once

// Small dense kernels: sample statistics, SPD regularization and solves,
// eigen-based covariance models, positive quartic roots, log-gamma.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "crfrestore/errors.hpp"

namespace crf {

using SymMatrix = Eigen::MatrixXd;

struct SampleStats {
  Eigen::VectorXd mean;
  SymMatrix cov;
};

/// Sample mean and biased (divide-by-count) sample covariance of the columns of `vectors`.
inline SampleStats sample_stats(const Eigen::Ref<const Eigen::MatrixXd>& vectors) {
  const auto count = vectors.cols();
  if (count < 2) throw std::invalid_argument("sample_stats: need at least 2 vectors");
  SampleStats s;
  s.mean = vectors.rowwise().mean();
  const Eigen::MatrixXd centered = vectors.colwise() - s.mean;
  s.cov.noalias() = centered * centered.transpose();
  s.cov /= static_cast<double>(count);
  // symmetrize against accumulated rounding
  s.cov = 0.5 * (s.cov + s.cov.transpose()).eval();
  return s;
}

/// Diagonal loading used for cluster covariances: 1e-3 * max(trace/n, noise variance, 1).
/// The unit floor keeps flat, noiseless clusters positive definite.
inline double regularization_epsilon(const SymMatrix& cov, double noise_variance) {
  const double mean_var = cov.trace() / static_cast<double>(cov.rows());
  return 1e-3 * std::max({mean_var, noise_variance, 1.0});
}

namespace detail {
inline double min_eigenvalue(const SymMatrix& a) {
  Eigen::SelfAdjointEigenSolver<SymMatrix> es(a, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}
}  // namespace detail

/// cov + epsilon * I, verified positive definite by a Cholesky factorization.
inline SymMatrix regularize_spd(const SymMatrix& cov, double epsilon) {
  if (cov.rows() != cov.cols()) throw DimensionError("regularize_spd: matrix not square");
  SymMatrix out = cov;
  out.diagonal().array() += epsilon;
  Eigen::LLT<SymMatrix> llt(out);
  if (llt.info() != Eigen::Success) {
    std::ostringstream msg;
    msg << "regularize_spd: matrix not positive definite after adding " << epsilon
        << " (min eigenvalue " << detail::min_eigenvalue(out) << ")";
    throw NumericalError(msg.str());
  }
  return out;
}

/// Solves A x = b for symmetric positive definite A (vector or matrix right-hand side).
template <class Rhs>
Eigen::Matrix<double, Eigen::Dynamic, Rhs::ColsAtCompileTime> spd_solve(
    const SymMatrix& a, const Eigen::MatrixBase<Rhs>& b) {
  if (a.rows() != a.cols() || a.rows() != b.rows()) throw DimensionError("spd_solve: shape mismatch");
  Eigen::LLT<SymMatrix> llt(a);
  if (llt.info() != Eigen::Success) throw NumericalError("spd_solve: matrix not positive definite");
  return llt.solve(b);
}

/// A symmetric positive definite matrix held as its eigendecomposition
/// A = U diag(l) U^T, used for repeated shifted solves and quadratic forms.
class SpdEigen {
 public:
  SpdEigen() = default;

  explicit SpdEigen(const SymMatrix& a) {
    Eigen::SelfAdjointEigenSolver<SymMatrix> es(a);
    if (es.info() != Eigen::Success) throw NumericalError("SpdEigen: eigendecomposition failed");
    values_ = es.eigenvalues();
    vectors_ = es.eigenvectors();
    if (!(values_.minCoeff() > 0.0)) {
      std::ostringstream msg;
      msg << "SpdEigen: matrix not positive definite (min eigenvalue " << values_.minCoeff() << ")";
      throw NumericalError(msg.str());
    }
    log_det_ = values_.array().log().sum();
  }

  Eigen::Index dim() const noexcept { return values_.size(); }
  const Eigen::VectorXd& eigenvalues() const noexcept { return values_; }
  const Eigen::MatrixXd& eigenvectors() const noexcept { return vectors_; }
  double log_det() const noexcept { return log_det_; }

  SymMatrix matrix() const { return vectors_ * values_.asDiagonal() * vectors_.transpose(); }
  SymMatrix inverse() const {
    return vectors_ * values_.cwiseInverse().asDiagonal() * vectors_.transpose();
  }

  /// factor * A, sharing the eigenvectors.
  SpdEigen scaled(double factor) const {
    if (!(factor > 0.0)) throw std::invalid_argument("SpdEigen::scaled: factor must be > 0");
    SpdEigen out = *this;
    out.values_ *= factor;
    out.log_det_ += static_cast<double>(values_.size()) * std::log(factor);
    return out;
  }

  /// x^T A^-1 x
  double inv_quad(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd p = vectors_.transpose() * x;
    return (p.array().square() / values_.array()).sum();
  }

  /// x^T A^-1 y
  double inv_bilinear(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const {
    const Eigen::VectorXd px = vectors_.transpose() * x;
    const Eigen::VectorXd py = vectors_.transpose() * y;
    return (px.array() * py.array() / values_.array()).sum();
  }

  Eigen::VectorXd inv_times(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd p = vectors_.transpose() * x;
    return vectors_ * (p.array() / values_.array()).matrix();
  }

  /// (A^-1 / s + d I)^-1 (d r) for scale s > 0 and uniform weight d >= 0.
  Eigen::VectorXd shrink(double s, double d, const Eigen::VectorXd& r) const {
    const Eigen::ArrayXd g = (d * s) * values_.array();
    const Eigen::VectorXd p = vectors_.transpose() * r;
    return vectors_ * (p.array() * g / (1.0 + g)).matrix();
  }

 private:
  Eigen::VectorXd values_;
  Eigen::MatrixXd vectors_;
  double log_det_ = 0.0;
};

/// a4 w^4 + a2 w^2 + a1 w + a0 (no cubic term).
struct Quartic {
  double a4 = 1.0;
  double a2 = 0.0;
  double a1 = 0.0;
  double a0 = 0.0;

  double operator()(double w) const noexcept {
    const double w2 = w * w;
    return (a4 * w2 + a2) * w2 + a1 * w + a0;
  }
  double max_abs_coefficient() const noexcept {
    return std::max({std::abs(a4), std::abs(a2), std::abs(a1), std::abs(a0)});
  }
};

namespace detail {

/// Polynomial with coefficients c[0] + c[1] w + ... + c[deg] w^deg.
struct Poly {
  std::array<double, 5> c{};
  int deg = 0;

  double operator()(double w) const noexcept {
    double v = c[static_cast<std::size_t>(deg)];
    for (int k = deg - 1; k >= 0; --k) v = v * w + c[static_cast<std::size_t>(k)];
    return v;
  }
  Poly derivative() const noexcept {
    Poly d;
    d.deg = std::max(deg - 1, 0);
    for (int k = 1; k <= deg; ++k)
      d.c[static_cast<std::size_t>(k - 1)] = k * c[static_cast<std::size_t>(k)];
    if (deg == 0) d.c[0] = 0.0;
    return d;
  }
};

/// Root of p in [a, b] given a sign change, by Newton steps safeguarded with bisection.
inline double bracketed_root(const Poly& p, const Poly& dp, double a, double b, double fa) {
  double x = 0.5 * (a + b);
  for (int it = 0; it < 300; ++it) {
    const double fx = p(x);
    if (fx == 0.0) return x;
    if ((fx < 0) == (fa < 0)) {
      a = x;
      fa = fx;
    } else {
      b = x;
    }
    const double d = dp(x);
    double next = d != 0.0 ? x - fx / d : 0.5 * (a + b);
    if (!(next > a && next < b)) next = 0.5 * (a + b);
    if (next == x || b - a <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(x))) {
      return next;
    }
    x = next;
  }
  return x;
}

/// All real roots of p inside the open interval (lo, hi], ascending. Intervals of
/// monotonicity come from the roots of the derivative.
inline std::vector<double> roots_in(const Poly& p, double lo, double hi) {
  std::vector<double> out;
  if (p.deg == 0) return out;
  const Poly dp = p.derivative();
  std::vector<double> knots{lo};
  if (p.deg >= 2) {
    for (double r : roots_in(dp, lo, hi))
      if (r > knots.back()) knots.push_back(r);
  }
  if (hi > knots.back()) knots.push_back(hi);

  double scale = 0.0;
  for (int k = 0; k <= p.deg; ++k) scale = std::max(scale, std::abs(p.c[static_cast<std::size_t>(k)]));

  for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
    const double a = knots[k];
    const double b = knots[k + 1];
    const double fa = p(a);
    const double fb = p(b);
    if (fa == 0.0 && a > lo) out.push_back(a);
    if (fb == 0.0) {
      out.push_back(b);
    } else if (fa != 0.0 && (fa < 0) != (fb < 0)) {
      out.push_back(bracketed_root(p, dp, a, b, fa));
    } else if (k + 1 < knots.size() - 1) {
      // interior extremum touching zero (double root)
      const double tol = 1e-13 * scale * std::max(1.0, std::pow(b, p.deg));
      if (std::abs(fb) <= tol) out.push_back(b);
    }
  }
  std::sort(out.begin(), out.end());
  std::vector<double> uniq;
  for (double r : out) {
    if (uniq.empty() || r - uniq.back() > 1e-12 * std::max(1.0, std::abs(r))) uniq.push_back(r);
  }
  return uniq;
}

}  // namespace detail

/// Positive real roots of a4 w^4 + a2 w^2 + a1 w + a0, ascending. Requires a4 > 0.
/// Roots are isolated on intervals where the polynomial is monotone and then
/// polished by safeguarded Newton iteration.
inline std::vector<double> quartic_positive_roots(const Quartic& q) {
  if (!(q.a4 > 0.0)) throw std::invalid_argument("quartic: leading coefficient must be > 0");
  detail::Poly p;
  p.deg = 4;
  p.c = {q.a0, q.a1, q.a2, 0.0, q.a4};
  // Cauchy bound on root magnitude
  const double bound =
      1.0 + std::max({std::abs(q.a2), std::abs(q.a1), std::abs(q.a0)}) / q.a4;
  return detail::roots_in(p, 0.0, bound);
}

/// log Gamma(x) for x > 0.
inline double log_gamma(double x) {
  if (!(x > 0.0)) throw std::domain_error("log_gamma: argument must be > 0");
  return std::lgamma(x);
}

}  // namespace crf
