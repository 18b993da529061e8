#pragma once

// Per-cluster patch priors and the closed-form patch updates they induce.
//
// Every patch update minimizes
//   -log p(z) + lambda/2 |Rx - z|^2 + rho/2 |H z - q|^2        (general)
//   -log p(z) + lambda/2 |Rx - z|^2 + |y - z|^2 / (2 sigma^2)   (denoising)
// where p is Gaussian N(mu, C), or for the scale mixture z = sqrt(v) u the
// v-conditional Gaussian N(sqrt(v) mu_u, v Sigma).

#include <Eigen/Dense>

#include <cmath>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "crfrestore/image.hpp"
#include "crfrestore/numerics.hpp"

namespace crf {

struct GaussianParams {
  PatchVector mu;
  SpdEigen cov;  ///< regularized, positive definite
};

enum class ScaleFromRoot {
  square,      ///< v = w^2, the substitution used to derive the quartic
  paper_sqrt,  ///< v = sqrt(w), the literal closing step of the derivation
};

struct GSMConfig {
  double alpha = 0.5;
  ScaleFromRoot scale_from_root = ScaleFromRoot::square;
};

/// Scale-mixture parameters of one cluster. Per-patch scales v live with the
/// solver state, since every member carries its own.
struct GSMParams {
  SpdEigen sigma;  ///< covariance of the latent Gaussian u
  PatchVector mu_u;
  double alpha = 0.5;
  double beta = 1.0;  ///< rate of the Gamma prior on v
  ScaleFromRoot scale_from_root = ScaleFromRoot::square;
};

// ---------------------------------------------------------------------------
// Shared quadratic subproblem

namespace detail {

/// z = m + (C^-1 / s + diag(weight))^-1 b.
/// Uniform weights use the eigendecomposition; otherwise a Cholesky solve on
/// the assembled system, with C^-1 taken from `precision` when supplied.
inline PatchVector solve_patch(const SpdEigen& cov, double s, const PatchVector& m,
                               const Eigen::VectorXd& weight, const Eigen::VectorXd& b,
                               const SymMatrix* precision = nullptr) {
  const Eigen::Index n = m.size();
  if (cov.dim() != n || weight.size() != n || b.size() != n) {
    throw DimensionError("patch update: vector length does not match prior dimension");
  }
  const double w0 = weight[0];
  if ((weight.array() == w0).all()) {
    if (w0 == 0.0) return m;
    return m + cov.shrink(s, w0, b / w0);
  }
  SymMatrix a = precision ? SymMatrix(*precision / s) : SymMatrix(cov.inverse() / s);
  a.diagonal() += weight;
  Eigen::LLT<SymMatrix> llt(a);
  if (llt.info() != Eigen::Success) throw NumericalError("patch update: system not positive definite");
  return m + llt.solve(b);
}

inline void check_penalties(double lambda, double rho) {
  if (!(lambda >= 0.0) || !(rho >= 0.0)) throw std::invalid_argument("penalties must be >= 0");
}

inline void check_lengths(Eigen::Index n, std::initializer_list<Eigen::Index> sizes) {
  for (auto s : sizes)
    if (s != n) throw DimensionError("patch update: vector length does not match prior dimension");
}

inline constexpr double half_log_two_pi = 0.91893853320467274178;  // log(2 pi) / 2

}  // namespace detail

// ---------------------------------------------------------------------------
// Gaussian prior

/// Sample mean and covariance of the columns of `members`, plus epsilon * I
/// with epsilon = regularization_epsilon(cov, noise_variance).
inline GaussianParams gaussian_estimate(const Eigen::Ref<const Eigen::MatrixXd>& members,
                                        double noise_variance) {
  SampleStats st = sample_stats(members);
  const double eps = regularization_epsilon(st.cov, noise_variance);
  return {std::move(st.mean), SpdEigen(regularize_spd(st.cov, eps))};
}

/// z = (C^-1 + lambda I + rho H^T H)^-1 (C^-1 mu + lambda Rx + rho H^T q).
/// `observed` holds the 0/1 diagonal of H.
inline PatchVector gaussian_update_z(const GaussianParams& p, const PatchVector& rx, const PatchVector& q,
                                     const Eigen::VectorXd& observed, double lambda, double rho) {
  detail::check_penalties(lambda, rho);
  detail::check_lengths(p.mu.size(), {rx.size(), q.size(), observed.size()});
  const Eigen::VectorXd weight = (lambda + rho * observed.array()).matrix();
  const Eigen::VectorXd b =
      (lambda * (rx - p.mu).array() + rho * observed.array() * (q - p.mu).array()).matrix();
  return detail::solve_patch(p.cov, 1.0, p.mu, weight, b);
}

/// z = (C^-1 + (lambda + 1/sigma^2) I)^-1 (C^-1 mu + lambda Rx + y / sigma^2).
inline PatchVector gaussian_update_z_denoising(const GaussianParams& p, const PatchVector& rx,
                                               const PatchVector& y, double lambda, double sigma2) {
  detail::check_penalties(lambda, 0.0);
  detail::check_lengths(p.mu.size(), {rx.size(), y.size()});
  if (!(sigma2 > 0.0)) throw std::invalid_argument("denoising requires sigma^2 > 0");
  const double d = lambda + 1.0 / sigma2;
  const Eigen::VectorXd weight = Eigen::VectorXd::Constant(p.mu.size(), d);
  const Eigen::VectorXd b = lambda * (rx - p.mu) + (y - p.mu) / sigma2;
  return detail::solve_patch(p.cov, 1.0, p.mu, weight, b);
}

/// -log N(z; mu, C), constants included.
inline double gaussian_neg_log_prior(const GaussianParams& p, const PatchVector& z) {
  const double n = static_cast<double>(z.size());
  return 0.5 * p.cov.inv_quad(z - p.mu) + 0.5 * p.cov.log_det() + n * detail::half_log_two_pi;
}

// ---------------------------------------------------------------------------
// Gaussian scale mixture prior

/// Gamma rate for which the latent covariance is Sigma = (beta / alpha) C:
/// beta = sqrt(alpha) Gamma(alpha) / Gamma(alpha + 1/2).
inline double gsm_beta(double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("GSM alpha must be > 0");
  return std::sqrt(alpha) * std::exp(log_gamma(alpha) - log_gamma(alpha + 0.5));
}

/// Maps a cluster covariance C and mean mu_z to scale-mixture parameters:
/// Sigma = (beta/alpha) C and mu_u = mu_z sqrt(beta/alpha), the latter from
/// mu_z = E(sqrt v) mu_u with E(sqrt v)^2 = alpha/beta.
inline GSMParams gsm_map_params(const SpdEigen& cov, const PatchVector& mu_z, const GSMConfig& cfg) {
  const double beta = gsm_beta(cfg.alpha);
  const double ratio = beta / cfg.alpha;
  GSMParams g;
  g.sigma = cov.scaled(ratio);
  g.mu_u = mu_z * std::sqrt(ratio);
  g.alpha = cfg.alpha;
  g.beta = beta;
  g.scale_from_root = cfg.scale_from_root;
  return g;
}

inline GSMParams gsm_map_params(const SymMatrix& cov, const PatchVector& mu_z, const GSMConfig& cfg) {
  return gsm_map_params(SpdEigen(cov), mu_z, cfg);
}

inline GSMParams gsm_map_params(const GaussianParams& gauss, const GSMConfig& cfg) {
  return gsm_map_params(gauss.cov, gauss.mu, cfg);
}

/// Scalar MAP objective in v (up to constants):
///   beta v + (1 - alpha + n/2) log v + d / (2 v) - c / sqrt(v).
inline double gsm_scale_objective(double alpha, double beta, double n, double c, double d, double v) {
  return beta * v + (1.0 - alpha + 0.5 * n) * std::log(v) + d / (2.0 * v) - c / std::sqrt(v);
}

/// Quartic beta w^4 + (1 - alpha + n/2) w^2 + (c/2) w - d/2 whose positive
/// roots w = sqrt(v) are the stationary points of gsm_scale_objective.
inline Quartic gsm_quartic(double alpha, double beta, double n, double c, double d) {
  return {beta, 1.0 - alpha + 0.5 * n, 0.5 * c, -0.5 * d};
}

/// MAP scale from the quadratic forms d = z^T Sigma^-1 z, c = z^T Sigma^-1 mu_u.
/// Among the positive quartic roots the one minimizing the scalar objective
/// wins. No positive root (only when d <= 0) gives the neutral scale 1.
inline double gsm_scale_from_forms(double alpha, double beta, double n, double c, double d,
                                   ScaleFromRoot mode = ScaleFromRoot::square) {
  const auto roots = quartic_positive_roots(gsm_quartic(alpha, beta, n, c, d));
  double best_w = -1.0;
  double best_obj = std::numeric_limits<double>::infinity();
  for (double w : roots) {
    const double obj = gsm_scale_objective(alpha, beta, n, c, d, w * w);
    if (obj < best_obj) {
      best_obj = obj;
      best_w = w;
    }
  }
  if (best_w <= 0.0) return 1.0;
  return mode == ScaleFromRoot::square ? best_w * best_w : std::sqrt(best_w);
}

inline double gsm_estimate_v(const GSMParams& p, const PatchVector& z) {
  if (!z.allFinite()) throw NumericalError("gsm_estimate_v: non-finite patch");
  const double d = p.sigma.inv_quad(z);
  const double c = p.sigma.inv_bilinear(z, p.mu_u);
  return gsm_scale_from_forms(p.alpha, p.beta, static_cast<double>(z.size()), c, d, p.scale_from_root);
}

/// z = (v^-1 Sigma^-1 + lambda I + rho H^T H)^-1 (v^-1/2 Sigma^-1 mu_u + lambda Rx + rho H^T q).
inline PatchVector gsm_update_z(const GSMParams& p, double v, const PatchVector& rx, const PatchVector& q,
                                const Eigen::VectorXd& observed, double lambda, double rho) {
  detail::check_penalties(lambda, rho);
  detail::check_lengths(p.mu_u.size(), {rx.size(), q.size(), observed.size()});
  if (!(v > 0.0)) throw std::invalid_argument("GSM scale v must be > 0");
  const PatchVector m = std::sqrt(v) * p.mu_u;
  const Eigen::VectorXd weight = (lambda + rho * observed.array()).matrix();
  const Eigen::VectorXd b =
      (lambda * (rx - m).array() + rho * observed.array() * (q - m).array()).matrix();
  return detail::solve_patch(p.sigma, v, m, weight, b);
}

/// Denoising form: the data term |y - z|^2 / (2 sigma^2) replaces the q coupling.
inline PatchVector gsm_update_z_denoising(const GSMParams& p, double v, const PatchVector& rx,
                                          const PatchVector& y, double lambda, double sigma2) {
  detail::check_penalties(lambda, 0.0);
  detail::check_lengths(p.mu_u.size(), {rx.size(), y.size()});
  if (!(v > 0.0)) throw std::invalid_argument("GSM scale v must be > 0");
  if (!(sigma2 > 0.0)) throw std::invalid_argument("denoising requires sigma^2 > 0");
  const PatchVector m = std::sqrt(v) * p.mu_u;
  const double d = lambda + 1.0 / sigma2;
  const Eigen::VectorXd weight = Eigen::VectorXd::Constant(m.size(), d);
  const Eigen::VectorXd b = lambda * (rx - m) + (y - m) / sigma2;
  return detail::solve_patch(p.sigma, v, m, weight, b);
}

/// -log N(z; sqrt(v) mu_u, v Sigma) - log Gamma(v; alpha, beta), constants included.
inline double gsm_neg_log_prior(const GSMParams& p, double v, const PatchVector& z) {
  const double n = static_cast<double>(z.size());
  const PatchVector r = z - std::sqrt(v) * p.mu_u;
  const double gaussian = 0.5 * p.sigma.inv_quad(r) / v + 0.5 * (n * std::log(v) + p.sigma.log_det()) +
                          n * detail::half_log_two_pi;
  const double gamma = -p.alpha * std::log(p.beta) + log_gamma(p.alpha) -
                       (p.alpha - 1.0) * std::log(v) + p.beta * v;
  return gaussian + gamma;
}

}  // namespace crf
