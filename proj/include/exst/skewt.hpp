#pragma once

// Non-central extended skew-t distribution ST_d(mu, Omega, alpha, tau, kappa, nu).
//
// With omega = diag(Omega)^{1/2}, z = (y - mu) / omega and Omega_bar the
// correlation matrix of Omega:
//
//   pdf(y) = t_d(y; mu, Omega, nu)
//            * Psi((alpha'z + tau) sqrt((nu + d) / (nu + z'Omega_bar^{-1}z)); kappa, nu + d)
//            / Psi(tau_bar; kappa_bar, nu)
//
// where Psi(x; a, n) is the univariate non-central t cdf and
// tau_bar, kappa_bar are tau, kappa divided by sqrt(1 + alpha'Omega_bar alpha).

#include <cassert>
#include <cmath>
#include <optional>
#include <random>

#include "exst/common.hpp"
#include "exst/qmc_cdf.hpp"
#include "exst/univariate.hpp"

namespace exst {

struct ExtSkewTParams {
  Vector mu;
  Matrix Omega;
  Vector alpha;
  double tau = 0.0;
  double kappa = 0.0;
  double nu = 1.0;

  int dim() const { return static_cast<int>(mu.size()); }

  void validate() const {
    const Index d = mu.size();
    if (d < 1) throw ConfigError("ExtSkewTParams: empty location");
    if (Omega.rows() != d || Omega.cols() != d || alpha.size() != d)
      throw ConfigError("ExtSkewTParams: dimension mismatch");
    if (!(nu > 0.0)) throw ConfigError("ExtSkewTParams: nu must be positive");
    if (!mu.allFinite() || !Omega.allFinite() || !alpha.allFinite() || !std::isfinite(tau) || !std::isfinite(kappa))
      throw NumericError("ExtSkewTParams: non-finite parameter");
    if ((Omega - Omega.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, Omega.cwiseAbs().maxCoeff()))
      throw ConfigError("ExtSkewTParams: Omega is not symmetric");
  }

  static ExtSkewTParams t(Vector mu, Matrix Omega, double nu) {
    Vector a = Vector::Zero(mu.size());
    return {std::move(mu), std::move(Omega), std::move(a), 0.0, 0.0, nu};
  }
};

/// Quantities derived from ExtSkewTParams that every evaluation needs.
struct SkewTDerived {
  Vector omega;       // diagonal scales
  Matrix Omega_bar;   // correlation matrix
  double q_alpha;     // alpha' Omega_bar alpha
  Vector delta;       // Omega_bar alpha / sqrt(1 + q_alpha)
  double tau_bar;
  double kappa_bar;

  explicit SkewTDerived(const ExtSkewTParams& p) {
    Omega_bar = to_correlation(p.Omega, &omega);
    q_alpha = p.alpha.dot(Omega_bar * p.alpha);
    double s = std::sqrt(1.0 + q_alpha);
    delta = Omega_bar * p.alpha / s;
    tau_bar = p.tau / s;
    kappa_bar = p.kappa / s;
  }
};

/// Log density of a multivariate t with location mu, scale Omega.
inline double mvt_log_pdf(const Vector& y, const Vector& mu, const Matrix& Omega, double nu) {
  const double d = static_cast<double>(y.size());
  auto llt = checked_llt(Omega, "mvt_log_pdf");
  Vector r = llt.matrixL().solve(y - mu);
  double q = r.squaredNorm();
  return std::lgamma(0.5 * (nu + d)) - std::lgamma(0.5 * nu) - 0.5 * d * std::log(nu * std::numbers::pi) -
         0.5 * log_det_from_llt(llt) - 0.5 * (nu + d) * std::log1p(q / nu);
}

/// Log of the non-central extended skew-t density.
inline double nc_ext_skew_t_log_pdf(const Vector& y, const ExtSkewTParams& p) {
  p.validate();
  if (y.size() != p.mu.size()) throw ConfigError("nc_ext_skew_t_log_pdf: dimension mismatch");
  SkewTDerived dv(p);
  const double d = static_cast<double>(p.dim());
  Vector z = (y - p.mu).cwiseQuotient(dv.omega);
  auto llt = checked_llt(dv.Omega_bar, "nc_ext_skew_t_log_pdf");
  double q = llt.matrixL().solve(z).squaredNorm();
  double arg = (p.alpha.dot(z) + p.tau) * std::sqrt((p.nu + d) / (p.nu + q));
  double lt = mvt_log_pdf(y, p.mu, p.Omega, p.nu);
  double num = log_univariate_t_cdf(arg, p.kappa, p.nu + d);
  double den = log_univariate_t_cdf(dv.tau_bar, dv.kappa_bar, p.nu);
  double v = lt + num - den;
  if (std::isnan(v)) throw NumericError("nc_ext_skew_t_log_pdf: NaN result");
  return v;
}

inline double nc_ext_skew_t_pdf(const Vector& y, const ExtSkewTParams& p) { return std::exp(nc_ext_skew_t_log_pdf(y, p)); }

/// Non-central extended skew-t cdf as the ratio of a (d+1)-dimensional
/// non-central t cdf and a univariate one. When the slant and the extension
/// vanish the extra coordinate is independent of the rest and the result is
/// the d-dimensional central t cdf for every kappa.
inline CdfResult nc_ext_skew_t_cdf(const Vector& y, const ExtSkewTParams& p, const QmcConfig& cfg,
                                   std::uint64_t tag = 0) {
  p.validate();
  const Index d = p.mu.size();
  if (y.size() != d) throw ConfigError("nc_ext_skew_t_cdf: dimension mismatch");
  SkewTDerived dv(p);
  Vector z = (y - p.mu).cwiseQuotient(dv.omega);
  if (p.alpha.isZero(0.0) && dv.tau_bar == 0.0) return mvt_cdf(z, dv.Omega_bar, Vector::Zero(d), p.nu, cfg, tag);

  Matrix star(d + 1, d + 1);
  star.topLeftCorner(d, d) = dv.Omega_bar;
  star.topRightCorner(d, 1) = -dv.delta;
  star.bottomLeftCorner(1, d) = -dv.delta.transpose();
  star(d, d) = 1.0;
  Vector upper(d + 1), kstar = Vector::Zero(d + 1);
  upper.head(d) = z;
  upper(d) = dv.tau_bar;
  kstar(d) = dv.kappa_bar;
  CdfResult num = mvt_cdf(upper, star, kstar, p.nu, cfg, tag);
  double log_den = log_univariate_t_cdf(dv.tau_bar, dv.kappa_bar, p.nu);
  CdfResult out = num;
  out.log_value = std::min(0.0, num.log_value - log_den);
  out.abs_error = num.abs_error * std::exp(-log_den);
  if (!cfg.log_scale) out.err_estimate = out.abs_error;
  return out;
}

/// Slant and extension of the marginal law of the coordinates in `keep`.
/// `scale` = 1/sqrt(1 + alpha_t' Omega_bar_{tt.s} alpha_t) is the factor applied
/// to tau (and to a non-centrality parameter).
struct MarginalSlant {
  Vector alpha;
  double tau = 0.0;
  double scale = 1.0;
};

inline MarginalSlant marginal_slant_extension(const Matrix& Omega_bar, const Vector& alpha, double tau,
                                              const IndexList& keep) {
  const int d = static_cast<int>(alpha.size());
  if (keep.empty()) throw ConfigError("marginal_slant_extension: empty index set");
  for (int k : keep)
    if (k < 0 || k >= d) throw ConfigError("marginal_slant_extension: index out of range");
  IndexList drop = complement(keep, d);
  Vector as = select(alpha, keep);
  if (drop.empty()) return {as, tau, 1.0};
  Vector at = select(alpha, drop);
  Matrix oss = select(Omega_bar, keep, keep);
  Matrix ost = select(Omega_bar, keep, drop);
  Matrix ott = select(Omega_bar, drop, drop);
  auto llt = checked_llt(oss, "marginal_slant_extension");
  Matrix cond = ott - ost.transpose() * llt.solve(ost);
  checked_llt(cond, "marginal_slant_extension (conditional block)");
  double scale = 1.0 / std::sqrt(1.0 + at.dot(cond * at));
  Vector a = (as + llt.solve(ost * at)) * scale;
  return {a, tau * scale, scale};
}

/// Marginal ExtSkewTParams of a subset of coordinates.
inline ExtSkewTParams marginal_params(const ExtSkewTParams& p, const IndexList& keep) {
  SkewTDerived dv(p);
  MarginalSlant ms = marginal_slant_extension(dv.Omega_bar, p.alpha, p.tau, keep);
  return {select(p.mu, keep), select(p.Omega, keep, keep), ms.alpha, ms.tau, p.kappa * ms.scale, p.nu};
}

/// log m_{j+}: log of the nu-th positive moment of the standardized
/// extended skew-normal margin at each site.
inline Vector log_m_plus(const Matrix& Omega_bar, const Vector& alpha, double tau, double nu) {
  if (!(nu > 0.0)) throw ConfigError("m_plus: nu must be positive");
  const int d = static_cast<int>(alpha.size());
  double tau_bar = tau / std::sqrt(1.0 + alpha.dot(Omega_bar * alpha));
  double log_den = 0.5 * std::log(std::numbers::pi) + log_norm_cdf(tau_bar);
  double log_const = 0.5 * (nu - 2.0) * std::log(2.0) + std::lgamma(0.5 * (nu + 1.0));
  Vector out(d);
  for (int j = 0; j < d; ++j) {
    MarginalSlant ms = marginal_slant_extension(Omega_bar, alpha, tau, {j});
    double a = ms.alpha(0);
    out(j) = log_const + log_univariate_t_cdf(a * std::sqrt(nu + 1.0), -ms.tau, nu + 1.0) - log_den;
  }
  if (!out.allFinite()) throw NumericError("m_plus: non-finite normalizer");
  return out;
}

inline Vector m_plus(const Matrix& Omega_bar, const Vector& alpha, double tau, double nu) {
  return log_m_plus(Omega_bar, alpha, tau, nu).array().exp();
}

/// Draws from ST_d by conditioning: with (X, X0) jointly normal with
/// correlation [[Omega_bar, delta], [delta', 1]] and S = sqrt(chi2_nu / nu),
/// Y = mu + omega X / S given (kappa_bar - X0) / S <= tau_bar.
///
/// Coordinates with zero scale are allowed and return mu exactly; they do
/// not take part in the slant.
class ExtSkewTSampler {
 public:
  static constexpr long kMaxProposals = 1000000;

  explicit ExtSkewTSampler(const ExtSkewTParams& p) : p_(p) {
    const int d = p.dim();
    if (d < 1) throw ConfigError("ExtSkewTSampler: empty location");
    if (!(p.nu > 0.0)) throw ConfigError("ExtSkewTSampler: nu must be positive");
    for (int i = 0; i < d; ++i) {
      if (p.Omega(i, i) < 0.0) throw NumericError("ExtSkewTSampler: negative variance");
      if (p.Omega(i, i) > 0.0) active_.push_back(i);
    }
    const int m = static_cast<int>(active_.size());
    if (m == 0) return;
    ExtSkewTParams sub{select(p.mu, active_), select(p.Omega, active_, active_), select(p.alpha, active_), p.tau,
                       p.kappa, p.nu};
    SkewTDerived dv(sub);
    omega_ = dv.omega;
    tau_bar_ = dv.tau_bar;
    kappa_bar_ = dv.kappa_bar;
    Matrix joint(m + 1, m + 1);
    joint.topLeftCorner(m, m) = dv.Omega_bar;
    joint.topRightCorner(m, 1) = dv.delta;
    joint.bottomLeftCorner(1, m) = dv.delta.transpose();
    joint(m, m) = 1.0;
    Eigen::SelfAdjointEigenSolver<Matrix> es(joint);
    if (es.info() != Eigen::Success) throw NumericError("ExtSkewTSampler: eigendecomposition failed");
    Vector ev = es.eigenvalues();
    double tol = 1e-10 * std::max(1.0, ev.cwiseAbs().maxCoeff());
    if (ev.minCoeff() < -tol) throw NumericError("ExtSkewTSampler: joint matrix is not positive semi-definite");
    factor_ = es.eigenvectors() * ev.cwiseMax(0.0).cwiseSqrt().asDiagonal();
    skewed_ = !(sub.alpha.isZero(0.0) && tau_bar_ == 0.0);
  }

  Vector draw(Rng& rng) const {
    Vector y = p_.mu;
    const int m = static_cast<int>(active_.size());
    if (m == 0) return y;
    std::normal_distribution<double> normal;
    std::gamma_distribution<double> gamma(0.5 * p_.nu, 2.0);
    Vector g(m + 1);
    for (long it = 0; it < kMaxProposals; ++it) {
      for (int k = 0; k <= m; ++k) g(k) = normal(rng);
      Vector x = factor_ * g;
      double s = std::isfinite(p_.nu) ? std::sqrt(gamma(rng) / p_.nu) : 1.0;
      // without slant and extension the condition is independent of X and S
      if (skewed_ && !((kappa_bar_ - x(m)) / s <= tau_bar_)) continue;
      for (int k = 0; k < m; ++k) y(active_[static_cast<std::size_t>(k)]) += omega_(k) * x(k) / s;
      return y;
    }
    throw NumericError("ExtSkewTSampler: rejection cap of 1e6 proposals exceeded");
  }

 private:
  ExtSkewTParams p_;
  IndexList active_;
  Vector omega_;
  Matrix factor_;
  double tau_bar_ = 0.0;
  double kappa_bar_ = 0.0;
  bool skewed_ = false;
};

/// n draws, one per row.
inline Matrix sample_nc_ext_skew_t(const ExtSkewTParams& p, int n, Rng& rng) {
  if (n < 1) throw ConfigError("sample_nc_ext_skew_t: n must be positive");
  ExtSkewTSampler s(p);
  Matrix out(n, p.dim());
  for (int i = 0; i < n; ++i) out.row(i) = s.draw(rng).transpose();
  return out;
}

}  // namespace exst
