#pragma once

// GEV margins with site-specific location and scale and a shape that is
// linear in two site covariates; transformation to and from unit Frechet.

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "exst/optimize.hpp"

namespace exst {

struct GevParams {
  Vector mu;     // per-site location
  Vector sigma;  // per-site scale
  double xi0 = 0.0, xiE = 0.0, xiN = 0.0;
  Matrix covariates;  // d x 2 (x_E, x_N)
  std::optional<Vector> se;  // (mu_1, sigma_1, ..., mu_d, sigma_d, xi0, xiE, xiN)
  double loglik = kNaN;

  int dim() const { return static_cast<int>(mu.size()); }
  double xi(int i) const { return xi0 + xiE * covariates(i, 0) + xiN * covariates(i, 1); }
};

inline constexpr double kGumbelShapeTol = 1e-10;

/// -log F(x) for GEV(mu, sigma, xi); +inf below and 0 above the support.
inline double gev_neg_log_cdf(double x, double mu, double sigma, double xi) {
  double y = (x - mu) / sigma;
  if (std::abs(xi) < kGumbelShapeTol) return std::exp(-y);
  double b = 1.0 + xi * y;
  if (b <= 0.0) return xi > 0.0 ? kInf : 0.0;
  return std::pow(b, -1.0 / xi);
}

inline double gev_cdf(double x, double mu, double sigma, double xi) {
  return std::exp(-gev_neg_log_cdf(x, mu, sigma, xi));
}

inline double gev_log_pdf(double x, double mu, double sigma, double xi) {
  if (!(sigma > 0.0)) return -kInf;
  double y = (x - mu) / sigma;
  if (std::abs(xi) < kGumbelShapeTol) return -std::log(sigma) - y - std::exp(-y);
  double b = 1.0 + xi * y;
  if (b <= 0.0) return -kInf;
  double lb = std::log(b);
  return -std::log(sigma) - (1.0 / xi + 1.0) * lb - std::exp(-lb / xi);
}

inline double gev_quantile(double p, double mu, double sigma, double xi) {
  double t = -std::log(p);
  if (std::abs(xi) < kGumbelShapeTol) return mu - sigma * std::log(t);
  return mu + sigma * (std::pow(t, -xi) - 1.0) / xi;
}

namespace detail {

inline double site_gev_loglik(const Matrix& raw, int i, double mu, double sigma, double xi) {
  double s = 0.0;
  for (Index n = 0; n < raw.rows(); ++n) s += gev_log_pdf(raw(n, i), mu, sigma, xi);
  return s;
}

inline Vector site_start(const Matrix& raw, int i) {
  std::vector<double> v(raw.col(i).data(), raw.col(i).data() + raw.rows());
  std::sort(v.begin(), v.end());
  auto q = [&](double p) { return v[static_cast<std::size_t>(p * static_cast<double>(v.size() - 1))]; };
  double sigma = std::max((q(0.75) - q(0.25)) / 1.5, 1e-6);
  Vector x(2);
  x << q(0.5) - 0.37 * sigma, std::log(sigma);
  return x;
}

struct SiteFit {
  double mu, sigma, loglik;
};

// Location and scale of one site at a fixed shape.
inline SiteFit fit_site(const Matrix& raw, int i, double xi, const Vector& start) {
  OptimConfig oc;
  oc.size_tol = 1e-7;
  oc.max_evals = 2000;
  oc.restarts = 1;
  oc.initial_step = 0.3;
  auto f = [&](const Vector& p) { return -site_gev_loglik(raw, i, p(0), std::exp(p(1)), xi); };
  Vector x0 = start;
  for (int k = 0; k < 60 && !std::isfinite(f(x0)); ++k) x0(1) += std::log(2.0);
  OptimResult r = minimize(f, x0, oc);
  return {r.x(0), std::exp(r.x(1)), -r.fx};
}

}  // namespace detail

/// Maximum likelihood fit. The shape coefficients are optimized on the
/// profile likelihood, each site's location and scale being refitted at
/// every shape value.
inline GevParams fit_gev_margins(const Matrix& raw, const Matrix& covariates, bool standard_errors = false) {
  const int d = static_cast<int>(raw.cols());
  if (d < 1 || raw.rows() < 2) throw DataError("fit_gev_margins: need at least two rows and one site");
  if (covariates.rows() != d || covariates.cols() != 2)
    throw ConfigError("fit_gev_margins: covariates must be d x 2 (x_E, x_N)");
  if (!raw.allFinite()) throw DataError("fit_gev_margins: non-finite observation");
  std::vector<Vector> starts;
  for (int i = 0; i < d; ++i) starts.push_back(detail::site_start(raw, i));

  auto profile = [&](const Vector& c) {
    double total = 0.0;
    for (int i = 0; i < d; ++i) {
      double xi = c(0) + c(1) * covariates(i, 0) + c(2) * covariates(i, 1);
      detail::SiteFit s = detail::fit_site(raw, i, xi, starts[static_cast<std::size_t>(i)]);
      if (!std::isfinite(s.loglik)) return kInf;
      total += s.loglik;
    }
    return -total;
  };
  OptimConfig oc;
  oc.size_tol = 1e-5;
  oc.max_evals = 600;
  oc.initial_step = 0.1;
  OptimResult r = minimize(profile, Vector::Constant(3, 0.1), oc);
  if (!r.converged) throw ConvergenceError("fit_gev_margins: shape optimization did not converge");

  GevParams g;
  g.covariates = covariates;
  g.xi0 = r.x(0);
  g.xiE = r.x(1);
  g.xiN = r.x(2);
  g.mu.resize(d);
  g.sigma.resize(d);
  g.loglik = -r.fx;
  for (int i = 0; i < d; ++i) {
    detail::SiteFit s = detail::fit_site(raw, i, g.xi(i), starts[static_cast<std::size_t>(i)]);
    g.mu(i) = s.mu;
    g.sigma(i) = s.sigma;
  }
  for (int i = 0; i < d; ++i)
    for (Index n = 0; n < raw.rows(); ++n)
      if (!std::isfinite(gev_log_pdf(raw(n, i), g.mu(i), g.sigma(i), g.xi(i))))
        throw NumericError("fit_gev_margins: support constraint violated at the optimum");

  if (standard_errors) {
    const int k = 2 * d + 3;
    Vector theta(k);
    for (int i = 0; i < d; ++i) theta.segment(2 * i, 2) << g.mu(i), g.sigma(i);
    theta.tail(3) << g.xi0, g.xiE, g.xiN;
    auto nll = [&](const Vector& t) {
      double s = 0.0;
      for (int i = 0; i < d; ++i) {
        double xi = t(2 * d) + t(2 * d + 1) * covariates(i, 0) + t(2 * d + 2) * covariates(i, 1);
        s += detail::site_gev_loglik(raw, i, t(2 * i), t(2 * i + 1), xi);
      }
      return -s;
    };
    Matrix H(k, k);
    Vector h = (theta.array().abs() + 1.0) * 1e-4;
    for (int a = 0; a < k; ++a) {
      for (int b = a; b < k; ++b) {
        auto at = [&](double sa, double sb) {
          Vector t = theta;
          t(a) += sa * h(a);
          t(b) += sb * h(b);
          return nll(t);
        };
        double v = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * h(a) * h(b));
        H(a, b) = H(b, a) = v;
      }
    }
    Eigen::LDLT<Matrix> ldlt(H);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
      throw NumericError("fit_gev_margins: observed information is not positive definite");
    Matrix cov = ldlt.solve(Matrix::Identity(k, k));
    g.se = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  }
  return g;
}

/// z = -1 / log F(x), site by site.
inline Matrix to_unit_frechet(const Matrix& raw, const GevParams& g) {
  if (raw.cols() != g.dim()) throw DataError("to_unit_frechet: column count does not match the margins");
  Matrix z(raw.rows(), raw.cols());
  for (Index n = 0; n < raw.rows(); ++n) {
    for (Index i = 0; i < raw.cols(); ++i) {
      double t = gev_neg_log_cdf(raw(n, i), g.mu(i), g.sigma(i), g.xi(static_cast<int>(i)));
      if (!(t > 0.0) || !std::isfinite(t))
        throw DataError("to_unit_frechet: observation at row " + std::to_string(n + 1) + ", site " +
                        std::to_string(i + 1) + " lies outside the GEV support");
      z(n, i) = 1.0 / t;
    }
  }
  return z;
}

/// Inverse of to_unit_frechet.
inline Matrix from_unit_frechet(const Matrix& z, const GevParams& g) {
  if (z.cols() != g.dim()) throw DataError("from_unit_frechet: column count does not match the margins");
  Matrix x(z.rows(), z.cols());
  for (Index n = 0; n < z.rows(); ++n) {
    for (Index i = 0; i < z.cols(); ++i) {
      if (!(z(n, i) > 0.0)) throw DataError("from_unit_frechet: values must be positive");
      double xi = g.xi(static_cast<int>(i));
      double lz = std::log(z(n, i));
      x(n, i) = std::abs(xi) < kGumbelShapeTol ? g.mu(i) + g.sigma(i) * lz
                                               : g.mu(i) + g.sigma(i) * std::expm1(xi * lz) / xi;
    }
  }
  return x;
}

}  // namespace exst
