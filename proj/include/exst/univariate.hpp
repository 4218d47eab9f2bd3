#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>

#include <boost/math/distributions/non_central_t.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "exst/common.hpp"

namespace exst {

inline double norm_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// log Phi(x), accurate in the far lower tail.
inline double log_norm_cdf(double x) {
  if (x > -20.0) return std::log(norm_cdf(x));
  // Mills-ratio asymptotic series
  double x2 = x * x;
  double s = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2) + 105.0 / (x2 * x2 * x2 * x2);
  return -0.5 * x2 - std::log(-x) - 0.5 * std::log(2.0 * std::numbers::pi) + std::log(s);
}

// Wichura AS241 (PPND16), relative accuracy about 1e-16.
inline double norm_quantile(double p) {
  if (p <= 0.0) return -kInf;
  if (p >= 1.0) return kInf;
  double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    double r = 0.180625 - q * q;
    return q *
           (((((((2509.0809287301226727 * r + 33430.575583588128105) * r + 67265.770927008700853) * r +
               45921.953931549871457) * r + 13731.693765509461125) * r + 1971.5909503065514427) * r +
             133.14166789178437745) * r + 3.387132872796366608) /
           (((((((5226.495278852545925 * r + 28729.085735721942674) * r + 39307.89580009271061) * r +
               21213.794301586595867) * r + 5394.1960214247511077) * r + 687.1870074920579083) * r +
             42.313330701600911252) * r + 1.0);
  }
  double r = q < 0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r + 0.24178072517745061177) * r +
              1.27045825245236838258) * r + 3.64784832476320460504) * r + 5.7694972214606914055) * r +
            4.6303378461565452959) * r + 1.42343711074968357734) /
          (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r +
              0.14810397642748007459) * r + 0.68976733498510000455) * r + 1.6763848301838038494) * r +
            2.05319162663775882187) * r + 1.0);
  } else {
    r -= 5.0;
    val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r +
              0.026532189526576123093) * r + 0.29656057182850489123) * r + 1.7848265399172913358) * r +
            5.4637849111641143699) * r + 6.6579046435011037772) /
          (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r +
              7.868691311456132591e-4) * r + 0.0148753612908506148525) * r + 0.13692988092273580531) * r +
            0.59983220655588793769) * r + 1.0);
  }
  return q < 0 ? -val : val;
}

/// Univariate (non-central) t cdf P((X + kappa) / sqrt(chi2_nu / nu) <= x).
/// nu = +inf gives the shifted normal.
inline double univariate_t_cdf(double x, double kappa, double nu) {
  if (!(nu > 0.0)) throw ConfigError("univariate_t_cdf: degrees of freedom must be positive");
  if (std::isnan(x) || std::isnan(kappa)) throw NumericError("univariate_t_cdf: NaN argument");
  if (x == kInf) return 1.0;
  if (x == -kInf) return 0.0;
  if (!std::isfinite(nu) || nu > 1e10) return norm_cdf(x - kappa);
  if (kappa == 0.0) {
    boost::math::students_t_distribution<double> t(nu);
    return boost::math::cdf(t, x);
  }
  boost::math::non_central_t_distribution<double> t(nu, kappa);
  return boost::math::cdf(t, x);
}

// Upper tail 1 - univariate_t_cdf, computed without cancellation.
inline double univariate_t_sf(double x, double kappa, double nu) {
  if (x == kInf) return 0.0;
  if (x == -kInf) return 1.0;
  if (!std::isfinite(nu) || nu > 1e10) return norm_cdf(kappa - x);
  if (kappa == 0.0) {
    boost::math::students_t_distribution<double> t(nu);
    return boost::math::cdf(boost::math::complement(t, x));
  }
  boost::math::non_central_t_distribution<double> t(nu, kappa);
  return boost::math::cdf(boost::math::complement(t, x));
}

inline double log_univariate_t_cdf(double x, double kappa, double nu) {
  if (!std::isfinite(nu) || nu > 1e10) return log_norm_cdf(x - kappa);
  double p = univariate_t_cdf(x, kappa, nu);
  if (p > 0.5) return std::log1p(-univariate_t_sf(x, kappa, nu));
  return std::log(p);
}

// Quantile of S = sqrt(chi2_nu / nu).
inline double chi_scale_quantile(double u, double nu) {
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return kInf;
  if (u > 0.5) return std::sqrt(2.0 * boost::math::gamma_q_inv(0.5 * nu, 1.0 - u) / nu);
  return std::sqrt(2.0 * boost::math::gamma_p_inv(0.5 * nu, u) / nu);
}

// Quantile of S at u = Phi(z), without rounding u in the upper tail.
inline double chi_scale_from_z(double z, double nu) {
  if (z > 0.0) return std::sqrt(2.0 * boost::math::gamma_q_inv(0.5 * nu, norm_cdf(-z)) / nu);
  return std::sqrt(2.0 * boost::math::gamma_p_inv(0.5 * nu, norm_cdf(z)) / nu);
}

inline double chi_scale_log_pdf(double s, double nu) {
  // S^2 * nu ~ chi2_nu
  return std::log(2.0) + 0.5 * nu * std::log(0.5 * nu) - std::lgamma(0.5 * nu) + (nu - 1.0) * std::log(s) -
         0.5 * nu * s * s;
}

/// Tabulated map z -> S quantile at u = Phi(z), cubic Hermite on a uniform
/// z grid. S(Phi(z)) is smooth in z, so the table is accurate to ~1e-10 and
/// costs one normal quantile plus a lookup per evaluation.
class ChiScaleTable {
 public:
  static constexpr double kZMax = 8.0;
  static constexpr int kNodes = 2049;

  explicit ChiScaleTable(double nu) : nu_(nu) {
    h_ = 2.0 * kZMax / (kNodes - 1);
    s_.resize(kNodes);
    ds_.resize(kNodes);
    for (int i = 0; i < kNodes; ++i) {
      double z = -kZMax + h_ * i;
      double s = chi_scale_from_z(z, nu);
      s_[static_cast<std::size_t>(i)] = s;
      // ds/dz = phi(z) / f_S(s)
      ds_[static_cast<std::size_t>(i)] = std::exp(-0.5 * z * z - 0.5 * std::log(2.0 * std::numbers::pi) - chi_scale_log_pdf(s, nu));
    }
  }

  double operator()(double u) const {
    double z = norm_quantile(u);
    if (!(z > -kZMax && z < kZMax)) return chi_scale_quantile(u, nu_);
    double t = (z + kZMax) / h_;
    int i = std::min(static_cast<int>(t), kNodes - 2);
    double x = t - i;
    auto k = static_cast<std::size_t>(i);
    double p0 = s_[k], p1 = s_[k + 1], m0 = ds_[k] * h_, m1 = ds_[k + 1] * h_;
    double x2 = x * x, x3 = x2 * x;
    return (2 * x3 - 3 * x2 + 1) * p0 + (x3 - 2 * x2 + x) * m0 + (-2 * x3 + 3 * x2) * p1 + (x3 - x2) * m1;
  }

  double nu() const { return nu_; }

  // Shared, lazily built table per distinct nu.
  static std::shared_ptr<const ChiScaleTable> get(double nu) {
    static std::mutex mu;
    static std::map<double, std::shared_ptr<const ChiScaleTable>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(nu);
    if (it != cache.end()) return it->second;
    auto t = std::make_shared<const ChiScaleTable>(nu);
    if (cache.size() > 256) cache.clear();
    cache.emplace(nu, t);
    return t;
  }

 private:
  double nu_;
  double h_;
  std::vector<double> s_;
  std::vector<double> ds_;
};

}  // namespace exst
