#pragma once

// Exponent function of the extremal skew-t max-stable model, its partial
// derivatives, the intensity and the conditional intensity.
//
// Notation: Omega_bar is the site correlation matrix, alpha the slant, tau
// the extension, nu the degrees of freedom and m_i = m_+(s_i). For z > 0 the
// transformed values are z°_i = (z_i m_i)^{1/nu}.

#include <cmath>
#include <string>
#include <vector>

#include "exst/common.hpp"
#include "exst/qmc_cdf.hpp"
#include "exst/skewt.hpp"
#include "exst/spatial.hpp"

namespace exst {

enum class Family { ExtremalT, ExtremalSkewT };

inline std::string to_string(Family f) { return f == Family::ExtremalT ? "extremal-t" : "extremal-skew-t"; }

inline Family parse_family(const std::string& s) {
  if (s == "extremal-t" || s == "t") return Family::ExtremalT;
  if (s == "extremal-skew-t" || s == "skew-t" || s == "skewt") return Family::ExtremalSkewT;
  throw ConfigError("unknown model family '" + s + "'");
}

struct ModelSpec {
  Family family = Family::ExtremalT;
  CorrelationConfig corr;
  SlantModel slant;  // ignored (must be zero) for extremal-t
  double tau = 0.0;
  double nu = 1.0;
  bool nu_fixed = true;

  void validate() const {
    corr.validate();
    if (!(nu > 0.0) || !std::isfinite(nu)) throw ConfigError("ModelSpec: nu must be positive and finite");
    if (!std::isfinite(tau)) throw ConfigError("ModelSpec: tau must be finite");
    if (family == Family::ExtremalT && (!slant.is_zero() || tau != 0.0))
      throw ConfigError("ModelSpec: the extremal-t family has zero slant and zero extension");
  }
};

/// Model quantities at a fixed set of sites: everything the exponent
/// function needs, computed once per parameter value.
class ExtremalContext {
 public:
  ExtremalContext(Matrix Omega_bar, Vector alpha, double tau, double nu)
      : Omega_bar_(std::move(Omega_bar)), alpha_(std::move(alpha)), tau_(tau), nu_(nu) {
    const Index d = Omega_bar_.rows();
    if (d < 1 || Omega_bar_.cols() != d || alpha_.size() != d) throw ConfigError("ExtremalContext: dimension mismatch");
    if (!(nu_ > 0.0) || !std::isfinite(nu_)) throw ConfigError("ExtremalContext: nu must be positive and finite");
    if (!alpha_.allFinite() || !std::isfinite(tau_)) throw NumericError("ExtremalContext: non-finite slant or extension");
    checked_llt(Omega_bar_, "ExtremalContext");
    log_m_ = log_m_plus(Omega_bar_, alpha_, tau_, nu_);
    tau_bar_ = tau_ / std::sqrt(1.0 + alpha_.dot(Omega_bar_ * alpha_));
  }

  static ExtremalContext from_model(const ModelSpec& model, const SiteSet& sites) {
    model.validate();
    Matrix om = build_correlation_matrix(sites, model.corr);
    Vector a = model.family == Family::ExtremalT || model.slant.is_zero() ? Vector::Zero(sites.size())
                                                                          : slant_field(sites, model.slant);
    return {std::move(om), std::move(a), model.tau, model.nu};
  }

  /// Context of the marginal law at the sites in q: marginal slant and
  /// extension, and the same m_+ values.
  ExtremalContext subset(const IndexList& q) const {
    MarginalSlant ms = marginal_slant_extension(Omega_bar_, alpha_, tau_, q);
    ExtremalContext c(select(Omega_bar_, q, q), ms.alpha, ms.tau, nu_, select(log_m_, q));
    return c;
  }

  int dim() const { return static_cast<int>(alpha_.size()); }
  const Matrix& Omega_bar() const { return Omega_bar_; }
  const Vector& alpha() const { return alpha_; }
  double tau() const { return tau_; }
  double nu() const { return nu_; }
  const Vector& log_m() const { return log_m_; }
  Vector m() const { return log_m_.array().exp(); }
  // tau / sqrt(1 + alpha' Omega_bar alpha), invariant under marginalization
  double tau_bar() const { return tau_bar_; }
  bool is_extremal_t() const { return alpha_.isZero(0.0) && tau_ == 0.0; }

  /// log z° = (log z + log m) / nu, entrywise.
  Vector log_circ(const Vector& z, const IndexList& idx) const {
    Vector out(static_cast<Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k)
      out(static_cast<Index>(k)) = (std::log(z(static_cast<Index>(k))) + log_m_(idx[k])) / nu_;
    return out;
  }

 private:
  ExtremalContext(Matrix Omega_bar, Vector alpha, double tau, double nu, Vector log_m)
      : Omega_bar_(std::move(Omega_bar)), alpha_(std::move(alpha)), tau_(tau), nu_(nu), log_m_(std::move(log_m)) {
    tau_bar_ = tau_ / std::sqrt(1.0 + alpha_.dot(Omega_bar_ * alpha_));
  }

  Matrix Omega_bar_;
  Vector alpha_;
  double tau_;
  double nu_;
  Vector log_m_;
  double tau_bar_ = 0.0;
};

/// Law of W(s) / W(s_j) under the measure tilted by W(s_j)_+^nu / m_j, as a
/// d-dimensional ST whose j-th coordinate is the point mass at 1 (zero scale).
inline ExtSkewTParams p_s0_params(const ExtremalContext& c, int j) {
  const int d = c.dim();
  if (j < 0 || j >= d) throw ConfigError("p_s0_params: site index out of range");
  const double nu = c.nu();
  Vector rho = c.Omega_bar().col(j);
  Matrix sigma = (c.Omega_bar() - rho * rho.transpose()) / (nu + 1.0);
  sigma.row(j).setZero();
  sigma.col(j).setZero();
  Vector a_hat(d);
  for (int k = 0; k < d; ++k) a_hat(k) = std::sqrt((nu + 1.0) * std::max(sigma(k, k), 0.0)) * c.alpha()(k);
  a_hat(j) = 0.0;
  double tau_d = (c.alpha()(j) + rho.dot(c.alpha()) - rho(j) * c.alpha()(j)) * std::sqrt(nu + 1.0);
  return {rho, sigma, a_hat, tau_d, -c.tau(), nu + 1.0};
}

inline ExtSkewTParams p_s0_params(const SiteSet& sites, const ModelSpec& model, int j) {
  return p_s0_params(ExtremalContext::from_model(model, sites), j);
}

// The same law restricted to the non-degenerate coordinates I_j.
inline ExtSkewTParams tilted_params_reduced(const ExtremalContext& c, int j) {
  ExtSkewTParams full = p_s0_params(c, j);
  IndexList others = complement({j}, c.dim());
  return {select(full.mu, others), select(full.Omega, others, others), select(full.alpha, others), full.tau, full.kappa,
          full.nu};
}

struct VResult {
  double value = 0.0;
  double abs_error = 0.0;
  bool converged = true;
};

struct LogResult {
  double log_value = 0.0;
  double err_estimate = 0.0;  // as reported by the cdf term (log or absolute scale per config)
  bool converged = true;
};

/// V(z) = sum_i z_i^{-1} P(T_i <= z°_{-i} / z°_i), T_i distributed as p_s0_params(i).
inline VResult exponent_V(const Vector& z, const ExtremalContext& c, const QmcConfig& cfg, std::uint64_t tag = 0) {
  const int d = c.dim();
  if (z.size() != d) throw ConfigError("exponent_V: dimension mismatch");
  for (int i = 0; i < d; ++i)
    if (!(z(i) > 0.0) || !std::isfinite(z(i))) throw DataError("exponent_V: z must be positive and finite");
  if (d == 1) return {1.0 / z(0), 0.0, true};
  IndexList all(static_cast<std::size_t>(d));
  std::iota(all.begin(), all.end(), 0);
  Vector lz = c.log_circ(z, all);
  VResult out;
  for (int i = 0; i < d; ++i) {
    ExtSkewTParams p = tilted_params_reduced(c, i);
    IndexList others = complement({i}, d);
    Vector upper(d - 1);
    for (int k = 0; k < d - 1; ++k) upper(k) = std::exp(lz(others[static_cast<std::size_t>(k)]) - lz(i));
    CdfResult r = nc_ext_skew_t_cdf(upper, p, cfg, stream_key(tag, 0x5600u + static_cast<std::uint64_t>(i)));
    out.value += r.value() / z(i);
    out.abs_error += r.abs_error / z(i);
    out.converged = out.converged && r.converged;
  }
  if (!std::isfinite(out.value)) throw NumericError("exponent_V: non-finite value");
  return out;
}

/// log of the intensity of the marginal point process at the sites of
/// `block`, evaluated at v (one value per block site).
inline double log_intensity_block(const Vector& v, const ExtremalContext& c, const IndexList& block) {
  const int m = static_cast<int>(block.size());
  const double nu = c.nu();
  MarginalSlant ms = marginal_slant_extension(c.Omega_bar(), c.alpha(), c.tau(), block);
  Matrix ob = select(c.Omega_bar(), block, block);
  auto llt = checked_llt(ob, "intensity");
  Vector lvc = c.log_circ(v, block);
  Vector vc = lvc.array().exp();
  double q = llt.matrixL().solve(vc).squaredNorm();
  double a_tilde = ms.alpha.dot(vc) / std::sqrt(q);
  double lsum = 0.0;
  for (int k = 0; k < m; ++k) lsum += (c.log_m()(block[static_cast<std::size_t>(k)]) + (1.0 - nu) * std::log(v(k))) / nu;
  double val = 0.5 * (nu - 2.0) * std::log(2.0) + (1.0 - m) * std::log(nu) + std::lgamma(0.5 * (m + nu)) +
               log_univariate_t_cdf(a_tilde * std::sqrt(m + nu), -ms.tau, m + nu) + lsum -
               0.5 * m * std::log(std::numbers::pi) - 0.5 * log_det_from_llt(llt) - 0.5 * (m + nu) * std::log(q) -
               log_norm_cdf(c.tau_bar());
  if (!std::isfinite(val)) throw NumericError("intensity: non-finite value");
  return val;
}

/// Parameters of the conditional law of W(t) given the block value v° at
/// sites s. `vc` holds v° (already transformed).
inline ExtSkewTParams conditional_params_circ(const ExtremalContext& c, const IndexList& t_idx, const IndexList& s_idx,
                                              const Vector& vc) {
  const double nu = c.nu();
  const double m = static_cast<double>(s_idx.size());
  Matrix os = select(c.Omega_bar(), s_idx, s_idx);
  Matrix ots = select(c.Omega_bar(), t_idx, s_idx);
  Matrix ot = select(c.Omega_bar(), t_idx, t_idx);
  auto llt = checked_llt(os, "conditional_params");
  Vector at = select(c.alpha(), t_idx), as = select(c.alpha(), s_idx);
  double q = vc.dot(llt.solve(vc));
  double nu_c = nu + m;
  Vector mu_c = ots * llt.solve(vc);
  Matrix om_tilde = ot - ots * llt.solve(ots.transpose());
  om_tilde = 0.5 * (om_tilde + om_tilde.transpose());
  checked_llt(om_tilde, "conditional_params (conditional correlation)");
  Vector w_tilde = om_tilde.diagonal().cwiseSqrt();
  Vector alpha_c = w_tilde.cwiseProduct(at);
  double tau_c = (as + llt.solve(ots.transpose() * at)).dot(vc) * std::sqrt(nu_c) / std::sqrt(q);
  return {mu_c, (q / nu_c) * om_tilde, alpha_c, tau_c, -c.tau(), nu_c};
}

inline ExtSkewTParams conditional_params(const ExtremalContext& c, const IndexList& t_idx, const IndexList& s_idx,
                                         const Vector& v) {
  if (t_idx.empty() || s_idx.empty()) throw ConfigError("conditional_params: empty index set");
  if (static_cast<Index>(s_idx.size()) != v.size()) throw ConfigError("conditional_params: v does not match s");
  for (Index k = 0; k < v.size(); ++k)
    if (!(v(k) > 0.0)) throw DataError("conditional_params: v must be positive");
  Vector vc = c.log_circ(v, s_idx).array().exp();
  return conditional_params_circ(c, t_idx, s_idx, vc);
}

/// log(-V_B(z)) for the block B of site indices (sorted, nonempty).
inline LogResult exponent_partial(const Vector& z, const IndexList& block, const ExtremalContext& c,
                                  const QmcConfig& cfg, std::uint64_t tag = 0) {
  const int d = c.dim();
  if (z.size() != d) throw ConfigError("exponent_partial: dimension mismatch");
  if (block.empty()) throw ConfigError("exponent_partial: empty block");
  for (int i = 0; i < d; ++i)
    if (!(z(i) > 0.0) || !std::isfinite(z(i))) throw DataError("exponent_partial: z must be positive and finite");
  Vector zb = select(z, block);
  LogResult out;
  out.log_value = log_intensity_block(zb, c, block);
  IndexList rest = complement(block, d);
  if (rest.empty()) return out;
  Vector vc = c.log_circ(zb, block).array().exp();
  ExtSkewTParams cp = conditional_params_circ(c, rest, block, vc);
  Vector upper = c.log_circ(select(z, rest), rest).array().exp();
  CdfResult r = nc_ext_skew_t_cdf(upper, cp, cfg, tag);
  if (r.log_value == -kInf) throw NumericError("exponent_partial: zero probability in the conditional cdf");
  out.log_value += r.log_value;
  out.err_estimate = r.err_estimate;
  out.converged = r.converged;
  return out;
}

/// Intensity at all sites of the context.
inline double intensity(const Vector& v, const ExtremalContext& c) {
  IndexList all(static_cast<std::size_t>(c.dim()));
  std::iota(all.begin(), all.end(), 0);
  for (Index k = 0; k < v.size(); ++k)
    if (!(v(k) > 0.0)) throw DataError("intensity: v must be positive");
  return std::exp(log_intensity_block(v, c, all));
}

/// Conditional intensity of u at sites t given v at sites s. For u of
/// either sign the transform u° = sign(u)|u m|^{1/nu} is used, so the
/// result is a density on R^|t|.
inline double log_conditional_intensity(const Vector& u, const Vector& v, const IndexList& t_idx,
                                        const IndexList& s_idx, const ExtremalContext& c) {
  if (static_cast<Index>(t_idx.size()) != u.size()) throw ConfigError("conditional_intensity: u does not match t");
  ExtSkewTParams cp = conditional_params(c, t_idx, s_idx, v);
  const double nu = c.nu();
  const int m = static_cast<int>(t_idx.size());
  Vector uc(m);
  double ljac = -m * std::log(nu);
  for (int k = 0; k < m; ++k) {
    double lm = c.log_m()(t_idx[static_cast<std::size_t>(k)]);
    double au = std::abs(u(k));
    if (au == 0.0) {
      if (nu != 1.0) throw DataError("conditional_intensity: u must be nonzero unless nu = 1");
      uc(k) = 0.0;
      ljac += lm;
      continue;
    }
    uc(k) = std::copysign(std::exp((std::log(au) + lm) / nu), u(k));
    ljac += (lm + (1.0 - nu) * std::log(au)) / nu;
  }
  return nc_ext_skew_t_log_pdf(uc, cp) + ljac;
}

inline double conditional_intensity(const Vector& u, const Vector& v, const IndexList& t_idx, const IndexList& s_idx,
                                    const ExtremalContext& c) {
  return std::exp(log_conditional_intensity(u, v, t_idx, s_idx, c));
}

}  // namespace exst
