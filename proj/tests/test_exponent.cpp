#include <gtest/gtest.h>

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <numbers>
#include <random>

#include "exst/exponent.hpp"
#include "test_util.hpp"

using namespace exst;

namespace {

QmcConfig exact_cfg() {
  QmcConfig c;
  c.exact_max_dim = 3;
  return c;
}

QmcConfig lattice_cfg() {
  QmcConfig c;
  c.epsilon = 1e-5;
  c.n_min = 500;
  c.n_max = 100000;
  return c;
}

Matrix corr2(double rho) {
  Matrix r(2, 2);
  r << 1, rho, rho, 1;
  return r;
}

ExtremalContext extremal_t(const Matrix& R, double nu) { return {R, Vector::Zero(R.rows()), 0.0, nu}; }

ExtremalContext random_skew(int d, std::mt19937_64& rng, double nu) {
  std::normal_distribution<double> n;
  Matrix R = testutil::random_correlation(d, rng, 0.8);
  Vector a(d);
  for (int i = 0; i < d; ++i) a(i) = n(rng);
  return {R, a, 0.5 * n(rng), nu};
}

// Bivariate extremal-t exponent function in closed form.
double v_extremal_t_2d(double z1, double z2, double rho, double nu) {
  boost::math::students_t t(nu + 1.0);
  double s = std::sqrt((nu + 1.0) / (1.0 - rho * rho));
  auto term = [&](double a, double b) { return boost::math::cdf(t, (std::pow(b / a, 1.0 / nu) - rho) * s) / a; };
  return term(z1, z2) + term(z2, z1);
}

// Schlather exponent function.
double v_schlather(double z1, double z2, double rho) {
  double s = z1 + z2;
  return 0.5 * (1.0 / z1 + 1.0 / z2) * (1.0 + std::sqrt(1.0 - 2.0 * (rho + 1.0) * z1 * z2 / (s * s)));
}

double V(const Vector& z, const ExtremalContext& c, const QmcConfig& cfg = exact_cfg()) {
  return exponent_V(z, c, cfg).value;
}

ExtremalContext permuted(const ExtremalContext& c, const IndexList& perm) {
  const int d = c.dim();
  Matrix R(d, d);
  Vector a(d);
  for (int i = 0; i < d; ++i) {
    a(i) = c.alpha()(perm[static_cast<std::size_t>(i)]);
    for (int k = 0; k < d; ++k) R(i, k) = c.Omega_bar()(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(k)]);
  }
  return {R, a, c.tau(), c.nu()};
}

}  // namespace

TEST(ExponentV, UnivariateIsUnitFrechet) {
  ExtremalContext c = extremal_t(Matrix::Identity(1, 1), 3.0);
  EXPECT_EQ(V(Vector::Constant(1, 2.0), c), 0.5);
}

TEST(ExponentV, IndependentExtremalTExample) {
  ExtremalContext c = extremal_t(Matrix::Identity(2, 2), 1.0);
  VResult v = exponent_V(Vector::Ones(2), c, QmcConfig{});
  EXPECT_NEAR(v.value, 1.0 + 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(v.value, 1.70711, 1e-5);
  EXPECT_TRUE(v.converged);
}

TEST(ExponentV, BivariateExtremalTClosedForm) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.2, 5.0), r(-0.8, 0.95);
  for (int rep = 0; rep < 30; ++rep) {
    double rho = r(rng), nu = u(rng), z1 = u(rng), z2 = u(rng);
    EXPECT_NEAR(V(Vector{{z1, z2}}, extremal_t(corr2(rho), nu)), v_extremal_t_2d(z1, z2, rho, nu), 1e-11);
  }
}

TEST(ExponentV, SkewTWithZeroSlantAndUnitNuIsSchlather) {
  for (double rho : {0.0, 0.3, 0.9}) {
    ExtremalContext c{corr2(rho), Vector::Zero(2), 0.0, 1.0};
    EXPECT_NEAR(V(Vector::Ones(2), c), v_schlather(1, 1, rho), 1e-6);
    EXPECT_NEAR(V(Vector{{0.4, 2.5}}, c), v_schlather(0.4, 2.5, rho), 1e-6);
  }
}

TEST(ExponentV, LatticePathAgreesWithExactPath) {
  std::mt19937_64 rng(2);
  ExtremalContext c = random_skew(3, rng, 2.0);
  Vector z{{0.7, 1.4, 2.2}};
  VResult q = exponent_V(z, c, lattice_cfg());
  EXPECT_NEAR(q.value, V(z, c), std::max(3 * q.abs_error, 1e-6));
  ExtremalContext t = extremal_t(testutil::random_correlation(4, rng), 1.0);
  Vector z4{{1.0, 0.5, 2.0, 1.5}};
  QmcConfig a = lattice_cfg(), b = exact_cfg();
  VResult qa = exponent_V(z4, t, a), qb = exponent_V(z4, t, b);
  EXPECT_NEAR(qa.value, qb.value, 3 * (qa.abs_error + qb.abs_error) + 1e-9);
}

TEST(ExponentV, Homogeneity) {
  std::mt19937_64 rng(3);
  for (int d : {2, 3, 5}) {
    ExtremalContext c = random_skew(d, rng, 1.5);
    Vector z = Vector::LinSpaced(d, 0.5, 3.0);
    QmcConfig cfg;
    VResult base = exponent_V(z, c, cfg);
    for (double t : {0.5, 2.0, 10.0}) {
      VResult s = exponent_V(t * z, c, cfg);
      EXPECT_NEAR(s.value * t, base.value, 2 * (base.abs_error + t * s.abs_error) + 1e-12);
    }
  }
}

TEST(ExponentV, Bounds) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.1, 10.0), nu(0.5, 6.0);
  for (int rep = 0; rep < 40; ++rep) {
    int d = 2 + rep % 5;
    ExtremalContext c = rep % 2 ? random_skew(d, rng, nu(rng)) : extremal_t(testutil::random_correlation(d, rng), nu(rng));
    Vector z(d);
    for (int i = 0; i < d; ++i) z(i) = u(rng);
    QmcConfig cfg;
    VResult v = exponent_V(z, c, cfg, static_cast<std::uint64_t>(rep));
    double lo = z.cwiseInverse().maxCoeff(), hi = z.cwiseInverse().sum();
    EXPECT_GE(v.value, lo - 2 * v.abs_error - 1e-12);
    EXPECT_LE(v.value, hi + 2 * v.abs_error + 1e-12);
  }
}

TEST(ExponentV, SymmetricUnderJointPermutation) {
  std::mt19937_64 rng(5);
  ExtremalContext c = random_skew(3, rng, 2.5);
  Vector z{{0.8, 1.9, 3.1}};
  IndexList perm{2, 0, 1};
  Vector zp(3);
  for (int i = 0; i < 3; ++i) zp(i) = z(perm[static_cast<std::size_t>(i)]);
  EXPECT_NEAR(V(zp, permuted(c, perm)), V(z, c), 1e-8);

  ExtremalContext c5 = random_skew(5, rng, 1.0);
  IndexList p5{4, 2, 0, 3, 1};
  Vector z5 = Vector::LinSpaced(5, 0.6, 2.4), z5p(5);
  for (int i = 0; i < 5; ++i) z5p(i) = z5(p5[static_cast<std::size_t>(i)]);
  VResult a = exponent_V(z5, c5, lattice_cfg()), b = exponent_V(z5p, permuted(c5, p5), lattice_cfg());
  EXPECT_NEAR(a.value, b.value, 3 * (a.abs_error + b.abs_error));
}

TEST(ExponentV, RejectsNonPositiveInput) {
  ExtremalContext c = extremal_t(corr2(0.3), 1.0);
  EXPECT_THROW(exponent_V(Vector{{1.0, 0.0}}, c, QmcConfig{}), DataError);
  EXPECT_THROW(exponent_V(Vector{{1.0, -2.0}}, c, QmcConfig{}), DataError);
  EXPECT_THROW(exponent_V(Vector::Ones(3), c, QmcConfig{}), ConfigError);
}

TEST(ExponentPartial, UnivariateDerivative) {
  ExtremalContext c = extremal_t(Matrix::Identity(1, 1), 2.0);
  LogResult r = exponent_partial(Vector::Constant(1, 2.0), {0}, c, QmcConfig{});
  EXPECT_NEAR(r.log_value, std::log(0.25), 1e-12);
}

TEST(ExponentPartial, FirstPartialsMatchFiniteDifferences) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.3, 4.0), r(-0.7, 0.9), nu(0.7, 5.0);
  for (int rep = 0; rep < 20; ++rep) {
    int d = 2 + rep % 2;
    ExtremalContext c = rep % 4 < 2 ? extremal_t(testutil::random_correlation(d, rng), nu(rng)) : random_skew(d, rng, nu(rng));
    if (d == 2 && rep % 4 == 0) c = extremal_t(corr2(r(rng)), nu(rng));
    Vector z(d);
    for (int i = 0; i < d; ++i) z(i) = u(rng);
    for (int i = 0; i < d; ++i) {
      double h = 1e-4 * z(i);
      Vector zp = z, zm = z;
      zp(i) += h;
      zm(i) -= h;
      double fd = -(V(zp, c) - V(zm, c)) / (2 * h);
      double an = std::exp(exponent_partial(z, {i}, c, exact_cfg()).log_value);
      EXPECT_NEAR(an, fd, 1e-3 * std::abs(fd)) << "rep " << rep << " site " << i;
    }
  }
}

TEST(ExponentPartial, PairPartialMatchesFiniteDifferenceOfFirst) {
  std::mt19937_64 rng(7);
  ExtremalContext c = random_skew(3, rng, 1.8);
  Vector z{{1.2, 0.7, 2.0}};
  double h = 1e-4 * z(1);
  Vector zp = z, zm = z;
  zp(1) += h;
  zm(1) -= h;
  auto v0 = [&](const Vector& x) { return std::exp(exponent_partial(x, {0}, c, exact_cfg()).log_value); };
  double fd = (v0(zp) - v0(zm)) / (2 * h);  // -V_{01} = d(-V_0)/dz_1
  double an = std::exp(exponent_partial(z, {0, 1}, c, exact_cfg()).log_value);
  EXPECT_NEAR(an, fd, 1e-3 * std::abs(fd));
}

TEST(ExponentPartial, BivariateDensityMatchesMixedDifferenceOfG) {
  std::mt19937_64 rng(8);
  for (int rep = 0; rep < 4; ++rep) {
    ExtremalContext c = rep % 2 ? random_skew(2, rng, 2.0) : extremal_t(corr2(0.2 + 0.2 * rep), 1.0 + rep);
    Vector z{{0.9 + 0.3 * rep, 1.6}};
    auto G = [&](double a, double b) { return std::exp(-V(Vector{{a, b}}, c)); };
    double h1 = 1e-3 * z(0), h2 = 1e-3 * z(1);
    double mixed = (G(z(0) + h1, z(1) + h2) - G(z(0) + h1, z(1) - h2) - G(z(0) - h1, z(1) + h2) +
                    G(z(0) - h1, z(1) - h2)) /
                   (4 * h1 * h2);
    double v = V(z, c);
    double a1 = exponent_partial(z, {0}, c, exact_cfg()).log_value;
    double a2 = exponent_partial(z, {1}, c, exact_cfg()).log_value;
    double a12 = exponent_partial(z, {0, 1}, c, exact_cfg()).log_value;
    double density = std::exp(-v) * (std::exp(a1 + a2) + std::exp(a12));
    EXPECT_NEAR(density, mixed, 1e-2 * mixed) << "rep " << rep;
  }
}

TEST(ExponentPartial, PermutationEquivariant) {
  std::mt19937_64 rng(9);
  ExtremalContext c = random_skew(3, rng, 1.3);
  Vector z{{0.5, 1.5, 2.5}};
  IndexList perm{1, 2, 0};  // new site i is old site perm[i]
  Vector zp(3);
  for (int i = 0; i < 3; ++i) zp(i) = z(perm[static_cast<std::size_t>(i)]);
  ExtremalContext cp = permuted(c, perm);
  // old block {0, 1} sits at new positions {2, 0}
  double a = exponent_partial(z, {0, 1}, c, exact_cfg()).log_value;
  double b = exponent_partial(zp, {0, 2}, cp, exact_cfg()).log_value;
  EXPECT_NEAR(a, b, 1e-9);
  double a0 = exponent_partial(z, {2}, c, exact_cfg()).log_value;
  double b0 = exponent_partial(zp, {1}, cp, exact_cfg()).log_value;
  EXPECT_NEAR(a0, b0, 1e-9);
}

TEST(ExponentPartial, FullBlockHasNoCdfFactor) {
  std::mt19937_64 rng(10);
  ExtremalContext c = random_skew(4, rng, 2.0);
  Vector z = Vector::LinSpaced(4, 0.5, 2.0);
  LogResult r = exponent_partial(z, {0, 1, 2, 3}, c, QmcConfig{});
  EXPECT_EQ(r.err_estimate, 0.0);
  EXPECT_NEAR(std::exp(r.log_value), intensity(z, c), 1e-12 * std::exp(r.log_value));
}

TEST(ExponentPartial, Errors) {
  ExtremalContext c = extremal_t(corr2(0.3), 1.0);
  EXPECT_THROW(exponent_partial(Vector::Ones(2), {}, c, QmcConfig{}), ConfigError);
  EXPECT_THROW(exponent_partial(Vector{{1.0, -1.0}}, {0}, c, QmcConfig{}), DataError);
}

TEST(ConditionalParams, ZeroSlantReduction) {
  std::mt19937_64 rng(11);
  ExtremalContext c = extremal_t(testutil::random_correlation(4, rng), 2.0);
  ExtSkewTParams p = conditional_params(c, {1, 3}, {0, 2}, Vector{{1.0, 2.0}});
  EXPECT_TRUE(p.alpha.isZero(0.0));
  EXPECT_EQ(p.tau, 0.0);
  EXPECT_EQ(p.kappa, 0.0);
  EXPECT_EQ(p.nu, 4.0);
}

TEST(ConditionalParams, IndependentSiteHasZeroLocation) {
  ExtremalContext c{Matrix::Identity(2, 2), Vector{{0.5, -1.0}}, 0.3, 1.5};
  ExtSkewTParams p = conditional_params(c, {1}, {0}, Vector::Constant(1, 2.0));
  EXPECT_EQ(p.mu(0), 0.0);
  EXPECT_EQ(p.nu, 2.5);
}

TEST(ConditionalParams, DualImplementation) {
  std::mt19937_64 rng(12);
  for (int rep = 0; rep < 10; ++rep) {
    ExtremalContext c = random_skew(5, rng, 0.8 + 0.4 * rep);
    IndexList s{0, 3}, t{1, 2, 4};
    Vector v{{0.7 + 0.1 * rep, 1.9}};
    ExtSkewTParams p = conditional_params(c, t, s, v);

    const double nu = c.nu(), nu_c = nu + 2.0;
    Vector m = c.m();
    Vector vc(2);
    for (int k = 0; k < 2; ++k) vc(k) = std::pow(v(k) * m(s[static_cast<std::size_t>(k)]), 1.0 / nu);
    Matrix Os = select(c.Omega_bar(), s, s), Ost = select(c.Omega_bar(), s, t), Ot = select(c.Omega_bar(), t, t);
    Matrix Osi = Os.inverse();
    double Q = vc.transpose() * Osi * vc;
    Vector mu = Ost.transpose() * Osi * vc;
    Matrix Otilde = Ot - Ost.transpose() * Osi * Ost;
    Matrix Om = Q / nu_c * Otilde;
    Vector as = select(c.alpha(), s), at = select(c.alpha(), t);
    Vector alpha = Otilde.diagonal().cwiseSqrt().cwiseProduct(at);
    double tau = (as + Osi * Ost * at).dot(vc) * std::sqrt(nu_c) / std::sqrt(Q);

    EXPECT_LT((p.mu - mu).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((p.Omega - Om).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((p.alpha - alpha).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(p.tau, tau, 1e-12 * std::max(1.0, std::abs(tau)));
    EXPECT_EQ(p.kappa, -c.tau());
    EXPECT_EQ(p.nu, nu_c);
    EXPECT_EQ(Eigen::LLT<Matrix>(p.Omega).info(), Eigen::Success);
  }
}

TEST(ConditionalParams, Errors) {
  ExtremalContext c = extremal_t(corr2(0.3), 1.0);
  EXPECT_THROW(conditional_params(c, {}, {0}, Vector::Ones(1)), ConfigError);
  EXPECT_THROW(conditional_params(c, {1}, {0}, Vector::Ones(2)), ConfigError);
  EXPECT_THROW(conditional_params(c, {1}, {0}, Vector::Constant(1, -1.0)), DataError);
}

TEST(Intensity, UnivariateIsFrechetDensityOfV) {
  for (double nu : {0.5, 1.0, 4.0}) {
    ExtremalContext c{Matrix::Identity(1, 1), Vector::Constant(1, 1.7), -0.4, nu};
    for (double v : {0.3, 1.0, 5.0}) EXPECT_NEAR(intensity(Vector::Constant(1, v), c), 1.0 / (v * v), 1e-12 / (v * v));
  }
}

TEST(Intensity, EqualsFullBlockPartial) {
  std::mt19937_64 rng(13);
  ExtremalContext c = random_skew(2, rng, 1.2);
  Vector v{{0.8, 1.7}};
  double p = std::exp(exponent_partial(v, {0, 1}, c, QmcConfig{}).log_value);
  EXPECT_NEAR(intensity(v, c), p, 1e-6 * p);
}

TEST(Intensity, BivariateMatchesMixedDifferenceOfV) {
  std::mt19937_64 rng(14);
  ExtremalContext c = random_skew(2, rng, 2.2);
  Vector z{{1.1, 0.6}};
  auto f = [&](double a, double b) { return V(Vector{{a, b}}, c); };
  double h1 = 1e-3 * z(0), h2 = 1e-3 * z(1);
  double mixed = (f(z(0) + h1, z(1) + h2) - f(z(0) + h1, z(1) - h2) - f(z(0) - h1, z(1) + h2) + f(z(0) - h1, z(1) - h2)) /
                 (4 * h1 * h2);
  double lam = intensity(z, c);
  EXPECT_NEAR(lam, -mixed, 1e-2 * lam);
}

TEST(Intensity, RejectsNonPositive) {
  ExtremalContext c = extremal_t(corr2(0.3), 1.0);
  EXPECT_THROW(intensity(Vector{{1.0, 0.0}}, c), DataError);
}

TEST(ConditionalIntensity, FactorizesJointIntensity) {
  std::mt19937_64 rng(15);
  for (int rep = 0; rep < 5; ++rep) {
    ExtremalContext c = random_skew(4, rng, 0.9 + 0.5 * rep);
    IndexList s{0, 2}, t{1, 3};
    Vector v{{1.3, 0.6}}, u{{2.1, 0.9}};
    Vector joint(4);
    joint << v(0), u(0), v(1), u(1);
    double lhs = std::log(intensity(joint, c));
    double rhs = log_conditional_intensity(u, v, t, s, c) + log_intensity_block(v, c, s);
    EXPECT_NEAR(lhs, rhs, 1e-10 * std::abs(lhs) + 1e-12);
  }
}

TEST(ConditionalIntensity, IntegratesToOneOverSignedValues) {
  std::mt19937_64 rng(16);
  std::uniform_real_distribution<double> nu(0.8, 4.0);
  for (int rep = 0; rep < 4; ++rep) {
    ExtremalContext c = rep < 2 ? extremal_t(testutil::random_correlation(3, rng), nu(rng)) : random_skew(3, rng, nu(rng));
    Vector v{{0.9, 1.7}};
    const double nu_ = c.nu();
    // u = +-w^nu removes the |u|^{1/nu - 1} endpoint singularity
    auto f = [&](double w, double sign) {
      if (w == 0.0) return 0.0;
      double u = sign * std::pow(w, nu_);
      return conditional_intensity(Vector::Constant(1, u), v, {2}, {0, 1}, c) * nu_ * std::pow(w, nu_ - 1.0);
    };
    double total = testutil::integrate([&](double w) { return f(w, 1.0); }, 0.0, kInf, 1e-11) +
                   testutil::integrate([&](double w) { return f(w, -1.0); }, 0.0, kInf, 1e-11);
    EXPECT_NEAR(total, 1.0, 1e-4) << "rep " << rep;
  }
}

TEST(ConditionalIntensity, ZeroSlantMatchesTDensity) {
  const double nu = 2.0;
  ExtremalContext c = extremal_t(corr2(0.6), nu);
  Vector v = Vector::Constant(1, 1.5);
  double m = c.m()(0);
  double vc = std::pow(v(0) * m, 1.0 / nu);
  double loc = 0.6 * vc, scale = std::sqrt(vc * vc * (1 - 0.36) / (nu + 1.0));
  boost::math::students_t t(nu + 1.0);
  for (double u : {0.4, 1.0, 3.0}) {
    double uc = std::pow(u * m, 1.0 / nu);
    double jac = std::pow(m, 1.0 / nu) * std::pow(u, 1.0 / nu - 1.0) / nu;
    double expected = boost::math::pdf(t, (uc - loc) / scale) / scale * jac;
    EXPECT_NEAR(conditional_intensity(Vector::Constant(1, u), v, {1}, {0}, c), expected, 1e-12);
  }
}

TEST(PS0Params, Structure) {
  std::mt19937_64 rng(17);
  ExtremalContext c = random_skew(4, rng, 1.5);
  for (int j = 0; j < 4; ++j) {
    ExtSkewTParams p = p_s0_params(c, j);
    EXPECT_LT((p.mu - c.Omega_bar().col(j)).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_EQ(p.mu(j), 1.0);
    EXPECT_TRUE(p.Omega.row(j).isZero(0.0));
    EXPECT_EQ(p.alpha(j), 0.0);
    EXPECT_EQ(p.kappa, -c.tau());
    EXPECT_EQ(p.nu, c.nu() + 1.0);
    ExtSkewTParams r = tilted_params_reduced(c, j);
    EXPECT_EQ(r.dim(), 3);
    EXPECT_EQ(Eigen::LLT<Matrix>(r.Omega).info(), Eigen::Success);
  }
  EXPECT_THROW(p_s0_params(c, 4), ConfigError);
}

TEST(PS0Params, IndependentExtremalTVariance) {
  ExtremalContext c = extremal_t(Matrix::Identity(2, 2), 1.0);
  ExtSkewTParams p = p_s0_params(c, 0);
  EXPECT_DOUBLE_EQ(p.Omega(1, 1), 0.5);
  EXPECT_EQ(p.mu(1), 0.0);
}

TEST(ModelSpec, Validation) {
  ModelSpec m;
  m.slant.b1 = 1.0;
  EXPECT_THROW(m.validate(), ConfigError);
  m.family = Family::ExtremalSkewT;
  EXPECT_NO_THROW(m.validate());
  m.nu = 0.0;
  EXPECT_THROW(m.validate(), ConfigError);
  EXPECT_EQ(parse_family("extremal-skew-t"), Family::ExtremalSkewT);
  EXPECT_THROW(parse_family("gumbel"), ConfigError);
}

TEST(ExtremalContext, SubsetKeepsMarginalLaw) {
  std::mt19937_64 rng(18);
  ExtremalContext c = random_skew(4, rng, 1.7);
  ExtremalContext s = c.subset({1, 3});
  EXPECT_NEAR(s.m()(0), c.m()(1), 1e-15);
  EXPECT_NEAR(s.tau_bar(), c.tau_bar(), 1e-12);
  // V of the pair equals V of the full vector with the other sites at infinity
  Vector z{{1e12, 0.8, 1e12, 1.9}};
  VResult full = exponent_V(z, c, lattice_cfg());
  EXPECT_NEAR(V(Vector{{0.8, 1.9}}, s), full.value, 3 * full.abs_error + 1e-9);
}
