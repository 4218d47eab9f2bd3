#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "exst/simulate.hpp"
#include "test_util.hpp"

using namespace exst;

namespace {

double frechet_cdf(double z) { return z > 0.0 ? std::exp(-1.0 / z) : 0.0; }

std::vector<double> column(const Matrix& m, int j) {
  std::vector<double> out(static_cast<std::size_t>(m.rows()));
  for (Index i = 0; i < m.rows(); ++i) out[static_cast<std::size_t>(i)] = m(i, j);
  return out;
}

bool frechet_ks(const Matrix& z, int j) {
  double d = testutil::ks_statistic(column(z, j), frechet_cdf);
  return testutil::ks_passes(d, static_cast<double>(z.rows()));
}

Matrix corr2(double rho) {
  Matrix r(2, 2);
  r << 1, rho, rho, 1;
  return r;
}

// max(Z1, Z2) is Frechet with scale theta, so 1 / max is exponential with
// mean 1 / theta.
struct ThetaEstimate {
  double value;
  double se;
};

ThetaEstimate pairwise_theta(const Matrix& z) {
  Vector inv = z.rowwise().maxCoeff().cwiseInverse();
  double theta = 1.0 / inv.mean();
  return {theta, theta / std::sqrt(static_cast<double>(z.rows()))};
}

ModelSpec skew_model(double b1, double b2, double nu) {
  ModelSpec m;
  m.family = Family::ExtremalSkewT;
  m.corr = {3.0, 1.0};
  m.slant = {0.0, b1, b2};
  m.nu = nu;
  return m;
}

QmcConfig exact_cfg() {
  QmcConfig c;
  c.exact_max_dim = 3;
  return c;
}

}  // namespace

TEST(Simulate, DeterministicGivenSeed) {
  SiteSet s = uniform_sites(5, 1);
  ModelSpec m = skew_model(0.3, -0.2, 2.0);
  SimOutput a = simulate(s, m, 200, 99), b = simulate(s, m, 200, 99);
  EXPECT_EQ(a.Z, b.Z);
  EXPECT_EQ(a.H, b.H);
  SimOutput c = simulate(s, m, 200, 100);
  EXPECT_NE(a.Z, c.Z);
}

TEST(Simulate, ThreadCountDoesNotChangeOutput) {
  SiteSet s = uniform_sites(6, 2);
  ModelSpec m = skew_model(0.5, 0.5, 1.0);
  SimOutput a = simulate(s, m, 300, 5, 1), b = simulate(s, m, 300, 5, 4);
  EXPECT_EQ(a.Z, b.Z);
  EXPECT_EQ(a.H, b.H);
}

TEST(Simulate, OutputStructure) {
  SiteSet s = uniform_sites(8, 3);
  SimOutput o = simulate(s, skew_model(1.0, -1.0, 1.5), 500, 7);
  ASSERT_EQ(o.Z.rows(), 500);
  ASSERT_EQ(o.Z.cols(), 8);
  EXPECT_TRUE(o.Z.allFinite());
  EXPECT_GT(o.Z.minCoeff(), 0.0);
  EXPECT_GE(o.H.minCoeff(), 1);
  for (int i = 0; i < 500; ++i) {
    std::set<int> labels;
    for (int k = 0; k < 8; ++k) labels.insert(o.H(i, k));
    EXPECT_LE(labels.size(), 8u);
    HittingScenario p = o.scenario(i);
    EXPECT_EQ(static_cast<std::size_t>(p.size()), labels.size());
    EXPECT_EQ(p.dim(), 8);
  }
}

TEST(Simulate, SingleSiteIsUnitFrechet) {
  ModelSpec m;
  m.nu = 2.0;
  SimOutput o = simulate_extremal_t(uniform_sites(1, 4), m, 5000, 11);
  EXPECT_TRUE(frechet_ks(o.Z, 0));
  EXPECT_TRUE((o.H.array() == 1).all());
}

TEST(Simulate, SkewedSingleSiteIsUnitFrechet) {
  Matrix c = Matrix::Constant(1, 2, 1.0);
  SiteSet s(c);
  ModelSpec m = skew_model(2.5, 2.5, 1.0);  // slant 5 at (1, 1)
  EXPECT_NEAR(slant_field(s, m.slant)(0), 5.0, 1e-15);
  SimOutput o = simulate_extremal_skew_t(s, m, 5000, 12);
  EXPECT_TRUE(frechet_ks(o.Z, 0));
}

TEST(Simulate, MarginsAreUnitFrechet) {
  SiteSet s = uniform_sites(4, 5);
  ModelSpec t;
  t.corr = {3.0, 1.0};
  t.nu = 2.0;
  SimOutput a = simulate_extremal_t(s, t, 5000, 13);
  SimOutput b = simulate_extremal_skew_t(s, skew_model(0.8, -0.6, 1.0), 5000, 14);
  for (int j = 0; j < 4; ++j) {
    EXPECT_TRUE(frechet_ks(a.Z, j)) << "extremal-t site " << j;
    EXPECT_TRUE(frechet_ks(b.Z, j)) << "extremal skew-t site " << j;
  }
}

TEST(Simulate, NearCompleteDependence) {
  ExtremalContext c{corr2(0.999), Vector::Zero(2), 0.0, 1.0};
  SimOutput o = simulate_max_stable(c, 10000, 21);
  ThetaEstimate th = pairwise_theta(o.Z);
  double v = exponent_V(Vector::Ones(2), c, exact_cfg()).value;
  EXPECT_LT(v, 1.03);
  EXPECT_NEAR(th.value, v, 3 * th.se);
}

TEST(Simulate, ZeroCorrelationExtremalCoefficient) {
  ExtremalContext c{Matrix::Identity(2, 2), Vector::Zero(2), 0.0, 1.0};
  SimOutput o = simulate_max_stable(c, 10000, 22);
  ThetaEstimate th = pairwise_theta(o.Z);
  EXPECT_NEAR(th.value, 1.0 + 1.0 / std::sqrt(2.0), 3 * th.se);
}

TEST(Simulate, SkewedPairExtremalCoefficientMatchesExponent) {
  ExtremalContext c{corr2(0.4), Vector{{2.0, -1.0}}, 0.0, 2.0};
  SimOutput o = simulate_max_stable(c, 10000, 23);
  ThetaEstimate th = pairwise_theta(o.Z);
  EXPECT_NEAR(th.value, exponent_V(Vector::Ones(2), c, exact_cfg()).value, 3 * th.se);
  EXPECT_TRUE(frechet_ks(o.Z, 0));
  EXPECT_TRUE(frechet_ks(o.Z, 1));
}

TEST(Simulate, ExtremalCoefficientDecreasesWithCorrelation) {
  double prev = 2.0;
  for (double rho : {0.0, 0.5, 0.9, 0.99}) {
    ExtremalContext c{corr2(rho), Vector::Zero(2), 0.0, 1.0};
    double th = pairwise_theta(simulate_max_stable(c, 5000, 24).Z).value;
    EXPECT_LT(th, prev) << rho;
    prev = th;
  }
}

TEST(Simulate, ZeroSlantSkewMatchesExtremalT) {
  SiteSet s = uniform_sites(3, 6);
  ModelSpec t;
  t.corr = {3.0, 1.0};
  t.nu = 1.0;
  ModelSpec sk = skew_model(0.0, 0.0, 1.0);
  SimOutput a = simulate_extremal_t(s, t, 5000, 31), b = simulate_extremal_skew_t(s, sk, 5000, 32);
  for (int j = 0; j < 3; ++j) {
    double d = testutil::ks_two_sample(column(a.Z, j), column(b.Z, j));
    EXPECT_TRUE(testutil::ks_passes(d, 2500.0)) << "site " << j << " D=" << d;
  }
  // joint law through the pairwise maxima
  Matrix pa(5000, 2), pb(5000, 2);
  pa << a.Z.col(0), a.Z.col(1);
  pb << b.Z.col(0), b.Z.col(1);
  std::vector<double> ma(5000), mb(5000);
  for (int i = 0; i < 5000; ++i) {
    ma[static_cast<std::size_t>(i)] = pa.row(i).maxCoeff();
    mb[static_cast<std::size_t>(i)] = pb.row(i).maxCoeff();
  }
  EXPECT_TRUE(testutil::ks_passes(testutil::ks_two_sample(ma, mb), 2500.0));
}

TEST(Simulate, HittingScenarioFrequencyMatchesIntensity) {
  // P(one event hits both sites) = int int exp(-V) lambda dz; with z2 = t z1
  // and homogeneity this is int_0^inf lambda(1, t) / V(1, t) dt.
  ExtremalContext c{corr2(0.6), Vector{{1.0, 0.5}}, 0.3, 1.5};
  const int n = 20000;
  SimOutput o = simulate_max_stable(c, n, 25);
  double joint = 0.0;
  for (int i = 0; i < n; ++i) joint += o.H(i, 0) == o.H(i, 1) ? 1.0 : 0.0;
  joint /= n;
  auto f = [&](double t) {
    if (t == 0.0) return 0.0;
    Vector z{{1.0, t}};
    return intensity(z, c) / exponent_V(z, c, exact_cfg()).value;
  };
  double expected = testutil::integrate(f, 0.0, kInf, 1e-8);
  EXPECT_NEAR(joint, expected, 4 * std::sqrt(expected * (1 - expected) / n));
}

TEST(Simulate, Errors) {
  SiteSet s = uniform_sites(2, 1);
  ModelSpec t;
  EXPECT_THROW(simulate_extremal_t(s, t, 0, 1), ConfigError);
  EXPECT_THROW(simulate_extremal_skew_t(s, t, 10, 1), ConfigError);
  EXPECT_THROW(simulate_extremal_t(s, skew_model(1, 1, 1), 10, 1), ConfigError);
}

TEST(PS0Params, ZeroSlantReducesToPlainT) {
  SiteSet s = uniform_sites(4, 8);
  ModelSpec t;
  t.corr = {2.0, 1.5};
  t.nu = 3.0;
  Matrix R = build_correlation_matrix(s, t.corr);
  for (int j = 0; j < 4; ++j) {
    ExtSkewTParams p = p_s0_params(s, t, j);
    EXPECT_EQ(p.tau, 0.0);
    EXPECT_EQ(p.kappa, 0.0);
    EXPECT_TRUE(p.alpha.isZero(0.0));
    Matrix expected = (R - R.col(j) * R.col(j).transpose()) / 4.0;
    EXPECT_LT((p.Omega - expected).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LT((p.mu - R.col(j)).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(PS0Params, SingleSiteIsPointMassAtOne) {
  ModelSpec t;
  ExtSkewTParams p = p_s0_params(uniform_sites(1, 9), t, 0);
  EXPECT_EQ(p.mu(0), 1.0);
  EXPECT_EQ(p.Omega(0, 0), 0.0);
  Rng rng = make_rng(1);
  Matrix x = sample_nc_ext_skew_t(p, 10, rng);
  EXPECT_TRUE((x.array() == 1.0).all());
}

TEST(PS0Params, ExtensionAndSlantTranscription) {
  SiteSet s = uniform_sites(5, 10);
  ModelSpec m = skew_model(0.4, -0.3, 1.7);
  m.tau = 0.6;
  Matrix R = build_correlation_matrix(s, m.corr);
  Vector a = slant_field(s, m.slant);
  const double nu1 = m.nu + 1.0;
  for (int j = 0; j < 5; ++j) {
    ExtSkewTParams p = p_s0_params(s, m, j);
    double ext = a(j);
    for (int k = 0; k < 5; ++k)
      if (k != j) ext += a(k) * R(k, j);
    EXPECT_NEAR(p.tau, ext * std::sqrt(nu1), 1e-12);
    EXPECT_EQ(p.kappa, -0.6);
    EXPECT_EQ(p.nu, nu1);
    for (int k = 0; k < 5; ++k) {
      double var = (1.0 - R(k, j) * R(k, j)) / nu1;
      EXPECT_NEAR(p.Omega(k, k), k == j ? 0.0 : var, 1e-15);
      EXPECT_NEAR(p.alpha(k), k == j ? 0.0 : a(k) * std::sqrt(nu1 * var), 1e-12);
    }
  }
}
