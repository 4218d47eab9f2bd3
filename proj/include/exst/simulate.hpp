#pragma once

// Exact simulation of extremal-t and extremal skew-t processes by extremal
// functions, on the unit Frechet scale.
//
// For each site j the Poisson points zeta = 1/(E_1 + ... + E_n) are visited in
// decreasing order while zeta exceeds the current maximum at j. Each point
// carries the function zeta * T_+^nu * m_j / m (T from p_s0_params(j)); it is
// discarded when it exceeds the running maximum at an earlier site, since it
// was then already accounted for, and otherwise updates the maxima.

#include <random>
#include <vector>

#include "exst/exponent.hpp"
#include "exst/parallel.hpp"
#include "exst/partitions.hpp"
#include "exst/skewt.hpp"

namespace exst {

using IntMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

struct SimOutput {
  Matrix Z;     // N x d unit Frechet maxima
  IntMatrix H;  // N x d hitting labels (equal label = same event)

  HittingScenario scenario(int row) const {
    std::vector<int> labels(static_cast<std::size_t>(H.cols()));
    for (Index k = 0; k < H.cols(); ++k) labels[static_cast<std::size_t>(k)] = H(row, k);
    return labels_to_partition(labels);
  }
};

inline constexpr long kMaxSpectralProposals = 1000000;

inline SimOutput simulate_max_stable(const ExtremalContext& c, int n, std::uint64_t seed, int threads = 1) {
  if (n < 1) throw ConfigError("simulate: number of replicates must be positive");
  const int d = c.dim();
  const double nu = c.nu();
  const Vector& lm = c.log_m();
  SimOutput out{Matrix::Zero(n, d), IntMatrix::Zero(n, d)};
  std::vector<int> counter(static_cast<std::size_t>(n), 0);
  for (int j = 0; j < d; ++j) {
    ExtSkewTSampler sampler(p_s0_params(c, j));
    parallel_for(n, threads, [&](long i) {
      Rng rng = make_rng(seed, 0x5131u, static_cast<std::uint64_t>(j), static_cast<std::uint64_t>(i));
      std::exponential_distribution<double> expo(1.0);
      auto z = out.Z.row(i);
      auto h = out.H.row(i);
      int& label = counter[static_cast<std::size_t>(i)];
      double e = expo(rng);
      double zeta = 1.0 / e;
      Vector cand(d);
      long it = 0;
      while (zeta > z(j)) {
        if (++it > kMaxSpectralProposals) throw NumericError("simulate: spectral proposal cap exceeded");
        ++label;
        Vector t = sampler.draw(rng);
        for (int k = 0; k < d; ++k) {
          double tk = t(k);
          // log scale: log zeta + nu log t_k + log m_j - log m_k
          cand(k) = tk > 0.0 ? std::exp(std::log(zeta) + nu * std::log(tk) + lm(j) - lm(k)) : 0.0;
        }
        cand(j) = zeta;
        bool keep = true;
        for (int k = 0; k < j && keep; ++k)
          if (cand(k) > z(k)) keep = false;
        if (keep) {
          for (int k = j; k < d; ++k) {
            if (cand(k) > z(k)) {
              z(k) = cand(k);
              h(k) = label;
            }
          }
        }
        e += expo(rng);
        zeta = 1.0 / e;
      }
    });
  }
  return out;
}

inline SimOutput simulate_extremal_t(const SiteSet& sites, const ModelSpec& model, int n, std::uint64_t seed,
                                     int threads = 1) {
  if (model.family != Family::ExtremalT) throw ConfigError("simulate_extremal_t: model family must be extremal-t");
  return simulate_max_stable(ExtremalContext::from_model(model, sites), n, seed, threads);
}

inline SimOutput simulate_extremal_skew_t(const SiteSet& sites, const ModelSpec& model, int n, std::uint64_t seed,
                                          int threads = 1) {
  if (model.family != Family::ExtremalSkewT)
    throw ConfigError("simulate_extremal_skew_t: model family must be extremal-skew-t");
  return simulate_max_stable(ExtremalContext::from_model(model, sites), n, seed, threads);
}

inline SimOutput simulate(const SiteSet& sites, const ModelSpec& model, int n, std::uint64_t seed, int threads = 1) {
  return simulate_max_stable(ExtremalContext::from_model(model, sites), n, seed, threads);
}

}  // namespace exst
