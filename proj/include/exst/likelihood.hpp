#pragma once

// Stephenson-Tawn, full and composite log-likelihoods of extremal skew-t
// block maxima on the unit Frechet scale.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <unordered_map>
#include <vector>

#include "exst/exponent.hpp"
#include "exst/io.hpp"
#include "exst/parallel.hpp"
#include "exst/partitions.hpp"

namespace exst {

struct MaximaDataset {
  SiteSet sites;
  Matrix Z;                                 // N x d, unit Frechet
  std::vector<HittingScenario> scenarios;   // empty, or one per row
  std::vector<std::vector<std::optional<long>>> event_dates;  // empty, or N x d

  int rows() const { return static_cast<int>(Z.rows()); }
  int dim() const { return static_cast<int>(Z.cols()); }
  bool has_scenarios() const { return !scenarios.empty(); }

  void validate() const {
    if (Z.cols() != sites.size()) throw DataError("MaximaDataset: column count does not match the number of sites");
    if (Z.rows() < 1) throw DataError("MaximaDataset: no rows");
    for (Index i = 0; i < Z.rows(); ++i)
      for (Index k = 0; k < Z.cols(); ++k)
        if (!(Z(i, k) > 0.0) || !std::isfinite(Z(i, k)))
          throw DataError("MaximaDataset: value at row " + std::to_string(i + 1) + ", site " + std::to_string(k + 1) +
                          " is not positive and finite");
    if (!scenarios.empty()) {
      if (static_cast<Index>(scenarios.size()) != Z.rows()) throw DataError("MaximaDataset: one scenario per row required");
      for (const auto& s : scenarios)
        if (s.dim() != dim()) throw DataError("MaximaDataset: scenario dimension mismatch");
    }
  }

  /// Fills `scenarios` from `event_dates` with the chaining rule.
  void derive_scenarios(long gap = 3) {
    if (static_cast<Index>(event_dates.size()) != Z.rows()) throw DataError("MaximaDataset: one date row per block required");
    scenarios.clear();
    for (std::size_t i = 0; i < event_dates.size(); ++i) {
      try {
        scenarios.push_back(derive_hitting_scenarios(event_dates[i], gap));
      } catch (const DataError& e) {
        throw DataError("row " + std::to_string(i + 1) + ": " + e.what());
      }
    }
  }
};

struct LikelihoodConfig {
  QmcConfig qmc;                                     // seed, epsilon, shifts, exact path
  QmcProfile profile = qmc_profile("type-II");       // lattice budgets
  bool partial_log_scale = true;                     // error control of partial terms on the log scale
  bool strict = false;                               // non-converged cdf terms raise ConvergenceError
  int threads = 1;
  int max_full_dim = 10;                             // partition sum cap for the full likelihood

  QmcConfig exponent_cfg() const {
    QmcConfig c = with_budget(qmc, profile.exponent_terms);
    c.log_scale = false;
    return c;
  }
  QmcConfig partial_cfg() const {
    QmcConfig c = with_budget(qmc, profile.partial_terms);
    c.log_scale = partial_log_scale;
    return c;
  }
};

struct LikResult {
  double loglik = 0.0;
  long terms = 0;          // cdf terms evaluated
  long nonconverged = 0;   // of which did not reach epsilon within budget
  bool converged() const { return nonconverged == 0; }
};

namespace detail {

inline std::uint64_t hash_indices(const IndexList& idx) {
  std::uint64_t h = 0x9ae16a3b2f90404fULL;
  for (int i : idx) h = splitmix64(h ^ static_cast<std::uint64_t>(i + 1));
  return h;
}

// Evaluates -V and the block partials of one row of one tuple. `global`
// maps local site positions to dataset columns so random streams are keyed
// by global identities: the same term gets the same stream wherever it occurs.
class RowEvaluator {
 public:
  RowEvaluator(const ExtremalContext& ctx, const LikelihoodConfig& cfg, const IndexList& global, int row)
      : ctx_(ctx), cfg_(cfg), global_(global), row_(row), ecfg_(cfg.exponent_cfg()), pcfg_(cfg.partial_cfg()) {
    tuple_key_ = hash_indices(global_);
  }

  double minus_V(const Vector& z, LikResult& acc) const {
    VResult v = exponent_V(z, ctx_, ecfg_, stream_key(tuple_key_, static_cast<std::uint64_t>(row_), 0x1u));
    acc.terms += ctx_.dim() > 1 ? ctx_.dim() : 0;
    note(v.converged, acc, "exponent function");
    return -v.value;
  }

  double log_partial(const Vector& z, const IndexList& block, LikResult& acc) {
    std::uint64_t mask = 0;
    for (int k : block) mask |= (1ULL << k);
    if (auto it = cache_.find(mask); it != cache_.end()) return it->second;
    IndexList gb;
    for (int k : block) gb.push_back(global_[static_cast<std::size_t>(k)]);
    std::uint64_t tag = stream_key(tuple_key_, static_cast<std::uint64_t>(row_), 0x2u, hash_indices(gb));
    LogResult r;
    try {
      r = exponent_partial(z, block, ctx_, pcfg_, tag);
    } catch (const NumericError& e) {
      throw NumericError("row " + std::to_string(row_ + 1) + ", block " + block_name(gb) + ": " + e.what());
    }
    if (static_cast<int>(block.size()) < ctx_.dim()) ++acc.terms;
    note(r.converged, acc, "partial derivative for block " + block_name(gb));
    cache_.emplace(mask, r.log_value);
    return r.log_value;
  }

 private:
  static std::string block_name(const IndexList& gb) {
    std::string s = "{";
    for (std::size_t k = 0; k < gb.size(); ++k) s += (k ? "," : "") + std::to_string(gb[k] + 1);
    return s + "}";
  }

  void note(bool converged, LikResult& acc, const std::string& what) const {
    if (converged) return;
    ++acc.nonconverged;
    if (cfg_.strict)
      throw ConvergenceError("row " + std::to_string(row_ + 1) + ": " + what +
                             " did not reach the error target within the lattice budget");
  }

  const ExtremalContext& ctx_;
  const LikelihoodConfig& cfg_;
  const IndexList& global_;
  int row_;
  QmcConfig ecfg_, pcfg_;
  std::uint64_t tuple_key_ = 0;
  std::unordered_map<std::uint64_t, double> cache_;
};

// log of exp(-V) * sum over partitions of prod of -V_block.
inline double row_full_loglik(const Vector& z, RowEvaluator& ev, LikResult& acc) {
  const int d = static_cast<int>(z.size());
  double mv = ev.minus_V(z, acc);
  std::vector<double> terms;
  for_each_partition(d, [&](const HittingScenario& p) {
    double s = 0.0;
    for (const auto& b : p.blocks()) s += ev.log_partial(z, b, acc);
    terms.push_back(s);
  });
  return mv + log_sum_exp(terms);
}

inline double row_st_loglik(const Vector& z, const HittingScenario& p, RowEvaluator& ev, LikResult& acc) {
  double s = ev.minus_V(z, acc);
  for (const auto& b : p.blocks()) s += ev.log_partial(z, b, acc);
  return s;
}

inline IndexList iota_list(int n) {
  IndexList v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), 0);
  return v;
}

// Evaluates per-row values in parallel and sums them in row order.
template <typename RowFn>
LikResult accumulate_rows(int n, int threads, RowFn&& fn) {
  std::vector<double> vals(static_cast<std::size_t>(n));
  std::vector<LikResult> accs(static_cast<std::size_t>(n));
  parallel_for(n, threads, [&](long i) { vals[static_cast<std::size_t>(i)] = fn(static_cast<int>(i), accs[static_cast<std::size_t>(i)]); });
  LikResult out;
  for (int i = 0; i < n; ++i) {
    double v = vals[static_cast<std::size_t>(i)];
    if (!std::isfinite(v)) throw NumericError("row " + std::to_string(i + 1) + ": non-finite log-likelihood");
    out.loglik += v;
    out.terms += accs[static_cast<std::size_t>(i)].terms;
    out.nonconverged += accs[static_cast<std::size_t>(i)].nonconverged;
  }
  return out;
}

}  // namespace detail

/// Stephenson-Tawn log-likelihood: one partition (the observed scenario) per row.
inline LikResult st_loglik(const MaximaDataset& data, const ExtremalContext& ctx, const LikelihoodConfig& cfg) {
  data.validate();
  if (!data.has_scenarios()) throw DataError("st_loglik: hitting scenarios are required for every row");
  if (ctx.dim() != data.dim()) throw ConfigError("st_loglik: model and data dimensions differ");
  IndexList global = detail::iota_list(data.dim());
  return detail::accumulate_rows(data.rows(), resolve_threads(cfg.threads), [&](int i, LikResult& acc) {
    detail::RowEvaluator ev(ctx, cfg, global, i);
    return detail::row_st_loglik(data.Z.row(i).transpose(), data.scenarios[static_cast<std::size_t>(i)], ev, acc);
  });
}

/// Full log-likelihood: sum over all set partitions in every row.
inline LikResult full_loglik(const MaximaDataset& data, const ExtremalContext& ctx, const LikelihoodConfig& cfg) {
  data.validate();
  if (ctx.dim() != data.dim()) throw ConfigError("full_loglik: model and data dimensions differ");
  if (data.dim() > cfg.max_full_dim)
    throw ConfigError("full_loglik: d = " + std::to_string(data.dim()) + " exceeds the partition cap of " +
                      std::to_string(cfg.max_full_dim));
  IndexList global = detail::iota_list(data.dim());
  return detail::accumulate_rows(data.rows(), resolve_threads(cfg.threads), [&](int i, LikResult& acc) {
    detail::RowEvaluator ev(ctx, cfg, global, i);
    return detail::row_full_loglik(data.Z.row(i).transpose(), ev, acc);
  });
}

struct TupleSelection {
  int j = 2;
  double u = kInf;                  // tuples with diameter < u have weight 1
  std::vector<IndexList> tuples;    // selected tuples, sorted indices
};

namespace detail {
template <typename F>
void for_each_combination(int n, int k, F&& f) {
  IndexList c(static_cast<std::size_t>(k));
  std::iota(c.begin(), c.end(), 0);
  for (;;) {
    f(c);
    int i = k - 1;
    while (i >= 0 && c[static_cast<std::size_t>(i)] == n - k + i) --i;
    if (i < 0) return;
    ++c[static_cast<std::size_t>(i)];
    for (int m = i + 1; m < k; ++m) c[static_cast<std::size_t>(m)] = c[static_cast<std::size_t>(m - 1)] + 1;
  }
}

inline double tuple_diameter(const Matrix& dist, const IndexList& q) {
  double m = 0.0;
  for (std::size_t a = 0; a < q.size(); ++a)
    for (std::size_t b = a + 1; b < q.size(); ++b) m = std::max(m, dist(q[a], q[b]));
  return m;
}
}  // namespace detail

inline double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return std::round(r);
}

/// Tuples of size j with diameter < u.
inline TupleSelection select_tuples_by_threshold(const SiteSet& sites, int j, double u) {
  const int d = sites.size();
  if (j < 2 || j > d) throw ConfigError("select_tuples: need 2 <= j <= d");
  if (!(u > 0.0)) throw ConfigError("select_tuples: threshold must be positive");
  TupleSelection sel{j, u, {}};
  detail::for_each_combination(d, j, [&](const IndexList& q) {
    if (detail::tuple_diameter(sites.distances(), q) < u) sel.tuples.push_back(q);
  });
  if (sel.tuples.empty()) throw ConfigError("select_tuples: threshold selects no tuples");
  return sel;
}

/// Smallest threshold selecting at least target_count tuples; tuples tied at
/// the boundary diameter are all included.
inline TupleSelection select_tuples_by_count(const SiteSet& sites, int j, long target_count) {
  const int d = sites.size();
  if (j < 2 || j > d) throw ConfigError("select_tuples: need 2 <= j <= d");
  if (target_count < 1) throw ConfigError("select_tuples: target count must be positive");
  if (static_cast<double>(target_count) > binomial(d, j))
    throw ConfigError("select_tuples: target count exceeds the number of tuples C(d, j)");
  std::vector<double> diam;
  detail::for_each_combination(d, j, [&](const IndexList& q) { diam.push_back(detail::tuple_diameter(sites.distances(), q)); });
  std::nth_element(diam.begin(), diam.begin() + (target_count - 1), diam.end());
  double cut = diam[static_cast<std::size_t>(target_count - 1)];
  return select_tuples_by_threshold(sites, j, std::nextafter(cut, kInf));
}

/// Weighted composite log-likelihood over the selected tuples. With
/// use_scenarios each tuple contributes its restricted hitting scenario
/// only; otherwise the partition sum over the tuple.
inline LikResult cl_loglik(const MaximaDataset& data, const ExtremalContext& ctx, const TupleSelection& sel,
                           const LikelihoodConfig& cfg, bool use_scenarios) {
  data.validate();
  if (ctx.dim() != data.dim()) throw ConfigError("cl_loglik: model and data dimensions differ");
  if (sel.tuples.empty()) throw ConfigError("cl_loglik: empty tuple selection (all weights zero)");
  if (use_scenarios && !data.has_scenarios()) throw DataError("cl_loglik: hitting scenarios are required");
  if (!use_scenarios && sel.j > cfg.max_full_dim) throw ConfigError("cl_loglik: tuple size exceeds the partition cap");
  std::vector<ExtremalContext> subs;
  for (const auto& q : sel.tuples) {
    if (static_cast<int>(q.size()) != sel.j) throw ConfigError("cl_loglik: tuple size differs from j");
    subs.push_back(ctx.subset(q));
  }
  return detail::accumulate_rows(data.rows(), resolve_threads(cfg.threads), [&](int i, LikResult& acc) {
    double s = 0.0;
    for (std::size_t t = 0; t < sel.tuples.size(); ++t) {
      const IndexList& q = sel.tuples[t];
      Vector zq = select(Vector(data.Z.row(i).transpose()), q);
      detail::RowEvaluator ev(subs[t], cfg, q, i);
      if (use_scenarios)
        s += detail::row_st_loglik(zq, data.scenarios[static_cast<std::size_t>(i)].restrict_to(q), ev, acc);
      else
        s += detail::row_full_loglik(zq, ev, acc);
    }
    return s;
  });
}

/// Reads unit Frechet maxima (and optional event dates) in the wide format.
/// Site ids in the header must match the site file, in the same order.
inline MaximaDataset read_maxima(const SiteSet& sites, const std::string& maxima_path,
                                 const std::string& dates_path = "", long gap = 3) {
  WideData w = read_wide_csv(maxima_path);
  if (w.site_ids != sites.ids()) throw DataError(maxima_path + ": site columns do not match the site file");
  for (const auto& row : w.missing)
    for (bool m : row)
      if (m) throw DataError(maxima_path + ": missing values are not supported");
  MaximaDataset ds{sites, w.values, {}, {}};
  if (!dates_path.empty()) {
    WideData dw = read_wide_csv(dates_path);
    if (dw.site_ids != sites.ids()) throw DataError(dates_path + ": site columns do not match the site file");
    if (dw.values.rows() != w.values.rows()) throw DataError(dates_path + ": row count differs from the maxima file");
    for (Index i = 0; i < dw.values.rows(); ++i) {
      std::vector<std::optional<long>> r;
      for (Index k = 0; k < dw.values.cols(); ++k) {
        if (dw.missing[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)])
          r.emplace_back(std::nullopt);
        else
          r.emplace_back(static_cast<long>(std::llround(dw.values(i, k))));
      }
      ds.event_dates.push_back(std::move(r));
    }
    ds.derive_scenarios(gap);
  }
  ds.validate();
  return ds;
}

}  // namespace exst
