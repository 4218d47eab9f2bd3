#pragma once

#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "exst/common.hpp"

namespace exst {

/// Site coordinates, one row per site. Construction rejects duplicate sites.
class SiteSet {
 public:
  SiteSet() = default;

  explicit SiteSet(Matrix coords, std::vector<std::string> ids = {})
      : coords_(std::move(coords)), ids_(std::move(ids)) {
    if (coords_.rows() < 1) throw ConfigError("SiteSet: need at least one site");
    if (coords_.cols() < 1) throw ConfigError("SiteSet: coordinates need at least one dimension");
    if (!coords_.allFinite()) throw DataError("SiteSet: non-finite coordinate");
    if (ids_.empty()) {
      for (Index i = 0; i < coords_.rows(); ++i) ids_.push_back(std::to_string(i + 1));
    }
    if (static_cast<Index>(ids_.size()) != coords_.rows())
      throw ConfigError("SiteSet: id count does not match coordinate rows");
    distances_ = Matrix::Zero(coords_.rows(), coords_.rows());
    for (Index i = 0; i < coords_.rows(); ++i) {
      for (Index j = i + 1; j < coords_.rows(); ++j) {
        double h = (coords_.row(i) - coords_.row(j)).norm();
        if (h < 1e-12)
          throw DataError("SiteSet: sites " + ids_[static_cast<std::size_t>(i)] + " and " +
                          ids_[static_cast<std::size_t>(j)] + " coincide");
        distances_(i, j) = distances_(j, i) = h;
      }
    }
  }

  int size() const { return static_cast<int>(coords_.rows()); }
  int dim() const { return static_cast<int>(coords_.cols()); }
  const Matrix& coords() const { return coords_; }
  const std::vector<std::string>& ids() const { return ids_; }
  // Cached at construction.
  const Matrix& distances() const { return distances_; }

  SiteSet subset(const IndexList& idx) const {
    Matrix c(static_cast<Index>(idx.size()), coords_.cols());
    std::vector<std::string> ids;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      c.row(static_cast<Index>(k)) = coords_.row(idx[k]);
      ids.push_back(ids_[static_cast<std::size_t>(idx[k])]);
    }
    return SiteSet(std::move(c), std::move(ids));
  }

 private:
  Matrix coords_;
  std::vector<std::string> ids_;
  Matrix distances_;
};

/// Euclidean distance matrix, recomputed directly from the coordinates.
inline Matrix pairwise_distances(const SiteSet& sites) {
  const Matrix& c = sites.coords();
  Matrix d = Matrix::Zero(c.rows(), c.rows());
  for (Index i = 0; i < c.rows(); ++i)
    for (Index j = i + 1; j < c.rows(); ++j) d(i, j) = d(j, i) = (c.row(i) - c.row(j)).norm();
  return d;
}

/// Power-exponential correlation model, rho(h) = exp(-(h/r)^eta).
struct CorrelationConfig {
  double range = 1.0;   // r > 0
  double smooth = 1.0;  // eta in (0, 2]

  void validate() const {
    if (!(range > 0.0) || !std::isfinite(range)) throw ConfigError("correlation range must be positive");
    if (!(smooth > 0.0 && smooth <= 2.0)) throw ConfigError("correlation smoothness must lie in (0, 2]");
  }

  friend bool operator==(const CorrelationConfig&, const CorrelationConfig&) = default;
};

inline double powered_exponential_correlation(double h, const CorrelationConfig& cfg) {
  cfg.validate();
  if (h < 0.0 || std::isnan(h)) throw ConfigError("correlation: distance must be nonnegative");
  if (h == 0.0) return 1.0;
  return std::exp(-std::pow(h / cfg.range, cfg.smooth));
}

/// Correlation matrix over a site set. Fails if the result is not
/// numerically positive definite; no jitter is added.
inline Matrix build_correlation_matrix(const SiteSet& sites, const CorrelationConfig& cfg) {
  cfg.validate();
  const Matrix& h = sites.distances();
  const Index d = h.rows();
  Matrix c(d, d);
  for (Index i = 0; i < d; ++i) {
    c(i, i) = 1.0;
    for (Index j = i + 1; j < d; ++j) c(i, j) = c(j, i) = powered_exponential_correlation(h(i, j), cfg);
  }
  checked_llt(c, "build_correlation_matrix");
  return c;
}

/// Linear slant surface alpha(s) = a0 + b1 (s1 - c1) + b2 (s2 - c2).
/// The plain form used for simulation has no intercept and zero centring.
struct SlantModel {
  double intercept = 0.0;
  double b1 = 0.0;
  double b2 = 0.0;
  // centring offset applied to the coordinates before the linear map
  double centre1 = 0.0;
  double centre2 = 0.0;

  bool is_zero() const { return intercept == 0.0 && b1 == 0.0 && b2 == 0.0; }
};

inline Vector slant_field(const SiteSet& sites, const SlantModel& m) {
  if (sites.dim() != 2) throw ConfigError("slant_field: sites must be two-dimensional");
  Vector a(sites.size());
  for (int i = 0; i < sites.size(); ++i)
    a(i) = m.intercept + m.b1 * (sites.coords()(i, 0) - m.centre1) + m.b2 * (sites.coords()(i, 1) - m.centre2);
  return a;
}

inline Vector slant_field(const SiteSet& sites, double beta1, double beta2) {
  return slant_field(sites, SlantModel{0.0, beta1, beta2});
}

/// d sites uniform on the square [lo, hi]^2.
inline SiteSet uniform_sites(int d, std::uint64_t seed, double lo = -5.0, double hi = 5.0) {
  if (d < 1) throw ConfigError("uniform_sites: d must be positive");
  Rng rng = make_rng(seed, 0x517e5);
  Matrix c(d, 2);
  for (int i = 0; i < d; ++i)
    for (int k = 0; k < 2; ++k) c(i, k) = lo + (hi - lo) * uniform01(rng);
  return SiteSet(std::move(c));
}

namespace detail {
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    auto b = cell.find_first_not_of(" \t\r\"");
    auto e = cell.find_last_not_of(" \t\r\"");
    out.push_back(b == std::string::npos ? std::string{} : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_double(const std::string& s, const std::string& ctx) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError(ctx + ": cannot parse number '" + s + "'");
  }
}
}  // namespace detail

/// Reads `site_id,x,y` (header row required).
inline SiteSet read_sites_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open sites file " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("sites file is empty: " + path);
  auto header = detail::split_csv_line(line);
  if (header.size() < 3 || header[0] != "site_id" || header[1] != "x" || header[2] != "y")
    throw DataError("sites file header must be site_id,x,y");
  std::vector<std::string> ids;
  std::vector<std::pair<double, double>> xy;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() < 3) throw DataError("sites file line " + std::to_string(lineno) + ": expected 3 columns");
    ids.push_back(cells[0]);
    std::string ctx = "sites file line " + std::to_string(lineno);
    xy.emplace_back(detail::parse_double(cells[1], ctx), detail::parse_double(cells[2], ctx));
  }
  Matrix c(static_cast<Index>(xy.size()), 2);
  for (std::size_t i = 0; i < xy.size(); ++i) {
    c(static_cast<Index>(i), 0) = xy[i].first;
    c(static_cast<Index>(i), 1) = xy[i].second;
  }
  return SiteSet(std::move(c), std::move(ids));
}

}  // namespace exst
