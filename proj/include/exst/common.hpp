#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "exst/error.hpp"

namespace exst {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;
using IndexList = std::vector<int>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

inline Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

inline std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

inline Vector select(const Vector& v, const IndexList& idx) {
  Vector out(static_cast<Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Index>(i)) = v(idx[i]);
  return out;
}

inline Matrix select(const Matrix& m, const IndexList& rows, const IndexList& cols) {
  Matrix out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j)
      out(static_cast<Index>(i), static_cast<Index>(j)) = m(rows[i], cols[j]);
  return out;
}

// Indices of {0..n-1} not present in `idx` (which must be sorted or small).
inline IndexList complement(const IndexList& idx, int n) {
  std::vector<bool> in(static_cast<std::size_t>(n), false);
  for (int i : idx) in[static_cast<std::size_t>(i)] = true;
  IndexList out;
  for (int i = 0; i < n; ++i)
    if (!in[static_cast<std::size_t>(i)]) out.push_back(i);
  return out;
}

// Cholesky factorization that refuses to repair: a matrix that is not
// numerically positive definite is a hard error.
inline Eigen::LLT<Matrix> checked_llt(const Matrix& m, const std::string& what) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) throw NumericError(what + ": matrix is not positive definite");
  const auto& l = llt.matrixL();
  for (Index i = 0; i < m.rows(); ++i) {
    double dii = l(i, i);
    if (!(dii > 1e-10 * std::sqrt(std::max(1.0, std::abs(m(i, i))))))
      throw NumericError(what + ": matrix is numerically singular");
  }
  return llt;
}

inline double log_det_from_llt(const Eigen::LLT<Matrix>& llt) {
  const auto& l = llt.matrixLLT();
  double s = 0.0;
  for (Index i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
  return 2.0 * s;
}

// Correlation matrix of a covariance matrix, with the diagonal scales.
inline Matrix to_correlation(const Matrix& cov, Vector* scales = nullptr) {
  Vector w = cov.diagonal().cwiseSqrt();
  Matrix out = cov;
  for (Index i = 0; i < cov.rows(); ++i)
    for (Index j = 0; j < cov.cols(); ++j) out(i, j) = cov(i, j) / (w(i) * w(j));
  for (Index i = 0; i < cov.rows(); ++i) out(i, i) = 1.0;
  if (scales) *scales = w;
  return out;
}

inline double log_sum_exp(const std::vector<double>& xs) {
  double mx = -kInf;
  for (double x : xs) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - mx);
  return mx + std::log(s);
}

// ---------------------------------------------------------------------------
// Random streams. One master seed, deterministic substreams keyed by small
// integer tags so parallel loops reproduce serial output bit for bit.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t stream_key(std::uint64_t seed) { return splitmix64(seed); }

template <typename... Tags>
std::uint64_t stream_key(std::uint64_t seed, std::uint64_t tag, Tags... rest) {
  return stream_key(splitmix64(seed ^ splitmix64(tag + 0x632be59bd9b4e019ULL)), static_cast<std::uint64_t>(rest)...);
}

using Rng = std::mt19937_64;

template <typename... Tags>
Rng make_rng(std::uint64_t seed, Tags... tags) {
  return Rng(stream_key(seed, static_cast<std::uint64_t>(tags)...));
}

inline double uniform01(Rng& rng) {
  // 53-bit mantissa, strictly inside (0,1)
  return (static_cast<double>(rng() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
}

}  // namespace exst
