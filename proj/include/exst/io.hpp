#pragma once

// CSV input/output. Numbers are written with 17 significant digits so a
// write/read cycle reproduces every double exactly.

#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "exst/common.hpp"
#include "exst/spatial.hpp"

namespace exst {

inline std::string format_double(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + " is empty");
  t.header = detail::split_csv_line(line);
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != t.header.size())
      throw DataError(path + " line " + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                      " columns, found " + std::to_string(cells.size()));
    t.rows.push_back(std::move(cells));
  }
  return t;
}

/// Wide matrix file: first column `block`, then one column per site.
inline void write_wide_csv(const std::string& path, const std::vector<std::string>& site_ids, const Matrix& m) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "block";
  for (const auto& id : site_ids) out << ',' << id;
  out << '\n';
  for (Index i = 0; i < m.rows(); ++i) {
    out << (i + 1);
    for (Index k = 0; k < m.cols(); ++k) out << ',' << format_double(m(i, k));
    out << '\n';
  }
  if (!out) throw DataError("write failed: " + path);
}

template <typename IntMat>
void write_wide_int_csv(const std::string& path, const std::vector<std::string>& site_ids, const IntMat& m) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "block";
  for (const auto& id : site_ids) out << ',' << id;
  out << '\n';
  for (Index i = 0; i < m.rows(); ++i) {
    out << (i + 1);
    for (Index k = 0; k < m.cols(); ++k) out << ',' << m(i, k);
    out << '\n';
  }
  if (!out) throw DataError("write failed: " + path);
}

struct WideData {
  std::vector<std::string> site_ids;
  Matrix values;
  std::vector<std::vector<bool>> missing;
};

/// Reads a wide file written by write_wide_csv (or any file whose first
/// column is a block label). Empty cells and NA are recorded as missing.
inline WideData read_wide_csv(const std::string& path) {
  CsvTable t = read_csv(path);
  if (t.header.size() < 2 || t.header[0] != "block") throw DataError(path + ": header must start with 'block'");
  WideData w;
  w.site_ids.assign(t.header.begin() + 1, t.header.end());
  const Index n = static_cast<Index>(t.rows.size()), d = static_cast<Index>(w.site_ids.size());
  if (n == 0) throw DataError(path + ": no data rows");
  w.values = Matrix::Constant(n, d, kNaN);
  w.missing.assign(static_cast<std::size_t>(n), std::vector<bool>(static_cast<std::size_t>(d), false));
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < d; ++k) {
      const std::string& cell = t.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k + 1)];
      if (cell.empty() || cell == "NA") {
        w.missing[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] = true;
        continue;
      }
      w.values(i, k) = detail::parse_double(cell, path + " row " + std::to_string(i + 1));
    }
  }
  return w;
}

inline void write_sites_csv(const std::string& path, const SiteSet& sites) {
  if (sites.dim() != 2) throw ConfigError("write_sites_csv: sites must be two-dimensional");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "site_id,x,y\n";
  for (int i = 0; i < sites.size(); ++i)
    out << sites.ids()[static_cast<std::size_t>(i)] << ',' << format_double(sites.coords()(i, 0)) << ','
        << format_double(sites.coords()(i, 1)) << '\n';
}

}  // namespace exst
