#pragma once

// Set partitions of {0..n-1}, hitting scenarios and their construction from
// simulation labels or event dates.

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "exst/error.hpp"

namespace exst {

using Block = std::vector<int>;

/// A partition of {0..d-1} into nonempty blocks. Canonical form: members
/// sorted inside each block, blocks ordered by their smallest member.
class HittingScenario {
 public:
  HittingScenario() = default;

  HittingScenario(std::vector<Block> blocks, int d) : blocks_(std::move(blocks)), d_(d) {
    std::vector<int> seen(static_cast<std::size_t>(d), 0);
    for (auto& b : blocks_) {
      if (b.empty()) throw DataError("HittingScenario: empty block");
      std::sort(b.begin(), b.end());
      for (int i : b) {
        if (i < 0 || i >= d) throw DataError("HittingScenario: site index out of range");
        if (seen[static_cast<std::size_t>(i)]++) throw DataError("HittingScenario: blocks overlap");
      }
    }
    if (std::any_of(seen.begin(), seen.end(), [](int c) { return c == 0; }))
      throw DataError("HittingScenario: blocks do not cover all sites");
    std::sort(blocks_.begin(), blocks_.end(), [](const Block& a, const Block& b) { return a.front() < b.front(); });
  }

  static HittingScenario singletons(int d) {
    std::vector<Block> b;
    for (int i = 0; i < d; ++i) b.push_back({i});
    return {std::move(b), d};
  }

  static HittingScenario single_block(int d) {
    Block b(static_cast<std::size_t>(d));
    std::iota(b.begin(), b.end(), 0);
    return {{b}, d};
  }

  const std::vector<Block>& blocks() const { return blocks_; }
  int size() const { return static_cast<int>(blocks_.size()); }
  int dim() const { return d_; }

  /// Block restricted to the sites of `tuple` (sorted site indices), with
  /// indices relabelled to positions in `tuple`; empty intersections dropped.
  HittingScenario restrict_to(const std::vector<int>& tuple) const {
    std::vector<int> pos(static_cast<std::size_t>(d_), -1);
    for (std::size_t k = 0; k < tuple.size(); ++k) pos[static_cast<std::size_t>(tuple[k])] = static_cast<int>(k);
    std::vector<Block> out;
    for (const auto& b : blocks_) {
      Block nb;
      for (int i : b)
        if (pos[static_cast<std::size_t>(i)] >= 0) nb.push_back(pos[static_cast<std::size_t>(i)]);
      if (!nb.empty()) out.push_back(std::move(nb));
    }
    return {std::move(out), static_cast<int>(tuple.size())};
  }

  /// Per-site labels 1..|blocks| in block order.
  std::vector<int> labels() const {
    std::vector<int> l(static_cast<std::size_t>(d_));
    for (std::size_t k = 0; k < blocks_.size(); ++k)
      for (int i : blocks_[k]) l[static_cast<std::size_t>(i)] = static_cast<int>(k) + 1;
    return l;
  }

  friend bool operator==(const HittingScenario& a, const HittingScenario& b) {
    return a.d_ == b.d_ && a.blocks_ == b.blocks_;
  }

 private:
  std::vector<Block> blocks_;
  int d_ = 0;
};

inline constexpr int kMaxPartitionSize = 12;

/// Bell numbers via the Bell triangle; exact up to n = 25.
inline std::uint64_t bell_number(int n) {
  if (n < 0 || n > 25) throw ConfigError("bell_number: n out of range");
  std::vector<std::uint64_t> row{1};
  for (int i = 0; i < n; ++i) {
    std::vector<std::uint64_t> next{row.back()};
    for (auto v : row) next.push_back(next.back() + v);
    row = std::move(next);
  }
  return row.front();
}

/// Calls f(partition) for every set partition of {0..n-1}, in the
/// lexicographic order of restricted growth strings.
template <typename F>
void for_each_partition(int n, F&& f) {
  if (n < 1) throw ConfigError("enumerate_partitions: n must be positive");
  if (n > kMaxPartitionSize) throw ConfigError("enumerate_partitions: n exceeds the cap of 12");
  std::vector<int> a(static_cast<std::size_t>(n), 0), mx(static_cast<std::size_t>(n), 0);
  for (;;) {
    int nb = mx[static_cast<std::size_t>(n - 1)] + 1;
    std::vector<Block> blocks(static_cast<std::size_t>(nb));
    for (int i = 0; i < n; ++i) blocks[static_cast<std::size_t>(a[static_cast<std::size_t>(i)])].push_back(i);
    f(HittingScenario(std::move(blocks), n));
    int i = n - 1;
    while (i > 0 && a[static_cast<std::size_t>(i)] > mx[static_cast<std::size_t>(i - 1)]) --i;
    if (i == 0) return;
    ++a[static_cast<std::size_t>(i)];
    mx[static_cast<std::size_t>(i)] = std::max(mx[static_cast<std::size_t>(i - 1)], a[static_cast<std::size_t>(i)]);
    for (int k = i + 1; k < n; ++k) {
      a[static_cast<std::size_t>(k)] = 0;
      mx[static_cast<std::size_t>(k)] = mx[static_cast<std::size_t>(i)];
    }
  }
}

inline std::vector<HittingScenario> enumerate_partitions(int n) {
  std::vector<HittingScenario> out;
  for_each_partition(n, [&](HittingScenario p) { out.push_back(std::move(p)); });
  return out;
}

/// Groups sites by equal label.
inline HittingScenario labels_to_partition(const std::vector<int>& labels) {
  std::map<int, Block> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] <= 0) throw DataError("labels_to_partition: labels must be positive");
    groups[labels[i]].push_back(static_cast<int>(i));
  }
  std::vector<Block> blocks;
  for (auto& [label, b] : groups) blocks.push_back(std::move(b));
  return {std::move(blocks), static_cast<int>(labels.size())};
}

/// Sites whose event dates chain together through gaps of at most `gap`
/// days form one block (transitive closure of the pairwise rule).
inline HittingScenario derive_hitting_scenarios(const std::vector<std::optional<long>>& dates, long gap = 3) {
  const int d = static_cast<int>(dates.size());
  if (d < 1) throw DataError("derive_hitting_scenarios: no sites");
  std::vector<std::pair<long, int>> order;
  for (int i = 0; i < d; ++i) {
    if (!dates[static_cast<std::size_t>(i)]) throw DataError("derive_hitting_scenarios: missing date at site " + std::to_string(i + 1));
    order.emplace_back(*dates[static_cast<std::size_t>(i)], i);
  }
  std::sort(order.begin(), order.end());
  std::vector<int> labels(static_cast<std::size_t>(d));
  int label = 1;
  labels[static_cast<std::size_t>(order[0].second)] = label;
  for (std::size_t k = 1; k < order.size(); ++k) {
    if (order[k].first - order[k - 1].first > gap) ++label;
    labels[static_cast<std::size_t>(order[k].second)] = label;
  }
  return labels_to_partition(labels);
}

inline HittingScenario derive_hitting_scenarios(const std::vector<long>& dates, long gap = 3) {
  std::vector<std::optional<long>> d(dates.begin(), dates.end());
  return derive_hitting_scenarios(d, gap);
}

}  // namespace exst
