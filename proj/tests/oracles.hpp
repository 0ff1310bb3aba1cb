#pragma once

// Independent reference implementations used as test oracles. They favour
// obviousness over speed and share no code with the library.

#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <vector>

#include "subcellsam/raster.hpp"

namespace oracles {

using namespace subcellsam;

// Per-pixel vote over explicit iteration masks per cell id. Pixels a cell
// covers in at least `fraction` of its masks are eligible; the highest count
// wins and ties go to the smaller id. Border-touching cells are then removed
// and labels renumbered 1..K in cell-id order.
inline Raster<std::uint32_t> integrate(const std::map<int, std::vector<BinaryMask>>& masks_by_cell,
                                       double fraction, Size size, bool exclude_border) {
  Raster<int> owner(size, 0);
  for (int y = 0; y < size.height; ++y) {
    for (int x = 0; x < size.width; ++x) {
      int best_id = 0, best_count = 0;
      for (const auto& [id, masks] : masks_by_cell) {
        int count = 0;
        for (const auto& m : masks) count += m(x, y) ? 1 : 0;
        const bool eligible = static_cast<double>(count) / masks.size() >= fraction;
        if (eligible && count > 0 && (count > best_count || (count == best_count && id < best_id))) {
          best_id = id;
          best_count = count;
        }
      }
      owner(x, y) = best_id;
    }
  }
  std::set<int> present, dropped;
  for (int y = 0; y < size.height; ++y) {
    for (int x = 0; x < size.width; ++x) {
      const int id = owner(x, y);
      if (id == 0) continue;
      present.insert(id);
      if (x == 0 || y == 0 || x == size.width - 1 || y == size.height - 1) dropped.insert(id);
    }
  }
  std::map<int, std::uint32_t> renumber;
  for (int id : present) {
    if (exclude_border && dropped.count(id)) continue;
    const auto next = static_cast<std::uint32_t>(renumber.size() + 1);
    renumber[id] = next;
  }
  Raster<std::uint32_t> out(size, 0);
  for (int y = 0; y < size.height; ++y) {
    for (int x = 0; x < size.width; ++x) {
      auto it = renumber.find(owner(x, y));
      if (it != renumber.end()) out(x, y) = it->second;
    }
  }
  return out;
}

struct SetCounts {
  long long a = 0, b = 0, both = 0, either = 0;
};

inline SetCounts count_sets(const BinaryMask& a, const BinaryMask& b) {
  std::set<std::pair<int, int>> sa, sb, inter, uni;
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      if (a(x, y)) sa.insert({x, y});
      if (b(x, y)) sb.insert({x, y});
    }
  }
  for (const auto& p : sa) {
    uni.insert(p);
    if (sb.count(p)) inter.insert(p);
  }
  for (const auto& p : sb) uni.insert(p);
  return {static_cast<long long>(sa.size()), static_cast<long long>(sb.size()),
          static_cast<long long>(inter.size()), static_cast<long long>(uni.size())};
}

inline double dice(const BinaryMask& a, const BinaryMask& b) {
  const auto c = count_sets(a, b);
  return c.a + c.b == 0 ? 1.0 : 2.0 * c.both / static_cast<double>(c.a + c.b);
}

inline double iou(const BinaryMask& a, const BinaryMask& b) {
  const auto c = count_sets(a, b);
  return c.either == 0 ? 1.0 : c.both / static_cast<double>(c.either);
}

// The printed dose-response form.
inline double hill(double s0, double s_inf, double ec50, double n, double c) {
  return s0 + (s_inf - s0) / (1.0 + std::pow(ec50 / c, n));
}

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / v.size();
}

inline double sample_sd(const std::vector<double>& v) {
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / (v.size() - 1));
}

}  // namespace oracles
