#include "subcellsam/nuclei.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>

#include "subcellsam/geometry.hpp"

namespace subcellsam {
namespace {

// Eight-neighbour steps in chain-code order (clockwise with y pointing down).
constexpr int kDx[8] = {1, 1, 0, -1, -1, -1, 0, 1};
constexpr int kDy[8] = {0, 1, 1, 1, 0, -1, -1, -1};

// Moore-neighbour trace of the outer boundary of the 8-connected component
// whose first pixel in raster order is (sx, sy). Returns the chain codes.
std::vector<int> trace_outer_boundary(const BinaryMask& mask, int sx, int sy) {
  auto fg = [&](int x, int y) { return mask.size().contains(x, y) && mask(x, y); };
  auto next_step = [&](int x, int y, int came) -> int {
    // Scan clockwise starting just after the neighbour we came from.
    for (int k = 0; k < 8; ++k) {
      const int d = (came + 5 + k) % 8;
      if (fg(x + kDx[d], y + kDy[d])) return d;
    }
    return -1;
  };
  std::vector<int> codes;
  int x = sx, y = sy;
  int came = 7;  // pixels W, NW, N and NE of the start are background
  for (;;) {
    const int d = next_step(x, y, came);
    if (d < 0) break;  // isolated pixel
    if (!codes.empty() && x == sx && y == sy && d == codes.front()) break;
    codes.push_back(d);
    x += kDx[d];
    y += kDy[d];
    came = d;
  }
  return codes;
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double population_sd(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

}  // namespace

double contour_perimeter(const BinaryMask& mask) {
  Raster<std::uint8_t> seen(mask.size(), 0);
  double perimeter = 0.0;
  for (int y0 = 0; y0 < mask.height(); ++y0) {
    for (int x0 = 0; x0 < mask.width(); ++x0) {
      if (!mask(x0, y0) || seen(x0, y0)) continue;
      // Mark the 8-connected component so it is traced once.
      std::deque<std::pair<int, int>> queue{{x0, y0}};
      seen(x0, y0) = 1;
      while (!queue.empty()) {
        auto [x, y] = queue.front();
        queue.pop_front();
        for (int d = 0; d < 8; ++d) {
          const int nx = x + kDx[d];
          const int ny = y + kDy[d];
          if (mask.size().contains(nx, ny) && mask(nx, ny) && !seen(nx, ny)) {
            seen(nx, ny) = 1;
            queue.emplace_back(nx, ny);
          }
        }
      }
      const auto codes = trace_outer_boundary(mask, x0, y0);
      int even = 0, odd = 0, corners = 0;
      for (std::size_t i = 0; i < codes.size(); ++i) {
        (codes[i] % 2 == 0 ? even : odd) += 1;
        corners += codes[i] != codes[(i + 1) % codes.size()];
      }
      // Vossepoel-Smeulders chain length of the pixel-centre polygon, plus the
      // Steiner term for offsetting it half a pixel outwards.
      perimeter += 0.980 * even + 1.406 * odd - 0.091 * corners + std::numbers::pi;
    }
  }
  return perimeter;
}

ShapeStats shape_stats(const BinaryMask& mask) {
  const BoundingBox box = mask_to_bbox(mask);
  ShapeStats s;
  s.area = static_cast<double>(mask.area());
  const double long_side = std::max(box.width(), box.height());
  const double short_side = std::min(box.width(), box.height());
  s.aspect_ratio = long_side / short_side;
  const double p = contour_perimeter(mask);
  s.circularity = 4.0 * std::numbers::pi * s.area / (p * p);
  return s;
}

PointF compute_center(const BinaryMask& mask) {
  double sx = 0.0, sy = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(x, y)) continue;
      sx += x;
      sy += y;
      ++n;
    }
  }
  if (n == 0) throw Error(ErrorCode::EmptyMask, "centroid of an empty mask");
  return PointF{sx / static_cast<double>(n), sy / static_cast<double>(n)};
}

std::vector<ShapeCandidate> filter_by_shape(std::vector<ShapeCandidate> candidates) {
  if (candidates.size() <= 2) return candidates;

  using Getter = double (*)(const ShapeStats&);
  const Getter getters[] = {
      [](const ShapeStats& s) { return s.area; },
      [](const ShapeStats& s) { return s.aspect_ratio; },
      [](const ShapeStats& s) { return s.circularity; },
  };
  std::vector<bool> keep(candidates.size(), true);
  for (Getter get : getters) {
    std::vector<double> values;
    values.reserve(candidates.size());
    for (const auto& c : candidates) values.push_back(get(c.stats));
    const double median = median_of(values);
    const double sd = population_sd(values);
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (std::abs(values[i] - median) > 2.0 * sd) keep[i] = false;
    }
  }
  std::vector<ShapeCandidate> out;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (keep[i]) out.push_back(std::move(candidates[i]));
  }
  return out;
}

std::vector<NucleusRecord> detect_nuclei(const MultiChannelImage& image, const SegmentationBackend& backend) {
  const auto channel_index = image.nucleus_channel();
  if (!channel_index) throw Error(ErrorCode::NoNucleusChannel, "image has no nucleus channel");

  std::vector<ShapeCandidate> candidates;
  for (auto& result : backend.generate_masks_auto(image.channel(*channel_index))) {
    if (!result.mask.any()) continue;
    ShapeStats stats = shape_stats(result.mask);
    candidates.push_back(ShapeCandidate{std::move(result.mask), stats});
  }
  if (candidates.empty()) return {};

  std::vector<NucleusRecord> nuclei;
  for (auto& c : filter_by_shape(std::move(candidates))) {
    const PointF center = compute_center(c.mask);
    nuclei.push_back(NucleusRecord{0, std::move(c.mask), center, c.stats});
  }
  std::stable_sort(nuclei.begin(), nuclei.end(), [](const NucleusRecord& a, const NucleusRecord& b) {
    return a.center.y != b.center.y ? a.center.y < b.center.y : a.center.x < b.center.x;
  });
  for (std::size_t i = 0; i < nuclei.size(); ++i) nuclei[i].id = static_cast<int>(i) + 1;
  return nuclei;
}

}  // namespace subcellsam
