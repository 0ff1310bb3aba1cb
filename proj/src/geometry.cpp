#include "subcellsam/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace subcellsam {

BoundingBox scale_bbox(const BoundingBox& box, double factor, Size bounds) {
  if (!(factor > 0.0)) throw Error(ErrorCode::InvalidArgument, "scale factor must be positive");
  if (box.width() <= 0 || box.height() <= 0) throw Error(ErrorCode::DegenerateBox, "box has a zero side");

  constexpr double kSlack = 1e-9;
  const double cx = 0.5 * (box.x0 + box.x1);
  const double cy = 0.5 * (box.y0 + box.y1);
  const double hw = 0.5 * box.width() * factor;
  const double hh = 0.5 * box.height() * factor;

  BoundingBox out;
  out.x0 = std::max(0, static_cast<int>(std::floor(cx - hw + kSlack)));
  out.y0 = std::max(0, static_cast<int>(std::floor(cy - hh + kSlack)));
  out.x1 = std::min(bounds.width, static_cast<int>(std::ceil(cx + hw - kSlack)));
  out.y1 = std::min(bounds.height, static_cast<int>(std::ceil(cy + hh - kSlack)));
  if (out.width() <= 0 || out.height() <= 0) {
    throw Error(ErrorCode::DegenerateBox, "scaled box lies outside the image");
  }
  return out;
}

BoundingBox mask_to_bbox(const BinaryMask& mask) {
  BoundingBox box{mask.width(), mask.height(), -1, -1};
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(x, y)) continue;
      box.x0 = std::min(box.x0, x);
      box.y0 = std::min(box.y0, y);
      box.x1 = std::max(box.x1, x + 1);
      box.y1 = std::max(box.y1, y + 1);
    }
  }
  if (box.x1 < 0) throw Error(ErrorCode::EmptyMask, "mask has no true pixels");
  return box;
}

ScoreGrid resample_score_grid(const ScoreGrid& grid, Size target) {
  if (target.width <= 0 || target.height <= 0) {
    throw Error(ErrorCode::InvalidArgument, "target dimensions must be positive");
  }
  const Size src = grid.size();
  if (src.width <= 0 || src.height <= 0) throw Error(ErrorCode::InvalidArgument, "empty score grid");
  if (src == target) return grid;

  // Corner pixel centers map onto corner pixel centers, so grids that are
  // bilinear in their coordinates are reproduced exactly.
  auto source_coord = [](int t, int n_target, int n_source) {
    if (n_target == 1 || n_source == 1) return 0.0;
    return static_cast<double>(t) * (n_source - 1) / (n_target - 1);
  };

  Raster<float> out(target);
  const auto& in = grid.raster;
  for (int ty = 0; ty < target.height; ++ty) {
    const double sy = source_coord(ty, target.height, src.height);
    const int y0 = std::min(static_cast<int>(std::floor(sy)), src.height - 1);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double fy = sy - y0;
    for (int tx = 0; tx < target.width; ++tx) {
      const double sx = source_coord(tx, target.width, src.width);
      const int x0 = std::min(static_cast<int>(std::floor(sx)), src.width - 1);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double fx = sx - x0;
      const double top = (1.0 - fx) * in(x0, y0) + fx * in(x1, y0);
      const double bottom = (1.0 - fx) * in(x0, y1) + fx * in(x1, y1);
      out(tx, ty) = static_cast<float>((1.0 - fy) * top + fy * bottom);
    }
  }
  return ScoreGrid{std::move(out), grid.calibration};
}

bool pixels_on_border(const BinaryMask& mask) {
  const int w = mask.width();
  const int h = mask.height();
  for (int x = 0; x < w; ++x) {
    if (mask(x, 0) || mask(x, h - 1)) return true;
  }
  for (int y = 0; y < h; ++y) {
    if (mask(0, y) || mask(w - 1, y)) return true;
  }
  return false;
}

int label_components(const BinaryMask& mask, Raster<int>& labels) {
  labels = Raster<int>(mask.size(), 0);
  int count = 0;
  std::deque<std::pair<int, int>> queue;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(x, y) || labels(x, y) != 0) continue;
      ++count;
      labels(x, y) = count;
      queue.emplace_back(x, y);
      while (!queue.empty()) {
        auto [px, py] = queue.front();
        queue.pop_front();
        constexpr int dx[] = {1, -1, 0, 0};
        constexpr int dy[] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
          const int nx = px + dx[k];
          const int ny = py + dy[k];
          if (!mask.size().contains(nx, ny) || !mask(nx, ny) || labels(nx, ny) != 0) continue;
          labels(nx, ny) = count;
          queue.emplace_back(nx, ny);
        }
      }
    }
  }
  return count;
}

std::vector<BinaryMask> connected_components(const BinaryMask& mask) {
  Raster<int> labels;
  const int count = label_components(mask, labels);
  std::vector<BinaryMask> out(count, BinaryMask(mask.size()));
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (labels(x, y) > 0) out[labels(x, y) - 1].set(x, y);
    }
  }
  return out;
}

}  // namespace subcellsam
