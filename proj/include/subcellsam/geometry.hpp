#pragma once

#include <vector>

#include "subcellsam/raster.hpp"

namespace subcellsam {

// Scales each side about the box center, then clips to `bounds`.
BoundingBox scale_bbox(const BoundingBox& box, double factor, Size bounds);

// Tightest half-open box around the true pixels. Throws EmptyMask.
BoundingBox mask_to_bbox(const BinaryMask& mask);

// Bilinear resampling; corner pixel centers stay aligned (no overshoot).
ScoreGrid resample_score_grid(const ScoreGrid& grid, Size target);

bool pixels_on_border(const BinaryMask& mask);

// 4-connected components in raster order of their first pixel.
std::vector<BinaryMask> connected_components(const BinaryMask& mask);

// Label raster of 4-connected components, 0 = background; returns component count.
int label_components(const BinaryMask& mask, Raster<int>& labels);

}  // namespace subcellsam
