#pragma once

#include <vector>

#include "subcellsam/backend.hpp"
#include "subcellsam/raster.hpp"

namespace subcellsam {

struct ShapeStats {
  double area = 0.0;
  double aspect_ratio = 1.0;  // long / short side of the bounding box
  double circularity = 0.0;   // 4*pi*A / P^2
};

struct PointF {
  double x = 0.0;
  double y = 0.0;
};

struct NucleusRecord {
  int id = 0;  // 1-based, raster order of the centroid
  BinaryMask mask;
  PointF center;
  ShapeStats stats;
};

struct ShapeCandidate {
  BinaryMask mask;
  ShapeStats stats;
};

// Outer-contour length summed over 8-connected components (holes ignored):
// corner-corrected chain length of the boundary pixel centres plus pi, the
// perimeter gained by offsetting that polygon half a pixel outwards.
double contour_perimeter(const BinaryMask& mask);

ShapeStats shape_stats(const BinaryMask& mask);

// Arithmetic mean of true-pixel coordinates. Throws EmptyMask.
PointF compute_center(const BinaryMask& mask);

// Drops any candidate whose area, aspect ratio or circularity lies more than
// two population standard deviations from the population median. Populations
// of two or fewer are returned unchanged.
std::vector<ShapeCandidate> filter_by_shape(std::vector<ShapeCandidate> candidates);

// Automatic mask generation on the nucleus channel followed by shape filtering.
// Throws NoNucleusChannel.
std::vector<NucleusRecord> detect_nuclei(const MultiChannelImage& image, const SegmentationBackend& backend);

}  // namespace subcellsam
