#pragma once

#include <map>
#include <vector>

#include "subcellsam/backend.hpp"

namespace subcellsam {

struct SubcellularEntity {
  int cell_id = 0;
  BinaryMask mask;  // full-image coordinates, subset of the parent cell mask
  std::size_t area = 0;
};

struct SubcellularConfig {
  std::size_t min_entity_area = 2;
};

// Crops the cell's bounding box from `channel`, zeroes pixels outside the cell
// mask, runs automatic mask generation on the crop and maps the results back.
std::vector<SubcellularEntity> segment_subcellular(const Channel& channel, const BinaryMask& cell_mask, int cell_id,
                                                   const SegmentationBackend& backend,
                                                   const SubcellularConfig& cfg = {});

// Overload checking that the image carries a subcellular channel (NoSubcellularChannel).
std::vector<SubcellularEntity> segment_subcellular(const MultiChannelImage& image, const BinaryMask& cell_mask,
                                                   int cell_id, const SegmentationBackend& backend,
                                                   const SubcellularConfig& cfg = {});

std::map<int, std::size_t> entities_per_cell(const std::vector<SubcellularEntity>& entities,
                                             const std::vector<int>& cell_ids);

}  // namespace subcellsam
