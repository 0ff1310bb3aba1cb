#pragma once

#include <cstdint>
#include <vector>

#include "subcellsam/raster.hpp"

namespace subcellsam {

struct CoverageMap {
  int cell_id = 0;
  Raster<std::uint16_t> counts;
  int total_iterations = 0;
};

struct IntegrationConfig {
  double coverage_fraction_min = 0.33;
  bool exclude_border = true;

  void validate() const;
};

CoverageMap build_coverage_map(const std::vector<BinaryMask>& iteration_masks, int cell_id);

struct IntegratedInstances {
  InstanceLabelMap labels;
  // cell_ids[label - 1] is the cell id that owns `label`.
  std::vector<int> cell_ids;
};

// Per pixel, the cell with the highest count among cells whose count reaches
// coverage_fraction_min of the iterations (ties to the lower cell id); border
// cells are removed afterwards and labels compacted in cell-id order.
IntegratedInstances integrate_instances(const std::vector<CoverageMap>& maps, const IntegrationConfig& cfg,
                                        Size image);

// Removes labels touching the outermost rows/columns and compacts the rest,
// preserving relative order. `kept`, when given, receives old label ids.
InstanceLabelMap exclude_border_cells(const InstanceLabelMap& labels, std::vector<std::uint32_t>* kept = nullptr);

}  // namespace subcellsam
