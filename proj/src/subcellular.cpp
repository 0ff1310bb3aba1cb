#include "subcellsam/subcellular.hpp"

#include "subcellsam/geometry.hpp"

namespace subcellsam {

std::vector<SubcellularEntity> segment_subcellular(const Channel& channel, const BinaryMask& cell_mask, int cell_id,
                                                   const SegmentationBackend& backend,
                                                   const SubcellularConfig& cfg) {
  if (channel.size() != cell_mask.size()) throw Error(ErrorCode::DimensionMismatch, "cell mask size differs");
  if (!cell_mask.any()) return {};

  const BoundingBox box = mask_to_bbox(cell_mask);
  Channel crop(Size{box.width(), box.height()}, 0.0f);
  for (int y = box.y0; y < box.y1; ++y) {
    for (int x = box.x0; x < box.x1; ++x) {
      if (cell_mask(x, y)) crop(x - box.x0, y - box.y0) = channel(x, y);
    }
  }

  std::vector<SubcellularEntity> out;
  for (const auto& result : backend.generate_masks_auto(crop)) {
    SubcellularEntity entity{cell_id, BinaryMask(channel.size()), 0};
    for (int cy = 0; cy < crop.height(); ++cy) {
      for (int cx = 0; cx < crop.width(); ++cx) {
        const int x = cx + box.x0;
        const int y = cy + box.y0;
        if (result.mask(cx, cy) && cell_mask(x, y)) {
          entity.mask.set(x, y);
          ++entity.area;
        }
      }
    }
    if (entity.area == 0 || entity.area < cfg.min_entity_area) continue;
    out.push_back(std::move(entity));
  }
  return out;
}

std::vector<SubcellularEntity> segment_subcellular(const MultiChannelImage& image, const BinaryMask& cell_mask,
                                                   int cell_id, const SegmentationBackend& backend,
                                                   const SubcellularConfig& cfg) {
  const auto index = image.subcellular_channel();
  if (!index) throw Error(ErrorCode::NoSubcellularChannel, "image has no subcellular marker channel");
  return segment_subcellular(image.channel(*index), cell_mask, cell_id, backend, cfg);
}

std::map<int, std::size_t> entities_per_cell(const std::vector<SubcellularEntity>& entities,
                                             const std::vector<int>& cell_ids) {
  std::map<int, std::size_t> counts;
  for (int id : cell_ids) counts[id] = 0;
  for (const auto& e : entities) {
    auto it = counts.find(e.cell_id);
    if (it != counts.end()) ++it->second;
  }
  return counts;
}

}  // namespace subcellsam
