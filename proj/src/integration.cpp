#include "subcellsam/integration.hpp"

#include <algorithm>
#include <string>

namespace subcellsam {

void IntegrationConfig::validate() const {
  if (!(coverage_fraction_min > 0.0 && coverage_fraction_min <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "coverage_fraction_min must lie in (0, 1]");
  }
}

CoverageMap build_coverage_map(const std::vector<BinaryMask>& iteration_masks, int cell_id) {
  if (iteration_masks.empty()) throw Error(ErrorCode::InvalidArgument, "coverage map needs at least one mask");
  if (iteration_masks.size() > 0xffff) throw Error(ErrorCode::InvalidArgument, "too many iterations");
  const Size size = iteration_masks.front().size();
  CoverageMap map{cell_id, Raster<std::uint16_t>(size, 0), static_cast<int>(iteration_masks.size())};
  auto counts = map.counts.values();
  for (const auto& mask : iteration_masks) {
    if (mask.size() != size) throw Error(ErrorCode::DimensionMismatch, "iteration masks differ in size");
    auto v = mask.raster().values();
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += v[i];
  }
  return map;
}

namespace {

// Renumbers surviving labels 1..K in their original order.
InstanceLabelMap compact(const InstanceLabelMap& labels, const std::vector<bool>& drop,
                         std::vector<std::uint32_t>* kept) {
  const std::uint32_t max_label = labels.max_label();
  std::vector<bool> present(max_label + 1, false);
  for (auto v : labels.raster.values()) present[v] = true;

  std::vector<std::uint32_t> remap(max_label + 1, 0);
  std::uint32_t next = 0;
  if (kept) kept->clear();
  for (std::uint32_t label = 1; label <= max_label; ++label) {
    if (!present[label] || (label < drop.size() && drop[label])) continue;
    remap[label] = ++next;
    if (kept) kept->push_back(label);
  }
  InstanceLabelMap out{Raster<std::uint32_t>(labels.size(), 0)};
  auto src = labels.raster.values();
  auto dst = out.raster.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = remap[src[i]];
  return out;
}

}  // namespace

InstanceLabelMap exclude_border_cells(const InstanceLabelMap& labels, std::vector<std::uint32_t>* kept) {
  const Size size = labels.size();
  std::vector<bool> touches(labels.max_label() + 1, false);
  auto mark = [&](int x, int y) { touches[labels.raster(x, y)] = true; };
  for (int x = 0; x < size.width; ++x) {
    mark(x, 0);
    mark(x, size.height - 1);
  }
  for (int y = 0; y < size.height; ++y) {
    mark(0, y);
    mark(size.width - 1, y);
  }
  return compact(labels, touches, kept);
}

IntegratedInstances integrate_instances(const std::vector<CoverageMap>& maps, const IntegrationConfig& cfg,
                                        Size image) {
  cfg.validate();
  std::vector<const CoverageMap*> ordered;
  for (const auto& m : maps) {
    if (m.counts.size() != image) throw Error(ErrorCode::DimensionMismatch, "coverage map size differs from image");
    if (m.total_iterations != maps.front().total_iterations) {
      throw Error(ErrorCode::InvalidArgument, "coverage maps differ in iteration count");
    }
    if (m.cell_id <= 0) throw Error(ErrorCode::InvalidArgument, "cell ids must be positive");
    ordered.push_back(&m);
  }
  std::sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) { return a->cell_id < b->cell_id; });
  for (std::size_t i = 1; i < ordered.size(); ++i) {
    if (ordered[i]->cell_id == ordered[i - 1]->cell_id) {
      throw Error(ErrorCode::InvalidArgument, "duplicate cell id " + std::to_string(ordered[i]->cell_id));
    }
  }

  // Provisional labels are positions in `ordered` (+1), so label order is cell-id order.
  InstanceLabelMap provisional{Raster<std::uint32_t>(image, 0)};
  if (!ordered.empty()) {
    const double min_count = cfg.coverage_fraction_min * ordered.front()->total_iterations;
    auto dst = provisional.raster.values();
    for (std::size_t p = 0; p < dst.size(); ++p) {
      int best = 0;
      std::uint32_t best_label = 0;
      for (std::size_t k = 0; k < ordered.size(); ++k) {
        const int c = ordered[k]->counts.values()[p];
        if (c > best && c >= min_count) {
          best = c;
          best_label = static_cast<std::uint32_t>(k + 1);
        }
      }
      dst[p] = best_label;
    }
  }

  std::vector<std::uint32_t> kept;
  IntegratedInstances out;
  out.labels = cfg.exclude_border ? exclude_border_cells(provisional, &kept) : compact(provisional, {}, &kept);
  for (auto label : kept) out.cell_ids.push_back(ordered[label - 1]->cell_id);
  return out;
}

}  // namespace subcellsam
