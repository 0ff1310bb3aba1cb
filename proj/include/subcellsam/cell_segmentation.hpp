#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "subcellsam/backend.hpp"
#include "subcellsam/nuclei.hpp"

namespace subcellsam {

struct SamplingConfig {
  int num_prompts_per_cell = 8;
  int num_hotpoints = 4;
  double max_bbox_area_to_sample = 1.5;
  double init_bbox_scale = 1.25;
  int num_initial_foreground = 4;
  int num_anchor_points = 2;
  int num_stabilizing_points = 2;
  double neighbor_bbox_scale = 3.0;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

enum class SamplerKind : std::uint64_t { Initial = 1, Hotspot = 2, Stabilizing = 3, Anchor = 4 };

// One independent random stream per (seed, cell, channel, iteration, sampler).
// Draws are built from raw 64-bit engine output so sequences do not depend on
// the standard library's distribution implementations.
class RngStream {
 public:
  RngStream(std::uint64_t seed, int cell_id, int channel, int iteration, SamplerKind kind);
  explicit RngStream(std::uint64_t seed);

  std::uint64_t next() { return engine_(); }
  std::size_t uniform_index(std::size_t n);  // in [0, n)
  double uniform01();                         // in [0, 1)

 private:
  std::mt19937_64 engine_;
};

struct IterationState {
  int iteration = 0;
  BinaryMask current_mask;
  ScoreGrid logits_t;
  ScoreGrid logits_t_minus_1;
  std::vector<BinaryMask> mask_history;
};

// Integer pixel containing a sub-pixel center.
PointPrompt center_pixel(PointF center, Size bounds, Polarity polarity);

// Foreground points drawn without replacement from the scaled nucleus box,
// restricted to pixels brighter than the channel median. Falls back to the
// nucleus centroid when no pixel qualifies.
PromptSet sample_initial_points(const NucleusRecord& nucleus, const Channel& channel, const SamplingConfig& cfg,
                                RngStream& rng);

// Foreground points outside the current mask and inside `region`, drawn
// without replacement with weight max(0, mean(logits_t, logits_t_minus_1) - threshold).
std::vector<PointPrompt> sample_hotspot_points(const IterationState& state, const BoundingBox& region,
                                               const SamplingConfig& cfg, RngStream& rng);

// Foreground points from pixels the previous mask claimed and the current one dropped.
std::vector<PointPrompt> sample_stabilizing_points(const IterationState& state, const SamplingConfig& cfg,
                                                   RngStream& rng);

std::vector<PointPrompt> sample_anchor_points(const NucleusRecord& nucleus, const SamplingConfig& cfg,
                                              RngStream& rng);

// Background points at the centers of other nuclei inside the neighbor box.
std::vector<PointPrompt> sample_background_points(const NucleusRecord& nucleus,
                                                  const std::vector<NucleusRecord>& all_nuclei, Size bounds,
                                                  double neighbor_bbox_scale = 3.0);

// Region for hotspot sampling: box of (current mask or nucleus) scaled by max_bbox_area_to_sample.
BoundingBox hotspot_region(const BinaryMask& current, const NucleusRecord& nucleus, const SamplingConfig& cfg);

struct CellTrace {
  std::vector<BinaryMask> masks;
  std::vector<double> confidences;
  bool lost = false;  // every iteration produced an empty mask; masks are then empty
};

// Recursive self-prompting for one nucleus on one cell-marker channel.
CellTrace segment_cell(const Channel& channel, const NucleusRecord& nucleus,
                       const std::vector<NucleusRecord>& all_nuclei, const SegmentationBackend& backend,
                       const SamplingConfig& cfg, int channel_index = 0);

// Confidence-weighted fusion per iteration, soft value >= 0.5 kept. A lost
// trace contributes empty masks with zero confidence.
std::vector<BinaryMask> combine_channels(const std::vector<CellTrace>& per_channel);

}  // namespace subcellsam
