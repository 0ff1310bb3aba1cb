#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "subcellsam/raster.hpp"

namespace subcellsam {

struct PromptSet {
  std::vector<PointPrompt> points;
  std::optional<ScoreGrid> mask_prior;

  std::size_t foreground_count() const;
};

// Throws InvalidPrompt unless every point is in bounds and there is at least
// one foreground point or a mask prior.
void validate_prompts(const PromptSet& prompts, Size image);

struct SegmentationResult {
  BinaryMask mask;
  ScoreGrid logits;
  double confidence = 0.0;
};

struct BackendDescriptor {
  std::string name;
  // Resolution of the logits grid. {0, 0} means "same as the input image".
  Size native_grid{};
  float logits_threshold = 0.0f;
  int opset = 0;
  std::map<std::string, std::string> tensor_names;
  std::filesystem::path graph_path;
  std::filesystem::path encoder_path;
};

// A promptable segmenter. Implementations are immutable after construction and
// may be called concurrently.
class SegmentationBackend {
 public:
  virtual ~SegmentationBackend() = default;

  virtual const BackendDescriptor& descriptor() const = 0;
  virtual SegmentationResult segment_with_prompts(const Channel& channel, const PromptSet& prompts) const = 0;
  virtual std::vector<SegmentationResult> generate_masks_auto(const Channel& channel) const = 0;
};

// Thresholds `logits` (resampled to `image`) at the calibration threshold.
BinaryMask mask_from_logits(const ScoreGrid& logits, Size image);

}  // namespace subcellsam
