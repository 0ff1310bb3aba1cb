#pragma once

#include "subcellsam/backend.hpp"

namespace subcellsam {

struct OracleOptions {
  float intensity_threshold = 0.5f;   // pixels strictly above are segmentable
  float confident_intensity = 0.75f;  // confidence = share of mask pixels above this
};

// Deterministic stand-in for a promptable segmentation model.
//
// The channel is binarized (value > intensity_threshold). Foreground seeds are
// the foreground points plus every pixel whose mask-prior probability is at
// least 0.5; background seeds are the background points. Seeds on dark pixels
// are inert. Foreground and background regions grow together over the bright
// pixels (4-connected breadth-first search) and each pixel goes to the side
// that reaches it first; ties go to background. The mask is the foreground
// side.
//
// Logits live at image resolution: 1 + v inside the mask, v - 1.5 outside,
// threshold 0. Automatic mask generation returns the connected components of
// the binarized channel in raster order.
class OracleBackend final : public SegmentationBackend {
 public:
  explicit OracleBackend(OracleOptions options = {});

  const BackendDescriptor& descriptor() const override { return descriptor_; }
  SegmentationResult segment_with_prompts(const Channel& channel, const PromptSet& prompts) const override;
  std::vector<SegmentationResult> generate_masks_auto(const Channel& channel) const override;

  const OracleOptions& options() const { return options_; }

 private:
  SegmentationResult make_result(const Channel& channel, BinaryMask mask) const;

  OracleOptions options_;
  BackendDescriptor descriptor_;
};

}  // namespace subcellsam
