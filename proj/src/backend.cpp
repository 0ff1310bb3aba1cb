#include "subcellsam/backend.hpp"

#include <cmath>
#include <string>

#include "subcellsam/geometry.hpp"

namespace subcellsam {

std::size_t PromptSet::foreground_count() const {
  std::size_t n = 0;
  for (const auto& p : points) n += p.polarity == Polarity::Foreground;
  return n;
}

void validate_prompts(const PromptSet& prompts, Size image) {
  for (const auto& p : prompts.points) {
    if (!image.contains(p.x, p.y)) {
      throw Error(ErrorCode::InvalidPrompt,
                  "point (" + std::to_string(p.x) + "," + std::to_string(p.y) + ") outside image");
    }
  }
  if (prompts.foreground_count() == 0 && !prompts.mask_prior) {
    throw Error(ErrorCode::InvalidPrompt, "prompt needs a foreground point or a mask prior");
  }
  if (prompts.mask_prior) {
    for (float v : prompts.mask_prior->raster.values()) {
      if (!std::isfinite(v)) throw Error(ErrorCode::InvalidPrompt, "mask prior has non-finite values");
    }
  }
}

BinaryMask mask_from_logits(const ScoreGrid& logits, Size image) {
  const ScoreGrid full = resample_score_grid(logits, image);
  BinaryMask mask(image);
  const float threshold = logits.calibration.threshold;
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      if (full.raster(x, y) > threshold) mask.set(x, y);
    }
  }
  return mask;
}

}  // namespace subcellsam
