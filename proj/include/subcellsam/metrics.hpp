#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "subcellsam/raster.hpp"

namespace subcellsam {

// Both empty counts as perfect agreement (1.0). Throws DimensionMismatch.
double dice(const BinaryMask& a, const BinaryMask& b);
double iou(const BinaryMask& a, const BinaryMask& b);

enum class EvalMode { WholeMask, PerInstance };

std::string to_string(EvalMode mode);
EvalMode parse_eval_mode(const std::string& text);

struct ImageScore {
  std::string image_id;
  double dsc = 0.0;
  double iou = 0.0;
};

struct EvalReport {
  EvalMode mode = EvalMode::WholeMask;
  std::vector<ImageScore> per_image;
  double mean_dsc = 0.0;
  double mean_iou = 0.0;

  void write_csv(std::ostream& out) const;
  std::string summary() const;
};

// WholeMask flattens both sides to foreground. PerInstance pairs instances by
// greedy descending IoU and averages over matched pairs; an image without any
// match scores 0 unless both sides are empty. Throws EmptyDataset,
// DimensionMismatch and InvalidArgument (list lengths).
EvalReport evaluate_dataset(const std::vector<InstanceLabelMap>& pred, const std::vector<InstanceLabelMap>& gt,
                            EvalMode mode, const std::vector<std::string>& image_ids = {});

}  // namespace subcellsam
