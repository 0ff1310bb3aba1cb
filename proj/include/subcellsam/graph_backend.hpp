#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string_view>

#include "subcellsam/backend.hpp"

namespace subcellsam {

// Metadata keys an exported graph must carry (ONNX metadata_props).
namespace graph_keys {
inline constexpr std::string_view kNativeGrid = "subcellsam.native_grid";          // "256x256"
inline constexpr std::string_view kLogitsThreshold = "subcellsam.logits_threshold";  // "0.0"
inline constexpr std::string_view kEncoderGraph = "subcellsam.encoder_graph";        // optional, relative path
inline constexpr std::string_view kName = "subcellsam.name";                         // optional
// Tensor-name keys; values must name graph inputs/outputs.
inline constexpr std::string_view kInputImage = "subcellsam.input.image";
inline constexpr std::string_view kInputPointCoords = "subcellsam.input.point_coords";
inline constexpr std::string_view kInputPointLabels = "subcellsam.input.point_labels";
inline constexpr std::string_view kInputMask = "subcellsam.input.mask";
inline constexpr std::string_view kOutputLogits = "subcellsam.output.logits";
inline constexpr std::string_view kOutputScore = "subcellsam.output.score";
}  // namespace graph_keys

inline constexpr int kMinSupportedOpset = 11;
inline constexpr int kMaxSupportedOpset = 21;

// Reads and validates an exported inference graph.
// Errors: FileNotFound, FormatError (bad container, truncation, missing
// metadata, unknown tensor names), UnsupportedOpset.
BackendDescriptor load_backend(const std::filesystem::path& graph_path);

// Executes the exported graph. Point coordinates are image pixels; the mask
// prior, when given, is at the descriptor's native grid.
class InferenceSession {
 public:
  struct Output {
    Raster<float> logits;  // native grid
    double score = 0.0;
  };

  virtual ~InferenceSession() = default;
  virtual Output run(const Channel& image, std::span<const PointPrompt> points,
                     const Raster<float>* mask_prior) const = 0;
};

struct AutoMaskOptions {
  int points_per_side = 16;
  double min_confidence = 0.88;
  double duplicate_iou = 0.7;
};

// Adapter from an exported graph to the segmentation contract. Without an
// inference session (no runtime linked) every call throws BackendUnavailable.
class GraphBackend final : public SegmentationBackend {
 public:
  GraphBackend(BackendDescriptor descriptor, std::shared_ptr<const InferenceSession> session,
               AutoMaskOptions auto_options = {});

  const BackendDescriptor& descriptor() const override { return descriptor_; }
  SegmentationResult segment_with_prompts(const Channel& channel, const PromptSet& prompts) const override;
  std::vector<SegmentationResult> generate_masks_auto(const Channel& channel) const override;

 private:
  const InferenceSession& session() const;

  BackendDescriptor descriptor_;
  std::shared_ptr<const InferenceSession> session_;
  AutoMaskOptions auto_options_;
};

}  // namespace subcellsam
