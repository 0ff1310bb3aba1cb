#include "subcellsam/graph_backend.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "onnx_subset.pb.h"
#include "subcellsam/geometry.hpp"

namespace subcellsam {
namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileNotFound, path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Size parse_grid(const std::string& text) {
  std::istringstream in(text);
  int w = 0, h = 0;
  char sep = 0;
  if (!(in >> w >> sep >> h) || (sep != 'x' && sep != 'X') || w <= 0 || h <= 0) {
    throw Error(ErrorCode::FormatError, "bad native grid '" + text + "'");
  }
  return Size{w, h};
}

float parse_float(const std::string& text, std::string_view key) {
  try {
    std::size_t used = 0;
    const float v = std::stof(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::FormatError, "bad value for " + std::string(key) + ": '" + text + "'");
  }
}

double iou(const BinaryMask& a, const BinaryMask& b) {
  std::size_t inter = 0, uni = 0;
  auto av = a.raster().values();
  auto bv = b.raster().values();
  for (std::size_t i = 0; i < av.size(); ++i) {
    inter += av[i] && bv[i];
    uni += av[i] || bv[i];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

BackendDescriptor load_backend(const std::filesystem::path& graph_path) {
  if (!std::filesystem::exists(graph_path)) throw Error(ErrorCode::FileNotFound, graph_path.string());
  const std::string bytes = read_file(graph_path);

  // Exported containers always open with the ir_version varint (field 1, wire type 0).
  if (bytes.empty() || static_cast<unsigned char>(bytes.front()) != 0x08) {
    throw Error(ErrorCode::FormatError, "not an exported graph container: " + graph_path.string());
  }
  onnx::ModelProto model;
  if (!model.ParseFromString(bytes)) {
    throw Error(ErrorCode::FormatError, "corrupt or truncated graph: " + graph_path.string());
  }
  if (model.ir_version() <= 0 || !model.has_graph()) {
    throw Error(ErrorCode::FormatError, "graph container lacks ir_version or graph");
  }

  int opset = -1;
  for (const auto& entry : model.opset_import()) {
    if (entry.domain().empty() || entry.domain() == "ai.onnx") opset = static_cast<int>(entry.version());
  }
  if (opset < 0) throw Error(ErrorCode::FormatError, "graph declares no default-domain opset");
  if (opset < kMinSupportedOpset || opset > kMaxSupportedOpset) {
    throw Error(ErrorCode::UnsupportedOpset, "opset " + std::to_string(opset) + " outside [" +
                                                 std::to_string(kMinSupportedOpset) + ", " +
                                                 std::to_string(kMaxSupportedOpset) + "]");
  }

  std::map<std::string, std::string> meta;
  for (const auto& kv : model.metadata_props()) meta[kv.key()] = kv.value();
  auto require = [&](std::string_view key) -> const std::string& {
    auto it = meta.find(std::string(key));
    if (it == meta.end()) throw Error(ErrorCode::FormatError, "missing metadata key " + std::string(key));
    return it->second;
  };

  BackendDescriptor d;
  d.graph_path = graph_path;
  d.opset = opset;
  d.native_grid = parse_grid(require(graph_keys::kNativeGrid));
  d.logits_threshold = parse_float(require(graph_keys::kLogitsThreshold), graph_keys::kLogitsThreshold);
  if (auto it = meta.find(std::string(graph_keys::kName)); it != meta.end()) {
    d.name = it->second;
  } else {
    d.name = model.graph().name().empty() ? graph_path.stem().string() : model.graph().name();
  }

  std::set<std::string> inputs, outputs;
  for (const auto& v : model.graph().input()) inputs.insert(v.name());
  for (const auto& v : model.graph().output()) outputs.insert(v.name());
  const std::pair<std::string_view, bool> tensor_keys[] = {
      {graph_keys::kInputImage, true},       {graph_keys::kInputPointCoords, true},
      {graph_keys::kInputPointLabels, true}, {graph_keys::kInputMask, true},
      {graph_keys::kOutputLogits, false},    {graph_keys::kOutputScore, false},
  };
  for (auto [key, is_input] : tensor_keys) {
    const std::string& name = require(key);
    const auto& known = is_input ? inputs : outputs;
    // An encoder/decoder split may move the image input into the encoder graph.
    const bool optional_here = key == graph_keys::kInputImage && meta.count(std::string(graph_keys::kEncoderGraph));
    if (!known.count(name) && !optional_here) {
      throw Error(ErrorCode::FormatError, "tensor '" + name + "' named by " + std::string(key) + " not in graph");
    }
    d.tensor_names[std::string(key)] = name;
  }

  if (auto it = meta.find(std::string(graph_keys::kEncoderGraph)); it != meta.end()) {
    d.encoder_path = graph_path.parent_path() / it->second;
    if (!std::filesystem::exists(d.encoder_path)) throw Error(ErrorCode::FileNotFound, d.encoder_path.string());
  }
  return d;
}

GraphBackend::GraphBackend(BackendDescriptor descriptor, std::shared_ptr<const InferenceSession> session,
                           AutoMaskOptions auto_options)
    : descriptor_(std::move(descriptor)), session_(std::move(session)), auto_options_(auto_options) {
  if (descriptor_.native_grid.width <= 0 || descriptor_.native_grid.height <= 0) {
    throw Error(ErrorCode::InvalidArgument, "graph backend needs a positive native grid");
  }
}

const InferenceSession& GraphBackend::session() const {
  if (!session_) {
    throw Error(ErrorCode::BackendUnavailable,
                "no inference runtime is attached to graph '" + descriptor_.graph_path.string() + "'");
  }
  return *session_;
}

SegmentationResult GraphBackend::segment_with_prompts(const Channel& channel, const PromptSet& prompts) const {
  const InferenceSession& runner = session();
  validate_prompts(prompts, channel.size());

  std::optional<Raster<float>> prior;
  if (prompts.mask_prior) prior = resample_score_grid(*prompts.mask_prior, descriptor_.native_grid).raster;

  auto out = runner.run(channel, prompts.points, prior ? &*prior : nullptr);
  if (out.logits.size() != descriptor_.native_grid) {
    throw Error(ErrorCode::FormatError, "graph returned logits of unexpected size");
  }
  ScoreGrid logits{std::move(out.logits), Calibration{descriptor_.logits_threshold}};
  BinaryMask mask = mask_from_logits(logits, channel.size());
  const double confidence = std::isfinite(out.score) ? std::clamp(out.score, 0.0, 1.0) : 0.0;
  return SegmentationResult{std::move(mask), std::move(logits), confidence};
}

std::vector<SegmentationResult> GraphBackend::generate_masks_auto(const Channel& channel) const {
  session();
  const int n = auto_options_.points_per_side;
  std::vector<SegmentationResult> candidates;
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const int x = std::min(channel.width() - 1, static_cast<int>((i + 0.5) * channel.width() / n));
      const int y = std::min(channel.height() - 1, static_cast<int>((j + 0.5) * channel.height() / n));
      PromptSet prompt{{PointPrompt{x, y, Polarity::Foreground}}, std::nullopt};
      auto result = segment_with_prompts(channel, prompt);
      if (result.mask.any() && result.confidence >= auto_options_.min_confidence) {
        candidates.push_back(std::move(result));
      }
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const auto& a, const auto& b) { return a.confidence > b.confidence; });
  std::vector<SegmentationResult> kept;
  for (auto& c : candidates) {
    const bool duplicate = std::any_of(kept.begin(), kept.end(), [&](const auto& k) {
      return iou(k.mask, c.mask) > auto_options_.duplicate_iou;
    });
    if (!duplicate) kept.push_back(std::move(c));
  }
  return kept;
}

}  // namespace subcellsam
