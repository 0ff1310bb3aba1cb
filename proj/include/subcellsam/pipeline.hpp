#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "subcellsam/analytics.hpp"
#include "subcellsam/backend.hpp"
#include "subcellsam/cell_segmentation.hpp"
#include "subcellsam/features.hpp"
#include "subcellsam/graph_backend.hpp"
#include "subcellsam/integration.hpp"
#include "subcellsam/metrics.hpp"
#include "subcellsam/subcellular.hpp"

namespace subcellsam {

inline constexpr const char* kVersion = "0.1.0";

// "oracle" or "graph:PATH".
struct BackendSpec {
  std::string kind = "oracle";
  std::filesystem::path path;

  static BackendSpec parse(const std::string& text);
  std::string str() const;
};

struct RunConfig {
  std::filesystem::path base_dir;  // relative paths resolve against this
  std::string images = "images/*.tif";
  std::map<int, ChannelRole> channels = {{0, ChannelRole::Nucleus}, {1, ChannelRole::CellMarker}};
  std::string ground_truth;  // pattern containing {image_id}; empty disables eval
  std::string plate_layout;  // empty: no layout
  BackendSpec backend;
  std::optional<BackendSpec> nuclei_backend;
  std::optional<BackendSpec> cell_backend;
  std::optional<BackendSpec> subcellular_backend;
  SamplingConfig sampling;
  IntegrationConfig integration;
  SubcellularConfig subcellular;
  EvalMode eval_mode = EvalMode::WholeMask;
  ZPrimeDenominator z_prime_denominator = ZPrimeDenominator::AsPrinted;
  std::string response_feature = "best";
  std::string output = "out";
  std::uint64_t rng_seed = 0;
  int workers = 1;

  // Throws ConfigError.
  static RunConfig from_yaml(const std::string& text, const std::filesystem::path& base_dir);
  static RunConfig load(const std::filesystem::path& path);
  void validate() const;

  // Normalized text of every setting that affects outputs (not workers or paths
  // of the output directory).
  std::string canonical() const;
  std::string hash() const;

  std::filesystem::path resolve(const std::string& path) const;
  std::filesystem::path output_dir() const { return resolve(output); }
};

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

using SessionFactory = std::function<std::shared_ptr<const InferenceSession>(const BackendDescriptor&)>;

struct Backends {
  std::shared_ptr<const SegmentationBackend> nuclei;
  std::shared_ptr<const SegmentationBackend> cell;
  std::shared_ptr<const SegmentationBackend> subcellular;
};

// Graph backends need a session factory; without one BackendUnavailable is thrown.
Backends make_backends(const RunConfig& cfg, const SessionFactory& factory = {});

struct CellDiagnostics {
  int cell_id = 0;
  std::uint32_t label = 0;  // 0 when dropped during integration
  std::vector<double> mean_confidence;  // per cell-marker channel
  std::vector<bool> lost;
  std::vector<std::size_t> iteration_areas;  // fused mask area per iteration
};

struct ImageSegmentation {
  std::vector<NucleusRecord> nuclei;
  IntegratedInstances instances;
  std::vector<SubcellularEntity> entities;
  std::vector<CellDiagnostics> diagnostics;

  SegmentedImage segmented() const;
  Raster<std::uint32_t> nuclei_labels() const;
  Raster<std::uint32_t> subcellular_labels() const;
};

struct SegmentParams {
  SamplingConfig sampling;
  IntegrationConfig integration;
  SubcellularConfig subcellular;
};

// Nuclei, per-channel recursive prompting, fusion, integration and, when a
// subcellular channel exists, entity segmentation inside the final cells.
// Throws NoNucleusChannel / NoCellMarkerChannel.
ImageSegmentation segment_image(const MultiChannelImage& image, const Backends& backends,
                                const SegmentParams& params);

struct ImageStatus {
  std::string image_id;
  bool ok = true;
  std::string error;
};

struct CommandResult {
  std::vector<ImageStatus> images;
  std::vector<std::string> notes;
  std::size_t failures() const;
};

// Input images matching the glob, sorted by path.
std::vector<std::filesystem::path> list_images(const RunConfig& cfg);

CommandResult cmd_segment(const RunConfig& cfg, const Backends& backends, std::ostream& log);
CommandResult cmd_features(const RunConfig& cfg, std::ostream& log);
CommandResult cmd_hitval(const RunConfig& cfg, std::ostream& log);
CommandResult cmd_eval(const RunConfig& cfg, std::ostream& log);

// Dose-response plot with data points, fitted curve and an EC50 marker.
std::string dose_response_svg(const DoseResponse& dr, const std::optional<HillFit>& fit, const std::string& feature);

}  // namespace subcellsam
