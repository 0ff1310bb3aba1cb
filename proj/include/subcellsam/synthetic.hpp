#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "subcellsam/nuclei.hpp"
#include "subcellsam/plate.hpp"
#include "subcellsam/raster.hpp"

namespace subcellsam {

struct SyntheticOrganelle {
  PointF center;
  double radius = 2.0;
};

struct SyntheticCell {
  PointF center;  // shared by nucleus and cell body
  double cell_radius = 14.0;
  double nucleus_radius = 6.0;
  std::vector<SyntheticOrganelle> organelles;
};

// Channel 0 nucleus, 1 cell marker, 2 subcellular marker.
struct SyntheticImage {
  std::string image_id;
  MultiChannelImage image;
  InstanceLabelMap cells;        // ground truth, label k = cells[k-1]
  InstanceLabelMap nuclei;
  InstanceLabelMap subcellular;  // entity ids in cell order
  std::vector<SyntheticCell> layout;
};

inline constexpr float kSyntheticBackground = 0.05f;
inline constexpr float kSyntheticNucleus = 0.9f;
inline constexpr float kSyntheticOrganelle = 0.9f;
inline constexpr float kSyntheticCytoplasm = 0.15f;

// Cell-marker level for a normalized response in [0, 1].
float marker_level(double response);

// Draws discs (pixel centers within the radius). Overlapping cell bodies are
// split between cells by nearest center.
SyntheticImage render_synthetic(const std::string& image_id, Size size, const std::vector<SyntheticCell>& cells,
                                float cell_marker_level);

struct SyntheticPlateOptions {
  std::uint64_t seed = 7;
  int image_size = 160;
  int min_cells = 3;
  int max_cells = 8;
  int neutral_wells = 4;
  int positive_wells = 4;
  int concentrations = 8;
  double log10_conc_min = -9.0;
  double log10_conc_max = -4.0;
};

struct SyntheticCompound {
  std::string compound_id;
  double ec50 = 1e-6;
  double hill = 1.0;
};

struct SyntheticPlate {
  std::vector<SyntheticImage> images;
  PlateLayout layout;
  std::vector<SyntheticCompound> compounds;
};

// One image per well: neutral and positive controls plus titration series of
// two compounds whose marker response follows a Hill curve. Cells are
// non-touching and keep off the image border; nuclei are identical discs.
SyntheticPlate make_synthetic_plate(const SyntheticPlateOptions& options = {});

// Two overlapping cell bodies with separate r=7 nuclei; nucleus centres lie
// within 3x the nucleus box of each other.
SyntheticImage make_touching_pair(std::uint64_t seed, int image_size = 96);

// Writes images/<id>.tif, ground_truth/<id>_{cells,nuclei,subcellular}.png,
// layout.csv and config.yaml (oracle backend) under `dir`.
void write_synthetic_plate(const SyntheticPlate& plate, const std::filesystem::path& dir);

}  // namespace subcellsam
