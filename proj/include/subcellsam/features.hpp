#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "subcellsam/nuclei.hpp"
#include "subcellsam/plate.hpp"
#include "subcellsam/raster.hpp"
#include "subcellsam/subcellular.hpp"

namespace subcellsam {

struct RegionFeatures {
  double area = 0.0;
  double perimeter = 0.0;
  double equivalent_diameter = 0.0;
  double eccentricity = 0.0;
  double solidity = 0.0;
  double extent = 0.0;
  double aspect_ratio = 1.0;
  double circularity = 0.0;
  double major_axis = 0.0;
  double minor_axis = 0.0;
};

struct IntensityStats {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  double std = 0.0;  // population
};

// Axes and eccentricity come from the ellipse with the same second central
// moments, each pixel treated as a unit square (variance + 1/12 per axis).
// Solidity uses the convex hull of pixel corners. Throws EmptyMask.
RegionFeatures region_props(const BinaryMask& mask);

IntensityStats intensity_stats(const BinaryMask& mask, const Channel& channel);

// Pearson correlation over mask pixels; nullopt when fewer than two pixels or
// either channel is constant there.
std::optional<double> correlation_feature(const BinaryMask& mask, const Channel& a, const Channel& b);

enum class ObjectLevel { Nucleus, Cell, Subcellular };

std::string to_string(ObjectLevel level);
ObjectLevel parse_object_level(const std::string& text);

struct FeatureRow {
  std::string image_id;
  std::string well_id;
  ObjectLevel level = ObjectLevel::Cell;
  int object_id = 0;
  int cell_id = 0;  // owning cell label
  std::vector<std::optional<double>> values;  // aligned with FeatureTable::columns()
};

class FeatureTable {
 public:
  static const std::vector<std::string>& columns();
  static std::optional<std::size_t> column_index(const std::string& name);

  // Throws InvalidArgument on duplicate (image_id, level, object_id) keys,
  // wrong value count or non-finite values.
  void add(FeatureRow row);
  void append(const FeatureTable& other);

  const std::vector<FeatureRow>& rows() const { return rows_; }
  std::size_t size() const { return rows_.size(); }

  void write_csv(std::ostream& out) const;
  void write_csv(const std::filesystem::path& path) const;
  static FeatureTable read_csv(std::istream& in);
  static FeatureTable read_csv(const std::filesystem::path& path);

 private:
  std::vector<FeatureRow> rows_;
  std::set<std::tuple<std::string, int, int>> keys_;
};

// Everything segmented in one image. Cell labels are 1..K; cell_nucleus_ids[k-1]
// is the nucleus id owning label k; entity cell_id refers to the label.
struct SegmentedImage {
  InstanceLabelMap cells;
  std::vector<int> cell_nucleus_ids;
  std::vector<NucleusRecord> nuclei;
  std::vector<SubcellularEntity> entities;
};

// Rows per cell label: nucleus, cell, then that cell's entities. Without a
// layout the well id stays empty; with one, LayoutMismatch if the image is unlisted.
FeatureTable extract_all(const MultiChannelImage& image, const SegmentedImage& seg, const std::string& image_id,
                         const PlateLayout* layout = nullptr);

}  // namespace subcellsam
