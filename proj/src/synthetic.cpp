#include "subcellsam/synthetic.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include <fmt/format.h>

#include "subcellsam/cell_segmentation.hpp"
#include "subcellsam/image_io.hpp"

namespace subcellsam {

float marker_level(double response) { return static_cast<float>(0.55 + 0.35 * response); }

namespace {

double dist2(double x, double y, PointF c) { return (x - c.x) * (x - c.x) + (y - c.y) * (y - c.y); }

}  // namespace

SyntheticImage render_synthetic(const std::string& image_id, Size size, const std::vector<SyntheticCell>& cells,
                                float cell_marker_level) {
  Channel nucleus(size, kSyntheticBackground);
  Channel marker(size, kSyntheticBackground);
  Channel sub(size, kSyntheticBackground);
  SyntheticImage out;
  out.image_id = image_id;
  out.layout = cells;
  out.cells.raster = Raster<std::uint32_t>(size, 0);
  out.nuclei.raster = Raster<std::uint32_t>(size, 0);
  out.subcellular.raster = Raster<std::uint32_t>(size, 0);

  // Entity ids are assigned in cell order.
  std::vector<std::uint32_t> first_entity(cells.size(), 1);
  for (std::size_t k = 1; k < cells.size(); ++k) {
    first_entity[k] = first_entity[k - 1] + static_cast<std::uint32_t>(cells[k - 1].organelles.size());
  }

  for (int y = 0; y < size.height; ++y) {
    for (int x = 0; x < size.width; ++x) {
      int owner = -1;
      double best = 0.0;
      for (std::size_t k = 0; k < cells.size(); ++k) {
        const double d = dist2(x, y, cells[k].center);
        if (d > cells[k].cell_radius * cells[k].cell_radius) continue;
        if (owner < 0 || d < best) {
          owner = static_cast<int>(k);
          best = d;
        }
      }
      if (owner < 0) continue;
      const SyntheticCell& c = cells[owner];
      out.cells.raster(x, y) = owner + 1;
      marker(x, y) = cell_marker_level;
      sub(x, y) = kSyntheticCytoplasm;
      if (best <= c.nucleus_radius * c.nucleus_radius) {
        out.nuclei.raster(x, y) = owner + 1;
        nucleus(x, y) = kSyntheticNucleus;
      }
      for (std::size_t o = 0; o < c.organelles.size(); ++o) {
        const auto& org = c.organelles[o];
        if (dist2(x, y, org.center) <= org.radius * org.radius) {
          out.subcellular.raster(x, y) = first_entity[owner] + static_cast<std::uint32_t>(o);
          sub(x, y) = kSyntheticOrganelle;
        }
      }
    }
  }
  out.image = MultiChannelImage(
      {std::move(nucleus), std::move(marker), std::move(sub)},
      {{0, ChannelRole::Nucleus}, {1, ChannelRole::CellMarker}, {2, ChannelRole::SubcellularMarker}});
  return out;
}

namespace {

constexpr double kNucleusRadius = 6.0;
constexpr double kPairNucleusRadius = 7.0;
constexpr double kOrganelleRadius = 2.0;
constexpr double kMinCellRadius = 13.0;
constexpr double kMaxCellRadius = 17.0;
constexpr double kBorderMargin = 3.0;
constexpr double kCellGap = 3.0;

double uniform(RngStream& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform01(); }

std::vector<SyntheticOrganelle> place_organelles(const SyntheticCell& cell, RngStream& rng) {
  const int wanted = 2 + static_cast<int>(rng.uniform_index(3));
  const double d_lo = cell.nucleus_radius + kOrganelleRadius + 2.0;
  const double d_hi = cell.cell_radius - kOrganelleRadius - 2.0;
  std::vector<SyntheticOrganelle> out;
  for (int attempt = 0; attempt < 200 && static_cast<int>(out.size()) < wanted; ++attempt) {
    const double angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double d = uniform(rng, d_lo, d_hi);
    const PointF c{std::round(cell.center.x + d * std::cos(angle)), std::round(cell.center.y + d * std::sin(angle))};
    const double r = std::sqrt(dist2(c.x, c.y, cell.center));
    if (r < d_lo || r > d_hi) continue;
    bool clear = true;
    for (const auto& o : out) {
      if (std::sqrt(dist2(c.x, c.y, o.center)) < 2.0 * kOrganelleRadius + 3.0) clear = false;
    }
    if (clear) out.push_back({c, kOrganelleRadius});
  }
  return out;
}

std::vector<SyntheticCell> place_cells(int size, int count, RngStream& rng) {
  std::vector<SyntheticCell> cells;
  for (int attempt = 0; attempt < 2000 && static_cast<int>(cells.size()) < count; ++attempt) {
    SyntheticCell cell;
    cell.cell_radius = std::round(uniform(rng, kMinCellRadius, kMaxCellRadius) * 2.0) / 2.0;
    cell.nucleus_radius = kNucleusRadius;
    const double lo = cell.cell_radius + kBorderMargin;
    const double hi = size - 1 - cell.cell_radius - kBorderMargin;
    cell.center = {std::round(uniform(rng, lo, hi)), std::round(uniform(rng, lo, hi))};
    bool clear = true;
    for (const auto& other : cells) {
      const double d = std::sqrt(dist2(cell.center.x, cell.center.y, other.center));
      if (d < cell.cell_radius + other.cell_radius + kCellGap) clear = false;
    }
    if (!clear) continue;
    cell.organelles = place_organelles(cell, rng);
    cells.push_back(std::move(cell));
  }
  return cells;
}

double hill_response(double conc, const SyntheticCompound& c) { return 1.0 / (1.0 + std::pow(c.ec50 / conc, c.hill)); }

}  // namespace

SyntheticPlate make_synthetic_plate(const SyntheticPlateOptions& options) {
  if (options.min_cells < 1 || options.max_cells < options.min_cells || options.concentrations < 2 ||
      options.image_size < 64) {
    throw Error(ErrorCode::InvalidArgument, "invalid synthetic plate options");
  }
  SyntheticPlate plate;
  plate.compounds = {{"CPD1", 1e-6, 1.0}, {"CPD2", 3e-8, 1.5}};

  RngStream rng(options.seed);
  std::vector<Well> wells;
  int index = 0;
  auto add_image = [&](WellRole role, const std::string& compound, std::optional<double> conc, double response) {
    const std::string well_id = fmt::format("{}{:02d}", static_cast<char>('A' + index / 12), index % 12 + 1);
    const std::string image_id = well_id + "_s1";
    ++index;
    const int count =
        options.min_cells + static_cast<int>(rng.uniform_index(options.max_cells - options.min_cells + 1));
    auto cells = place_cells(options.image_size, count, rng);
    plate.images.push_back(
        render_synthetic(image_id, {options.image_size, options.image_size}, cells, marker_level(response)));
    wells.push_back({well_id, role, compound, conc, {image_id}});
  };

  for (int i = 0; i < options.neutral_wells; ++i) add_image(WellRole::NeutralControl, "", std::nullopt, 0.0);
  for (int i = 0; i < options.positive_wells; ++i) add_image(WellRole::PositiveControl, "", std::nullopt, 1.0);
  for (const auto& compound : plate.compounds) {
    for (int i = 0; i < options.concentrations; ++i) {
      const double log_c = options.log10_conc_min +
                           (options.log10_conc_max - options.log10_conc_min) * i / (options.concentrations - 1);
      const double conc = std::pow(10.0, log_c);
      add_image(WellRole::Compound, compound.compound_id, conc, hill_response(conc, compound));
    }
  }
  plate.layout = PlateLayout(std::move(wells));
  return plate;
}

SyntheticImage make_touching_pair(std::uint64_t seed, int image_size) {
  RngStream rng(seed);
  SyntheticCell a;
  SyntheticCell b;
  // Neighbour centres stay within reach of the 3x nucleus-box repulsive prior.
  a.cell_radius = std::round(uniform(rng, 11.0, 14.0));
  b.cell_radius = std::round(uniform(rng, 11.0, 14.0));
  a.nucleus_radius = b.nucleus_radius = kPairNucleusRadius;
  const double d = (a.cell_radius + b.cell_radius) * uniform(rng, 0.65, 0.75);
  const double angle = uniform(rng, 0.0, std::numbers::pi);
  const double mid = (image_size - 1) / 2.0;
  a.center = {std::round(mid - d / 2.0 * std::cos(angle)), std::round(mid - d / 2.0 * std::sin(angle))};
  b.center = {std::round(mid + d / 2.0 * std::cos(angle)), std::round(mid + d / 2.0 * std::sin(angle))};
  return render_synthetic(fmt::format("pair_{}", seed), {image_size, image_size}, {a, b}, marker_level(1.0));
}

void write_synthetic_plate(const SyntheticPlate& plate, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "ground_truth");
  for (const auto& img : plate.images) {
    std::vector<Channel> channels;
    for (int c = 0; c < img.image.channel_count(); ++c) channels.push_back(img.image.channel(c));
    io::save_channels_tiff(dir / "images" / (img.image_id + ".tif"), channels);
    io::save_labels(dir / "ground_truth" / (img.image_id + "_cells.png"), img.cells.raster);
    io::save_labels(dir / "ground_truth" / (img.image_id + "_nuclei.png"), img.nuclei.raster);
    io::save_labels(dir / "ground_truth" / (img.image_id + "_subcellular.png"), img.subcellular.raster);
  }
  {
    std::ofstream out(dir / "layout.csv", std::ios::binary);
    if (!out) throw Error(ErrorCode::FileNotFound, "cannot write " + (dir / "layout.csv").string());
    plate.layout.write_csv(out);
  }
  std::ofstream cfg(dir / "config.yaml", std::ios::binary);
  if (!cfg) throw Error(ErrorCode::FileNotFound, "cannot write " + (dir / "config.yaml").string());
  cfg << "input:\n"
         "  images: images/*.tif\n"
         "  channels: {0: nucleus, 1: cell_marker, 2: subcellular}\n"
         "  ground_truth: ground_truth/{image_id}_cells.png\n"
         "  plate_layout: layout.csv\n"
         "backend: oracle\n"
         "output: out\n"
         "rng_seed: 0\n";
}

}  // namespace subcellsam
