#include "subcellsam/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <tuple>

#include <fmt/format.h>

#include "subcellsam/geometry.hpp"

namespace subcellsam {

namespace {

struct Corner {
  long long x;
  long long y;
  auto operator<=>(const Corner&) const = default;
};

long long cross(const Corner& o, const Corner& a, const Corner& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

// Area of the convex hull of all pixel corners (monotone chain + shoelace).
double corner_hull_area(const BinaryMask& mask) {
  std::vector<Corner> pts;
  for (int y = 0; y < mask.height(); ++y) {
    int lo = -1;
    int hi = -1;
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(x, y)) continue;
      if (lo < 0) lo = x;
      hi = x;
    }
    if (lo < 0) continue;
    pts.push_back({lo, y});
    pts.push_back({lo, y + 1});
    pts.push_back({hi + 1, y});
    pts.push_back({hi + 1, y + 1});
  }
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return 0.0;

  std::vector<Corner> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);

  long long twice = 0;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const auto& a = hull[i];
    const auto& b = hull[(i + 1) % hull.size()];
    twice += a.x * b.y - b.x * a.y;
  }
  return std::abs(static_cast<double>(twice)) / 2.0;
}

}  // namespace

RegionFeatures region_props(const BinaryMask& mask) {
  const BoundingBox box = mask_to_bbox(mask);  // throws EmptyMask

  double n = 0.0;
  double sx = 0.0;
  double sy = 0.0;
  for (int y = box.y0; y < box.y1; ++y) {
    for (int x = box.x0; x < box.x1; ++x) {
      if (!mask(x, y)) continue;
      n += 1.0;
      sx += x;
      sy += y;
    }
  }
  const double cx = sx / n;
  const double cy = sy / n;
  double mxx = 0.0;
  double myy = 0.0;
  double mxy = 0.0;
  for (int y = box.y0; y < box.y1; ++y) {
    for (int x = box.x0; x < box.x1; ++x) {
      if (!mask(x, y)) continue;
      const double dx = x - cx;
      const double dy = y - cy;
      mxx += dx * dx;
      myy += dy * dy;
      mxy += dx * dy;
    }
  }
  mxx = mxx / n + 1.0 / 12.0;
  myy = myy / n + 1.0 / 12.0;
  mxy /= n;
  const double half_trace = (mxx + myy) / 2.0;
  const double root = std::sqrt(((mxx - myy) / 2.0) * ((mxx - myy) / 2.0) + mxy * mxy);
  const double l1 = half_trace + root;
  const double l2 = std::max(half_trace - root, 0.0);

  RegionFeatures f;
  f.area = n;
  f.perimeter = contour_perimeter(mask);
  f.equivalent_diameter = 2.0 * std::sqrt(n / std::numbers::pi);
  f.major_axis = 4.0 * std::sqrt(l1);
  f.minor_axis = 4.0 * std::sqrt(l2);
  f.eccentricity = std::sqrt(std::max(0.0, 1.0 - l2 / l1));
  f.solidity = n / corner_hull_area(mask);
  f.extent = n / static_cast<double>(box.area());
  f.aspect_ratio = static_cast<double>(std::max(box.width(), box.height())) / std::min(box.width(), box.height());
  f.circularity = 4.0 * std::numbers::pi * n / (f.perimeter * f.perimeter);
  return f;
}

IntensityStats intensity_stats(const BinaryMask& mask, const Channel& channel) {
  if (mask.size() != channel.size()) throw Error(ErrorCode::DimensionMismatch, "mask and channel differ in size");
  IntensityStats s;
  std::size_t n = 0;
  double sum = 0.0;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(x, y)) continue;
      const double v = channel(x, y);
      if (n == 0) {
        s.min = v;
        s.max = v;
      }
      s.min = std::min(s.min, v);
      s.max = std::max(s.max, v);
      sum += v;
      ++n;
    }
  }
  if (n == 0) throw Error(ErrorCode::EmptyMask, "intensity statistics of an empty mask");
  s.mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(x, y)) continue;
      const double d = channel(x, y) - s.mean;
      ss += d * d;
    }
  }
  s.std = std::sqrt(ss / static_cast<double>(n));
  return s;
}

std::optional<double> correlation_feature(const BinaryMask& mask, const Channel& a, const Channel& b) {
  if (mask.size() != a.size() || mask.size() != b.size()) {
    throw Error(ErrorCode::DimensionMismatch, "mask and channels differ in size");
  }
  std::size_t n = 0;
  double sa = 0.0;
  double sb = 0.0;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(x, y)) continue;
      sa += a(x, y);
      sb += b(x, y);
      ++n;
    }
  }
  if (n < 2) return std::nullopt;
  const double ma = sa / n;
  const double mb = sb / n;
  double saa = 0.0;
  double sbb = 0.0;
  double sab = 0.0;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(x, y)) continue;
      const double da = a(x, y) - ma;
      const double db = b(x, y) - mb;
      saa += da * da;
      sbb += db * db;
      sab += da * db;
    }
  }
  if (saa <= 0.0 || sbb <= 0.0) return std::nullopt;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::string to_string(ObjectLevel level) {
  switch (level) {
    case ObjectLevel::Nucleus: return "nucleus";
    case ObjectLevel::Cell: return "cell";
    case ObjectLevel::Subcellular: return "subcellular";
  }
  return "cell";
}

ObjectLevel parse_object_level(const std::string& text) {
  if (text == "nucleus") return ObjectLevel::Nucleus;
  if (text == "cell") return ObjectLevel::Cell;
  if (text == "subcellular") return ObjectLevel::Subcellular;
  throw Error(ErrorCode::FormatError, "unknown object level '" + text + "'");
}

const std::vector<std::string>& FeatureTable::columns() {
  static const std::vector<std::string> names = {
      "area",           "perimeter",      "equivalent_diameter", "eccentricity",
      "solidity",       "extent",         "aspect_ratio",        "circularity",
      "major_axis",     "minor_axis",     "intensity_mean",      "intensity_min",
      "intensity_max",  "intensity_std",  "nucleus_intensity_mean", "nucleus_cell_correlation",
      "entities_per_cell"};
  return names;
}

std::optional<std::size_t> FeatureTable::column_index(const std::string& name) {
  const auto& cols = columns();
  auto it = std::find(cols.begin(), cols.end(), name);
  if (it == cols.end()) return std::nullopt;
  return static_cast<std::size_t>(it - cols.begin());
}

void FeatureTable::add(FeatureRow row) {
  if (row.values.size() != columns().size()) throw Error(ErrorCode::InvalidArgument, "feature row has wrong width");
  for (const auto& v : row.values) {
    if (v && !std::isfinite(*v)) throw Error(ErrorCode::InvalidArgument, "non-finite feature value");
  }
  if (!keys_.emplace(row.image_id, static_cast<int>(row.level), row.object_id).second) {
    throw Error(ErrorCode::InvalidArgument,
                fmt::format("duplicate feature row {}/{}/{}", row.image_id, to_string(row.level), row.object_id));
  }
  rows_.push_back(std::move(row));
}

void FeatureTable::append(const FeatureTable& other) {
  for (const auto& r : other.rows_) add(r);
}

void FeatureTable::write_csv(std::ostream& out) const {
  out << "image_id,well_id,level,object_id,cell_id";
  for (const auto& c : columns()) out << ',' << c;
  out << '\n';
  for (const auto& r : rows_) {
    out << r.image_id << ',' << r.well_id << ',' << to_string(r.level) << ',' << r.object_id << ',' << r.cell_id;
    for (const auto& v : r.values) {
      out << ',';
      if (v) out << fmt::format("{}", *v);
    }
    out << '\n';
  }
}

void FeatureTable::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::FileNotFound, "cannot write " + path.string());
  write_csv(out);
}

FeatureTable FeatureTable::read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::FormatError, "empty feature table");
  auto header = split_csv_line(line);
  std::vector<std::string> expected = {"image_id", "well_id", "level", "object_id", "cell_id"};
  expected.insert(expected.end(), columns().begin(), columns().end());
  if (header != expected) throw Error(ErrorCode::FormatError, "unexpected feature table header");

  FeatureTable table;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    if (f.size() != expected.size()) throw Error(ErrorCode::FormatError, "bad feature row: " + line);
    FeatureRow row;
    row.image_id = f[0];
    row.well_id = f[1];
    row.level = parse_object_level(f[2]);
    try {
      row.object_id = std::stoi(f[3]);
      row.cell_id = std::stoi(f[4]);
      for (std::size_t i = 5; i < f.size(); ++i) {
        row.values.push_back(f[i].empty() ? std::nullopt : std::optional<double>(std::stod(f[i])));
      }
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::FormatError, "bad number in feature row: " + line);
    }
    table.add(std::move(row));
  }
  return table;
}

FeatureTable FeatureTable::read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileNotFound, path.string());
  return read_csv(in);
}

namespace {

std::vector<std::optional<double>> morphology_values(const BinaryMask& mask) {
  const RegionFeatures f = region_props(mask);
  std::vector<std::optional<double>> v(FeatureTable::columns().size());
  v[0] = f.area;
  v[1] = f.perimeter;
  v[2] = f.equivalent_diameter;
  v[3] = f.eccentricity;
  v[4] = f.solidity;
  v[5] = f.extent;
  v[6] = f.aspect_ratio;
  v[7] = f.circularity;
  v[8] = f.major_axis;
  v[9] = f.minor_axis;
  return v;
}

void set_intensity(std::vector<std::optional<double>>& v, const BinaryMask& mask, const Channel* channel) {
  if (!channel) return;
  const IntensityStats s = intensity_stats(mask, *channel);
  v[10] = s.mean;
  v[11] = s.min;
  v[12] = s.max;
  v[13] = s.std;
}

}  // namespace

FeatureTable extract_all(const MultiChannelImage& image, const SegmentedImage& seg, const std::string& image_id,
                         const PlateLayout* layout) {
  if (seg.cells.size() != image.size()) throw Error(ErrorCode::DimensionMismatch, "label map size differs from image");
  const std::uint32_t cell_count = seg.cells.max_label();
  if (seg.cell_nucleus_ids.size() != cell_count) {
    throw Error(ErrorCode::InvalidArgument, "one nucleus id per cell label required");
  }
  std::map<int, const NucleusRecord*> nuclei;
  for (const auto& n : seg.nuclei) nuclei[n.id] = &n;
  std::vector<std::vector<const SubcellularEntity*>> entities(cell_count + 1);
  for (const auto& e : seg.entities) {
    if (e.cell_id < 1 || static_cast<std::uint32_t>(e.cell_id) > cell_count) {
      throw Error(ErrorCode::InvalidArgument, fmt::format("entity refers to unknown cell {}", e.cell_id));
    }
    entities[e.cell_id].push_back(&e);
  }

  const std::string well_id = layout ? layout->well_for_image(image_id).well_id : std::string();
  const auto nucleus_channel = image.nucleus_channel();
  const auto markers = image.cell_marker_channels();
  const auto subcellular_channel = image.subcellular_channel();
  const Channel* nucleus_ch = nucleus_channel ? &image.channel(*nucleus_channel) : nullptr;
  const Channel* marker_ch = markers.empty() ? nullptr : &image.channel(markers.front());
  const Channel* sub_ch = subcellular_channel ? &image.channel(*subcellular_channel) : nullptr;

  FeatureTable table;
  int entity_id = 0;
  for (std::uint32_t label = 1; label <= cell_count; ++label) {
    const int nucleus_id = seg.cell_nucleus_ids[label - 1];
    auto found = nuclei.find(nucleus_id);
    if (found == nuclei.end()) {
      throw Error(ErrorCode::InvalidArgument, fmt::format("cell {} refers to unknown nucleus {}", label, nucleus_id));
    }
    const NucleusRecord& nucleus = *found->second;
    const BinaryMask cell_mask = seg.cells.mask_of(label);

    std::optional<double> nucleus_mean;
    std::optional<double> correlation;
    if (nucleus_ch) nucleus_mean = intensity_stats(nucleus.mask, *nucleus_ch).mean;
    if (nucleus_ch && marker_ch) correlation = correlation_feature(nucleus.mask, *nucleus_ch, *marker_ch);

    FeatureRow nrow{image_id, well_id, ObjectLevel::Nucleus, nucleus_id, static_cast<int>(label),
                    morphology_values(nucleus.mask)};
    set_intensity(nrow.values, nucleus.mask, nucleus_ch);
    nrow.values[15] = correlation;
    table.add(std::move(nrow));

    if (cell_mask.any()) {
      FeatureRow crow{image_id, well_id, ObjectLevel::Cell, static_cast<int>(label), static_cast<int>(label),
                      morphology_values(cell_mask)};
      set_intensity(crow.values, cell_mask, marker_ch);
      crow.values[14] = nucleus_mean;
      crow.values[15] = correlation;
      crow.values[16] = static_cast<double>(entities[label].size());
      table.add(std::move(crow));
    }

    for (const auto* e : entities[label]) {
      FeatureRow erow{image_id, well_id, ObjectLevel::Subcellular, ++entity_id, static_cast<int>(label),
                      morphology_values(e->mask)};
      set_intensity(erow.values, e->mask, sub_ch);
      table.add(std::move(erow));
    }
  }
  return table;
}

}  // namespace subcellsam
