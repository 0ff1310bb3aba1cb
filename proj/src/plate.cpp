#include "subcellsam/plate.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "subcellsam/errors.hpp"

namespace subcellsam {

std::vector<std::string> split_csv_line(const std::string& line, char sep) {
  std::vector<std::string> fields;
  std::string current;
  for (char c : line) {
    if (c == sep) {
      fields.push_back(std::move(current));
      current.clear();
    } else if (c != '\r') {
      current.push_back(c);
    }
  }
  fields.push_back(std::move(current));
  return fields;
}

std::string to_string(WellRole role) {
  switch (role) {
    case WellRole::NeutralControl: return "neutral_control";
    case WellRole::PositiveControl: return "positive_control";
    case WellRole::Compound: return "compound";
  }
  return "compound";
}

WellRole parse_well_role(const std::string& text) {
  if (text == "neutral_control") return WellRole::NeutralControl;
  if (text == "positive_control") return WellRole::PositiveControl;
  if (text == "compound") return WellRole::Compound;
  throw Error(ErrorCode::FormatError, "unknown well role '" + text + "'");
}

PlateLayout::PlateLayout(std::vector<Well> wells) : wells_(std::move(wells)) {
  for (std::size_t i = 0; i < wells_.size(); ++i) {
    const Well& w = wells_[i];
    if (w.well_id.empty()) throw Error(ErrorCode::FormatError, "empty well id");
    if (!by_well_.emplace(w.well_id, i).second) throw Error(ErrorCode::FormatError, "duplicate well " + w.well_id);
    if (w.role == WellRole::Compound) {
      if (!w.concentration || !(*w.concentration > 0.0)) {
        throw Error(ErrorCode::FormatError, "compound well " + w.well_id + " needs a positive concentration");
      }
      if (w.compound_id.empty()) throw Error(ErrorCode::FormatError, "compound well " + w.well_id + " lacks a compound id");
    } else if (w.concentration) {
      throw Error(ErrorCode::FormatError, "control well " + w.well_id + " must not carry a concentration");
    }
    for (const auto& image : w.image_ids) {
      if (!by_image_.emplace(image, i).second) {
        throw Error(ErrorCode::FormatError, "image " + image + " listed in two wells");
      }
    }
  }
}

PlateLayout PlateLayout::read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::FormatError, "empty plate layout");
  const auto header = split_csv_line(line);
  const std::vector<std::string> expected = {"well_id", "role", "compound_id", "concentration_molar", "image_files"};
  if (header != expected) throw Error(ErrorCode::FormatError, "unexpected plate layout header: " + line);

  std::vector<Well> wells;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    if (f.size() != expected.size()) throw Error(ErrorCode::FormatError, "bad layout row: " + line);
    Well w;
    w.well_id = f[0];
    w.role = parse_well_role(f[1]);
    w.compound_id = f[2];
    if (!f[3].empty()) {
      try {
        w.concentration = std::stod(f[3]);
      } catch (const std::exception&) {
        throw Error(ErrorCode::FormatError, "bad concentration '" + f[3] + "'");
      }
    }
    for (auto& image : split_csv_line(f[4], ';')) {
      if (image.empty()) continue;
      w.image_ids.push_back(std::filesystem::path(image).stem().string());
    }
    wells.push_back(std::move(w));
  }
  return PlateLayout(std::move(wells));
}

PlateLayout PlateLayout::read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FileNotFound, path.string());
  return read_csv(in);
}

void PlateLayout::write_csv(std::ostream& out) const {
  out << "well_id,role,compound_id,concentration_molar,image_files\n";
  for (const auto& w : wells_) {
    std::string images;
    for (std::size_t i = 0; i < w.image_ids.size(); ++i) images += (i ? ";" : "") + w.image_ids[i];
    out << w.well_id << ',' << to_string(w.role) << ',' << w.compound_id << ','
        << (w.concentration ? fmt::format("{}", *w.concentration) : "") << ',' << images << '\n';
  }
}

const Well* PlateLayout::find_well(const std::string& well_id) const {
  auto it = by_well_.find(well_id);
  return it == by_well_.end() ? nullptr : &wells_[it->second];
}

const Well& PlateLayout::well_for_image(const std::string& image_id) const {
  auto it = by_image_.find(image_id);
  if (it == by_image_.end()) throw Error(ErrorCode::LayoutMismatch, "no well lists image " + image_id);
  return wells_[it->second];
}

std::vector<std::string> PlateLayout::compounds() const {
  std::set<std::string> ids;
  for (const auto& w : wells_) {
    if (w.role == WellRole::Compound) ids.insert(w.compound_id);
  }
  return {ids.begin(), ids.end()};
}

}  // namespace subcellsam
