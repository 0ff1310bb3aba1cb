#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace subcellsam {

enum class WellRole { NeutralControl, PositiveControl, Compound };

struct Well {
  std::string well_id;
  WellRole role = WellRole::Compound;
  std::string compound_id;
  std::optional<double> concentration;  // molar; compounds only
  std::vector<std::string> image_ids;   // file stems
};

// CSV columns: well_id,role,compound_id,concentration_molar,image_files
// (image_files separated by ';'; roles neutral_control|positive_control|compound).
class PlateLayout {
 public:
  PlateLayout() = default;
  explicit PlateLayout(std::vector<Well> wells);

  static PlateLayout read_csv(std::istream& in);
  static PlateLayout read_csv(const std::filesystem::path& path);
  void write_csv(std::ostream& out) const;

  const std::vector<Well>& wells() const { return wells_; }
  const Well* find_well(const std::string& well_id) const;
  // Throws LayoutMismatch when no well lists the image.
  const Well& well_for_image(const std::string& image_id) const;
  std::vector<std::string> compounds() const;

 private:
  std::vector<Well> wells_;
  std::map<std::string, std::size_t> by_well_;
  std::map<std::string, std::size_t> by_image_;
};

std::string to_string(WellRole role);
WellRole parse_well_role(const std::string& text);

// Splits one CSV line on commas; no quoting.
std::vector<std::string> split_csv_line(const std::string& line, char sep = ',');

}  // namespace subcellsam
