#include "subcellsam/raster.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace subcellsam {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::DegenerateBox: return "DegenerateBox";
    case ErrorCode::InvalidPrompt: return "InvalidPrompt";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::FileNotFound: return "FileNotFound";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::UnsupportedOpset: return "UnsupportedOpset";
    case ErrorCode::NoNucleusChannel: return "NoNucleusChannel";
    case ErrorCode::NoCellMarkerChannel: return "NoCellMarkerChannel";
    case ErrorCode::NoSubcellularChannel: return "NoSubcellularChannel";
    case ErrorCode::NotEnoughPoints: return "NotEnoughPoints";
    case ErrorCode::DegenerateControls: return "DegenerateControls";
    case ErrorCode::LayoutMismatch: return "LayoutMismatch";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

BinaryMask::BinaryMask(Raster<std::uint8_t> raster) : raster_(std::move(raster)) {
  for (auto& v : raster_.values()) v = v ? 1 : 0;
}

std::size_t BinaryMask::area() const {
  return static_cast<std::size_t>(std::count(raster_.values().begin(), raster_.values().end(), 1));
}

bool BinaryMask::any() const {
  return std::any_of(raster_.values().begin(), raster_.values().end(), [](auto v) { return v != 0; });
}

namespace {

template <typename Op>
BinaryMask combine(const BinaryMask& a, const BinaryMask& b, Op op) {
  if (a.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "mask sizes differ");
  Raster<std::uint8_t> out(a.size());
  auto av = a.raster().values();
  auto bv = b.raster().values();
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = op(av[i] != 0, bv[i] != 0) ? 1 : 0;
  return BinaryMask(std::move(out));
}

}  // namespace

BinaryMask mask_union(const BinaryMask& a, const BinaryMask& b) {
  return combine(a, b, [](bool x, bool y) { return x || y; });
}

BinaryMask mask_intersection(const BinaryMask& a, const BinaryMask& b) {
  return combine(a, b, [](bool x, bool y) { return x && y; });
}

bool is_subset(const BinaryMask& inner, const BinaryMask& outer) {
  if (inner.size() != outer.size()) throw Error(ErrorCode::DimensionMismatch, "mask sizes differ");
  auto iv = inner.raster().values();
  auto ov = outer.raster().values();
  for (std::size_t i = 0; i < iv.size(); ++i) {
    if (iv[i] && !ov[i]) return false;
  }
  return true;
}

double Calibration::probability(float score) const {
  return 1.0 / (1.0 + std::exp(-(static_cast<double>(score) - threshold)));
}

std::uint32_t InstanceLabelMap::max_label() const {
  auto v = raster.values();
  return v.empty() ? 0 : *std::max_element(v.begin(), v.end());
}

BinaryMask InstanceLabelMap::mask_of(std::uint32_t label) const {
  Raster<std::uint8_t> out(raster.size());
  auto src = raster.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] == label ? 1 : 0;
  return BinaryMask(std::move(out));
}

BinaryMask InstanceLabelMap::foreground() const {
  Raster<std::uint8_t> out(raster.size());
  auto src = raster.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] != 0 ? 1 : 0;
  return BinaryMask(std::move(out));
}

MultiChannelImage::MultiChannelImage(std::vector<Channel> channels, std::map<int, ChannelRole> roles)
    : channels_(std::move(channels)), roles_(std::move(roles)) {
  if (channels_.empty()) throw Error(ErrorCode::InvalidArgument, "image has no channels");
  size_ = channels_.front().size();
  for (const auto& c : channels_) {
    if (c.size() != size_) throw Error(ErrorCode::DimensionMismatch, "channels differ in size");
    for (float v : c.values()) {
      if (!(v >= 0.0f && v <= 1.0f)) {
        throw Error(ErrorCode::InvalidArgument, "intensity outside [0,1]: " + std::to_string(v));
      }
    }
  }
  int nucleus = 0;
  int subcellular = 0;
  for (const auto& [index, role] : roles_) {
    if (index < 0 || index >= channel_count()) {
      throw Error(ErrorCode::InvalidArgument, "role assigned to missing channel " + std::to_string(index));
    }
    nucleus += role == ChannelRole::Nucleus;
    subcellular += role == ChannelRole::SubcellularMarker;
  }
  if (nucleus > 1) throw Error(ErrorCode::InvalidArgument, "more than one nucleus channel");
  if (subcellular > 1) throw Error(ErrorCode::InvalidArgument, "more than one subcellular channel");
}

ChannelRole MultiChannelImage::role(int index) const {
  auto it = roles_.find(index);
  return it == roles_.end() ? ChannelRole::Other : it->second;
}

std::optional<int> MultiChannelImage::nucleus_channel() const {
  for (const auto& [index, role] : roles_) {
    if (role == ChannelRole::Nucleus) return index;
  }
  return std::nullopt;
}

std::vector<int> MultiChannelImage::cell_marker_channels() const {
  std::vector<int> out;
  for (const auto& [index, role] : roles_) {
    if (role == ChannelRole::CellMarker) out.push_back(index);
  }
  return out;
}

std::optional<int> MultiChannelImage::subcellular_channel() const {
  for (const auto& [index, role] : roles_) {
    if (role == ChannelRole::SubcellularMarker) return index;
  }
  return std::nullopt;
}

}  // namespace subcellsam
