#pragma once

#include <filesystem>
#include <vector>

#include "subcellsam/raster.hpp"

namespace subcellsam::io {

// Loads every page (TIFF) or color component (PNG, TIFF) as one channel,
// divided by the bit-depth maximum (8-bit /255, 16-bit /65535).
std::vector<Channel> load_channels(const std::filesystem::path& path);

// Raw integer values of a single-channel 8/16-bit PNG or TIFF.
Raster<std::uint32_t> load_labels(const std::filesystem::path& path);

// 16-bit single-channel PNG or TIFF chosen by extension; 0 is background.
void save_labels(const std::filesystem::path& path, const Raster<std::uint32_t>& labels);

// Multi-page 16-bit TIFF, one page per channel.
void save_channels_tiff(const std::filesystem::path& path, const std::vector<Channel>& channels);

}  // namespace subcellsam::io
