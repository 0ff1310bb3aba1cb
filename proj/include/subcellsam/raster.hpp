#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "subcellsam/errors.hpp"

namespace subcellsam {

// Image geometry uses origin top-left, x to the right, y downward.
struct Size {
  int width = 0;
  int height = 0;

  std::size_t pixels() const { return static_cast<std::size_t>(width) * height; }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  friend bool operator==(const Size&, const Size&) = default;
};

// Row-major 2-D grid.
template <typename T>
class Raster {
 public:
  using value_type = T;

  Raster() = default;
  explicit Raster(Size size, T fill = T{}) : size_(size), data_(size.pixels(), fill) {
    if (size.width < 0 || size.height < 0) {
      throw Error(ErrorCode::InvalidArgument, "negative raster dimensions");
    }
  }
  Raster(Size size, std::vector<T> data) : size_(size), data_(std::move(data)) {
    if (data_.size() != size.pixels()) {
      throw Error(ErrorCode::DimensionMismatch, "raster data does not match dimensions");
    }
  }

  Size size() const { return size_; }
  int width() const { return size_.width; }
  int height() const { return size_.height; }
  bool empty() const { return data_.empty(); }

  T& operator()(int x, int y) { return data_[index(x, y)]; }
  const T& operator()(int x, int y) const { return data_[index(x, y)]; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  const std::vector<T>& data() const { return data_; }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * size_.width + static_cast<std::size_t>(x);
  }

  Size size_{};
  std::vector<T> data_;
};

using Channel = Raster<float>;

class BinaryMask {
 public:
  BinaryMask() = default;
  explicit BinaryMask(Size size) : raster_(size, 0) {}
  explicit BinaryMask(Raster<std::uint8_t> raster);

  Size size() const { return raster_.size(); }
  int width() const { return raster_.width(); }
  int height() const { return raster_.height(); }

  bool operator()(int x, int y) const { return raster_(x, y) != 0; }
  void set(int x, int y, bool value = true) { raster_(x, y) = value ? 1 : 0; }

  std::size_t area() const;
  bool any() const;
  const Raster<std::uint8_t>& raster() const { return raster_; }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  Raster<std::uint8_t> raster_;
};

BinaryMask mask_union(const BinaryMask& a, const BinaryMask& b);
BinaryMask mask_intersection(const BinaryMask& a, const BinaryMask& b);
bool is_subset(const BinaryMask& inner, const BinaryMask& outer);

// Maps a raw score to a foreground probability: sigmoid(score - threshold).
struct Calibration {
  float threshold = 0.0f;
  double probability(float score) const;
};

struct ScoreGrid {
  Raster<float> raster;
  Calibration calibration;

  Size size() const { return raster.size(); }
};

struct BoundingBox {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  long long area() const { return static_cast<long long>(width()) * height(); }
  bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

enum class Polarity { Foreground, Background };

struct PointPrompt {
  int x = 0;
  int y = 0;
  Polarity polarity = Polarity::Foreground;
  friend bool operator==(const PointPrompt&, const PointPrompt&) = default;
};

struct InstanceLabelMap {
  Raster<std::uint32_t> raster;

  Size size() const { return raster.size(); }
  std::uint32_t max_label() const;
  BinaryMask mask_of(std::uint32_t label) const;
  BinaryMask foreground() const;
};

enum class ChannelRole { Nucleus, CellMarker, SubcellularMarker, Other };

// Channels share one size; intensities normalized to [0,1].
class MultiChannelImage {
 public:
  MultiChannelImage() = default;
  MultiChannelImage(std::vector<Channel> channels, std::map<int, ChannelRole> roles);

  Size size() const { return size_; }
  int channel_count() const { return static_cast<int>(channels_.size()); }
  const Channel& channel(int index) const { return channels_.at(index); }
  ChannelRole role(int index) const;

  std::optional<int> nucleus_channel() const;
  std::vector<int> cell_marker_channels() const;
  std::optional<int> subcellular_channel() const;

 private:
  std::vector<Channel> channels_;
  std::map<int, ChannelRole> roles_;
  Size size_{};
};

}  // namespace subcellsam
