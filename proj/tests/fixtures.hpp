#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "subcellsam/raster.hpp"

namespace fixtures {

using namespace subcellsam;

inline BinaryMask disc(Size size, double cx, double cy, double r) {
  BinaryMask m(size);
  for (int y = 0; y < size.height; ++y) {
    for (int x = 0; x < size.width; ++x) {
      if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) m.set(x, y);
    }
  }
  return m;
}

inline BinaryMask rect(Size size, int x0, int y0, int x1, int y1) {
  BinaryMask m(size);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) m.set(x, y);
  }
  return m;
}

inline Channel paint(const BinaryMask& m, float on = 0.9f, float off = 0.0f) {
  Channel c(m.size(), off);
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      if (m(x, y)) c(x, y) = on;
    }
  }
  return c;
}

inline BinaryMask random_mask(Size size, std::mt19937_64& rng, double p = 0.5) {
  std::bernoulli_distribution coin(p);
  BinaryMask m(size);
  for (int y = 0; y < size.height; ++y) {
    for (int x = 0; x < size.width; ++x) m.set(x, y, coin(rng));
  }
  return m;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& name) {
    path_ = std::filesystem::temp_directory_path() /
            (name + "_" + std::to_string(std::random_device{}()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace fixtures
