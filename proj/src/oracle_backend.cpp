#include "subcellsam/oracle_backend.hpp"

#include <deque>
#include <limits>

#include "subcellsam/geometry.hpp"

namespace subcellsam {

namespace {

constexpr int kUnreached = std::numeric_limits<int>::max();

Raster<int> geodesic_distance(const BinaryMask& bright, const std::vector<std::pair<int, int>>& seeds) {
  Raster<int> dist(bright.size(), kUnreached);
  std::deque<std::pair<int, int>> queue;
  for (auto [x, y] : seeds) {
    if (!bright(x, y) || dist(x, y) == 0) continue;
    dist(x, y) = 0;
    queue.emplace_back(x, y);
  }
  while (!queue.empty()) {
    auto [x, y] = queue.front();
    queue.pop_front();
    constexpr int dx[] = {1, -1, 0, 0};
    constexpr int dy[] = {0, 0, 1, -1};
    for (int k = 0; k < 4; ++k) {
      const int nx = x + dx[k];
      const int ny = y + dy[k];
      if (!bright.size().contains(nx, ny) || !bright(nx, ny) || dist(nx, ny) != kUnreached) continue;
      dist(nx, ny) = dist(x, y) + 1;
      queue.emplace_back(nx, ny);
    }
  }
  return dist;
}

}  // namespace

OracleBackend::OracleBackend(OracleOptions options) : options_(options) {
  descriptor_.name = "oracle";
  descriptor_.native_grid = Size{0, 0};
  descriptor_.logits_threshold = 0.0f;
}

SegmentationResult OracleBackend::make_result(const Channel& channel, BinaryMask mask) const {
  Raster<float> logits(channel.size());
  std::size_t area = 0;
  std::size_t confident = 0;
  for (int y = 0; y < channel.height(); ++y) {
    for (int x = 0; x < channel.width(); ++x) {
      const float v = channel(x, y);
      if (mask(x, y)) {
        logits(x, y) = 1.0f + v;
        ++area;
        confident += v > options_.confident_intensity;
      } else {
        logits(x, y) = v - 1.5f;
      }
    }
  }
  const double confidence = area == 0 ? 0.0 : static_cast<double>(confident) / static_cast<double>(area);
  return SegmentationResult{std::move(mask), ScoreGrid{std::move(logits), Calibration{0.0f}}, confidence};
}

SegmentationResult OracleBackend::segment_with_prompts(const Channel& channel, const PromptSet& prompts) const {
  validate_prompts(prompts, channel.size());

  BinaryMask bright(channel.size());
  for (int y = 0; y < channel.height(); ++y) {
    for (int x = 0; x < channel.width(); ++x) {
      if (channel(x, y) > options_.intensity_threshold) bright.set(x, y);
    }
  }

  std::vector<std::pair<int, int>> fg;
  std::vector<std::pair<int, int>> bg;
  for (const auto& p : prompts.points) {
    (p.polarity == Polarity::Foreground ? fg : bg).emplace_back(p.x, p.y);
  }
  if (prompts.mask_prior) {
    const ScoreGrid prior = resample_score_grid(*prompts.mask_prior, channel.size());
    for (int y = 0; y < channel.height(); ++y) {
      for (int x = 0; x < channel.width(); ++x) {
        if (prior.calibration.probability(prior.raster(x, y)) >= 0.5) fg.emplace_back(x, y);
      }
    }
  }

  const Raster<int> fg_dist = geodesic_distance(bright, fg);
  const Raster<int> bg_dist = geodesic_distance(bright, bg);
  BinaryMask mask(channel.size());
  for (int y = 0; y < channel.height(); ++y) {
    for (int x = 0; x < channel.width(); ++x) {
      if (fg_dist(x, y) != kUnreached && fg_dist(x, y) < bg_dist(x, y)) mask.set(x, y);
    }
  }
  return make_result(channel, std::move(mask));
}

std::vector<SegmentationResult> OracleBackend::generate_masks_auto(const Channel& channel) const {
  BinaryMask bright(channel.size());
  for (int y = 0; y < channel.height(); ++y) {
    for (int x = 0; x < channel.width(); ++x) {
      if (channel(x, y) > options_.intensity_threshold) bright.set(x, y);
    }
  }
  std::vector<SegmentationResult> out;
  for (auto& component : connected_components(bright)) {
    out.push_back(make_result(channel, std::move(component)));
  }
  return out;
}

}  // namespace subcellsam
