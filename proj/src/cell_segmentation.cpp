#include "subcellsam/cell_segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "subcellsam/geometry.hpp"

namespace subcellsam {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Partial Fisher-Yates: the first min(k, n) entries become a uniform sample.
template <typename T>
std::vector<T> sample_without_replacement(std::vector<T> pool, std::size_t k, RngStream& rng) {
  k = std::min(k, pool.size());
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.uniform_index(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

ScoreGrid mean_grid(const ScoreGrid& a, const ScoreGrid& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "logit grids differ in size");
  Raster<float> out(a.size());
  auto av = a.raster.values();
  auto bv = b.raster.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = 0.5f * (av[i] + bv[i]);
  return ScoreGrid{std::move(out), a.calibration};
}

}  // namespace

void SamplingConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v < 1) throw Error(ErrorCode::InvalidArgument, std::string(name) + " must be >= 1");
  };
  positive(num_prompts_per_cell, "num_prompts_per_cell");
  positive(num_hotpoints, "num_hotpoints");
  positive(num_initial_foreground, "num_initial_foreground");
  positive(num_anchor_points, "num_anchor_points");
  positive(num_stabilizing_points, "num_stabilizing_points");
  if (!(max_bbox_area_to_sample > 1.0) || !(init_bbox_scale > 1.0) || !(neighbor_bbox_scale > 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "box scales must be > 1");
  }
}

RngStream::RngStream(std::uint64_t seed, int cell_id, int channel, int iteration, SamplerKind kind) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(cell_id));
  h = splitmix64(h ^ static_cast<std::uint64_t>(channel));
  h = splitmix64(h ^ static_cast<std::uint64_t>(iteration));
  h = splitmix64(h ^ static_cast<std::uint64_t>(kind));
  engine_.seed(h);
}

RngStream::RngStream(std::uint64_t seed) : engine_(splitmix64(seed)) {}

std::size_t RngStream::uniform_index(std::size_t n) {
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "uniform_index of an empty range");
  const std::uint64_t bound = n;
  const std::uint64_t reject_below = (0 - bound) % bound;  // 2^64 mod n
  for (;;) {
    const std::uint64_t r = engine_();
    if (r >= reject_below) return static_cast<std::size_t>(r % bound);
  }
}

double RngStream::uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

PointPrompt center_pixel(PointF center, Size bounds, Polarity polarity) {
  const int x = std::clamp(static_cast<int>(std::floor(center.x + 0.5)), 0, bounds.width - 1);
  const int y = std::clamp(static_cast<int>(std::floor(center.y + 0.5)), 0, bounds.height - 1);
  return PointPrompt{x, y, polarity};
}

PromptSet sample_initial_points(const NucleusRecord& nucleus, const Channel& channel, const SamplingConfig& cfg,
                                RngStream& rng) {
  const BoundingBox region = scale_bbox(mask_to_bbox(nucleus.mask), cfg.init_bbox_scale, channel.size());

  std::vector<float> sorted(channel.values().begin(), channel.values().end());
  const auto mid = sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2);
  std::nth_element(sorted.begin(), mid, sorted.end());
  const float median = *mid;

  std::vector<PointPrompt> eligible;
  for (int y = region.y0; y < region.y1; ++y) {
    for (int x = region.x0; x < region.x1; ++x) {
      if (channel(x, y) > median) eligible.push_back(PointPrompt{x, y, Polarity::Foreground});
    }
  }
  PromptSet prompts;
  if (eligible.empty()) {
    prompts.points.push_back(center_pixel(nucleus.center, channel.size(), Polarity::Foreground));
  } else {
    prompts.points = sample_without_replacement(std::move(eligible), cfg.num_initial_foreground, rng);
  }
  return prompts;
}

BoundingBox hotspot_region(const BinaryMask& current, const NucleusRecord& nucleus, const SamplingConfig& cfg) {
  const BinaryMask support = current.any() ? mask_union(current, nucleus.mask) : nucleus.mask;
  return scale_bbox(mask_to_bbox(support), cfg.max_bbox_area_to_sample, nucleus.mask.size());
}

std::vector<PointPrompt> sample_hotspot_points(const IterationState& state, const BoundingBox& region,
                                               const SamplingConfig& cfg, RngStream& rng) {
  if (state.iteration < 1) throw Error(ErrorCode::InvalidArgument, "hotspots need a previous iteration");
  const Size size = state.current_mask.size();
  const ScoreGrid now = resample_score_grid(state.logits_t, size);
  const ScoreGrid before = resample_score_grid(state.logits_t_minus_1, size);
  const float threshold = state.logits_t.calibration.threshold;

  // Weighted sampling without replacement: keep the k largest log(u) / w.
  struct Keyed {
    double key;
    PointPrompt point;
  };
  std::vector<Keyed> keyed;
  for (int y = std::max(0, region.y0); y < std::min(size.height, region.y1); ++y) {
    for (int x = std::max(0, region.x0); x < std::min(size.width, region.x1); ++x) {
      if (state.current_mask(x, y)) continue;
      const double weight = 0.5 * (static_cast<double>(now.raster(x, y)) + before.raster(x, y)) - threshold;
      if (!(weight > 0.0)) continue;
      const double u = 1.0 - rng.uniform01();
      keyed.push_back(Keyed{std::log(u) / weight, PointPrompt{x, y, Polarity::Foreground}});
    }
  }
  const std::size_t k = std::min<std::size_t>(cfg.num_hotpoints, keyed.size());
  std::partial_sort(keyed.begin(), keyed.begin() + static_cast<std::ptrdiff_t>(k), keyed.end(),
                    [](const Keyed& a, const Keyed& b) { return a.key > b.key; });
  std::vector<PointPrompt> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(keyed[i].point);
  return out;
}

std::vector<PointPrompt> sample_stabilizing_points(const IterationState& state, const SamplingConfig& cfg,
                                                   RngStream& rng) {
  const auto& history = state.mask_history;
  if (history.size() < 2) throw Error(ErrorCode::InvalidArgument, "stabilizing points need two masks");
  const BinaryMask& earlier = history[history.size() - 2];
  const BinaryMask& latest = history.back();
  std::vector<PointPrompt> pool;
  for (int y = 0; y < latest.height(); ++y) {
    for (int x = 0; x < latest.width(); ++x) {
      if (earlier(x, y) && !latest(x, y)) pool.push_back(PointPrompt{x, y, Polarity::Foreground});
    }
  }
  return sample_without_replacement(std::move(pool), cfg.num_stabilizing_points, rng);
}

std::vector<PointPrompt> sample_anchor_points(const NucleusRecord& nucleus, const SamplingConfig& cfg,
                                              RngStream& rng) {
  std::vector<PointPrompt> pool;
  for (int y = 0; y < nucleus.mask.height(); ++y) {
    for (int x = 0; x < nucleus.mask.width(); ++x) {
      if (nucleus.mask(x, y)) pool.push_back(PointPrompt{x, y, Polarity::Foreground});
    }
  }
  if (pool.empty()) throw Error(ErrorCode::EmptyMask, "nucleus mask is empty");
  return sample_without_replacement(std::move(pool), cfg.num_anchor_points, rng);
}

std::vector<PointPrompt> sample_background_points(const NucleusRecord& nucleus,
                                                  const std::vector<NucleusRecord>& all_nuclei, Size bounds,
                                                  double neighbor_bbox_scale) {
  const BoundingBox region = scale_bbox(mask_to_bbox(nucleus.mask), neighbor_bbox_scale, bounds);
  std::vector<PointPrompt> out;
  for (const auto& other : all_nuclei) {
    if (other.id == nucleus.id) continue;
    const PointPrompt p = center_pixel(other.center, bounds, Polarity::Background);
    if (region.contains(p.x, p.y)) out.push_back(p);
  }
  return out;
}

CellTrace segment_cell(const Channel& channel, const NucleusRecord& nucleus,
                       const std::vector<NucleusRecord>& all_nuclei, const SegmentationBackend& backend,
                       const SamplingConfig& cfg, int channel_index) {
  cfg.validate();
  const Size size = channel.size();
  const auto background = sample_background_points(nucleus, all_nuclei, size, cfg.neighbor_bbox_scale);
  auto stream = [&](int iteration, SamplerKind kind) {
    return RngStream(cfg.rng_seed, nucleus.id, channel_index, iteration, kind);
  };

  CellTrace trace;
  IterationState state;
  {
    RngStream rng = stream(0, SamplerKind::Initial);
    PromptSet prompts = sample_initial_points(nucleus, channel, cfg, rng);
    prompts.points.insert(prompts.points.end(), background.begin(), background.end());
    SegmentationResult result = backend.segment_with_prompts(channel, prompts);
    state.iteration = 1;
    state.current_mask = result.mask;
    state.logits_t = result.logits;
    state.logits_t_minus_1 = std::move(result.logits);
    state.mask_history.push_back(std::move(result.mask));
    trace.confidences.push_back(result.confidence);
  }

  for (int iteration = 1; iteration < cfg.num_prompts_per_cell; ++iteration) {
    PromptSet prompts;
    prompts.mask_prior = mean_grid(state.logits_t, state.logits_t_minus_1);

    RngStream anchor_rng = stream(iteration, SamplerKind::Anchor);
    prompts.points = sample_anchor_points(nucleus, cfg, anchor_rng);

    RngStream hotspot_rng = stream(iteration, SamplerKind::Hotspot);
    const auto hot = sample_hotspot_points(state, hotspot_region(state.current_mask, nucleus, cfg), cfg, hotspot_rng);
    prompts.points.insert(prompts.points.end(), hot.begin(), hot.end());

    if (state.mask_history.size() >= 2) {
      RngStream stabilizing_rng = stream(iteration, SamplerKind::Stabilizing);
      const auto stab = sample_stabilizing_points(state, cfg, stabilizing_rng);
      prompts.points.insert(prompts.points.end(), stab.begin(), stab.end());
    }
    prompts.points.insert(prompts.points.end(), background.begin(), background.end());

    SegmentationResult result = backend.segment_with_prompts(channel, prompts);
    state.logits_t_minus_1 = std::move(state.logits_t);
    state.logits_t = std::move(result.logits);
    state.current_mask = result.mask;
    state.mask_history.push_back(std::move(result.mask));
    state.iteration = iteration + 1;
    trace.confidences.push_back(result.confidence);
  }

  trace.masks = std::move(state.mask_history);
  trace.lost = std::none_of(trace.masks.begin(), trace.masks.end(), [](const BinaryMask& m) { return m.any(); });
  if (trace.lost) {
    trace.masks.clear();
    trace.confidences.clear();
  }
  return trace;
}

std::vector<BinaryMask> combine_channels(const std::vector<CellTrace>& per_channel) {
  if (per_channel.empty()) throw Error(ErrorCode::InvalidArgument, "no channels to combine");
  std::size_t iterations = 0;
  Size size{};
  for (const auto& t : per_channel) {
    if (t.lost) continue;
    if (t.masks.size() != t.confidences.size()) {
      throw Error(ErrorCode::InvalidArgument, "masks and confidences differ in length");
    }
    if (iterations != 0 && t.masks.size() != iterations) {
      throw Error(ErrorCode::InvalidArgument, "channels differ in iteration count");
    }
    iterations = t.masks.size();
    size = t.masks.front().size();
  }
  if (iterations == 0) return {};

  std::vector<BinaryMask> fused;
  fused.reserve(iterations);
  for (std::size_t i = 0; i < iterations; ++i) {
    double total_conf = 0.0;
    for (const auto& t : per_channel) {
      if (!t.lost) total_conf += t.confidences[i];
    }
    const bool unweighted = !(total_conf > 0.0);
    const double denom = unweighted ? static_cast<double>(per_channel.size()) : total_conf;

    BinaryMask out(size);
    for (int y = 0; y < size.height; ++y) {
      for (int x = 0; x < size.width; ++x) {
        double soft = 0.0;
        for (const auto& t : per_channel) {
          if (t.lost || !t.masks[i](x, y)) continue;
          soft += unweighted ? 1.0 : t.confidences[i];
        }
        if (soft / denom >= 0.5) out.set(x, y);
      }
    }
    fused.push_back(std::move(out));
  }
  return fused;
}

}  // namespace subcellsam
