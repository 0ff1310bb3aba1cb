#include "subcellsam/metrics.hpp"

#include <algorithm>
#include <map>
#include <ostream>
#include <tuple>

#include <fmt/format.h>

namespace subcellsam {

namespace {

struct Overlap {
  std::size_t a = 0;
  std::size_t b = 0;
  std::size_t both = 0;
};

Overlap overlap(const BinaryMask& a, const BinaryMask& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "masks differ in size");
  Overlap o;
  auto va = a.raster().values();
  auto vb = b.raster().values();
  for (std::size_t i = 0; i < va.size(); ++i) {
    const bool pa = va[i] != 0;
    const bool pb = vb[i] != 0;
    o.a += pa;
    o.b += pb;
    o.both += pa && pb;
  }
  return o;
}

double dice_of(std::size_t a, std::size_t b, std::size_t both) {
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

double iou_of(std::size_t a, std::size_t b, std::size_t both) {
  const std::size_t uni = a + b - both;
  if (uni == 0) return 1.0;
  return static_cast<double>(both) / static_cast<double>(uni);
}

ImageScore score_instances(const InstanceLabelMap& pred, const InstanceLabelMap& gt) {
  if (pred.size() != gt.size()) throw Error(ErrorCode::DimensionMismatch, "prediction and ground truth differ in size");
  std::map<std::uint32_t, std::size_t> area_p;
  std::map<std::uint32_t, std::size_t> area_g;
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::size_t> inter;
  auto vp = pred.raster.values();
  auto vg = gt.raster.values();
  for (std::size_t i = 0; i < vp.size(); ++i) {
    if (vp[i]) ++area_p[vp[i]];
    if (vg[i]) ++area_g[vg[i]];
    if (vp[i] && vg[i]) ++inter[{vp[i], vg[i]}];
  }
  if (area_p.empty() && area_g.empty()) return {"", 1.0, 1.0};

  // (iou, pred, gt); ties resolved by lower labels first.
  std::vector<std::tuple<double, std::uint32_t, std::uint32_t, std::size_t>> pairs;
  for (const auto& [key, both] : inter) {
    pairs.emplace_back(iou_of(area_p[key.first], area_g[key.second], both), key.first, key.second, both);
  }
  std::sort(pairs.begin(), pairs.end(), [](const auto& l, const auto& r) {
    if (std::get<0>(l) != std::get<0>(r)) return std::get<0>(l) > std::get<0>(r);
    return std::tie(std::get<1>(l), std::get<2>(l)) < std::tie(std::get<1>(r), std::get<2>(r));
  });
  std::map<std::uint32_t, bool> used_p;
  std::map<std::uint32_t, bool> used_g;
  double sum_d = 0.0;
  double sum_i = 0.0;
  int matched = 0;
  for (const auto& [j, p, g, both] : pairs) {
    if (used_p[p] || used_g[g]) continue;
    used_p[p] = used_g[g] = true;
    sum_d += dice_of(area_p[p], area_g[g], both);
    sum_i += j;
    ++matched;
  }
  if (matched == 0) return {"", 0.0, 0.0};
  return {"", sum_d / matched, sum_i / matched};
}

}  // namespace

double dice(const BinaryMask& a, const BinaryMask& b) {
  const Overlap o = overlap(a, b);
  return dice_of(o.a, o.b, o.both);
}

double iou(const BinaryMask& a, const BinaryMask& b) {
  const Overlap o = overlap(a, b);
  return iou_of(o.a, o.b, o.both);
}

std::string to_string(EvalMode mode) { return mode == EvalMode::WholeMask ? "whole_mask" : "per_instance"; }

EvalMode parse_eval_mode(const std::string& text) {
  if (text == "whole_mask") return EvalMode::WholeMask;
  if (text == "per_instance") return EvalMode::PerInstance;
  throw Error(ErrorCode::ConfigError, "unknown evaluation mode '" + text + "'");
}

EvalReport evaluate_dataset(const std::vector<InstanceLabelMap>& pred, const std::vector<InstanceLabelMap>& gt,
                            EvalMode mode, const std::vector<std::string>& image_ids) {
  if (pred.empty() && gt.empty()) throw Error(ErrorCode::EmptyDataset, "nothing to evaluate");
  if (pred.size() != gt.size()) throw Error(ErrorCode::InvalidArgument, "prediction and ground truth counts differ");
  if (!image_ids.empty() && image_ids.size() != pred.size()) {
    throw Error(ErrorCode::InvalidArgument, "image id count differs from dataset size");
  }
  EvalReport report;
  report.mode = mode;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ImageScore s;
    if (mode == EvalMode::WholeMask) {
      const BinaryMask p = pred[i].foreground();
      const BinaryMask g = gt[i].foreground();
      s.dsc = dice(p, g);
      s.iou = iou(p, g);
    } else {
      s = score_instances(pred[i], gt[i]);
    }
    s.image_id = image_ids.empty() ? fmt::format("{}", i) : image_ids[i];
    report.mean_dsc += s.dsc;
    report.mean_iou += s.iou;
    report.per_image.push_back(std::move(s));
  }
  report.mean_dsc /= static_cast<double>(pred.size());
  report.mean_iou /= static_cast<double>(pred.size());
  return report;
}

void EvalReport::write_csv(std::ostream& out) const {
  out << "image_id,mode,dsc,iou\n";
  for (const auto& s : per_image) out << fmt::format("{},{},{},{}\n", s.image_id, to_string(mode), s.dsc, s.iou);
  out << fmt::format("mean,{},{},{}\n", to_string(mode), mean_dsc, mean_iou);
}

std::string EvalReport::summary() const {
  return fmt::format("{} images ({}): mean DSC {:.4f}, mean IoU {:.4f}\n", per_image.size(), to_string(mode),
                     mean_dsc, mean_iou);
}

}  // namespace subcellsam
