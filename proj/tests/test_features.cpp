#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "subcellsam/features.hpp"

using namespace subcellsam;

TEST(RegionProps, Square) {
  const auto f = region_props(fixtures::rect({20, 20}, 4, 4, 14, 14));
  EXPECT_EQ(f.area, 100.0);
  EXPECT_EQ(f.extent, 1.0);
  EXPECT_EQ(f.aspect_ratio, 1.0);
  EXPECT_EQ(f.solidity, 1.0);
  EXPECT_NEAR(f.eccentricity, 0.0, 1e-12);
  // Uniform square of side 10: variance (100 - 1) / 12 + 1 / 12 per axis.
  EXPECT_NEAR(f.major_axis, 4.0 * std::sqrt(100.0 / 12.0), 1e-9);
}

TEST(RegionProps, Strip) {
  const auto f = region_props(fixtures::rect({20, 5}, 3, 2, 13, 3));
  EXPECT_EQ(f.area, 10.0);
  EXPECT_EQ(f.aspect_ratio, 10.0);
  // var_x = (n^2 - 1)/12 + 1/12 = n^2/12, var_y = 1/12.
  EXPECT_NEAR(f.eccentricity, std::sqrt(1.0 - 1.0 / 100.0), 1e-12);
  EXPECT_NEAR(f.eccentricity, 0.995, 1e-3);
  EXPECT_NEAR(f.major_axis, 4.0 * std::sqrt(100.0 / 12.0), 1e-9);
  EXPECT_NEAR(f.minor_axis, 4.0 * std::sqrt(1.0 / 12.0), 1e-9);
  EXPECT_EQ(f.solidity, 1.0);
}

TEST(RegionProps, Disc) {
  for (double r : {10.0, 20.0, 30.5}) {
    const auto f = region_props(fixtures::disc({80, 80}, 40, 40, r));
    EXPECT_GE(f.circularity, 0.9) << r;
    EXPECT_LE(f.circularity, 1.1) << r;
    EXPECT_NEAR(f.equivalent_diameter * f.equivalent_diameter * M_PI / 4.0, f.area, 1e-9);
    EXPECT_LT(f.eccentricity, 0.1);
    EXPECT_LE(f.solidity, 1.0);
    EXPECT_GT(f.solidity, 0.9);
  }
}

TEST(RegionProps, DoublingDiscSize) {
  for (double r : {8.0, 12.0, 20.0}) {
    const auto a = region_props(fixtures::disc({100, 100}, 50, 50, r));
    const auto b = region_props(fixtures::disc({100, 100}, 50, 50, 2 * r));
    EXPECT_NEAR(b.area / a.area, 4.0, 0.2) << r;
    EXPECT_NEAR(b.perimeter / a.perimeter, 2.0, 0.1) << r;
  }
}

TEST(RegionProps, RotationBy90Degrees) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    auto m = fixtures::random_mask({9, 13}, rng, 0.5);
    m.set(4, 6);
    BinaryMask rot({13, 9});
    for (int y = 0; y < 13; ++y) {
      for (int x = 0; x < 9; ++x) rot.set(12 - y, x, m(x, y));
    }
    const auto a = region_props(m), b = region_props(rot);
    EXPECT_DOUBLE_EQ(a.area, b.area);
    EXPECT_NEAR(a.perimeter, b.perimeter, 1e-9);
    EXPECT_NEAR(a.eccentricity, b.eccentricity, 1e-9);
    EXPECT_NEAR(a.major_axis, b.major_axis, 1e-9);
    EXPECT_NEAR(a.solidity, b.solidity, 1e-9);
    EXPECT_NEAR(a.extent, b.extent, 1e-12);
  }
}

TEST(RegionProps, IntegerScaling) {
  // Replicating each pixel into a k x k block scales area by k^2 and axes by k
  // up to the 1/12 pixel-extent term.
  const auto base = fixtures::rect({10, 10}, 2, 3, 8, 5);
  const int k = 3;
  BinaryMask big({30, 30});
  for (int y = 0; y < 30; ++y) {
    for (int x = 0; x < 30; ++x) big.set(x, y, base(x / k, y / k));
  }
  const auto a = region_props(base), b = region_props(big);
  EXPECT_DOUBLE_EQ(b.area, a.area * k * k);
  EXPECT_NEAR(b.major_axis, a.major_axis * k, 1e-9);
  EXPECT_DOUBLE_EQ(b.aspect_ratio, a.aspect_ratio);
  EXPECT_DOUBLE_EQ(b.extent, a.extent);
}

TEST(RegionProps, EmptyThrows) { EXPECT_THROW(region_props(BinaryMask({3, 3})), Error); }

TEST(IntensityStats, Examples) {
  const auto m = fixtures::rect({5, 5}, 1, 1, 4, 4);
  const auto c = intensity_stats(m, Channel({5, 5}, 0.6f));
  EXPECT_FLOAT_EQ(c.mean, 0.6f);
  EXPECT_EQ(c.std, 0.0);

  BinaryMask two({4, 1});
  two.set(0, 0);
  two.set(3, 0);
  Channel ch({4, 1}, 0.0f);
  ch(0, 0) = 0.2f;
  ch(3, 0) = 0.8f;
  const auto t = intensity_stats(two, ch);
  EXPECT_NEAR(t.mean, 0.5, 1e-7);
  EXPECT_NEAR(t.std, 0.3, 1e-7);
  EXPECT_FLOAT_EQ(t.min, 0.2f);
  EXPECT_FLOAT_EQ(t.max, 0.8f);

  BinaryMask one({4, 1});
  one.set(1, 0);
  ch(1, 0) = 0.35f;
  const auto o = intensity_stats(one, ch);
  EXPECT_EQ(o.min, o.max);
  EXPECT_EQ(o.mean, o.min);
  EXPECT_EQ(o.std, 0.0);
}

TEST(Correlation, Examples) {
  const auto m = fixtures::rect({6, 1}, 0, 0, 6, 1);
  const std::vector<float> av{0.1f, 0.4f, 0.3f, 0.9f, 0.5f, 0.2f};
  const std::vector<float> bv{0.2f, 0.1f, 0.6f, 0.7f, 0.3f, 0.4f};
  Channel a({6, 1}, av), b({6, 1}, bv), inv({6, 1}, 0.0f);
  for (int x = 0; x < 6; ++x) inv(x, 0) = 1.0f - a(x, 0);
  EXPECT_NEAR(*correlation_feature(m, a, a), 1.0, 1e-12);
  EXPECT_NEAR(*correlation_feature(m, a, inv), -1.0, 1e-6);

  // Direct Pearson formula on the six pixels.
  double ma = 0, mb = 0;
  for (int i = 0; i < 6; ++i) {
    ma += av[i];
    mb += bv[i];
  }
  ma /= 6;
  mb /= 6;
  double sab = 0, saa = 0, sbb = 0;
  for (int i = 0; i < 6; ++i) {
    sab += (av[i] - ma) * (bv[i] - mb);
    saa += (av[i] - ma) * (av[i] - ma);
    sbb += (bv[i] - mb) * (bv[i] - mb);
  }
  EXPECT_NEAR(*correlation_feature(m, a, b), sab / std::sqrt(saa * sbb), 1e-9);

  EXPECT_FALSE(correlation_feature(m, a, Channel({6, 1}, 0.5f)).has_value());
  BinaryMask one({6, 1});
  one.set(2, 0);
  EXPECT_FALSE(correlation_feature(one, a, b).has_value());
}

namespace {

struct TwoCells {
  Size size{64, 40};
  MultiChannelImage image;
  SegmentedImage seg;

  TwoCells() {
    const auto cell1 = fixtures::disc(size, 16, 20, 10);
    const auto cell2 = fixtures::disc(size, 46, 20, 10);
    const auto nuc1 = fixtures::disc(size, 16, 20, 4);
    const auto nuc2 = fixtures::disc(size, 46, 20, 4);
    Channel nucleus = fixtures::paint(mask_union(nuc1, nuc2), 0.9f, 0.05f);
    Channel marker = fixtures::paint(mask_union(cell1, cell2), 0.6f, 0.05f);
    Channel sub(size, 0.05f);
    image = MultiChannelImage({nucleus, marker, sub}, {{0, ChannelRole::Nucleus},
                                                       {1, ChannelRole::CellMarker},
                                                       {2, ChannelRole::SubcellularMarker}});
    seg.cells = InstanceLabelMap{Raster<std::uint32_t>(size, 0)};
    for (int y = 0; y < size.height; ++y) {
      for (int x = 0; x < size.width; ++x) {
        if (cell1(x, y)) seg.cells.raster(x, y) = 1;
        if (cell2(x, y)) seg.cells.raster(x, y) = 2;
      }
    }
    seg.cell_nucleus_ids = {1, 2};
    seg.nuclei = {NucleusRecord{1, nuc1, {16, 20}, {}}, NucleusRecord{2, nuc2, {46, 20}, {}}};
    auto entity = [&](int cell, double x, double y) {
      auto m = fixtures::disc(size, x, y, 1.5);
      return SubcellularEntity{cell, m, m.area()};
    };
    seg.entities = {entity(1, 12, 16), entity(1, 20, 24), entity(2, 50, 20)};
  }
};

std::string to_csv(const FeatureTable& t) {
  std::ostringstream out;
  t.write_csv(out);
  return out.str();
}

}  // namespace

TEST(ExtractAll, NoCells) {
  TwoCells f;
  SegmentedImage empty{InstanceLabelMap{Raster<std::uint32_t>(f.size, 0)}, {}, {}, {}};
  const auto t = extract_all(f.image, empty, "img");
  EXPECT_EQ(t.size(), 0u);
  const auto header = to_csv(t);
  EXPECT_EQ(header.substr(0, header.find('\n')).find("image_id,well_id,level,object_id,cell_id,area"), 0u);
}

TEST(ExtractAll, RowCounts) {
  TwoCells f;
  const auto t = extract_all(f.image, f.seg, "img");
  int nuclei = 0, cells = 0, entities = 0;
  for (const auto& r : t.rows()) {
    nuclei += r.level == ObjectLevel::Nucleus;
    cells += r.level == ObjectLevel::Cell;
    entities += r.level == ObjectLevel::Subcellular;
  }
  EXPECT_EQ(nuclei, 2);
  EXPECT_EQ(cells, 2);
  EXPECT_EQ(entities, 3);
  const auto epc = *FeatureTable::column_index("entities_per_cell");
  for (const auto& r : t.rows()) {
    if (r.level != ObjectLevel::Cell) continue;
    EXPECT_EQ(*r.values[epc], r.cell_id == 1 ? 2.0 : 1.0);
  }
}

TEST(ExtractAll, DeterministicBytes) {
  TwoCells f;
  EXPECT_EQ(to_csv(extract_all(f.image, f.seg, "img")), to_csv(extract_all(f.image, f.seg, "img")));
}

TEST(ExtractAll, LayoutSuppliesWell) {
  TwoCells f;
  PlateLayout layout({Well{"B03", WellRole::NeutralControl, "", std::nullopt, {"img"}}});
  const auto t = extract_all(f.image, f.seg, "img", &layout);
  for (const auto& r : t.rows()) EXPECT_EQ(r.well_id, "B03");
  try {
    extract_all(f.image, f.seg, "other", &layout);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LayoutMismatch);
  }
}

TEST(FeatureTable, CsvRoundTrip) {
  TwoCells f;
  const auto t = extract_all(f.image, f.seg, "img");
  const auto text = to_csv(t);
  std::istringstream in(text);
  const auto back = FeatureTable::read_csv(in);
  ASSERT_EQ(back.size(), t.size());
  EXPECT_EQ(to_csv(back), text);
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_EQ(back.rows()[i].values, t.rows()[i].values);
}

TEST(FeatureTable, RejectsBadRows) {
  FeatureTable t;
  FeatureRow row{"img", "", ObjectLevel::Cell, 1, 1,
                 std::vector<std::optional<double>>(FeatureTable::columns().size())};
  t.add(row);
  EXPECT_THROW(t.add(row), Error);
  row.object_id = 2;
  row.values.pop_back();
  EXPECT_THROW(t.add(row), Error);
  row.values.push_back(std::nan(""));
  EXPECT_THROW(t.add(row), Error);
}
