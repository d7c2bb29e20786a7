#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "dueb/raster.hpp"
#include "dueb/synthgen.hpp"

using namespace dueb;

TEST(Synthgen, SameIndexIsBitIdentical) {
  SceneSpec spec;
  spec.noise_std = 0.0;
  const Scene a = generate_scene(spec, 5);
  const Scene b = generate_scene(spec, 5);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.label, b.label);

  spec.noise_std = 0.05;
  EXPECT_EQ(generate_scene(spec, 9).image, generate_scene(spec, 9).image);
  EXPECT_NE(generate_scene(spec, 9).image, generate_scene(spec, 10).image);
}

TEST(Synthgen, EmptyRangeGivesBackgroundOnly) {
  SceneSpec spec;
  spec.min_shapes = 0;
  spec.max_shapes = 0;
  for (int i = 0; i < 5; ++i) {
    const Scene s = generate_scene(spec, i);
    for (const auto v : s.label.data()) ASSERT_EQ(v, 0);
  }
}

TEST(Synthgen, ValuesInRangeAndBackgroundPresent) {
  SceneSpec spec;
  spec.noise_std = 0.2;
  for (int i = 0; i < 20; ++i) {
    const Scene s = generate_scene(spec, i);
    ASSERT_EQ(s.image.shape(), (Shape{1, 3, 64, 64}));
    ASSERT_EQ(s.label.size(), 64u * 64u);
    for (const double v : s.image.data()) ASSERT_TRUE(v >= 0.0 && v <= 1.0);
    bool background = false;
    for (const auto v : s.label.data()) {
      ASSERT_GE(v, 0);
      ASSERT_LT(v, spec.num_classes);
      background = background || v == 0;
    }
    EXPECT_TRUE(background) << "scene " << i;
  }
}

TEST(Synthgen, EveryForegroundClassOccursIn200Scenes) {
  SceneSpec spec;
  spec.num_classes = 4;
  std::set<int> seen;
  for (int i = 0; i < 200; ++i)
    for (const auto v : generate_scene(spec, i).label.data()) seen.insert(v);
  for (int c = 1; c < 4; ++c) EXPECT_TRUE(seen.count(c)) << "class " << c;
}

TEST(Synthgen, RejectsBadSpecs) {
  SceneSpec s;
  s.num_classes = 1;
  EXPECT_THROW(generate_scene(s, 0), std::invalid_argument);
  s = {};
  s.image_size = 7;
  EXPECT_THROW(generate_scene(s, 0), std::invalid_argument);
  s = {};
  s.min_shapes = 3;
  s.max_shapes = 2;
  EXPECT_THROW(validate(s), std::invalid_argument);
  s = {};
  s.noise_std = -0.1;
  EXPECT_THROW(validate(s), std::invalid_argument);
}

TEST(Partition, CountsFollowFloor) {
  const Partition half = split_partition({LabeledFraction(2), 100, 3});
  EXPECT_EQ(half.labeled.size(), 50u);
  EXPECT_EQ(half.unlabeled.size(), 50u);

  const Partition sixteenth = split_partition({LabeledFraction(16), 160, 3});
  EXPECT_EQ(sixteenth.labeled.size(), 10u);
  EXPECT_EQ(sixteenth.unlabeled.size(), 150u);

  const Partition odd = split_partition({LabeledFraction(8), 100, 3});
  EXPECT_EQ(odd.labeled.size(), 12u);
}

TEST(Partition, DisjointExhaustiveDeterministic) {
  const PartitionProtocol proto{LabeledFraction(4), 100, 17};
  const Partition a = split_partition(proto);
  const Partition b = split_partition(proto);
  EXPECT_EQ(a.labeled, b.labeled);
  EXPECT_EQ(a.unlabeled, b.unlabeled);

  std::set<int> all(a.labeled.begin(), a.labeled.end());
  for (int i : a.unlabeled) EXPECT_TRUE(all.insert(i).second) << "index " << i << " in both";
  EXPECT_EQ(all.size(), 100u);
  EXPECT_EQ(*all.begin(), 0);
  EXPECT_EQ(*all.rbegin(), 99);

  EXPECT_NE(split_partition({LabeledFraction(4), 100, 18}).labeled, a.labeled);
}

TEST(Partition, RejectsBadFractionAndSize) {
  EXPECT_THROW(LabeledFraction(3), std::invalid_argument);
  EXPECT_THROW(LabeledFraction::parse("2/8"), std::invalid_argument);
  EXPECT_THROW(LabeledFraction::parse("1/x"), std::invalid_argument);
  EXPECT_EQ(LabeledFraction::parse("1/16").denominator(), 16);
  EXPECT_EQ(LabeledFraction(8).str(), "1/8");
  EXPECT_THROW(split_partition({LabeledFraction(2), 15, 0}), std::invalid_argument);
}

TEST(Synthgen, DatasetDumpRoundTrips) {
  const auto dir = std::filesystem::temp_directory_path() / "dueb_dump_test";
  std::filesystem::remove_all(dir);
  SceneSpec spec;
  spec.image_size = 16;
  const PartitionProtocol proto{LabeledFraction(4), 16, 2};
  dump_dataset(spec, proto, dir);

  std::ifstream manifest(dir / "manifest.txt");
  const Partition part = split_partition(proto);
  std::string line;
  int rows = 0, labeled = 0;
  while (std::getline(manifest, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    int idx;
    std::string image, label, flag;
    ls >> idx >> image >> label >> flag;
    const Scene s = generate_scene(spec, idx);
    const Raster lr = read_pnm(dir / label);
    ASSERT_EQ(lr.channels, 1);
    for (std::size_t i = 0; i < s.label.size(); ++i) ASSERT_EQ(lr.pixels[i], s.label[i]);
    const Raster ir = read_pnm(dir / image);
    EXPECT_EQ(ir.channels, 3);
    EXPECT_EQ(ir.width, 16);
    labeled += flag == "labeled";
    ++rows;
  }
  EXPECT_EQ(rows, 16);
  EXPECT_EQ(labeled, static_cast<int>(part.labeled.size()));
  std::filesystem::remove_all(dir);
}
