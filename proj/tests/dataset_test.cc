// Copyright 2026 The asfield Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "asf/dataset.h"

#include <cmath>
#include <sstream>

#include "asf/error.h"
#include "gtest/gtest.h"

namespace asf {
namespace {

DatasetSpec SmallSpec() {
  DatasetSpec spec;
  spec.count = 6;
  spec.frequencies = {125.0, 500.0};
  spec.seed = 4;
  spec.composite_fraction = 0.5;
  spec.cloud_size = 64;
  spec.surface_samples = 256;
  return spec;
}

TEST(DatasetTest, GenerationShapeAndDeterminism) {
  const Dataset a = GenerateDataset(SmallSpec());
  const Dataset b = GenerateDataset(SmallSpec());
  ASSERT_EQ(a.records.size(), 6u);
  int augmented = 0;
  for (size_t i = 0; i < a.records.size(); ++i) {
    const DatasetRecord& r = a.records[i];
    EXPECT_EQ(r.id, static_cast<int>(i));
    EXPECT_EQ(r.cloud.size(), 64u);
    EXPECT_EQ(r.labels.size(), 2u);
    EXPECT_LT(r.cloud.Centroid().norm(), 1e-12 + (r.augmented ? 1e-9 : 0.0));
    for (const auto& [f, l] : r.labels) {
      EXPECT_EQ(l.sh.coeffs.size(), 16u);
      EXPECT_EQ(l.pressures.size(), 642u);
    }
    augmented += r.augmented ? 1 : 0;
    EXPECT_EQ(r.cloud.points, b.records[i].cloud.points);
    EXPECT_EQ(r.labels.at(500.0).sh.coeffs, b.records[i].labels.at(500.0).sh.coeffs);
  }
  EXPECT_EQ(augmented, 3);
  EXPECT_EQ(a.Frequencies(), (std::vector<double>{125.0, 500.0}));
}

TEST(DatasetTest, CompositeLongestDimensionInRange) {
  Rng rng(3);
  DatasetSpec spec = SmallSpec();
  spec.composite_fraction = 1.0;
  spec.count = 8;
  const Dataset ds = GenerateDataset(spec);
  for (const auto& r : ds.records) {
    ASSERT_EQ(r.spheres.size(), 2u);
    EXPECT_TRUE(r.composite);
    const double span = std::max((r.spheres[0].center - r.spheres[1].center).norm() +
                                     r.spheres[0].radius + r.spheres[1].radius,
                                 2.0 * std::max(r.spheres[0].radius, r.spheres[1].radius));
    EXPECT_GE(span, 1.0 - 1e-9);
    EXPECT_LE(span, 2.0 + 1e-9);
  }
}

TEST(DatasetTest, CenteredSphereLabelIsRotationInvariant) {
  Dataset ds;
  DatasetRecord rec;
  rec.spheres = {SphereScatterer{0.6, Vec3::Zero()}};
  for (int i = 0; i < 8; ++i) rec.cloud.points.push_back(Vec3(i, 0, 0));
  auto grid = std::make_shared<const FieldGrid>(Icosphere(ds.grid_level));
  LabelRecord(&rec, {250.0}, grid, ds.r_ref, ds.sh_order);
  ds.records.push_back(rec);
  const Dataset aug = RandomRotationAugment(ds, 17);
  ASSERT_EQ(aug.records.size(), 1u);
  EXPECT_TRUE(aug.records[0].augmented);
  const auto& p0 = rec.labels.at(250.0).pressures;
  const auto& p1 = aug.records[0].labels.at(250.0).pressures;
  for (size_t i = 0; i < p0.size(); ++i) EXPECT_NEAR(p0[i], p1[i], 1e-9);
  EXPECT_GT((aug.records[0].cloud.points[3] - rec.cloud.points[3]).norm(), 1e-3);
}

TEST(DatasetTest, SplitIsDeterministicAndDisjoint) {
  const Split s = SplitDataset(100, 9);
  EXPECT_EQ(s.train.size(), 90u);
  EXPECT_EQ(s.test.size(), 10u);
  std::vector<int> all = s.train;
  all.insert(all.end(), s.test.begin(), s.test.end());
  std::sort(all.begin(), all.end());
  for (int i = 0; i < 100; ++i) EXPECT_EQ(all[i], i);
  const Split t = SplitDataset(100, 9);
  EXPECT_EQ(s.test, t.test);
  EXPECT_NE(SplitDataset(100, 10).test, s.test);
}

TEST(DatasetTest, JsonlRoundTrip) {
  const Dataset a = GenerateDataset(SmallSpec());
  std::stringstream buf;
  WriteJsonl(a, buf);
  const Dataset b = ReadJsonl(buf);
  ASSERT_EQ(b.records.size(), a.records.size());
  EXPECT_EQ(b.grid_level, a.grid_level);
  EXPECT_DOUBLE_EQ(b.r_ref, a.r_ref);
  for (size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(b.records[i].cloud.points, a.records[i].cloud.points);
    EXPECT_EQ(b.records[i].augmented, a.records[i].augmented);
    EXPECT_EQ(b.records[i].labels.at(125.0).sh.coeffs, a.records[i].labels.at(125.0).sh.coeffs);
    EXPECT_EQ(b.records[i].labels.at(125.0).pressures, a.records[i].labels.at(125.0).pressures);
  }
}

TEST(DatasetTest, ErrorsAreTyped) {
  DatasetSpec spec = SmallSpec();
  spec.count = 0;
  EXPECT_THROW(GenerateDataset(spec), InvalidArgument);
  spec = SmallSpec();
  spec.frequencies = {300.0};
  EXPECT_THROW(GenerateDataset(spec), InvalidArgument);
  EXPECT_THROW(ReadJsonl(std::string("/nonexistent/ds.jsonl")), IoError);
}

}  // namespace
}  // namespace asf
