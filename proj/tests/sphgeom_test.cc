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

#include "asf/sphgeom.h"

#include <cmath>
#include <numbers>
#include <sstream>

#include "asf/error.h"
#include "gtest/gtest.h"

namespace asf {
namespace {

TEST(IcosphereTest, PointCountsFollowSubdivision) {
  EXPECT_EQ(IcospherePointCount(0), 12);
  EXPECT_EQ(IcospherePointCount(3), 642);
  for (int level = 0; level <= 4; ++level) {
    const FieldGrid g = Icosphere(level);
    EXPECT_EQ(static_cast<int64_t>(g.size()), IcospherePointCount(level));
    EXPECT_EQ(g.faces.size(), 20u << (2 * level));
    for (const Vec3& p : g.points) EXPECT_NEAR(p.norm(), 1.0, 1e-12);
  }
}

TEST(IcosphereTest, RejectsOutOfRangeLevels) {
  EXPECT_THROW(Icosphere(-1), InvalidArgument);
  EXPECT_THROW(Icosphere(kMaxGridLevel + 1), InvalidArgument);
}

TEST(IcosphereTest, SpacingIsNearlyUniform) {
  EXPECT_LT(NearestNeighbourSpacingRatio(Icosphere(3)), 1.5);
}

TEST(VoronoiTest, SolidAnglesSumToFourPi) {
  for (int level : {0, 2, 3}) {
    const auto w = VoronoiSolidAngles(Icosphere(level));
    double sum = 0.0;
    for (double x : w) {
      EXPECT_GT(x, 0.0);
      sum += x;
    }
    EXPECT_NEAR(sum, 4.0 * std::numbers::pi, 1e-9);
  }
}

TEST(SphericalTriangleTest, OctantIsHalfPi) {
  EXPECT_NEAR(SphericalTriangleArea(Vec3::UnitX(), Vec3::UnitY(), Vec3::UnitZ()),
              std::numbers::pi / 2.0, 1e-12);
}

TEST(CoordinatesTest, RoundTrip) {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const Vec3 v = UniformUnitVector(rng);
    EXPECT_LT((SphToCart(CartToSph(v)) - v).norm(), 1e-12);
  }
}

TEST(CoordinatesTest, PolesAndNonUnitInput) {
  const Direction north = CartToSph(Vec3::UnitZ());
  EXPECT_DOUBLE_EQ(north.theta, 0.0);
  EXPECT_DOUBLE_EQ(north.phi, 0.0);
  EXPECT_DOUBLE_EQ(CartToSph(-Vec3::UnitZ()).phi, 0.0);
  EXPECT_THROW(CartToSph(Vec3(2.0, 0.0, 0.0)), InvalidArgument);
}

TEST(CoordinatesTest, UniformDirectionsHaveZeroMean) {
  Rng rng(11);
  Vec3 mean = Vec3::Zero();
  const int n = 20000;
  for (int i = 0; i < n; ++i) mean += SphToCart(UniformDirection(rng));
  EXPECT_LT((mean / n).norm(), 0.03);
}

TEST(GridTest, NearestPointAndCsv) {
  const FieldGrid g = Icosphere(2);
  for (size_t i = 0; i < g.size(); i += 17) {
    EXPECT_EQ(NearestGridPoint(g, g.points[i]), static_cast<int>(i));
  }
  std::ostringstream out;
  WriteGridCsv(g, out);
  const std::string s = out.str();
  EXPECT_EQ(s.rfind("x,y,z\n", 0), 0u);
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), static_cast<long>(g.size() + 1));
}

}  // namespace
}  // namespace asf
