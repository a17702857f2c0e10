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

#include "asf/pointcloud.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>

#include "asf/error.h"
#include "gtest/gtest.h"

namespace asf {
namespace {

TriangleMesh UnitSquare() {
  TriangleMesh m;
  m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(1, 1, 0), Vec3(0, 1, 0)};
  m.triangles = {{0, 1, 2}, {0, 2, 3}};
  return m;
}

double MinPairwise(const std::vector<Vec3>& p) {
  double best = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < p.size(); ++i) {
    for (size_t j = i + 1; j < p.size(); ++j) best = std::min(best, (p[i] - p[j]).norm());
  }
  return best;
}

TEST(SampleSurfaceTest, AreaUniformOnSquare) {
  Rng rng(1);
  const PointCloud pc = SampleSurface(UnitSquare(), 100000, rng);
  int q[4] = {0, 0, 0, 0};
  for (const Vec3& p : pc.points) {
    ASSERT_GE(p.x(), 0.0);
    ASSERT_LE(p.x(), 1.0);
    q[(p.x() >= 0.5 ? 1 : 0) + (p.y() >= 0.5 ? 2 : 0)]++;
  }
  for (int c : q) EXPECT_NEAR(c, 25000, 500);
}

TEST(SampleSurfaceTest, SingleTriangleAndDeterminism) {
  TriangleMesh m;
  m.vertices = {Vec3(0, 0, 0), Vec3(2, 0, 0), Vec3(0, 1, 1)};
  m.triangles = {{0, 1, 2}};
  Rng a(7), b(7);
  const PointCloud pa = SampleSurface(m, 500, a);
  const PointCloud pb = SampleSurface(m, 500, b);
  const Vec3 e1 = m.vertices[1] - m.vertices[0];
  const Vec3 e2 = m.vertices[2] - m.vertices[0];
  for (size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa.points[i], pb.points[i]);
    // Solve p = u e1 + v e2 in the triangle plane.
    Eigen::Matrix<double, 3, 2> basis;
    basis << e1, e2;
    const Eigen::Vector2d uv = basis.colPivHouseholderQr().solve(pa.points[i]);
    EXPECT_GE(uv[0], -1e-12);
    EXPECT_GE(uv[1], -1e-12);
    EXPECT_LE(uv[0] + uv[1], 1.0 + 1e-12);
  }
  TriangleMesh empty;
  EXPECT_THROW(SampleSurface(empty, 10, a), InvalidArgument);
}

TEST(FpsTest, CollinearExample) {
  PointCloud pc;
  pc.points = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(10, 0, 0)};
  const PointCloud out = FarthestPointSample(pc, 2, 0);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out.points[0], Vec3(0, 0, 0));
  EXPECT_EQ(out.points[1], Vec3(10, 0, 0));
  EXPECT_THROW(FarthestPointSample(pc, 4, 0), InvalidArgument);
}

TEST(FpsTest, FullSelectionIsInputSet) {
  Rng rng(2);
  PointCloud pc;
  for (int i = 0; i < 50; ++i) pc.points.push_back(UniformUnitVector(rng));
  const auto idx = FarthestPointIndices(pc.points, 50, 3);
  std::set<int> s(idx.begin(), idx.end());
  EXPECT_EQ(s.size(), 50u);
}

TEST(FpsTest, DominatesRandomSubsets) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Rng gen(5);
  PointCloud pc;
  for (int i = 0; i < 10000; ++i) pc.points.emplace_back(u(gen), u(gen), u(gen));
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const PointCloud fps = FarthestPointSample(pc, 1024, rng);
    std::vector<Vec3> rnd = pc.points;
    std::shuffle(rnd.begin(), rnd.end(), rng);
    rnd.resize(1024);
    EXPECT_GE(MinPairwise(fps.points), MinPairwise(rnd));
    if (seed == 0) {
      std::set<std::array<double, 3>> in;
      for (const Vec3& p : pc.points) in.insert({p.x(), p.y(), p.z()});
      for (const Vec3& p : fps.points) EXPECT_TRUE(in.count({p.x(), p.y(), p.z()}));
    }
  }
}

TEST(AlignTest, MinusXIsIdentityAndMinusYRotates) {
  PointCloud pc;
  pc.points = {Vec3(0, 1, 0), Vec3(0, -1, 0), Vec3(2, 0, 1), Vec3(-2, 0, -1)};
  const PointCloud same = AlignIncoming(pc, -Vec3::UnitX());
  for (size_t i = 0; i < pc.size(); ++i) EXPECT_LT((same.points[i] - pc.points[i]).norm(), 1e-15);
  EXPECT_EQ(same.frame, Frame::kCanonical);

  const PointCloud rot = AlignIncoming(pc, -Vec3::UnitY());
  EXPECT_LT((rot.points[0] - Vec3(1, 0, 0)).norm(), 1e-12);
  EXPECT_LT((IncomingAlignment(-Vec3::UnitY()) * -Vec3::UnitY() + Vec3::UnitX()).norm(), 1e-12);
}

TEST(AlignTest, IsometryAndAntipodalCase) {
  Rng rng(8);
  PointCloud pc;
  for (int i = 0; i < 40; ++i) pc.points.push_back(3.0 * UniformUnitVector(rng) + Vec3(1, 2, 3));
  for (int t = 0; t < 20; ++t) {
    const Vec3 in = UniformUnitVector(rng);
    const Mat3 r = IncomingAlignment(in);
    EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
    EXPECT_LT((r * in + Vec3::UnitX()).norm(), 1e-12);
    const PointCloud out = AlignIncoming(pc, in);
    for (size_t i = 0; i < pc.size(); i += 7) {
      for (size_t j = i + 1; j < pc.size(); j += 5) {
        EXPECT_NEAR((out.points[i] - out.points[j]).norm(), (pc.points[i] - pc.points[j]).norm(),
                    1e-12);
      }
    }
  }
  const Mat3 flip = IncomingAlignment(Vec3::UnitX());
  EXPECT_LT((flip * Vec3::UnitX() + Vec3::UnitX()).norm(), 1e-12);
  EXPECT_LT((flip * Vec3::UnitZ() - Vec3::UnitZ()).norm(), 1e-12);
}

TEST(RescaleTest, Examples) {
  PointCloud box;
  box.points = {Vec3(0, 0, 0), Vec3(4, 1, 1)};
  const PointCloud s = RescaleLongestDim(box, 2.0);
  const Vec3 ext = s.points[1] - s.points[0];
  EXPECT_NEAR(ext.x(), 2.0, 1e-12);
  EXPECT_NEAR(ext.y(), 0.5, 1e-12);
  EXPECT_NEAR(ext.z(), 0.5, 1e-12);
  const PointCloud twice = RescaleLongestDim(s, 2.0);
  for (size_t i = 0; i < 2; ++i) EXPECT_LT((twice.points[i] - s.points[i]).norm(), 1e-12);
  PointCloud flat;
  flat.points = {Vec3(1, 1, 1), Vec3(1, 1, 1)};
  EXPECT_THROW(RescaleLongestDim(flat, 2.0), InvalidArgument);
}

TEST(RotationTest, OrthogonalAndUniform) {
  Rng rng(13);
  const int n = 12000;
  int bins[6] = {0, 0, 0, 0, 0, 0};
  for (int i = 0; i < n; ++i) {
    const Mat3 r = RandomRotation(rng);
    EXPECT_LT((r.transpose() * r - Mat3::Identity()).norm(), 1e-12);
    EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
    const Vec3 v = r * Vec3::UnitX();
    // Six equal-area bands in z (Archimedes) crossed with nothing else.
    bins[std::min(5, static_cast<int>((v.z() + 1.0) * 3.0))]++;
  }
  double chi2 = 0.0;
  for (int b : bins) chi2 += (b - n / 6.0) * (b - n / 6.0) / (n / 6.0);
  EXPECT_LT(chi2, 20.5);  // p = 0.001 at 5 dof
}

TEST(RegionTest, CenterMembershipAndPadding) {
  const TriangleMesh a = MakeSphereMesh(0.4, Vec3(0, 0, 0), 3);
  const TriangleMesh b = MakeSphereMesh(0.4, Vec3(5, 0, 0), 3);
  const RegionIndex index = RegionIndex::FromMeshes({&a, &b}, {0, 1}, 2000.0, 3);
  ASSERT_FALSE(index.empty());
  const Vec3 hit(-0.4, 0, 0);
  const Vec3 center = hit + kRegionOffset * Vec3::UnitX();
  const auto ids = index.Query(center, kRegionRadius);
  size_t a_count = 0;
  for (size_t i = 0; i < index.points().size(); ++i) {
    if (index.object_ids()[i] == 0) ++a_count;
  }
  EXPECT_EQ(ids.size(), a_count);
  for (int i : ids) {
    EXPECT_EQ(index.object_ids()[i], 0);
    EXPECT_LE((index.points()[i] - center).norm(), kRegionRadius);
  }
  const PointCloud region = ExtractRegion(index, hit, Vec3::UnitX(), 11);
  EXPECT_EQ(region.size(), static_cast<size_t>(kCloudSize));
  for (const Vec3& p : region.points) EXPECT_LT(p.norm(), 0.4 + 1e-3);

  // Under-filled: a few points get repeated with microscopic jitter.
  RegionIndex small({Vec3(0, 0, 0), Vec3(0.1, 0, 0)}, {0, 0});
  const PointCloud padded = ExtractRegionAt(small, Vec3::Zero(), 4);
  ASSERT_EQ(padded.size(), static_cast<size_t>(kCloudSize));
  for (const Vec3& p : padded.points) {
    const double d = std::min(p.norm(), (p - Vec3(0.1, 0, 0)).norm());
    EXPECT_LT(d, 1e-6);
  }
  EXPECT_THROW(ExtractRegionAt(small, Vec3(3, 0, 0), 4), EmptyRegion);
}

TEST(MeshTest, ObjRoundTripAndValidation) {
  const TriangleMesh box = MakeBoxMesh(Vec3(0, 0, 0), Vec3(5, 4, 3), true);
  EXPECT_NEAR(box.SurfaceArea(), 2.0 * (20 + 15 + 12), 1e-9);
  const auto path = std::filesystem::temp_directory_path() / "asf_box_test.obj";
  SaveObj(box, path.string());
  const TriangleMesh back = LoadObj(path.string());
  std::filesystem::remove(path);
  EXPECT_EQ(back.triangles, box.triangles);
  ASSERT_EQ(back.vertices.size(), box.vertices.size());
  for (size_t i = 0; i < box.vertices.size(); ++i) {
    EXPECT_LT((back.vertices[i] - box.vertices[i]).norm(), 1e-12);
  }
  EXPECT_THROW(LoadObj("/nonexistent/file.obj"), IoError);
  TriangleMesh bad;
  bad.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0)};
  bad.triangles = {{0, 1, 2}};
  EXPECT_THROW(bad.Validate(), InvalidArgument);
  const TriangleMesh sphere = MakeSphereMesh(1.0, Vec3::Zero(), 4);
  EXPECT_NEAR(sphere.SurfaceArea(), 4.0 * std::numbers::pi, 0.02);
}

}  // namespace
}  // namespace asf
