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

#ifndef ASF_POINTCLOUD_H_
#define ASF_POINTCLOUD_H_

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "asf/sphgeom.h"

namespace asf {

inline constexpr int kCloudSize = 1024;
inline constexpr double kRegionOffset = 0.5;  // m, along the ray past the hit
inline constexpr double kRegionRadius = 1.0;  // m, search radius

enum class Frame { kWorld, kCanonical };

struct PointCloud {
  std::vector<Vec3> points;
  Frame frame = Frame::kWorld;

  size_t size() const { return points.size(); }
  Vec3 Centroid() const;
};

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
  bool is_wall = false;
  bool is_scatterer = false;

  // Throws InvalidArgument on out-of-range indices or degenerate triangles
  // (area <= 1e-12 m^2).
  void Validate() const;
  double TriangleArea(size_t t) const;
  double SurfaceArea() const;
};

// Area-uniform samples on the mesh surface.
PointCloud SampleSurface(const TriangleMesh& mesh, int n, Rng& rng);

// Greedy max-min subset. The seeded overload starts from a uniformly drawn
// index; output points are exact copies of input points.
PointCloud FarthestPointSample(const PointCloud& pc, int n, Rng& rng);
PointCloud FarthestPointSample(const PointCloud& pc, int n, int start_index);
std::vector<int> FarthestPointIndices(const std::vector<Vec3>& pts, int n, int start_index);

// Proper rotation taking the unit propagation direction `incoming` to -x.
// Minimal rotation; the antipodal case (+x) rotates about +z by pi.
Mat3 IncomingAlignment(const Vec3& incoming);

// Centres at the centroid, then rotates with IncomingAlignment(incoming).
PointCloud AlignIncoming(const PointCloud& pc, const Direction& incoming);
PointCloud AlignIncoming(const PointCloud& pc, const Vec3& incoming);

// Uniform scale about the bounding-box centre so that the longest box side
// equals `target`. Throws InvalidArgument for a degenerate box.
PointCloud RescaleLongestDim(const PointCloud& pc, double target);
TriangleMesh RescaleLongestDim(const TriangleMesh& mesh, double target);

// Uniform random rotation (Shoemake's quaternion method).
Mat3 RandomRotation(Rng& rng);

// Surface points of every scatterer in a frame, bucketed in a uniform hash
// grid (0.5 m cells) for fixed-radius queries.
class RegionIndex {
 public:
  RegionIndex() = default;
  RegionIndex(std::vector<Vec3> points, std::vector<int> object_ids, double cell_size = 0.5);

  // Samples every scatterer mesh at `density` points per m^2.
  static RegionIndex FromMeshes(const std::vector<const TriangleMesh*>& meshes,
                                const std::vector<int>& object_ids, double density, uint64_t seed);

  // Indices of points with |p - center| <= radius.
  std::vector<int> Query(const Vec3& center, double radius) const;

  const std::vector<Vec3>& points() const { return points_; }
  const std::vector<int>& object_ids() const { return object_ids_; }
  bool empty() const { return points_.empty(); }

 private:
  int64_t Key(int64_t ix, int64_t iy, int64_t iz) const;

  std::vector<Vec3> points_;
  std::vector<int> object_ids_;
  double cell_size_ = 0.5;
  std::unordered_map<int64_t, std::vector<int>> cells_;
};

// Scatterer points within 1 m of hit + 0.5 m * ray_dir, resampled to 1024
// by FPS. Fewer points are padded by repetition with jitter below 1e-6 m.
// Throws EmptyRegion when nothing lies inside the ball.
PointCloud ExtractRegion(const RegionIndex& index, const Vec3& hit_point, const Vec3& ray_dir,
                         uint64_t seed);

// Same, with the region centre given directly.
PointCloud ExtractRegionAt(const RegionIndex& index, const Vec3& center, uint64_t seed);

// Fixed-size cloud: FPS down or jittered repetition up to `n`.
PointCloud ResampleToCount(const PointCloud& pc, int n, Rng& rng);

// Wavefront OBJ (v / f lines; polygons are fan-triangulated).
TriangleMesh LoadObj(const std::string& path);
void SaveObj(const TriangleMesh& mesh, const std::string& path);

// Mesh primitives used by scenes and tests.
TriangleMesh MakeSphereMesh(double radius, const Vec3& center, int level = 3);
// Axis-aligned box; `inward` flips the winding so normals face inside.
TriangleMesh MakeBoxMesh(const Vec3& min_corner, const Vec3& max_corner, bool inward);
// Square in the plane z = height, normal +z.
TriangleMesh MakeFloorMesh(double half_extent, double height = 0.0);

}  // namespace asf

#endif  // ASF_POINTCLOUD_H_
