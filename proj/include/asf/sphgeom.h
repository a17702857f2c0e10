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

#ifndef ASF_SPHGEOM_H_
#define ASF_SPHGEOM_H_

#include <array>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <vector>

#include "Eigen/Core"
#include "Eigen/Geometry"

namespace asf {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Caller-owned generator state. Every stochastic routine takes one of these
// by reference so that results are reproducible from a seed.
using Rng = std::mt19937_64;

// Physics convention: theta is the polar angle from +z, phi the azimuth
// from +x in [0, 2pi). At the poles phi is 0.
struct Direction {
  double theta = 0.0;
  double phi = 0.0;
};

// Vertices of a subdivided icosahedron projected to the unit sphere.
struct FieldGrid {
  int subdivision_level = 0;
  std::vector<Vec3> points;
  // Triangles of the subdivided mesh, indices into `points`.
  std::vector<std::array<int, 3>> faces;

  size_t size() const { return points.size(); }
};

inline constexpr int kDefaultGridLevel = 3;  // 642 field points
inline constexpr int kMaxGridLevel = 6;

// Point count of an icosphere at `level`: 10 * 4^level + 2.
int64_t IcospherePointCount(int level);

// Throws InvalidArgument unless 0 <= level <= 6. Ordering is deterministic:
// the 12 icosahedron vertices first, then midpoints in creation order.
FieldGrid Icosphere(int level = kDefaultGridLevel);

// Throws InvalidArgument if |v| is not within 1e-9 of 1.
Direction CartToSph(const Vec3& v);
Vec3 SphToCart(const Direction& d);

// Uniform on the unit sphere (z uniform in [-1, 1], phi uniform).
Direction UniformDirection(Rng& rng);
Vec3 UniformUnitVector(Rng& rng);

// Solid angle of each grid point's spherical Voronoi cell; sums to 4*pi.
std::vector<double> VoronoiSolidAngles(const FieldGrid& grid);

// Index of the grid point closest to `v` (brute force).
int NearestGridPoint(const FieldGrid& grid, const Vec3& v);

// Ratio of the smallest to the largest nearest-neighbour distance.
double NearestNeighbourSpacingRatio(const FieldGrid& grid);

// One "x,y,z" row per point, with a header row.
void WriteGridCsv(const FieldGrid& grid, std::ostream& out);

// Area of the spherical triangle spanned by unit vectors a, b, c.
double SphericalTriangleArea(const Vec3& a, const Vec3& b, const Vec3& c);

}  // namespace asf

#endif  // ASF_SPHGEOM_H_
