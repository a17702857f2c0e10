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

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>
#include <string>
#include <utility>

#include "asf/error.h"

namespace asf {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void IcosahedronBase(std::vector<Vec3>* points, std::vector<std::array<int, 3>>* faces) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  const double raw[12][3] = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0},
                             {0, -1, t}, {0, 1, t}, {0, -1, -t}, {0, 1, -t},
                             {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (const auto& r : raw) {
    points->push_back(Vec3(r[0], r[1], r[2]).normalized());
  }
  *faces = {{0, 11, 5},  {0, 5, 1},  {0, 1, 7},  {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
            {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
            {3, 8, 9},   {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
}

}  // namespace

int64_t IcospherePointCount(int level) { return 10 * (int64_t{1} << (2 * level)) + 2; }

FieldGrid Icosphere(int level) {
  if (level < 0 || level > kMaxGridLevel) {
    throw InvalidArgument("icosphere level must be in [0, 6], got " + std::to_string(level));
  }
  FieldGrid grid;
  grid.subdivision_level = level;
  IcosahedronBase(&grid.points, &grid.faces);

  for (int pass = 0; pass < level; ++pass) {
    std::map<std::pair<int, int>, int> midpoint_cache;
    auto midpoint = [&](int a, int b) {
      const std::pair<int, int> key = std::minmax(a, b);
      auto it = midpoint_cache.find(key);
      if (it != midpoint_cache.end()) return it->second;
      const Vec3 m = (grid.points[a] + grid.points[b]).normalized();
      grid.points.push_back(m);
      const int idx = static_cast<int>(grid.points.size()) - 1;
      midpoint_cache.emplace(key, idx);
      return idx;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(grid.faces.size() * 4);
    for (const auto& f : grid.faces) {
      const int ab = midpoint(f[0], f[1]);
      const int bc = midpoint(f[1], f[2]);
      const int ca = midpoint(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    grid.faces = std::move(next);
  }
  return grid;
}

Direction CartToSph(const Vec3& v) {
  const double n = v.norm();
  if (!std::isfinite(n) || std::abs(n - 1.0) > 1e-9) {
    throw InvalidArgument("CartToSph expects a unit vector, |v| = " + std::to_string(n));
  }
  Direction d;
  d.theta = std::acos(std::clamp(v.z(), -1.0, 1.0));
  if (std::abs(v.x()) == 0.0 && std::abs(v.y()) == 0.0) {
    d.phi = 0.0;
    return d;
  }
  double phi = std::atan2(v.y(), v.x());
  if (phi < 0.0) phi += kTwoPi;
  if (phi >= kTwoPi) phi -= kTwoPi;
  d.phi = phi;
  return d;
}

Vec3 SphToCart(const Direction& d) {
  const double s = std::sin(d.theta);
  return Vec3(s * std::cos(d.phi), s * std::sin(d.phi), std::cos(d.theta));
}

Vec3 UniformUnitVector(Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double z = 1.0 - 2.0 * u(rng);
  const double phi = kTwoPi * u(rng);
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  return Vec3(r * std::cos(phi), r * std::sin(phi), z);
}

Direction UniformDirection(Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double z = 1.0 - 2.0 * u(rng);
  const double phi = kTwoPi * u(rng);
  Direction d;
  d.theta = std::acos(z);
  d.phi = (phi >= kTwoPi) ? 0.0 : phi;
  return d;
}

double SphericalTriangleArea(const Vec3& a, const Vec3& b, const Vec3& c) {
  // Van Oosterom & Strackee.
  const double num = std::abs(a.dot(b.cross(c)));
  const double den = 1.0 + a.dot(b) + b.dot(c) + c.dot(a);
  return 2.0 * std::atan2(num, den);
}

std::vector<double> VoronoiSolidAngles(const FieldGrid& grid) {
  const size_t n = grid.points.size();
  std::vector<Vec3> circumcenters(grid.faces.size());
  std::vector<std::vector<int>> incident(n);
  for (size_t f = 0; f < grid.faces.size(); ++f) {
    const Vec3& a = grid.points[grid.faces[f][0]];
    const Vec3& b = grid.points[grid.faces[f][1]];
    const Vec3& c = grid.points[grid.faces[f][2]];
    Vec3 cc = (b - a).cross(c - a).normalized();
    if (cc.dot(a + b + c) < 0.0) cc = -cc;
    circumcenters[f] = cc;
    for (int v : grid.faces[f]) incident[v].push_back(static_cast<int>(f));
  }

  std::vector<double> weights(n, 0.0);
  for (size_t v = 0; v < n; ++v) {
    const Vec3& p = grid.points[v];
    // Tangent frame at p to sort the surrounding circumcenters by angle.
    const Vec3 helper = std::abs(p.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    const Vec3 e1 = p.cross(helper).normalized();
    const Vec3 e2 = p.cross(e1);
    std::vector<std::pair<double, int>> ring;
    for (int f : incident[v]) {
      const Vec3 q = circumcenters[f] - p;
      ring.emplace_back(std::atan2(q.dot(e2), q.dot(e1)), f);
    }
    std::sort(ring.begin(), ring.end());
    double area = 0.0;
    for (size_t i = 0; i < ring.size(); ++i) {
      const Vec3& c0 = circumcenters[ring[i].second];
      const Vec3& c1 = circumcenters[ring[(i + 1) % ring.size()].second];
      area += SphericalTriangleArea(p, c0, c1);
    }
    weights[v] = area;
  }
  return weights;
}

int NearestGridPoint(const FieldGrid& grid, const Vec3& v) {
  int best = 0;
  double best_dot = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < grid.points.size(); ++i) {
    const double d = grid.points[i].dot(v);
    if (d > best_dot) {
      best_dot = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

double NearestNeighbourSpacingRatio(const FieldGrid& grid) {
  // Mesh edges are exactly the nearest-neighbour candidates on an icosphere.
  std::vector<double> nearest(grid.points.size(), std::numeric_limits<double>::infinity());
  for (const auto& f : grid.faces) {
    for (int e = 0; e < 3; ++e) {
      const int a = f[e];
      const int b = f[(e + 1) % 3];
      const double d = (grid.points[a] - grid.points[b]).norm();
      nearest[a] = std::min(nearest[a], d);
      nearest[b] = std::min(nearest[b], d);
    }
  }
  const auto [lo, hi] = std::minmax_element(nearest.begin(), nearest.end());
  return *lo / *hi;
}

void WriteGridCsv(const FieldGrid& grid, std::ostream& out) {
  out << "x,y,z\n";
  out.precision(17);
  for (const Vec3& p : grid.points) {
    out << p.x() << ',' << p.y() << ',' << p.z() << '\n';
  }
}

}  // namespace asf
