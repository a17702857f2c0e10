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
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "Eigen/Geometry"
#include "asf/error.h"

namespace asf {

Vec3 PointCloud::Centroid() const {
  Vec3 c = Vec3::Zero();
  if (points.empty()) return c;
  for (const Vec3& p : points) c += p;
  return c / static_cast<double>(points.size());
}

double TriangleMesh::TriangleArea(size_t t) const {
  const auto& tri = triangles[t];
  return 0.5 *
         (vertices[tri[1]] - vertices[tri[0]]).cross(vertices[tri[2]] - vertices[tri[0]]).norm();
}

double TriangleMesh::SurfaceArea() const {
  double a = 0.0;
  for (size_t t = 0; t < triangles.size(); ++t) a += TriangleArea(t);
  return a;
}

void TriangleMesh::Validate() const {
  const int nv = static_cast<int>(vertices.size());
  for (size_t t = 0; t < triangles.size(); ++t) {
    for (int v : triangles[t]) {
      if (v < 0 || v >= nv) {
        throw InvalidArgument("triangle " + std::to_string(t) + " references vertex " +
                              std::to_string(v));
      }
    }
    if (!(TriangleArea(t) > 1e-12)) {
      throw InvalidArgument("degenerate triangle " + std::to_string(t));
    }
  }
  for (const Vec3& v : vertices) {
    if (!v.allFinite()) throw InvalidArgument("non-finite mesh vertex");
  }
}

PointCloud SampleSurface(const TriangleMesh& mesh, int n, Rng& rng) {
  if (mesh.triangles.empty()) throw InvalidArgument("cannot sample an empty mesh");
  if (n < 1) throw InvalidArgument("sample count must be >= 1");
  std::vector<double> cdf(mesh.triangles.size());
  double acc = 0.0;
  for (size_t t = 0; t < mesh.triangles.size(); ++t) {
    acc += mesh.TriangleArea(t);
    cdf[t] = acc;
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PointCloud pc;
  pc.points.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double r = u(rng) * acc;
    size_t t = std::upper_bound(cdf.begin(), cdf.end(), r) - cdf.begin();
    t = std::min(t, cdf.size() - 1);
    const auto& tri = mesh.triangles[t];
    const double s = std::sqrt(u(rng));
    const double v = u(rng);
    const double b0 = 1.0 - s;
    const double b1 = s * (1.0 - v);
    const double b2 = s * v;
    pc.points.push_back(b0 * mesh.vertices[tri[0]] + b1 * mesh.vertices[tri[1]] +
                        b2 * mesh.vertices[tri[2]]);
  }
  return pc;
}

std::vector<int> FarthestPointIndices(const std::vector<Vec3>& pts, int n, int start_index) {
  const int count = static_cast<int>(pts.size());
  if (n < 1 || n > count) {
    throw InvalidArgument("FPS requires 1 <= n <= point count (n=" + std::to_string(n) +
                          ", count=" + std::to_string(count) + ")");
  }
  if (start_index < 0 || start_index >= count) {
    throw InvalidArgument("FPS start index out of range");
  }
  // Structure-of-arrays copy so the distance update vectorises.
  std::vector<double> xs(count), ys(count), zs(count);
  for (int i = 0; i < count; ++i) {
    xs[i] = pts[i].x();
    ys[i] = pts[i].y();
    zs[i] = pts[i].z();
  }
  std::vector<int> chosen;
  chosen.reserve(n);
  std::vector<double> dist(count, std::numeric_limits<double>::infinity());
  int current = start_index;
  for (int k = 0; k < n; ++k) {
    chosen.push_back(current);
    const double cx = xs[current];
    const double cy = ys[current];
    const double cz = zs[current];
    for (int i = 0; i < count; ++i) {
      const double dx = xs[i] - cx;
      const double dy = ys[i] - cy;
      const double dz = zs[i] - cz;
      dist[i] = std::min(dist[i], dx * dx + dy * dy + dz * dz);
    }
    // first index of the maximum, as before
    current = static_cast<int>(std::max_element(dist.begin(), dist.end()) - dist.begin());
  }
  return chosen;
}

PointCloud FarthestPointSample(const PointCloud& pc, int n, int start_index) {
  PointCloud out;
  out.frame = pc.frame;
  for (int i : FarthestPointIndices(pc.points, n, start_index)) {
    out.points.push_back(pc.points[i]);
  }
  return out;
}

PointCloud FarthestPointSample(const PointCloud& pc, int n, Rng& rng) {
  if (pc.points.empty()) throw InvalidArgument("FPS on an empty cloud");
  std::uniform_int_distribution<int> pick(0, static_cast<int>(pc.size()) - 1);
  return FarthestPointSample(pc, n, pick(rng));
}

Mat3 IncomingAlignment(const Vec3& incoming) {
  const Vec3 a = incoming.normalized();
  const Vec3 b = -Vec3::UnitX();
  const double c = a.dot(b);
  if (c >= 1.0 - 1e-15) return Mat3::Identity();
  if (c <= -1.0 + 1e-15) {
    return Eigen::AngleAxisd(std::numbers::pi, Vec3::UnitZ()).toRotationMatrix();
  }
  const Vec3 v = a.cross(b);
  Mat3 vx;
  vx << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return Mat3::Identity() + vx + vx * vx / (1.0 + c);
}

PointCloud AlignIncoming(const PointCloud& pc, const Vec3& incoming) {
  const Mat3 r = IncomingAlignment(incoming);
  const Vec3 c = pc.Centroid();
  PointCloud out;
  out.frame = Frame::kCanonical;
  out.points.reserve(pc.size());
  for (const Vec3& p : pc.points) out.points.push_back(r * (p - c));
  return out;
}

PointCloud AlignIncoming(const PointCloud& pc, const Direction& incoming) {
  return AlignIncoming(pc, SphToCart(incoming));
}

namespace {

// Longest side and centre of the bounding box of `pts`.
std::pair<double, Vec3> BoxExtent(const std::vector<Vec3>& pts) {
  if (pts.empty()) throw InvalidArgument("cannot rescale an empty point set");
  Vec3 lo = pts.front();
  Vec3 hi = pts.front();
  for (const Vec3& p : pts) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double longest = (hi - lo).maxCoeff();
  if (!(longest > 0.0)) throw InvalidArgument("degenerate (zero-extent) input");
  return {longest, 0.5 * (lo + hi)};
}

}  // namespace

PointCloud RescaleLongestDim(const PointCloud& pc, double target) {
  if (!(target > 0.0)) throw InvalidArgument("target dimension must be positive");
  const auto [longest, center] = BoxExtent(pc.points);
  const double s = target / longest;
  PointCloud out = pc;
  for (Vec3& p : out.points) p = center + s * (p - center);
  return out;
}

TriangleMesh RescaleLongestDim(const TriangleMesh& mesh, double target) {
  if (!(target > 0.0)) throw InvalidArgument("target dimension must be positive");
  const auto [longest, center] = BoxExtent(mesh.vertices);
  const double s = target / longest;
  TriangleMesh out = mesh;
  for (Vec3& p : out.vertices) p = center + s * (p - center);
  return out;
}

Mat3 RandomRotation(Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double u1 = u(rng);
  const double u2 = u(rng);
  const double u3 = u(rng);
  const double a = std::sqrt(1.0 - u1);
  const double b = std::sqrt(u1);
  const double t2 = 2.0 * std::numbers::pi * u2;
  const double t3 = 2.0 * std::numbers::pi * u3;
  Eigen::Quaterniond q(b * std::cos(t3), a * std::sin(t2), a * std::cos(t2), b * std::sin(t3));
  return q.normalized().toRotationMatrix();
}

RegionIndex::RegionIndex(std::vector<Vec3> points, std::vector<int> object_ids, double cell_size)
    : points_(std::move(points)), object_ids_(std::move(object_ids)), cell_size_(cell_size) {
  if (object_ids_.size() != points_.size()) {
    throw InvalidArgument("region index: one object id per point required");
  }
  for (size_t i = 0; i < points_.size(); ++i) {
    const Vec3& p = points_[i];
    cells_[Key(static_cast<int64_t>(std::floor(p.x() / cell_size_)),
               static_cast<int64_t>(std::floor(p.y() / cell_size_)),
               static_cast<int64_t>(std::floor(p.z() / cell_size_)))]
        .push_back(static_cast<int>(i));
  }
}

int64_t RegionIndex::Key(int64_t ix, int64_t iy, int64_t iz) const {
  // 21 bits per axis, offset to keep the packed value non-negative.
  constexpr int64_t kOff = int64_t{1} << 20;
  constexpr int64_t kMask = (int64_t{1} << 21) - 1;
  return (((ix + kOff) & kMask) << 42) | (((iy + kOff) & kMask) << 21) | ((iz + kOff) & kMask);
}

RegionIndex RegionIndex::FromMeshes(const std::vector<const TriangleMesh*>& meshes,
                                    const std::vector<int>& object_ids, double density,
                                    uint64_t seed) {
  std::vector<Vec3> pts;
  std::vector<int> ids;
  for (size_t m = 0; m < meshes.size(); ++m) {
    Rng rng(seed + 0x9E3779B97F4A7C15ULL * (m + 1));
    const int n = std::max(1, static_cast<int>(std::ceil(meshes[m]->SurfaceArea() * density)));
    const PointCloud pc = SampleSurface(*meshes[m], n, rng);
    for (const Vec3& p : pc.points) {
      pts.push_back(p);
      ids.push_back(object_ids[m]);
    }
  }
  return RegionIndex(std::move(pts), std::move(ids));
}

std::vector<int> RegionIndex::Query(const Vec3& center, double radius) const {
  std::vector<int> out;
  const double r2 = radius * radius;
  const auto lo = ((center.array() - radius) / cell_size_).floor().cast<int64_t>();
  const auto hi = ((center.array() + radius) / cell_size_).floor().cast<int64_t>();
  for (int64_t ix = lo.x(); ix <= hi.x(); ++ix) {
    for (int64_t iy = lo.y(); iy <= hi.y(); ++iy) {
      for (int64_t iz = lo.z(); iz <= hi.z(); ++iz) {
        auto it = cells_.find(Key(ix, iy, iz));
        if (it == cells_.end()) continue;
        for (int i : it->second) {
          if ((points_[i] - center).squaredNorm() <= r2) out.push_back(i);
        }
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

PointCloud ResampleToCount(const PointCloud& pc, int n, Rng& rng) {
  if (pc.points.empty()) throw InvalidArgument("cannot resample an empty cloud");
  if (static_cast<int>(pc.size()) >= n) return FarthestPointSample(pc, n, rng);
  PointCloud out = pc;
  std::uniform_real_distribution<double> jitter(-5e-7, 5e-7);
  const size_t base = pc.size();
  for (size_t i = 0; static_cast<int>(out.size()) < n; ++i) {
    const Vec3& p = pc.points[i % base];
    // Each axis moves by < 5e-7, so the total offset stays below 1e-6 m.
    out.points.push_back(p + Vec3(jitter(rng), jitter(rng), jitter(rng)));
  }
  return out;
}

PointCloud ExtractRegionAt(const RegionIndex& index, const Vec3& center, uint64_t seed) {
  const std::vector<int> ids = index.Query(center, kRegionRadius);
  if (ids.empty()) {
    throw EmptyRegion("no scatterer points within 1 m of the region centre");
  }
  PointCloud region;
  region.points.reserve(ids.size());
  for (int i : ids) region.points.push_back(index.points()[i]);
  Rng rng(seed);
  return ResampleToCount(region, kCloudSize, rng);
}

PointCloud ExtractRegion(const RegionIndex& index, const Vec3& hit_point, const Vec3& ray_dir,
                         uint64_t seed) {
  return ExtractRegionAt(index, hit_point + kRegionOffset * ray_dir.normalized(), seed);
}

TriangleMesh LoadObj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open OBJ file " + path);
  TriangleMesh mesh;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag)) continue;
    if (tag == "v") {
      double x, y, z;
      if (!(ss >> x >> y >> z)) {
        throw IoError(path + ":" + std::to_string(line_no) + ": bad vertex");
      }
      mesh.vertices.emplace_back(x, y, z);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ss >> tok) {
        const int v = std::stoi(tok.substr(0, tok.find('/')));
        idx.push_back(v > 0 ? v - 1 : static_cast<int>(mesh.vertices.size()) + v);
      }
      if (idx.size() < 3) {
        throw IoError(path + ":" + std::to_string(line_no) + ": face needs 3 vertices");
      }
      for (size_t k = 1; k + 1 < idx.size(); ++k) {
        mesh.triangles.push_back({idx[0], idx[k], idx[k + 1]});
      }
    }
  }
  mesh.Validate();
  return mesh;
}

void SaveObj(const TriangleMesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write OBJ file " + path);
  out.precision(12);
  for (const Vec3& v : mesh.vertices) {
    out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  }
  for (const auto& t : mesh.triangles) {
    out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

TriangleMesh MakeSphereMesh(double radius, const Vec3& center, int level) {
  const FieldGrid g = Icosphere(level);
  TriangleMesh mesh;
  for (const Vec3& p : g.points) mesh.vertices.push_back(center + radius * p);
  mesh.triangles = g.faces;
  // Icosahedron faces are wound so that normals point outward.
  return mesh;
}

TriangleMesh MakeBoxMesh(const Vec3& lo, const Vec3& hi, bool inward) {
  TriangleMesh mesh;
  for (int i = 0; i < 8; ++i) {
    mesh.vertices.emplace_back((i & 1) ? hi.x() : lo.x(), (i & 2) ? hi.y() : lo.y(),
                               (i & 4) ? hi.z() : lo.z());
  }
  // Outward-wound quads.
  const int quads[6][4] = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4},
                           {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}};
  for (const auto& q : quads) {
    if (inward) {
      mesh.triangles.push_back({q[0], q[2], q[1]});
      mesh.triangles.push_back({q[0], q[3], q[2]});
    } else {
      mesh.triangles.push_back({q[0], q[1], q[2]});
      mesh.triangles.push_back({q[0], q[2], q[3]});
    }
  }
  return mesh;
}

TriangleMesh MakeFloorMesh(double half_extent, double height) {
  TriangleMesh mesh;
  const double h = half_extent;
  mesh.vertices = {Vec3(-h, -h, height), Vec3(h, -h, height), Vec3(h, h, height),
                   Vec3(-h, h, height)};
  mesh.triangles = {{0, 1, 2}, {0, 2, 3}};
  return mesh;
}

}  // namespace asf
